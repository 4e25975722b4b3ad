"""
Coherent (laser-like) input state with Poissonian photon statistics.
"""

import logging

import numpy as np
from numpy.typing import ArrayLike
from scipy import stats
from scipy.special import gammaln, xlog1py, xlogy

from .base_state import InputState
from .errors import InvalidParameterError

logger = logging.getLogger(__name__)

# Neglected Poisson tail mass for truncated sums over k
TAIL_MASS = 1e-12


class CoherentInput(InputState):
    """Coherent state |alpha> with mean photon number n_bar = |alpha|^2."""

    kind = "coherent"

    def __init__(self, n_bar: float):
        """
        Initialize the coherent input.

        Args:
            n_bar: Mean photon number, >= 0
        """
        if not np.isfinite(n_bar) or n_bar < 0:
            raise InvalidParameterError(f"Mean photon number must be finite and >= 0, got {n_bar}")
        self.n_bar = float(n_bar)

    @property
    def parameter(self) -> float:
        return self.n_bar

    @property
    def k_max(self) -> int:
        """Smallest K whose Poisson(n_bar) tail beyond K is below TAIL_MASS."""
        if self.n_bar == 0:
            return 0
        k = int(stats.poisson.isf(TAIL_MASS, self.n_bar))
        while stats.poisson.sf(k, self.n_bar) >= TAIL_MASS:
            k += 1
        return k

    def p_k(self, t2: ArrayLike, k: int) -> np.ndarray:
        # Thinned Poisson: the series collapses to Poisson(n_bar |T|^2)
        k = self.check_k(k)
        return stats.poisson.pmf(k, self.n_bar * np.asarray(t2, dtype=float))

    def dp_k_dt2(self, t2: ArrayLike, k: int) -> np.ndarray:
        k = self.check_k(k)
        mu = self.n_bar * np.asarray(t2, dtype=float)
        return self.n_bar * (stats.poisson.pmf(k - 1, mu) - stats.poisson.pmf(k, mu))

    def count_variance(self, t2: ArrayLike) -> np.ndarray:
        return self.mean_counts(t2)

    def sample(self, rng: np.random.Generator, t2: ArrayLike) -> np.ndarray:
        t2 = np.asarray(t2, dtype=float)
        sent = rng.poisson(self.n_bar, size=t2.shape)
        return rng.binomial(sent, t2)

    def p_k_series(self, t2: ArrayLike, k: int, j_max: int = 200) -> np.ndarray:
        """
        Series form of p_k: a Poisson number j of photons of which k are
        transmitted and j - k reflected, summed term by term in log space.

        Args:
            t2: Transmission probability |T|^2
            k: Detected photon number
            j_max: Last term of the series

        Returns:
            Probability array shaped like t2
        """
        k = self.check_k(k)
        t2 = np.asarray(t2, dtype=float)
        j = np.arange(k, j_max + 1, dtype=float).reshape((-1,) + (1,) * t2.ndim)
        log_terms = (
            -self.n_bar
            + xlogy(j, self.n_bar)
            - gammaln(k + 1.0)
            - gammaln(j - k + 1.0)
            + xlogy(k, t2)
            + xlog1py(j - k, -t2)
        )
        return np.exp(log_terms).sum(axis=0)
