"""
Photon-number (Fock) input state |n>.
"""

import logging

import numpy as np
from numpy.typing import ArrayLike
from scipy import stats

from .base_state import InputState
from .errors import InvalidParameterError

logger = logging.getLogger(__name__)

MAX_PHOTONS = 170


class FockInput(InputState):
    """Single-mode Fock state with exactly n photons."""

    kind = "fock"

    def __init__(self, n: int):
        """
        Initialize the Fock input.

        Args:
            n: Photon number, 0 <= n <= MAX_PHOTONS
        """
        if int(n) != n or not 0 <= n <= MAX_PHOTONS:
            raise InvalidParameterError(f"Photon number must be an integer in [0, {MAX_PHOTONS}], got {n}")
        self.n = int(n)

    @property
    def parameter(self) -> int:
        return self.n

    @property
    def k_max(self) -> int:
        return self.n

    def check_k(self, k: int) -> int:
        k = super().check_k(k)
        if k > self.n:
            raise InvalidParameterError(f"Cannot detect {k} photons from a {self.n}-photon state")
        return k

    def p_k(self, t2: ArrayLike, k: int) -> np.ndarray:
        k = self.check_k(k)
        return stats.binom.pmf(k, self.n, np.asarray(t2, dtype=float))

    def dp_k_dt2(self, t2: ArrayLike, k: int) -> np.ndarray:
        k = self.check_k(k)
        t2 = np.asarray(t2, dtype=float)
        if self.n == 0:
            return np.zeros_like(t2)
        m = self.n - 1
        return self.n * (stats.binom.pmf(k - 1, m, t2) - stats.binom.pmf(k, m, t2))

    def count_variance(self, t2: ArrayLike) -> np.ndarray:
        t2 = np.asarray(t2, dtype=float)
        return self.n * t2 * (1.0 - t2)

    def sample(self, rng: np.random.Generator, t2: ArrayLike) -> np.ndarray:
        t2 = np.asarray(t2, dtype=float)
        return rng.binomial(self.n, t2)
