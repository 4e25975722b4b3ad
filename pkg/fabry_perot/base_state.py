"""
Base input state module that defines the common interface for all light
sources sent into the cavity.
"""

import logging
from abc import ABC, abstractmethod
from typing import Union

import numpy as np
from numpy.typing import ArrayLike

from .errors import InvalidParameterError

logger = logging.getLogger(__name__)


class InputState(ABC):
    """Base class for single-mode input states (vacuum in the unused port)."""

    # Short name used in input specs such as "coherent:4"
    kind = ""

    @property
    @abstractmethod
    def parameter(self) -> Union[int, float]:
        """Mean photon number (coherent) or photon number (Fock)."""

    @property
    @abstractmethod
    def k_max(self) -> int:
        """Largest photon number that carries non-negligible probability."""

    @abstractmethod
    def p_k(self, t2: ArrayLike, k: int) -> np.ndarray:
        """
        Probability of detecting exactly k transmitted photons.

        Args:
            t2: Transmission probability |T|^2 (scalar or array)
            k: Detected photon number

        Returns:
            Probability array shaped like t2
        """

    @abstractmethod
    def dp_k_dt2(self, t2: ArrayLike, k: int) -> np.ndarray:
        """
        Derivative of p_k with respect to |T|^2.

        Args:
            t2: Transmission probability |T|^2
            k: Detected photon number

        Returns:
            Derivative array shaped like t2
        """

    @abstractmethod
    def count_variance(self, t2: ArrayLike) -> np.ndarray:
        """Variance of the transmitted photon count."""

    @abstractmethod
    def sample(self, rng: np.random.Generator, t2: ArrayLike) -> np.ndarray:
        """
        Draw transmitted photon counts, one per entry of t2.

        Args:
            rng: Random generator
            t2: Per-pulse transmission probabilities

        Returns:
            Integer array of transmitted photon numbers
        """

    def mean_counts(self, t2: ArrayLike) -> np.ndarray:
        """Mean transmitted photon number, parameter * |T|^2."""
        return self.parameter * np.asarray(t2, dtype=float)

    def check_k(self, k: int) -> int:
        """
        Validate a detected photon number.

        Args:
            k: Detected photon number

        Returns:
            k as a Python int
        """
        if int(k) != k or k < 0:
            raise InvalidParameterError(f"Detected photon number must be a non-negative integer, got {k}")
        return int(k)

    @property
    def spec(self) -> str:
        """Input spec string, e.g. 'fock:3'."""
        return f"{self.kind}:{self.parameter:g}"

    def __repr__(self) -> str:
        return f"{self.__class__.__name__}({self.parameter!r})"

    def __eq__(self, other) -> bool:
        return type(self) is type(other) and self.parameter == other.parameter

    def __hash__(self) -> int:
        return hash((self.kind, self.parameter))
