"""
Transfer functions of a symmetric two-mirror Fabry-Perot cavity.

The cavity acts as an effective beam splitter with complex amplitudes T and R
that depend on the mirror amplitude reflectivity |r| and on the phase
phi = 2*pi*L/lambda. All lengths are dimensionless (L/lambda); one free
spectral range is 1/2 in these units.
"""

import logging
from dataclasses import dataclass
from typing import Union

import numpy as np
from numpy.typing import ArrayLike

from .errors import InvalidParameterError

logger = logging.getLogger(__name__)

# Free spectral range in units of L/lambda
FSR = 0.5


@dataclass(frozen=True)
class MirrorSpec:
    """Amplitude reflectivity |r| shared by both (identical) mirrors."""

    r_amp: float

    def __post_init__(self):
        if not np.isfinite(self.r_amp) or not 0.0 <= self.r_amp < 1.0:
            raise InvalidParameterError(
                f"Mirror amplitude reflectivity must lie in [0, 1), got {self.r_amp}"
            )

    @classmethod
    def from_reflectivity(cls, r2: float) -> "MirrorSpec":
        """
        Build a mirror from its power reflectivity |r|^2.

        Args:
            r2: Power reflectivity in [0, 1)

        Returns:
            MirrorSpec with r_amp = sqrt(r2)
        """
        if not np.isfinite(r2) or not 0.0 <= r2 < 1.0:
            raise InvalidParameterError(f"Power reflectivity must lie in [0, 1), got {r2}")
        return cls(float(np.sqrt(r2)))

    @property
    def r2(self) -> float:
        """Power reflectivity |r|^2."""
        return self.r_amp ** 2

    @property
    def mirror_phase(self) -> float:
        """Fixed mirror-induced phase sqrt(1 - |r|^2)."""
        return float(np.sqrt(1.0 - self.r2))

    @property
    def peak_position(self) -> float:
        """First transmission maximum in [0, FSR), in units of L/lambda."""
        return (self.mirror_phase / (2.0 * np.pi)) % FSR


@dataclass(frozen=True)
class Phase:
    """Dimensionless cavity length L/lambda."""

    l_over_lambda: float

    def __post_init__(self):
        if not np.isfinite(self.l_over_lambda):
            raise InvalidParameterError(f"Phase must be finite, got {self.l_over_lambda}")

    @property
    def phi(self) -> float:
        """Phase phi = 2*pi*L/lambda."""
        return 2.0 * np.pi * self.l_over_lambda


@dataclass(frozen=True)
class ComplexAmp:
    """Complex amplitude split into real and imaginary parts."""

    re: np.ndarray
    im: np.ndarray

    @classmethod
    def from_complex(cls, z: ArrayLike) -> "ComplexAmp":
        z = np.asarray(z, dtype=complex)
        return cls(z.real, z.imag)

    @property
    def value(self) -> np.ndarray:
        return self.re + 1j * self.im

    @property
    def abs2(self) -> np.ndarray:
        """|z|^2 as a sum of squares."""
        return self.re * self.re + self.im * self.im

    def conj(self) -> "ComplexAmp":
        return ComplexAmp(self.re, -self.im)


PhaseLike = Union[Phase, float, ArrayLike]


def as_l_over_lambda(p: PhaseLike) -> np.ndarray:
    """
    Normalize a phase argument to a float array of L/lambda values.

    Args:
        p: Phase instance, scalar, or array of L/lambda values

    Returns:
        Float array (0-d for scalars)
    """
    if isinstance(p, Phase):
        return np.asarray(p.l_over_lambda, dtype=float)
    x = np.asarray(p, dtype=float)
    if not np.all(np.isfinite(x)):
        raise InvalidParameterError("Phase values must be finite")
    return x


def _denominator(m: MirrorSpec, phi: np.ndarray) -> np.ndarray:
    # |r|^2 exp(-2i sqrt(1-|r|^2)) exp(2i phi) - 1
    return m.r2 * np.exp(2j * (phi - m.mirror_phase)) - 1.0


def transfer_T(m: MirrorSpec, p: PhaseLike) -> ComplexAmp:
    """
    Complex transmission amplitude T(r, phi) of the cavity.

    Args:
        m: Mirror specification
        p: Phase (L/lambda)

    Returns:
        ComplexAmp holding T
    """
    phi = 2.0 * np.pi * as_l_over_lambda(p)
    numerator = (1.0 - m.r2) * np.exp(-2j * m.mirror_phase)
    return ComplexAmp.from_complex(numerator / _denominator(m, phi))


def transfer_R(m: MirrorSpec, p: PhaseLike) -> ComplexAmp:
    """
    Complex reflection amplitude R(r, phi) of the cavity.

    R is anti-periodic under phi -> phi + pi; |R|^2 has period pi.

    Args:
        m: Mirror specification
        p: Phase (L/lambda)

    Returns:
        ComplexAmp holding R
    """
    phi = 2.0 * np.pi * as_l_over_lambda(p)
    s = m.mirror_phase
    numerator = m.r_amp * np.exp(-1j * s) * (np.exp(-1j * phi) - np.exp(1j * (phi - 2.0 * s)))
    return ComplexAmp.from_complex(numerator / _denominator(m, phi))


def _detuning(m: MirrorSpec, x: np.ndarray) -> np.ndarray:
    # theta = 2 phi - 2 sqrt(1 - |r|^2); resonance at theta = 0 mod 2 pi
    return 4.0 * np.pi * x - 2.0 * m.mirror_phase


def _stable_denominator(m: MirrorSpec, theta: np.ndarray) -> np.ndarray:
    # |denominator|^2 = (1 - a)^2 + 4 a sin^2(theta / 2)
    a = m.r2
    return (1.0 - a) ** 2 + 4.0 * a * np.sin(0.5 * theta) ** 2


def transmission_probability(m: MirrorSpec, p: PhaseLike) -> np.ndarray:
    """
    |T|^2 from its real rational form.

    Args:
        m: Mirror specification
        p: Phase (L/lambda)

    Returns:
        Transmission probability in (0, 1]
    """
    x = as_l_over_lambda(p)
    return (1.0 - m.r2) ** 2 / _stable_denominator(m, _detuning(m, x))


def reflection_probability(m: MirrorSpec, p: PhaseLike) -> np.ndarray:
    """
    |R|^2 from its real rational form.

    Args:
        m: Mirror specification
        p: Phase (L/lambda)

    Returns:
        Reflection probability in [0, 1)
    """
    x = as_l_over_lambda(p)
    theta = _detuning(m, x)
    return 4.0 * m.r2 * np.sin(0.5 * theta) ** 2 / _stable_denominator(m, theta)


def d_T2_dl(m: MirrorSpec, p: PhaseLike) -> np.ndarray:
    """
    Analytic derivative d|T|^2 / d(L/lambda).

    Args:
        m: Mirror specification
        p: Phase (L/lambda)

    Returns:
        Derivative of the transmission probability
    """
    x = as_l_over_lambda(p)
    a = m.r2
    theta = _detuning(m, x)
    denominator = _stable_denominator(m, theta)
    return -(1.0 - a) ** 2 * 8.0 * np.pi * a * np.sin(theta) / denominator ** 2
