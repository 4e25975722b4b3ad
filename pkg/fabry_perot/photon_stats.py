"""
Photon-number-resolved and mean-count detection probabilities at the cavity
output, and vectorized fringe scans over a phase grid.
"""

import logging
from dataclasses import dataclass, field, replace
from typing import Dict, Iterable, List, Optional, Tuple, Type, Union

import numpy as np
from numpy.typing import ArrayLike

from .base_state import InputState
from .coherent import CoherentInput
from .core_optics import (
    FSR,
    MirrorSpec,
    PhaseLike,
    d_T2_dl,
    reflection_probability,
    transmission_probability,
)
from .errors import InvalidParameterError
from .fock import FockInput

logger = logging.getLogger(__name__)

INPUT_STATES: Dict[str, Type[InputState]] = {
    "coherent": CoherentInput,
    "fock": FockInput,
}


def parse_input(spec: str) -> InputState:
    """
    Parse an input spec such as 'coherent:3.9' or 'fock:4'.

    Args:
        spec: '<kind>:<parameter>'

    Returns:
        The corresponding input state
    """
    kind, sep, value = spec.strip().partition(":")
    if not sep or kind not in INPUT_STATES:
        raise InvalidParameterError(
            f"Invalid input spec '{spec}'; expected one of {sorted(INPUT_STATES)} as '<kind>:<value>'"
        )
    try:
        parameter = float(value)
    except ValueError:
        raise InvalidParameterError(f"Invalid input parameter '{value}' in '{spec}'")
    if kind == "fock":
        if parameter != int(parameter):
            raise InvalidParameterError(f"Fock photon number must be an integer, got {value}")
        return FockInput(int(parameter))
    return CoherentInput(parameter)


@dataclass(frozen=True)
class PhaseGrid:
    """Uniform scan of L/lambda from start to stop (inclusive)."""

    start: float
    stop: float
    points: int

    def __post_init__(self):
        if self.points < 1:
            raise InvalidParameterError(f"Phase grid needs at least one point, got {self.points}")
        if not (np.isfinite(self.start) and np.isfinite(self.stop)):
            raise InvalidParameterError("Phase grid bounds must be finite")
        if self.points > 1 and not self.stop > self.start:
            raise InvalidParameterError(f"Phase grid must be increasing, got {self.start}..{self.stop}")

    @classmethod
    def one_period(cls, points: int, center: float = 0.0) -> "PhaseGrid":
        """Grid covering one free spectral range centred on `center`."""
        return cls(center - FSR / 2, center + FSR / 2, points)

    @property
    def values(self) -> np.ndarray:
        if self.points == 1:
            return np.array([float(self.start)])
        return np.linspace(self.start, self.stop, self.points)

    @property
    def step(self) -> float:
        if self.points == 1:
            return 0.0
        return (self.stop - self.start) / (self.points - 1)

    def __len__(self) -> int:
        return self.points


@dataclass
class FringeCurve:
    """Probability (or mean count) versus L/lambda for one input and detection."""

    kind: str
    parameter: float
    k: Optional[int]
    l_over_lambda: np.ndarray
    values: np.ndarray
    mirror: Optional[MirrorSpec] = None
    stderr: Optional[np.ndarray] = None
    pulses: Optional[int] = None
    meta: Dict[str, str] = field(default_factory=dict)

    def __post_init__(self):
        self.l_over_lambda = np.asarray(self.l_over_lambda, dtype=float)
        self.values = np.asarray(self.values, dtype=float)
        if self.l_over_lambda.ndim != 1 or self.l_over_lambda.size == 0:
            raise InvalidParameterError("Fringe curve needs a non-empty one-dimensional grid")
        if self.values.shape != self.l_over_lambda.shape:
            raise InvalidParameterError("Fringe curve values and grid differ in shape")
        if np.any(np.diff(self.l_over_lambda) <= 0):
            raise InvalidParameterError("Fringe curve grid must be strictly increasing")
        if self.stderr is not None:
            self.stderr = np.asarray(self.stderr, dtype=float)

    @property
    def is_mean(self) -> bool:
        return self.k is None

    @property
    def label(self) -> str:
        """'classical-mean' for mean-count curves, else the input kind."""
        return "classical-mean" if self.is_mean else self.kind

    @property
    def samples(self) -> List[Tuple[float, float]]:
        return list(zip(self.l_over_lambda.tolist(), self.values.tolist()))

    def shares_grid(self, other: "FringeCurve") -> bool:
        return self.l_over_lambda.shape == other.l_over_lambda.shape and np.allclose(
            self.l_over_lambda, other.l_over_lambda, rtol=0.0, atol=1e-12
        )

    def scaled(self, factor: float) -> "FringeCurve":
        stderr = None if self.stderr is None else self.stderr * abs(factor)
        return replace(self, values=self.values * factor, stderr=stderr)


def p_k_coherent(c: CoherentInput, m: MirrorSpec, p: PhaseLike, k: int) -> np.ndarray:
    """Probability of detecting k photons for a coherent input."""
    return c.p_k(transmission_probability(m, p), k)


def classical_mean_coherent(c: CoherentInput, m: MirrorSpec, p: PhaseLike) -> np.ndarray:
    """Classical signal n_bar |T|^2."""
    return c.mean_counts(transmission_probability(m, p))


def p_k_fock(f: FockInput, m: MirrorSpec, p: PhaseLike, k: int) -> np.ndarray:
    """Binomial probability of detecting k of the n photons of a Fock input."""
    return f.p_k(transmission_probability(m, p), k)


def mean_fock(f: FockInput, m: MirrorSpec, p: PhaseLike) -> np.ndarray:
    """Mean transmitted photon number n |T|^2 for a Fock input."""
    return f.mean_counts(transmission_probability(m, p))


def dp_k_dl(state: InputState, m: MirrorSpec, p: PhaseLike, k: int) -> np.ndarray:
    """
    Derivative of p_k with respect to L/lambda by the chain rule on |T|^2.

    Args:
        state: Input state
        m: Mirror specification
        p: Phase (L/lambda)
        k: Detected photon number

    Returns:
        dp_k / d(L/lambda)
    """
    t2 = transmission_probability(m, p)
    return state.dp_k_dt2(t2, k) * d_T2_dl(m, p)


def fringe_scan(
    state: InputState,
    m: MirrorSpec,
    grid: Union[PhaseGrid, ArrayLike],
    ks: Iterable[int] = (),
    classical: bool = False,
    reflected: bool = False,
) -> List[FringeCurve]:
    """
    Evaluate photon-number-resolved fringes over a phase grid.

    Args:
        state: Input state
        m: Mirror specification
        grid: PhaseGrid or strictly increasing array of L/lambda values
        ks: Detected photon numbers to evaluate
        classical: Also return the mean-count curve parameter * |T|^2
        reflected: Also return the mean count at the reflection port

    Returns:
        One FringeCurve per requested k, followed by the mean curve(s)
    """
    x = grid.values if isinstance(grid, PhaseGrid) else np.asarray(grid, dtype=float)
    if x.size == 0:
        raise InvalidParameterError("Phase grid is empty")
    ks = [state.check_k(k) for k in ks]
    if not ks and not classical and not reflected:
        raise InvalidParameterError("Nothing to scan: no k selected and no mean curve requested")

    t2 = transmission_probability(m, x)
    curves = [
        FringeCurve(state.kind, state.parameter, k, x, state.p_k(t2, k), mirror=m)
        for k in ks
    ]
    if classical:
        curves.append(FringeCurve(state.kind, state.parameter, None, x, state.mean_counts(t2), mirror=m))
    if reflected:
        r2 = reflection_probability(m, x)
        curves.append(
            FringeCurve(state.kind, state.parameter, None, x, state.mean_counts(r2), mirror=m,
                        meta={"port": "reflected"})
        )
    logger.debug(f"Scanned {state.spec} over {x.size} points for k={ks}, classical={classical}")
    return curves
