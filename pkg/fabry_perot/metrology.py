"""
Sensitivity and resolution figures of merit for the cavity.

Sensitivity follows error propagation, delta_L = Delta C / |d<C>/dL|, for a
mean-count measurement or a k-photon projector. Resolution is quantified by
the spread of a transmission peak (standard deviation and standard deviation
of the mean), the uncertainty of the free spectral range, and the finesse.
All lengths are in units of L/lambda.
"""

import logging
import sys
from dataclasses import dataclass
from typing import Iterable, List, NamedTuple, Optional, Sequence, Tuple, Union

import numpy as np
from numpy.typing import ArrayLike
from scipy.optimize import minimize_scalar
from scipy.signal import find_peaks
from tqdm import tqdm

from .base_state import InputState
from .coherent import CoherentInput
from .core_optics import FSR, MirrorSpec, PhaseLike, as_l_over_lambda, d_T2_dl, transmission_probability
from .errors import InvalidParameterError, NumericalError
from .fock import FockInput
from .photon_stats import FringeCurve, PhaseGrid

logger = logging.getLogger(__name__)

# |sin(theta)| below which a point counts as a stationary point of |T|^2
STATIONARY_TOL = 1e-12

# Dense scan points per period for minimum search
MIN_SCAN_POINTS = 10_000


@dataclass
class SensitivityCurve:
    """delta_L/lambda versus L/lambda; NaN marks undefined samples."""

    kind: str
    parameter: float
    k: Optional[int]
    mirror: MirrorSpec
    l_over_lambda: np.ndarray
    delta: np.ndarray

    @property
    def defined(self) -> np.ndarray:
        return np.isfinite(self.delta)


class SensitivityMinimum(NamedTuple):
    l_over_lambda: float
    delta: float


@dataclass(frozen=True)
class PeakStats:
    """Mean position and spread of one transmission peak."""

    center: float
    sigma: float
    total_counts: float
    window: Tuple[float, float]

    @property
    def sdm(self) -> float:
        """Standard deviation of the mean, sigma / sqrt(N)."""
        return self.sigma / np.sqrt(self.total_counts)


@dataclass(frozen=True)
class FsrEstimate:
    """Free spectral range and its uncertainty."""

    delta_l: float
    sigma_delta_l: float


def _stationary(m: MirrorSpec, x: np.ndarray) -> np.ndarray:
    theta = 4.0 * np.pi * x - 2.0 * m.mirror_phase
    return np.abs(np.sin(theta)) <= STATIONARY_TOL


def sensitivity_binary(p: ArrayLike, dp_dl: ArrayLike) -> np.ndarray:
    """
    Sensitivity of a two-outcome projector measurement.

    The projector C = |k><k| has <C> = p and Delta C = sqrt(p (1 - p)).

    Args:
        p: Outcome probability
        dp_dl: Derivative of p with respect to L/lambda

    Returns:
        sqrt(p (1 - p)) / |dp/dL|, NaN where undefined
    """
    p = np.asarray(p, dtype=float)
    dp_dl = np.abs(np.asarray(dp_dl, dtype=float))
    valid = (p > 0.0) & (p < 1.0) & (dp_dl > 0.0)
    with np.errstate(divide="ignore", invalid="ignore"):
        delta = np.sqrt(p * (1.0 - p)) / dp_dl
    return np.where(valid & np.isfinite(delta), delta, np.nan)


def sensitivity_mean(state: InputState, m: MirrorSpec, p: PhaseLike) -> np.ndarray:
    """
    Sensitivity of a mean photon-count measurement for any input state.

    Args:
        state: Input state
        m: Mirror specification
        p: Phase (L/lambda)

    Returns:
        sqrt(Var[count]) / |d<count>/dL|, NaN where undefined
    """
    x = as_l_over_lambda(p)
    t2 = transmission_probability(m, x)
    slope = np.abs(state.parameter * d_T2_dl(m, x))
    slope = np.where(_stationary(m, x), 0.0, slope)
    valid = slope > 0.0
    with np.errstate(divide="ignore", invalid="ignore"):
        delta = np.sqrt(state.count_variance(t2)) / slope
    return np.where(valid & np.isfinite(delta) & (delta > 0), delta, np.nan)


def sensitivity_coherent_mean(c: CoherentInput, m: MirrorSpec, p: PhaseLike) -> np.ndarray:
    """
    Shot-noise limited sensitivity |T| / (sqrt(n_bar) |d|T|^2/dL|).

    Args:
        c: Coherent input with n_bar > 0
        m: Mirror specification
        p: Phase (L/lambda)

    Returns:
        delta_L/lambda, NaN at stationary points of |T|^2
    """
    if c.n_bar <= 0:
        raise InvalidParameterError("Shot-noise sensitivity needs a positive mean photon number")
    return sensitivity_mean(c, m, p)


def sensitivity_k(state: InputState, m: MirrorSpec, p: PhaseLike, k: int) -> np.ndarray:
    """
    Photon-number-resolved sensitivity for detection of exactly k photons.

    Args:
        state: Input state (coherent or Fock)
        m: Mirror specification
        p: Phase (L/lambda)
        k: Detected photon number

    Returns:
        delta_L/lambda, NaN where undefined
    """
    x = as_l_over_lambda(p)
    t2 = transmission_probability(m, x)
    dp = state.dp_k_dt2(t2, k) * d_T2_dl(m, x)
    dp = np.where(_stationary(m, x), 0.0, dp)
    return sensitivity_binary(state.p_k(t2, k), dp)


def sensitivity_curve(
    state: InputState,
    m: MirrorSpec,
    grid: Union[PhaseGrid, ArrayLike],
    k: Optional[int] = None,
) -> SensitivityCurve:
    """
    Sample a sensitivity curve over a phase grid.

    Args:
        state: Input state
        m: Mirror specification
        grid: PhaseGrid or array of L/lambda values
        k: Detected photon number, or None for a mean-count measurement

    Returns:
        SensitivityCurve
    """
    x = grid.values if isinstance(grid, PhaseGrid) else as_l_over_lambda(grid)
    if k is None:
        delta = sensitivity_mean(state, m, x)
        kind = f"{state.kind}-mean"
    else:
        delta = sensitivity_k(state, m, x, k)
        kind = f"{state.kind}-k"
    return SensitivityCurve(kind, state.parameter, k, m, np.atleast_1d(x), np.atleast_1d(delta))


def min_sensitivity(
    state: InputState,
    m: MirrorSpec,
    k: Optional[int] = None,
    points: int = MIN_SCAN_POINTS,
) -> SensitivityMinimum:
    """
    Global minimum of a sensitivity curve over one period.

    Dense scan followed by golden-section refinement.

    Args:
        state: Input state
        m: Mirror specification
        k: Detected photon number, or None for a mean-count measurement
        points: Scan points per period

    Returns:
        (L/lambda at the minimum, minimal delta_L/lambda)
    """
    def objective(x: float) -> float:
        value = sensitivity_mean(state, m, x) if k is None else sensitivity_k(state, m, x, k)
        value = float(value)
        return value if np.isfinite(value) else np.inf

    # Offset by half a step so the scan never lands on the resonance itself
    step = FSR / points
    x = m.peak_position - FSR / 2 + step * (np.arange(points) + 0.5)
    values = sensitivity_mean(state, m, x) if k is None else sensitivity_k(state, m, x, k)
    if not np.any(np.isfinite(values)):
        raise NumericalError(f"Sensitivity of {state.spec} (k={k}) is undefined over the whole period")
    i = int(np.nanargmin(values))
    bracket = (x[i] - step, x[i], x[i] + step)
    try:
        result = minimize_scalar(objective, bracket=bracket, method="golden", options={"xtol": 1e-10})
    except (ValueError, RuntimeError):
        # No valid bracket around the scan minimum
        logger.debug(f"Golden-section refinement skipped for {state.spec} (k={k})")
        return SensitivityMinimum(float(x[i]), float(values[i]))
    if result.fun <= values[i]:
        return SensitivityMinimum(float(result.x), float(result.fun))
    return SensitivityMinimum(float(x[i]), float(values[i]))


@dataclass(frozen=True)
class MinimaRow:
    n: int
    coherent_x: float
    coherent_delta: float
    fock_x: float
    fock_delta: float

    @property
    def ratio(self) -> float:
        """Fock over coherent minimal uncertainty."""
        return self.fock_delta / self.coherent_delta


def minima_table(n_values: Iterable[int], m: MirrorSpec) -> List[MinimaRow]:
    """
    Minimal uncertainty versus photon number: coherent mean-count detection
    with n_bar = n against Fock |n> with n-photon detection.

    Args:
        n_values: Photon numbers to compare
        m: Mirror specification

    Returns:
        One MinimaRow per n
    """
    rows = []
    for n in tqdm(list(n_values), desc="minima", disable=not sys.stderr.isatty()):
        coherent = min_sensitivity(CoherentInput(n), m)
        fock = min_sensitivity(FockInput(n), m, k=n)
        rows.append(MinimaRow(int(n), coherent.l_over_lambda, coherent.delta, fock.l_over_lambda, fock.delta))
        logger.debug(f"n={n}: coherent {coherent.delta:.6g}, Fock {fock.delta:.6g}")
    return rows


def peak_stats(x: ArrayLike, counts: ArrayLike, window: Tuple[float, float]) -> PeakStats:
    """
    Mean position and standard deviation of a peak inside a window.

    mu = sum p_i x_i and sigma^2 = sum p_i (x_i - mu)^2 with p_i = f_i / N.

    Args:
        x: Grid of L/lambda values
        counts: Counts f_i (or curve values) at each grid point
        window: (low, high) bounds in L/lambda, inclusive

    Returns:
        PeakStats
    """
    x = np.asarray(x, dtype=float)
    counts = np.asarray(counts, dtype=float)
    lo, hi = window
    if not hi > lo:
        raise InvalidParameterError(f"Empty peak window {window}")
    if hi - lo > FSR * (1 + 1e-9):
        raise InvalidParameterError(f"Peak window {window} spans more than one free spectral range")
    inside = (x >= lo) & (x <= hi) & np.isfinite(counts)
    if not np.any(inside):
        raise InvalidParameterError(f"No samples inside peak window {window}")
    f = np.clip(counts[inside], 0.0, None)
    total = f.sum()
    if total <= 0:
        raise InvalidParameterError(f"No counts inside peak window {window}")
    weights = f / total
    mu = float(np.sum(weights * x[inside]))
    sigma = float(np.sqrt(np.sum(weights * (x[inside] - mu) ** 2)))
    if sigma <= 0:
        raise InvalidParameterError(f"Peak in window {window} has zero width")
    return PeakStats(mu, sigma, float(total), (float(lo), float(hi)))


def curve_counts(curve: FringeCurve) -> np.ndarray:
    """Counts per grid point: frequencies times pulses for data, values for models."""
    if curve.pulses:
        return curve.values * curve.pulses
    return curve.values


def curve_peak_stats(curve: FringeCurve, window: Tuple[float, float]) -> PeakStats:
    """peak_stats applied to a fringe curve."""
    return peak_stats(curve.l_over_lambda, curve_counts(curve), window)


def fsr_uncertainty(s1: PeakStats, s2: PeakStats) -> FsrEstimate:
    """
    Free spectral range from two adjacent peaks and its uncertainty
    sqrt(sigma_1^2 / n_1 + sigma_2^2 / n_2).

    Args:
        s1: Statistics of the first peak
        s2: Statistics of the second peak

    Returns:
        FsrEstimate
    """
    if s1.total_counts <= 0 or s2.total_counts <= 0:
        raise InvalidParameterError("Both peaks need a positive number of counts")
    delta_l = abs(s2.center - s1.center)
    if delta_l <= 0:
        raise InvalidParameterError("The two peaks coincide")
    sigma = np.sqrt(s1.sigma ** 2 / s1.total_counts + s2.sigma ** 2 / s2.total_counts)
    return FsrEstimate(float(delta_l), float(sigma))


def count_reduction_factor(m: float) -> float:
    """Factor by which counts may drop when the peak width shrinks by m."""
    if m <= 0:
        raise InvalidParameterError(f"Width reduction factor must be positive, got {m}")
    return m ** 2


def required_counts(sigma: float, target_sigma_delta_l: float) -> float:
    """
    Counts per peak needed for a target FSR uncertainty with two equal peaks.

    Args:
        sigma: Peak standard deviation
        target_sigma_delta_l: Desired sigma of the FSR estimate

    Returns:
        n such that sqrt(2) sigma / sqrt(n) equals the target
    """
    if target_sigma_delta_l <= 0:
        raise InvalidParameterError("Target uncertainty must be positive")
    return 2.0 * sigma ** 2 / target_sigma_delta_l ** 2


def find_resonances(curve: FringeCurve) -> np.ndarray:
    """
    Indices of the fringe maxima of a curve, one per resonance.

    The twin humps of a dipped peak collapse into one because maxima closer
    than half a free spectral range are suppressed.

    Args:
        curve: Sampled fringe curve

    Returns:
        Sorted array of indices
    """
    x = curve.l_over_lambda
    y = np.nan_to_num(curve.values, nan=0.0)
    if x.size < 3:
        return np.array([], dtype=int)
    step = float(np.median(np.diff(x)))
    distance = max(1, int(0.5 * FSR / step))
    prominence = 0.25 * (y.max() - y.min())
    peaks, _ = find_peaks(y, distance=distance, prominence=prominence if prominence > 0 else None)
    return np.sort(peaks)


def fwhm(x: ArrayLike, y: ArrayLike) -> float:
    """
    Full width at half maximum of the highest peak, by linear interpolation.

    The outermost half-maximum crossings are used, so a dipped peak counts as
    a single peak.

    Args:
        x: Strictly increasing grid
        y: Values

    Returns:
        FWHM in the units of x
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    i_max = int(np.nanargmax(y))
    half = 0.5 * y[i_max]
    above = np.flatnonzero(y >= half)
    left, right = above[0], above[-1]
    if left == 0 or right == y.size - 1:
        raise NumericalError("Peak does not fall below half maximum inside the sampled range")

    def crossing(i0: int, i1: int) -> float:
        return x[i0] + (half - y[i0]) * (x[i1] - x[i0]) / (y[i1] - y[i0])

    return float(crossing(right, right + 1) - crossing(left - 1, left))


def _peak_region(curve: FringeCurve, index: int) -> Tuple[np.ndarray, np.ndarray]:
    x = curve.l_over_lambda
    inside = np.abs(x - x[index]) <= FSR / 2
    return x[inside], curve.values[inside]


def finesse(curve: FringeCurve) -> float:
    """
    Measured finesse FSR / FWHM of a sampled fringe curve.

    Args:
        curve: Curve spanning at least two adjacent maxima

    Returns:
        Finesse
    """
    peaks = find_resonances(curve)
    if peaks.size < 2:
        raise InvalidParameterError("Finesse needs a curve with two adjacent maxima")
    x = curve.l_over_lambda
    fsr = float(x[peaks[1]] - x[peaks[0]])
    width = fwhm(*_peak_region(curve, int(peaks[0])))
    logger.debug(f"Measured FSR {fsr:.6g}, FWHM {width:.6g}")
    return fsr / width


def finesse_classical_approx(m: MirrorSpec) -> float:
    """Classical finesse approximation pi sqrt(R) / (1 - R), valid for R > 0.5."""
    if m.r2 <= 0.5:
        raise InvalidParameterError(f"Finesse approximation needs reflectivity above 0.5, got {m.r2}")
    return float(np.pi * np.sqrt(m.r2) / (1.0 - m.r2))


@dataclass(frozen=True)
class AxisScale:
    """
    Conversion from L/lambda to nm.

    Precedence: classical-FWHM calibration, then FSR calibration, then the
    wavelength itself.
    """

    lambda_nm: float = 1550.0
    fsr_nm: Optional[float] = None
    fwhm_nm: Optional[float] = None

    def nm_per_unit(self, classical_fwhm: float) -> float:
        if self.fwhm_nm:
            return self.fwhm_nm / classical_fwhm
        if self.fsr_nm:
            return self.fsr_nm / FSR
        return self.lambda_nm


@dataclass
class ResolutionTable:
    """Peak spreads of photon-number-resolved curves against the classical one."""

    ks: List[int]
    sigma_k: List[float]
    sigma_cl: float
    stats_k: List[PeakStats]
    stats_cl: PeakStats
    nm_per_unit: float
    classical_fwhm: float

    @property
    def ratios(self) -> List[float]:
        """sigma_cl / sigma_k per k."""
        return [self.sigma_cl / s for s in self.sigma_k]

    @property
    def sigma_k_nm(self) -> List[float]:
        return [s * self.nm_per_unit for s in self.sigma_k]

    @property
    def sigma_cl_nm(self) -> float:
        return self.sigma_cl * self.nm_per_unit


def peak_window(classical: FringeCurve, window_fwhm: Optional[float] = 2.0) -> Tuple[Tuple[float, float], float]:
    """
    Window around the strongest resonance of a classical curve.

    Args:
        classical: Mean-count curve
        window_fwhm: Half-width in classical FWHMs, or None for one full FSR

    Returns:
        ((low, high), classical FWHM)
    """
    x = classical.l_over_lambda
    i_max = int(np.nanargmax(classical.values))
    width = fwhm(*_peak_region(classical, i_max))
    half = FSR / 2 if window_fwhm is None else window_fwhm * width
    center = curve_peak_stats(classical, (x[i_max] - half, x[i_max] + half)).center
    return (center - half, center + half), width


def resolution_table(
    curves: Sequence[FringeCurve],
    classical: FringeCurve,
    scale: AxisScale = AxisScale(),
    window_fwhm: Optional[float] = 2.0,
) -> ResolutionTable:
    """
    Standard deviations of photon-number-resolved peaks and of the classical
    peak inside a common window.

    Args:
        curves: Photon-number-resolved curves sharing the classical grid
        classical: Mean-count curve
        scale: nm conversion
        window_fwhm: Window half-width in classical FWHMs (None: one FSR)

    Returns:
        ResolutionTable
    """
    window, width = peak_window(classical, window_fwhm)
    stats_cl = curve_peak_stats(classical, window)
    ordered = sorted((c for c in curves if not c.is_mean), key=lambda c: c.k)
    stats_k = [curve_peak_stats(c, window) for c in ordered]
    logger.info(f"Resolution window {window[0]:.6g}..{window[1]:.6g} (classical FWHM {width:.6g})")
    return ResolutionTable(
        ks=[c.k for c in ordered],
        sigma_k=[s.sigma for s in stats_k],
        sigma_cl=stats_cl.sigma,
        stats_k=stats_k,
        stats_cl=stats_cl,
        nm_per_unit=scale.nm_per_unit(width),
        classical_fwhm=width,
    )


def fsr_from_curve(curve: FringeCurve, window_fwhm: float = 2.0) -> FsrEstimate:
    """
    FSR estimate from the first two resonances of a single curve.

    Args:
        curve: Curve spanning two adjacent peaks
        window_fwhm: Window half-width around each peak in FWHMs of that peak

    Returns:
        FsrEstimate
    """
    peaks = find_resonances(curve)
    if peaks.size < 2:
        raise InvalidParameterError("FSR estimate needs a curve with two adjacent peaks")
    x = curve.l_over_lambda
    stats = []
    for index in peaks[:2]:
        half = window_fwhm * fwhm(*_peak_region(curve, int(index)))
        stats.append(curve_peak_stats(curve, (x[index] - half, x[index] + half)))
    return fsr_uncertainty(stats[0], stats[1])
