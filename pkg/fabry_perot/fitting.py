"""
Least-squares recovery of (n_bar, r2) from photon-number-resolved fringes,
fits of the classical signal, and the dip diagnostic that brackets n_bar
without fitting.
"""

import logging
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np
from scipy import optimize, stats

from .core_optics import FSR, MirrorSpec, transmission_probability
from .detector_sim import reconstruct_classical
from .errors import FitConvergenceError, InvalidParameterError, NumericalError
from .metrology import curve_peak_stats, peak_window
from .photon_stats import FringeCurve

logger = logging.getLogger(__name__)

N_STARTS = 5
MAX_ITER = 10_000
WEIGHT_MODES = ("uniform", "counts")
FIT_MODES = ("joint", "per_k")

# Search box shared by every fit
N_BAR_BOUNDS = (1e-3, 200.0)
R2_BOUNDS = (1e-3, 0.9999)
SCALE_BOUNDS = (1e-3, 10.0)
R2_START_RANGE = (0.05, 0.995)

# Half-width of the dip search window around the fringe centre
DIP_WINDOW = 0.1 * FSR
DIP_SIGMAS = 3.0
DIP_FLOOR = 1e-12


@dataclass
class FitResult:
    """Best-fit parameters with Gauss-Newton standard errors."""

    n_bar_hat: float
    r2_hat: float
    phase_offset_hat: float
    scale_hat: float
    residual_sse: float
    stderr: Dict[str, float] = field(default_factory=dict)
    ks: Tuple[int, ...] = ()
    n_points: int = 0
    success: bool = True
    message: str = ""
    model: str = "pnr"
    weights: str = "uniform"

    @property
    def dof(self) -> int:
        return max(self.n_points - len(self.stderr), 0)

    def as_dict(self) -> Dict[str, object]:
        row = {
            "model": self.model,
            "ks": ",".join(str(k) for k in self.ks),
            "n_bar_hat": self.n_bar_hat,
            "r2_hat": self.r2_hat,
            "phase_offset_hat": self.phase_offset_hat,
            "scale_hat": self.scale_hat,
            "residual_sse": self.residual_sse,
            "n_points": self.n_points,
            "weights": self.weights,
            "success": self.success,
        }
        for name, value in self.stderr.items():
            row[f"stderr_{name}"] = value
        return row


@dataclass
class DipDiagnosis:
    """Per-k dip flags and the bracket k_low < n_bar <= k_high they imply."""

    dips: Dict[int, bool]
    depths: Dict[int, float]
    center: float
    k_low: Optional[int]
    k_high: Optional[int]

    @property
    def consistent(self) -> bool:
        """True when every k up to k_low dips; no k above k_low dips by construction."""
        if self.k_low is None:
            return True
        return all(dip for k, dip in self.dips.items() if k <= self.k_low)

    @property
    def bound(self) -> str:
        low = f"{self.k_low} < " if self.k_low is not None else ""
        high = f" <= {self.k_high}" if self.k_high is not None else ""
        return f"{low}n_bar{high}"

    def contains(self, n_bar: float) -> bool:
        above = self.k_low is None or n_bar > self.k_low
        below = self.k_high is None or n_bar <= self.k_high
        return above and below


def _wrap(offset: float) -> float:
    return (offset + FSR / 2) % FSR - FSR / 2


def reflectivity_from_fwhm(width: float) -> float:
    """
    Power reflectivity whose Airy peak has the given FWHM in L/lambda.

    Inverts sin(pi w) = (1 - a) / (2 sqrt(a)).

    Args:
        width: FWHM in units of L/lambda, 0 < width < FSR

    Returns:
        Power reflectivity a
    """
    if not 0 < width < FSR:
        raise InvalidParameterError(f"FWHM must lie in (0, {FSR}), got {width}")
    s = np.sin(np.pi * width)
    return float((np.sqrt(s * s + 1.0) - s) ** 2)


def _pnr_model(n_bar: float, r2: float, offset: float, scale: float, x: np.ndarray, k: int) -> np.ndarray:
    t2 = transmission_probability(MirrorSpec(float(np.sqrt(r2))), x + offset)
    return scale * stats.poisson.pmf(k, n_bar * t2)


def _classical_model(n_bar: float, r2: float, offset: float, x: np.ndarray) -> np.ndarray:
    return n_bar * transmission_probability(MirrorSpec(float(np.sqrt(r2))), x + offset)


def _weights(curve: FringeCurve, mode: str) -> np.ndarray:
    if mode not in WEIGHT_MODES:
        raise InvalidParameterError(f"Unknown weighting '{mode}', expected one of {WEIGHT_MODES}")
    if mode == "uniform":
        return np.ones_like(curve.values)
    if curve.stderr is None or not curve.pulses:
        raise InvalidParameterError("Count weighting needs curves with standard errors and pulse counts")
    # Empty or saturated bins have zero sample variance
    return 1.0 / np.sqrt(curve.stderr ** 2 + (1.0 / curve.pulses) ** 2)


def _initial_guess(classical: FringeCurve, n_bar0: Optional[float], r2_0: Optional[float]) -> Tuple[float, float, float]:
    try:
        window, width = peak_window(classical, None)
    except NumericalError:
        raise InvalidParameterError("Fit data must cover at least one full fringe peak")
    center = 0.5 * (window[0] + window[1])
    if r2_0 is None:
        r2_0 = reflectivity_from_fwhm(width)
    if n_bar0 is None:
        n_bar0 = float(np.nanmax(classical.values))
    r2_0 = float(np.clip(r2_0, *R2_START_RANGE))
    n_bar0 = float(np.clip(n_bar0, 0.05, N_BAR_BOUNDS[1] / 2))
    offset0 = _wrap(MirrorSpec.from_reflectivity(r2_0).peak_position - center)
    return n_bar0, r2_0, offset0


def _starts(n_bar0: float, r2_0: float) -> List[Tuple[float, float]]:
    n_bars = np.geomspace(n_bar0 / 2, n_bar0 * 2, N_STARTS)
    r2s = np.clip(np.linspace(r2_0 - 0.04, r2_0 + 0.04, N_STARTS), *R2_START_RANGE)
    # Pair the extremes so no start combines the smallest n_bar with the smallest r2
    return list(zip(n_bars, r2s[::-1]))


def _solve(
    residuals: Callable[[np.ndarray], np.ndarray],
    starts: Sequence[np.ndarray],
    bounds: Sequence[Tuple[float, float]],
    names: Sequence[str],
) -> Tuple[np.ndarray, float, Dict[str, float], bool, str]:
    """
    Multi-start Nelder-Mead on the sum of squared residuals, polished by
    least_squares on the best start.

    Returns:
        (parameters, SSE, standard errors, success, message)
    """
    def sse(theta: np.ndarray) -> float:
        r = residuals(theta)
        value = float(np.dot(r, r))
        return value if np.isfinite(value) else np.inf

    best = None
    for i, x0 in enumerate(starts):
        result = optimize.minimize(
            sse, x0, method="Nelder-Mead", bounds=bounds,
            options={"maxiter": MAX_ITER, "maxfev": 2 * MAX_ITER, "xatol": 1e-7, "fatol": 1e-14},
        )
        logger.debug(f"Start {i}: {np.round(x0, 6).tolist()} -> SSE {result.fun:.6g} ({result.message})")
        if best is None or result.fun < best.fun:
            best = result

    lo = np.array([b[0] for b in bounds])
    hi = np.array([b[1] for b in bounds])
    x_start = np.clip(best.x, lo + 1e-12 * (hi - lo), hi - 1e-12 * (hi - lo))
    polish = optimize.least_squares(
        residuals, x_start, bounds=(lo, hi), method="trf",
        xtol=1e-15, ftol=1e-15, gtol=1e-15, max_nfev=MAX_ITER,
    )
    theta = polish.x if 2 * polish.cost <= best.fun else best.x
    value = sse(theta)

    n, p = polish.fun.size, len(names)
    jac = polish.jac
    dof = n - p
    if dof > 0:
        cov = np.linalg.pinv(jac.T @ jac) * value / dof
        errors = {name: float(np.sqrt(max(cov[i, i], 0.0))) for i, name in enumerate(names)}
    else:
        errors = {name: float("nan") for name in names}

    success = bool(best.success or polish.status > 0) and np.isfinite(value)
    message = f"{best.message}; {polish.message}"
    return theta, value, errors, success, message


def _validate_resolved(curves: Sequence[FringeCurve], ks: Optional[Sequence[int]]) -> List[FringeCurve]:
    resolved = sorted((c for c in curves if not c.is_mean), key=lambda c: c.k)
    if ks is not None:
        wanted = set(ks)
        resolved = [c for c in resolved if c.k in wanted]
        missing = wanted - {c.k for c in resolved}
        if missing:
            raise InvalidParameterError(f"No curve for k={sorted(missing)}")
    if not resolved:
        raise InvalidParameterError("No photon-number-resolved curves to fit")
    if len({c.k for c in resolved}) != len(resolved):
        raise InvalidParameterError("Duplicate k among fit curves")
    for c in resolved[1:]:
        if not resolved[0].shares_grid(c):
            raise InvalidParameterError("Fit curves must share one phase grid")
    if all(np.ptp(c.values) == 0 for c in resolved):
        raise InvalidParameterError("Fit data are flat; no fringe to fit")
    return resolved


def fit_pnr_curves(
    curves: Sequence[FringeCurve],
    ks: Optional[Sequence[int]] = None,
    init: Optional[Mapping[str, float]] = None,
    weights: str = "uniform",
    fix_scale: bool = False,
) -> FitResult:
    """
    Joint fit of scale * p_k^coh(n_bar, r2, x + offset) to photon-number-
    resolved curves sharing (n_bar, r2, offset, scale).

    Args:
        curves: Photon-number-resolved curves on one grid
        ks: Photon numbers to include, default all curves
        init: Optional initial 'n_bar' and 'r2'
        weights: 'uniform' or 'counts' (inverse variance)
        fix_scale: Hold the scale at 1

    Returns:
        FitResult
    """
    resolved = _validate_resolved(curves, ks)
    if len(resolved) < 2:
        raise InvalidParameterError("A joint fit needs at least two distinct k curves")
    return _fit_resolved(resolved, init or {}, weights, fix_scale)


def _fit_resolved(resolved: List[FringeCurve], init: Mapping[str, float], weights: str, fix_scale: bool) -> FitResult:
    x = resolved[0].l_over_lambda
    data = [c.values for c in resolved]
    w = [_weights(c, weights) for c in resolved]
    ks = tuple(c.k for c in resolved)

    n_bar0, r2_0, offset0 = _initial_guess(reconstruct_classical(resolved), init.get("n_bar"), init.get("r2"))

    def unpack(theta: np.ndarray) -> Tuple[float, float, float, float]:
        return (theta[0], theta[1], theta[2], 1.0 if fix_scale else theta[3])

    def residuals(theta: np.ndarray) -> np.ndarray:
        n_bar, r2, offset, scale = unpack(theta)
        return np.concatenate([
            wi * (yi - _pnr_model(n_bar, r2, offset, scale, x, k)) for k, yi, wi in zip(ks, data, w)
        ])

    names = ["n_bar", "r2", "phase_offset"] + ([] if fix_scale else ["scale"])
    bounds = [N_BAR_BOUNDS, R2_BOUNDS, (offset0 - FSR / 4, offset0 + FSR / 4)]
    if not fix_scale:
        bounds.append(SCALE_BOUNDS)
    starts = [np.array([n, r, offset0] + ([] if fix_scale else [1.0])) for n, r in _starts(n_bar0, r2_0)]

    theta, sse, errors, success, message = _solve(residuals, starts, bounds, names)
    n_bar, r2, offset, scale = unpack(theta)
    result = FitResult(
        n_bar_hat=float(n_bar), r2_hat=float(r2), phase_offset_hat=float(offset), scale_hat=float(scale),
        residual_sse=sse, stderr=errors, ks=ks, n_points=int(x.size * len(ks)),
        success=success, message=message, model="pnr", weights=weights,
    )
    if not success:
        logger.error(f"Fit for k={list(ks)} did not converge: {message}")
        raise FitConvergenceError(f"Fit for k={list(ks)} did not converge: {message}", best=result)
    logger.info(f"Fit k={list(ks)}: n_bar={result.n_bar_hat:.6g}, r2={result.r2_hat:.6g}, SSE={sse:.3g}")
    return result


def fit_per_k(
    curves: Sequence[FringeCurve],
    ks: Optional[Sequence[int]] = None,
    init: Optional[Mapping[str, float]] = None,
    weights: str = "uniform",
    fix_scale: bool = True,
) -> Dict[int, FitResult]:
    """
    Independent fit of each photon-number-resolved curve.

    Args:
        curves: Photon-number-resolved curves
        ks: Photon numbers to fit, default all
        init: Optional initial 'n_bar' and 'r2'
        weights: 'uniform' or 'counts'
        fix_scale: Hold the scale at 1, default on since a single curve
            barely separates scale from n_bar

    Returns:
        Mapping k -> FitResult
    """
    resolved = _validate_resolved(curves, ks)
    init = dict(init or {})
    if len(resolved) > 1 and (init.get("n_bar") is None or init.get("r2") is None):
        n_bar0, r2_0, _ = _initial_guess(reconstruct_classical(resolved), init.get("n_bar"), init.get("r2"))
        init["n_bar"] = init.get("n_bar") or n_bar0
        init["r2"] = init.get("r2") or r2_0
    results = {}
    for c in resolved:
        if c.k == 0 or np.ptp(c.values) == 0:
            logger.warning(f"Skipping k={c.k}: curve carries no usable fringe")
            continue
        results[c.k] = _fit_resolved([c], init or {}, weights, fix_scale)
    if not results:
        raise InvalidParameterError("No curve could be fitted individually")
    return results


def fit_classical(
    curve: FringeCurve,
    init: Optional[Mapping[str, float]] = None,
    weights: str = "uniform",
) -> FitResult:
    """
    Fit n_bar' * |T(r2, x + offset)|^2 to a mean-count curve.

    Args:
        curve: Classical or reconstructed mean-count curve
        init: Optional initial 'n_bar' and 'r2'
        weights: 'uniform' or 'counts'

    Returns:
        FitResult with scale_hat = 1
    """
    if not curve.is_mean:
        raise InvalidParameterError(f"Classical fit needs a mean-count curve, got k={curve.k}")
    if np.ptp(curve.values) == 0:
        raise InvalidParameterError("Fit data are flat; no fringe to fit")
    init = init or {}
    x, y = curve.l_over_lambda, curve.values
    w = _weights(curve, weights)
    n_bar0, r2_0, offset0 = _initial_guess(curve, init.get("n_bar"), init.get("r2"))

    def residuals(theta: np.ndarray) -> np.ndarray:
        return w * (y - _classical_model(theta[0], theta[1], theta[2], x))

    names = ["n_bar", "r2", "phase_offset"]
    bounds = [N_BAR_BOUNDS, R2_BOUNDS, (offset0 - FSR / 4, offset0 + FSR / 4)]
    starts = [np.array([n, r, offset0]) for n, r in _starts(n_bar0, r2_0)]
    theta, sse, errors, success, message = _solve(residuals, starts, bounds, names)
    result = FitResult(
        n_bar_hat=float(theta[0]), r2_hat=float(theta[1]), phase_offset_hat=float(theta[2]), scale_hat=1.0,
        residual_sse=sse, stderr=errors, n_points=int(x.size), success=success, message=message,
        model="classical", weights=weights,
    )
    if not success:
        logger.error(f"Classical fit did not converge: {message}")
        raise FitConvergenceError(f"Classical fit did not converge: {message}", best=result)
    logger.info(f"Classical fit: n_bar'={result.n_bar_hat:.6g}, r2={result.r2_hat:.6g}")
    return result


def _dip_depth(x: np.ndarray, y: np.ndarray, se: Optional[np.ndarray], x0: float) -> Tuple[float, float]:
    inside = np.flatnonzero(np.abs(x - x0) <= DIP_WINDOW)
    left = inside[x[inside] < x0]
    right = inside[x[inside] > x0]
    if left.size == 0 or right.size == 0:
        raise InvalidParameterError("Dip window does not straddle the fringe centre")
    i_left = left[np.argmax(y[left])]
    i_right = right[np.argmax(y[right])]
    i_min = i_left + int(np.argmin(y[i_left:i_right + 1]))
    depth = float(min(y[i_left], y[i_right]) - y[i_min])
    noise = 0.0 if se is None else float(se[i_min])
    return depth, max(DIP_SIGMAS * noise, DIP_FLOOR)


def dip_diagnostic(curves: Sequence[FringeCurve]) -> DipDiagnosis:
    """
    Flag a central dip in each photon-number-resolved curve and bracket n_bar.

    A curve of photon number k dips at the fringe centre exactly when k is
    below the mean photon number, so the largest dipping k and the next
    non-dipping k bound n_bar.

    Args:
        curves: Photon-number-resolved curves (k >= 1) on one grid covering a peak

    Returns:
        DipDiagnosis
    """
    resolved = [c for c in _validate_resolved(curves, None) if c.k >= 1]
    if not resolved:
        raise InvalidParameterError("Dip diagnostic needs curves with k >= 1")
    classical = reconstruct_classical(resolved)
    x = classical.l_over_lambda
    i_max = int(np.nanargmax(classical.values))
    if i_max == 0 or i_max == x.size - 1:
        raise InvalidParameterError("No fringe peak inside the scanned window")
    center = curve_peak_stats(classical, (x[i_max] - DIP_WINDOW, x[i_max] + DIP_WINDOW)).center

    dips, depths = {}, {}
    for c in resolved:
        depth, threshold = _dip_depth(x, c.values, c.stderr, center)
        dips[c.k] = depth > threshold
        depths[c.k] = depth
        logger.debug(f"k={c.k}: dip depth {depth:.3g} vs threshold {threshold:.3g}")

    with_dip = [k for k, dip in dips.items() if dip]
    k_low = max(with_dip) if with_dip else None
    above = [k for k, dip in dips.items() if not dip and (k_low is None or k > k_low)]
    k_high = min(above) if above else None
    diagnosis = DipDiagnosis(dips=dips, depths=depths, center=center, k_low=k_low, k_high=k_high)
    if not diagnosis.consistent:
        logger.warning(f"Dip pattern is not monotone in k: {dips}")
    logger.info(f"Dip diagnostic: {diagnosis.bound}")
    return diagnosis
