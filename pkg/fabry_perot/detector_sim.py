"""
Monte Carlo model of a photon-number-resolving detector behind the cavity.

Each pulse transmits a random number of photons drawn from the exact
distribution at the current phase. The detector reports a pulse integral
proportional to that number plus Gaussian noise; photon numbers are then
assigned by thresholds placed between the peaks of the pulse-integral
histogram.
"""

import logging
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Dict, Iterator, List, NamedTuple, Optional, Sequence, Tuple, Union

import numpy as np
from numpy.typing import ArrayLike
from scipy import stats
from scipy.ndimage import gaussian_filter1d
from scipy.signal import find_peaks
from tqdm import tqdm

from .base_state import InputState
from .core_optics import MirrorSpec, PhaseLike, as_l_over_lambda, transmission_probability
from .errors import HistogramError, InvalidParameterError
from .photon_stats import FringeCurve, PhaseGrid

logger = logging.getLogger(__name__)

THRESHOLD_MODES = ("oracle", "data")

# Valley detection on the smoothed pulse-integral histogram
PEAK_MIN_HEIGHT = 1.0
PEAK_SIGMAS = 3.0
SEPARATION = 0.5
LABEL_TOLERANCE = 0.25


@dataclass(frozen=True)
class DetectorModel:
    """Linear-gain detector with additive Gaussian noise on each pulse integral."""

    gain: float = 1.0
    noise_sigma: float = 0.1
    k_max_observable: int = 7
    seed: int = 0

    def __post_init__(self):
        if not self.gain > 0:
            raise InvalidParameterError(f"Detector gain must be positive, got {self.gain}")
        if not self.noise_sigma >= 0:
            raise InvalidParameterError(f"Detector noise must be non-negative, got {self.noise_sigma}")
        if int(self.k_max_observable) != self.k_max_observable or self.k_max_observable < 0:
            raise InvalidParameterError(f"k_max_observable must be a non-negative integer, got {self.k_max_observable}")
        if self.seed < 0:
            raise InvalidParameterError(f"Seed must be non-negative, got {self.seed}")

    @property
    def separable(self) -> bool:
        """Whether photon-number peaks are resolvable by thresholds."""
        return self.noise_sigma < self.gain / 2

    @property
    def overflow_k(self) -> int:
        """Label given to pulses above the last threshold."""
        return self.k_max_observable + 1

    def oracle_thresholds(self) -> np.ndarray:
        """Midpoints (k + 1/2) g between adjacent photon-number peaks."""
        return (np.arange(self.k_max_observable + 1) + 0.5) * self.gain

    def rng(self, point_index: int = 0) -> np.random.Generator:
        """Independent stream for one grid point."""
        return np.random.default_rng([self.seed, point_index])


class CountRecord(NamedTuple):
    pulse_index: int
    true_k: int
    integral_value: float
    assigned_k: int


@dataclass
class CountRecords:
    """Column store of per-pulse detector outputs."""

    pulse_index: np.ndarray
    true_k: np.ndarray
    integral_value: np.ndarray
    assigned_k: np.ndarray
    k_max_observable: int

    def __len__(self) -> int:
        return int(self.pulse_index.size)

    def __iter__(self) -> Iterator[CountRecord]:
        for row in zip(self.pulse_index, self.true_k, self.integral_value, self.assigned_k):
            yield CountRecord(int(row[0]), int(row[1]), float(row[2]), int(row[3]))

    @property
    def overflow(self) -> np.ndarray:
        return self.assigned_k > self.k_max_observable

    @property
    def misassigned(self) -> np.ndarray:
        """Pulses whose assigned label differs from the (capped) true photon number."""
        expected = np.minimum(self.true_k, self.k_max_observable + 1)
        return self.assigned_k != expected

    def frequencies(self) -> np.ndarray:
        """Fraction of pulses assigned to each k = 0..k_max_observable."""
        counts = np.bincount(self.assigned_k, minlength=self.k_max_observable + 2)
        return counts[: self.k_max_observable + 1] / len(self)

    @classmethod
    def concatenate(cls, parts: Sequence["CountRecords"]) -> "CountRecords":
        return cls(
            np.concatenate([p.pulse_index for p in parts]),
            np.concatenate([p.true_k for p in parts]),
            np.concatenate([p.integral_value for p in parts]),
            np.concatenate([p.assigned_k for p in parts]),
            parts[0].k_max_observable,
        )


@dataclass
class PulseHistogram:
    """Binned pulse integrals with the photon-number thresholds."""

    edges: np.ndarray
    counts: np.ndarray
    thresholds: np.ndarray
    k_max_observable: int
    mode: str = "oracle"

    def __post_init__(self):
        if np.any(np.diff(self.thresholds) <= 0):
            raise HistogramError("Histogram thresholds must be strictly increasing")

    @property
    def centers(self) -> np.ndarray:
        return 0.5 * (self.edges[:-1] + self.edges[1:])

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    @property
    def resolved_k_max(self) -> int:
        """Highest photon number with both thresholds placed."""
        return int(self.thresholds.size) - 1


def _assign(integrals: np.ndarray, thresholds: np.ndarray, k_max_observable: int) -> np.ndarray:
    # Anything above the last threshold is overflow, however few thresholds there are
    assigned = np.searchsorted(thresholds, integrals, side="right")
    return np.where(assigned >= thresholds.size, k_max_observable + 1, assigned)


def simulate_pulses(
    state: InputState,
    m: MirrorSpec,
    p: PhaseLike,
    n_pulses: int,
    d: DetectorModel,
    point_index: int = 0,
    drift: float = 0.0,
) -> CountRecords:
    """
    Simulate detector outputs for a train of pulses at one phase.

    Args:
        state: Input state
        m: Mirror specification
        p: Phase (L/lambda) of this grid point
        n_pulses: Number of pulses
        d: Detector model
        point_index: Grid index, selects the random stream and the drift offset
        drift: Phase drift per grid point in L/lambda, applied linearly in time

    Returns:
        CountRecords with oracle-threshold photon-number assignment
    """
    if int(n_pulses) != n_pulses or n_pulses <= 0:
        raise InvalidParameterError(f"Number of pulses must be a positive integer, got {n_pulses}")
    n_pulses = int(n_pulses)
    rng = d.rng(point_index)
    x = float(as_l_over_lambda(p))
    if drift:
        x = x + drift * (point_index + np.arange(n_pulses) / n_pulses)
    else:
        x = np.full(n_pulses, x)
    true_k = state.sample(rng, transmission_probability(m, x)).astype(np.int64)
    integral = true_k * d.gain + rng.normal(0.0, d.noise_sigma, size=n_pulses)
    return CountRecords(
        pulse_index=np.arange(n_pulses, dtype=np.int64),
        true_k=true_k,
        integral_value=integral,
        assigned_k=_assign(integral, d.oracle_thresholds(), d.k_max_observable),
        k_max_observable=d.k_max_observable,
    )


def _labelled_peaks(centers: np.ndarray, smoothed: np.ndarray, smoothing: float) -> Tuple[Dict[int, int], float]:
    padded = np.concatenate(([0.0], smoothed, [0.0]))
    peaks, props = find_peaks(padded, height=PEAK_MIN_HEIGHT, prominence=PEAK_MIN_HEIGHT)
    peaks = peaks - 1
    heights, prominences = props["peak_heights"], props["prominences"]

    # Smoothing averages about 2 sqrt(pi) * smoothing bins of Poisson counts
    window = max(1.0, 2.0 * np.sqrt(np.pi) * smoothing)
    noise = PEAK_SIGMAS * np.sqrt(heights / window)
    keep = (prominences >= noise) & (prominences >= SEPARATION * heights)
    peaks, heights = peaks[keep], heights[keep]
    if peaks.size < 2:
        raise HistogramError(
            f"Photon-number peaks are not separable: found {peaks.size} resolvable peak(s) in the histogram"
        )

    positions = centers[peaks]
    spacing = float(np.median(np.diff(positions)))
    labels = np.rint(positions / spacing).astype(int)
    on_lattice = np.abs(positions - labels * spacing) <= LABEL_TOLERANCE * spacing

    by_label: Dict[int, int] = {}
    for index, label, height, ok in zip(peaks, labels, heights, on_lattice):
        if not ok or label < 0:
            continue
        if label not in by_label or height > smoothed[by_label[label]]:
            by_label[int(label)] = int(index)
    return by_label, spacing


def _data_thresholds(centers: np.ndarray, counts: np.ndarray, smoothing: float, limit: int) -> np.ndarray:
    """
    Thresholds at the histogram valleys between adjacent photon-number peaks.

    Each peak is labelled by its position in units of the median peak
    spacing, so a missing low peak cannot shift the labels. Thresholds stop at
    the first photon number whose peak is not resolved; one more is placed
    half a spacing above that peak so everything beyond it is overflow.
    """
    smoothed = gaussian_filter1d(counts.astype(float), smoothing) if smoothing > 0 else counts.astype(float)
    by_label, spacing = _labelled_peaks(centers, smoothed, smoothing)
    if 0 not in by_label or 1 not in by_label:
        raise HistogramError(
            f"Histogram has no resolved k=0 and k=1 peaks to anchor thresholds (resolved k: {sorted(by_label)})"
        )

    step = centers[1] - centers[0]
    thresholds = []
    k = 0
    while k < limit and k + 1 in by_label:
        lo, hi = by_label[k], by_label[k + 1]
        segment = smoothed[lo:hi + 1]
        plateau = np.flatnonzero(segment <= segment.min() + 1e-9 * smoothed.max())
        thresholds.append(centers[lo] + 0.5 * (plateau[0] + plateau[-1]) * step)
        k += 1
    if k < limit:
        thresholds.append(centers[by_label[k]] + 0.5 * spacing)
    return np.array(thresholds)


def build_histogram(
    records: CountRecords,
    bin_width: float,
    d: DetectorModel,
    mode: str = "oracle",
    smoothing: float = 2.0,
) -> PulseHistogram:
    """
    Histogram pulse integrals and place photon-number thresholds.

    Args:
        records: Simulated pulses
        bin_width: Histogram bin width in integral units
        d: Detector model (gain is used by the oracle mode only)
        mode: 'oracle' for the known midpoints, 'data' for histogram valleys
        smoothing: Gaussian smoothing width in bins for valley detection

    Returns:
        PulseHistogram
    """
    if len(records) == 0:
        raise InvalidParameterError("Cannot histogram an empty set of pulses")
    if not bin_width > 0:
        raise InvalidParameterError(f"Bin width must be positive, got {bin_width}")
    if mode not in THRESHOLD_MODES:
        raise InvalidParameterError(f"Unknown threshold mode '{mode}', expected one of {THRESHOLD_MODES}")

    values = records.integral_value
    lo = np.floor(values.min() / bin_width) * bin_width
    n_bins = max(1, int(np.floor((values.max() - lo) / bin_width)) + 1)
    edges = lo + bin_width * np.arange(n_bins + 1)
    counts, _ = np.histogram(values, bins=edges)

    if mode == "oracle":
        thresholds = d.oracle_thresholds()
    else:
        centers = 0.5 * (edges[:-1] + edges[1:])
        if centers.size < 3:
            raise HistogramError("Too few histogram bins to locate valleys")
        thresholds = _data_thresholds(centers, counts, smoothing, d.k_max_observable + 1)
        logger.debug(f"Valley thresholds: {np.round(thresholds, 4).tolist()}")
    return PulseHistogram(edges, counts, thresholds, d.k_max_observable, mode)


def assign_counts(h: PulseHistogram, records: CountRecords) -> CountRecords:
    """
    Assign photon numbers by bracketing each pulse integral with the thresholds.

    Args:
        h: Histogram carrying the thresholds
        records: Pulses to label

    Returns:
        New CountRecords with assigned_k replaced
    """
    if len(records) == 0:
        raise InvalidParameterError("No pulses to assign")
    return replace(records, assigned_k=_assign(records.integral_value, h.thresholds, h.k_max_observable))


@dataclass
class ScanResult:
    """Outcome of a simulated phase scan."""

    curves: List[FringeCurve]
    histogram: PulseHistogram
    pulses_per_point: int
    overflow: int
    misassigned: int
    total_pulses: int
    summary: Dict[str, Union[int, float, str]] = field(default_factory=dict)

    def curve(self, k: int) -> FringeCurve:
        for c in self.curves:
            if c.k == k:
                return c
        raise KeyError(k)


def scan_experiment(
    state: InputState,
    m: MirrorSpec,
    grid: Union[PhaseGrid, ArrayLike],
    pulses_per_point: int,
    d: DetectorModel,
    drift: float = 0.0,
    threshold_mode: str = "oracle",
    bin_width: Optional[float] = None,
    workers: int = 1,
) -> ScanResult:
    """
    Simulate a histogram at every phase of a scan and turn the assigned
    photon numbers into empirical photon-number-resolved fringes.

    Args:
        state: Input state
        m: Mirror specification
        grid: PhaseGrid or array of L/lambda values
        pulses_per_point: Pulses recorded at each phase
        d: Detector model
        drift: Phase drift per grid point (L/lambda), 0 disables
        threshold_mode: 'oracle' or 'data'
        bin_width: Histogram bin width, default gain / 50
        workers: Threads used to simulate grid points

    Returns:
        ScanResult with one curve per k = 0..k_max_observable
    """
    x = grid.values if isinstance(grid, PhaseGrid) else np.asarray(grid, dtype=float)
    if x.size == 0:
        raise InvalidParameterError("Phase grid is empty")
    if int(pulses_per_point) != pulses_per_point or pulses_per_point <= 0:
        raise InvalidParameterError(f"Pulses per point must be a positive integer, got {pulses_per_point}")
    pulses_per_point = int(pulses_per_point)
    if not d.separable:
        logger.warning(f"Detector noise {d.noise_sigma} exceeds half the gain; photon numbers will be mixed")

    def simulate_point(i: int) -> CountRecords:
        return simulate_pulses(state, m, x[i], pulses_per_point, d, point_index=i, drift=drift)

    indices = range(x.size)
    progress = dict(total=x.size, desc="simulate", disable=not sys.stderr.isatty())
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as executor:
            parts = list(tqdm(executor.map(simulate_point, indices), **progress))
    else:
        parts = [simulate_point(i) for i in tqdm(indices, **progress)]

    pooled = CountRecords.concatenate(parts)
    histogram = build_histogram(pooled, bin_width or d.gain / 50, d, mode=threshold_mode)
    if threshold_mode != "oracle":
        if histogram.resolved_k_max < d.k_max_observable:
            logger.warning(
                f"Histogram resolves photon numbers up to k={histogram.resolved_k_max} only; "
                f"higher pulses are flagged as overflow"
            )
        parts = [assign_counts(histogram, part) for part in parts]

    freqs = np.array([part.frequencies() for part in parts])
    stderr = np.sqrt(freqs * (1.0 - freqs) / pulses_per_point)
    curves = [
        FringeCurve(state.kind, state.parameter, k, x, freqs[:, k], mirror=m,
                    stderr=stderr[:, k], pulses=pulses_per_point)
        for k in range(d.k_max_observable + 1)
    ]
    overflow = int(sum(int(part.overflow.sum()) for part in parts))
    misassigned = int(sum(int(part.misassigned.sum()) for part in parts))
    total = pulses_per_point * x.size
    if overflow:
        logger.warning(f"{overflow} of {total} pulses exceeded k={d.k_max_observable} and were flagged as overflow")
    logger.info(f"Simulated {total} pulses over {x.size} phases, {misassigned} misassigned")
    return ScanResult(
        curves=curves,
        histogram=histogram,
        pulses_per_point=pulses_per_point,
        overflow=overflow,
        misassigned=misassigned,
        total_pulses=total,
        summary={
            "input": state.spec,
            "r2": m.r2,
            "points": int(x.size),
            "pulses_per_point": pulses_per_point,
            "total_pulses": total,
            "overflow": overflow,
            "misassigned": misassigned,
            "threshold_mode": threshold_mode,
            "resolved_k_max": histogram.resolved_k_max,
            "seed": d.seed,
        },
    )


def reconstruct_classical(curves: Sequence[FringeCurve], k_max: Optional[int] = None) -> FringeCurve:
    """
    Classical signal rebuilt from photon-number-resolved curves, sum_k k p_k
    over k = 1..k_max.

    Args:
        curves: Curves on a shared grid
        k_max: Highest k to include, default all available

    Returns:
        Mean-count FringeCurve
    """
    resolved = sorted((c for c in curves if not c.is_mean), key=lambda c: c.k)
    if not resolved:
        raise InvalidParameterError("No photon-number-resolved curves to reconstruct from")
    first = resolved[0]
    for c in resolved[1:]:
        if not first.shares_grid(c):
            raise InvalidParameterError("Curves for reconstruction must share one phase grid")
    if k_max is not None:
        resolved = [c for c in resolved if c.k <= k_max]
    used = [c for c in resolved if c.k >= 1]
    if not used:
        raise InvalidParameterError("Reconstruction needs curves with k >= 1")
    first_moment = sum(c.k * c.values for c in used)
    stderr = None
    if first.pulses:
        second_moment = sum(c.k ** 2 * c.values for c in used)
        stderr = np.sqrt(np.clip(second_moment - first_moment ** 2, 0.0, None) / first.pulses)
    return FringeCurve(
        first.kind, first.parameter, None, first.l_over_lambda, first_moment,
        mirror=first.mirror, stderr=stderr, pulses=first.pulses,
        meta={"reconstructed_k_max": str(max(c.k for c in resolved))},
    )


def truncated_mean(state: InputState, t2: ArrayLike, k_max: int) -> np.ndarray:
    """Direct sum of k p_k over k = 1..k_max."""
    t2 = np.asarray(t2, dtype=float)
    return sum(k * state.p_k(t2, k) for k in range(1, min(k_max, state.k_max) + 1))


def truncation_coverage(mu: ArrayLike, k_max: int) -> np.ndarray:
    """
    Fraction of the mean count n_bar |T|^2 that survives truncation at k_max
    for Poissonian counts, P(X <= k_max - 1 | mu).

    Args:
        mu: Mean transmitted photon number n_bar |T|^2
        k_max: Highest resolved photon number

    Returns:
        Coverage in [0, 1]
    """
    return stats.poisson.cdf(k_max - 1, np.asarray(mu, dtype=float))
