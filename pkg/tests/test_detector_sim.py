import numpy as np
import pytest
from scipy import stats

from fabry_perot.coherent import CoherentInput
from fabry_perot.core_optics import MirrorSpec, transmission_probability
from fabry_perot.detector_sim import (
    CountRecords,
    DetectorModel,
    assign_counts,
    build_histogram,
    reconstruct_classical,
    scan_experiment,
    simulate_pulses,
    truncated_mean,
    truncation_coverage,
)
from fabry_perot.errors import HistogramError, InvalidParameterError
from fabry_perot.fock import FockInput
from fabry_perot.photon_stats import PhaseGrid, fringe_scan


@pytest.mark.parametrize("kwargs", [
    {"gain": 0.0},
    {"noise_sigma": -0.1},
    {"k_max_observable": -1},
    {"k_max_observable": 2.5},
    {"seed": -3},
])
def test_detector_model_validation(kwargs):
    with pytest.raises(InvalidParameterError):
        DetectorModel(**kwargs)


def test_oracle_thresholds():
    d = DetectorModel(gain=2.0, k_max_observable=3)
    np.testing.assert_allclose(d.oracle_thresholds(), [1.0, 3.0, 5.0, 7.0])
    assert d.overflow_k == 4
    assert d.separable
    assert not DetectorModel(gain=1.0, noise_sigma=0.6).separable


def test_noiseless_detector_labels_exactly(mirror):
    d = DetectorModel(noise_sigma=0.0, k_max_observable=3)
    records = simulate_pulses(CoherentInput(4), mirror, mirror.peak_position, 20000, d)
    np.testing.assert_array_equal(records.assigned_k, np.minimum(records.true_k, 4))
    assert not records.misassigned.any()
    assert records.overflow.sum() == (records.true_k > 3).sum() > 0


def test_frequencies_follow_poisson_at_peak(mirror):
    d = DetectorModel(noise_sigma=0.05, k_max_observable=10, seed=3)
    n = 200_000
    freqs = simulate_pulses(CoherentInput(2), mirror, mirror.peak_position, n, d).frequencies()
    for k in range(8):
        p = stats.poisson.pmf(k, 2.0)
        assert abs(freqs[k] - p) <= 5 * np.sqrt(p * (1 - p) / n) + 1e-9


def test_misassignment_rate_matches_gaussian_tails(mirror):
    d = DetectorModel(gain=1.0, noise_sigma=0.25, k_max_observable=7, seed=5)
    n = 200_000
    records = simulate_pulses(FockInput(3), mirror, mirror.peak_position, n, d)
    assert np.all(records.true_k == 3)
    expected = 2 * stats.norm.sf(0.5 / 0.25)
    observed = records.misassigned.mean()
    assert abs(observed - expected) <= 5 * np.sqrt(expected * (1 - expected) / n)


def test_records_iterate_as_rows(mirror):
    records = simulate_pulses(CoherentInput(1), mirror, 0.1, 5, DetectorModel())
    rows = list(records)
    assert len(rows) == len(records) == 5
    assert [r.pulse_index for r in rows] == list(range(5))
    assert all(isinstance(r.assigned_k, int) for r in rows)


def test_single_pulse(mirror):
    records = simulate_pulses(CoherentInput(4), mirror, 0.1, 1, DetectorModel())
    assert len(records) == 1
    assert records.frequencies().sum() <= 1.0


@pytest.mark.parametrize("pulses", [0, -5, 2.5])
def test_pulse_count_validation(mirror, pulses):
    with pytest.raises(InvalidParameterError):
        simulate_pulses(CoherentInput(4), mirror, 0.1, pulses, DetectorModel())
    with pytest.raises(InvalidParameterError):
        scan_experiment(CoherentInput(4), mirror, PhaseGrid(0, 0.5, 3), pulses, DetectorModel())


def test_drift_moves_phase_within_point(mirror):
    d = DetectorModel(noise_sigma=0.0, seed=1)
    still = simulate_pulses(FockInput(5), mirror, mirror.peak_position, 2000, d, point_index=4)
    drifting = simulate_pulses(FockInput(5), mirror, mirror.peak_position, 2000, d, point_index=4, drift=0.01)
    assert np.all(still.true_k == 5)
    assert drifting.true_k.mean() < 5


def _records(true_k, sigma, seed=0):
    rng = np.random.default_rng(seed)
    true_k = np.asarray(true_k, dtype=np.int64)
    integral = true_k + rng.normal(0.0, sigma, size=true_k.size)
    return CountRecords(np.arange(true_k.size), true_k, integral, np.zeros_like(true_k), k_max_observable=7)


def test_data_thresholds_sit_between_peaks(mirror):
    d = DetectorModel(gain=1.0, noise_sigma=0.1, k_max_observable=7, seed=2)
    records = simulate_pulses(CoherentInput(3), mirror, mirror.peak_position, 50_000, d)
    h = build_histogram(records, 0.02, d, mode="data")
    assert len(h.thresholds) == 8
    assert h.resolved_k_max == 7
    np.testing.assert_allclose(h.thresholds, d.oracle_thresholds(), atol=0.1)
    assert h.total == len(records)
    assert h.mode == "data"


def test_pulses_beyond_resolved_peaks_are_overflow():
    d = DetectorModel(noise_sigma=0.08)
    true_k = np.repeat([0, 1, 2, 5], [3000, 3000, 3000, 2])
    records = _records(true_k, 0.08, seed=1)
    h = build_histogram(records, 0.02, d, mode="data")
    assert h.resolved_k_max == 2
    np.testing.assert_allclose(h.thresholds, [0.5, 1.5, 2.5], atol=0.1)

    relabelled = assign_counts(h, records)
    assert np.all(relabelled.assigned_k[true_k == 5] == d.overflow_k)
    np.testing.assert_array_equal(relabelled.assigned_k[true_k < 5], true_k[true_k < 5])


def test_weak_zero_photon_peak_keeps_labels():
    d = DetectorModel(noise_sigma=0.08)
    true_k = np.repeat([0, 1, 2, 3], [60, 3000, 3000, 3000])
    records = _records(true_k, 0.08, seed=2)
    h = build_histogram(records, 0.02, d, mode="data")
    assert h.resolved_k_max == 3
    np.testing.assert_array_equal(assign_counts(h, records).assigned_k, true_k)


def test_missing_zero_photon_peak_raises():
    d = DetectorModel(noise_sigma=0.08)
    records = _records(np.repeat([1, 2, 3], 3000), 0.08, seed=3)
    with pytest.raises(HistogramError):
        build_histogram(records, 0.02, d, mode="data")


def test_data_thresholds_match_oracle_at_bright_fringe(mirror):
    d = DetectorModel(noise_sigma=0.1, k_max_observable=7, seed=11)
    records = simulate_pulses(CoherentInput(3.9), mirror, mirror.peak_position, 2000, d)
    h = build_histogram(records, 0.02, d, mode="data")
    assert h.resolved_k_max == 7
    np.testing.assert_allclose(h.thresholds, d.oracle_thresholds(), atol=0.1)
    relabelled = assign_counts(h, records)
    assert relabelled.misassigned.sum() <= records.misassigned.sum() + 2


def test_unresolvable_histogram_raises(mirror):
    d = DetectorModel(gain=1.0, noise_sigma=1.0, seed=4)
    records = simulate_pulses(CoherentInput(3), mirror, mirror.peak_position, 200_000, d)
    with pytest.raises(HistogramError):
        build_histogram(records, 0.2, d, mode="data")


def test_histogram_input_validation(mirror):
    d = DetectorModel()
    records = simulate_pulses(CoherentInput(1), mirror, 0.1, 100, d)
    with pytest.raises(InvalidParameterError):
        build_histogram(records, 0.0, d)
    with pytest.raises(InvalidParameterError):
        build_histogram(records, 0.02, d, mode="guess")
    empty = CountRecords(*(np.array([], dtype=int) for _ in range(4)), k_max_observable=7)
    with pytest.raises(InvalidParameterError):
        build_histogram(empty, 0.02, d)


def test_histogram_of_identical_values_has_a_bin(mirror):
    d = DetectorModel(noise_sigma=0.0)
    records = simulate_pulses(FockInput(0), mirror, 0.1, 10, d)
    h = build_histogram(records, 0.02, d)
    assert h.counts.size >= 1 and h.total == 10


def test_assign_counts_returns_new_records(mirror):
    d = DetectorModel(noise_sigma=0.1, seed=9)
    records = simulate_pulses(CoherentInput(3), mirror, mirror.peak_position, 1000, d)
    h = build_histogram(records, 0.02, d)
    relabelled = assign_counts(h, records)
    assert relabelled is not records
    np.testing.assert_array_equal(relabelled.assigned_k, records.assigned_k)


def test_scan_is_deterministic_across_workers(mirror):
    grid = PhaseGrid(0, 0.5, 9)
    d = DetectorModel(seed=42)
    serial = scan_experiment(CoherentInput(3), mirror, grid, 500, d)
    threaded = scan_experiment(CoherentInput(3), mirror, grid, 500, d, workers=4)
    again = scan_experiment(CoherentInput(3), mirror, grid, 500, d)
    for a, b, c in zip(serial.curves, threaded.curves, again.curves):
        np.testing.assert_array_equal(a.values, b.values)
        np.testing.assert_array_equal(a.values, c.values)
    np.testing.assert_array_equal(serial.histogram.counts, threaded.histogram.counts)


def test_scan_result_shape(mirror):
    grid = PhaseGrid(0, 0.5, 11)
    d = DetectorModel(k_max_observable=5, seed=1)
    result = scan_experiment(CoherentInput(2), mirror, grid, 300, d)
    assert [c.k for c in result.curves] == list(range(6))
    assert result.total_pulses == 3300
    assert result.curve(2).pulses == 300
    assert result.curve(2).stderr.shape == (11,)
    assert result.summary["threshold_mode"] == "oracle"
    assert result.summary["resolved_k_max"] == 5
    with pytest.raises(KeyError):
        result.curve(9)


def test_seed_changes_outcome(mirror):
    grid = PhaseGrid(0, 0.5, 5)
    a = scan_experiment(CoherentInput(3), mirror, grid, 500, DetectorModel(seed=1))
    b = scan_experiment(CoherentInput(3), mirror, grid, 500, DetectorModel(seed=2))
    assert any(not np.array_equal(x.values, y.values) for x, y in zip(a.curves, b.curves))


def test_truncation_identity():
    c = CoherentInput(4)
    assert float(truncated_mean(c, 1.0, 7)) == pytest.approx(4 * stats.poisson.cdf(6, 4), rel=1e-12)
    assert float(truncation_coverage(4.0, 7)) == pytest.approx(0.8893, abs=1e-4)
    assert float(truncation_coverage(4.0, 10)) >= 0.99


def test_reconstruction_from_model_curves(mirror):
    grid = PhaseGrid.one_period(201, center=mirror.peak_position)
    curves = fringe_scan(CoherentInput(4), mirror, grid, range(0, 8))
    reconstructed = reconstruct_classical(curves)
    t2 = transmission_probability(mirror, grid.values)
    expected = 4 * t2 * truncation_coverage(4 * t2, 7)
    np.testing.assert_allclose(reconstructed.values, expected, rtol=1e-10)
    assert reconstructed.is_mean
    assert reconstructed.meta["reconstructed_k_max"] == "7"
    assert reconstructed.values.max() / 4 == pytest.approx(0.8893, abs=1e-3)


def test_reconstruction_errors(mirror):
    curves = fringe_scan(CoherentInput(4), mirror, PhaseGrid(0, 0.5, 11), [0])
    with pytest.raises(InvalidParameterError):
        reconstruct_classical(curves)
    other = fringe_scan(CoherentInput(4), mirror, PhaseGrid(0, 0.4, 11), [1])
    with pytest.raises(InvalidParameterError):
        reconstruct_classical(curves + other)
    with pytest.raises(InvalidParameterError):
        reconstruct_classical([])


def test_reconstruction_stderr_from_simulation(mirror):
    grid = PhaseGrid.one_period(21, center=mirror.peak_position)
    result = scan_experiment(CoherentInput(4), mirror, grid, 2000, DetectorModel(seed=8))
    reconstructed = reconstruct_classical(result.curves)
    assert reconstructed.stderr is not None
    assert np.all(reconstructed.stderr >= 0)
    assert reconstructed.pulses == 2000


@pytest.mark.slow
def test_simulated_peak_matches_truncated_mean(mirror):
    grid = PhaseGrid.one_period(11, center=mirror.peak_position)
    result = scan_experiment(CoherentInput(4), mirror, grid, 200_000, DetectorModel(seed=0))
    reconstructed = reconstruct_classical(result.curves)
    assert reconstructed.values[5] / 4 == pytest.approx(0.8893, abs=0.01)


@pytest.mark.slow
def test_data_threshold_scan_agrees_with_oracle():
    m = MirrorSpec.from_reflectivity(0.91)
    grid = PhaseGrid.one_period(201, center=m.peak_position)
    d = DetectorModel(seed=7)
    oracle = scan_experiment(CoherentInput(3.9), m, grid, 10_000, d)
    data = scan_experiment(CoherentInput(3.9), m, grid, 10_000, d, threshold_mode="data")
    assert data.summary["resolved_k_max"] == d.k_max_observable
    assert data.misassigned <= oracle.misassigned + 1e-4 * data.total_pulses
    assert abs(data.overflow - oracle.overflow) <= 1e-4 * data.total_pulses
    for a, b in zip(data.curves, oracle.curves):
        np.testing.assert_allclose(a.values, b.values, atol=1e-3)
