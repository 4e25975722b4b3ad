import numpy as np
import pytest

from fabry_perot.coherent import CoherentInput
from fabry_perot.core_optics import FSR, MirrorSpec, transmission_probability
from fabry_perot.detector_sim import DetectorModel, reconstruct_classical, scan_experiment
from fabry_perot.errors import FitConvergenceError, InvalidParameterError
from fabry_perot.fitting import (
    DipDiagnosis,
    dip_diagnostic,
    fit_classical,
    fit_per_k,
    fit_pnr_curves,
    reflectivity_from_fwhm,
)
from fabry_perot.metrology import fwhm
from fabry_perot.photon_stats import FringeCurve, PhaseGrid, fringe_scan


def model_curves(n_bar, r2, ks, points=201):
    m = MirrorSpec.from_reflectivity(r2)
    grid = PhaseGrid.one_period(points, center=m.peak_position)
    return fringe_scan(CoherentInput(n_bar), m, grid, ks)


@pytest.mark.parametrize("r2", [0.5, 0.7, 0.9])
def test_reflectivity_from_fwhm_inverts_airy_width(r2):
    m = MirrorSpec.from_reflectivity(r2)
    grid = PhaseGrid.one_period(100001, center=m.peak_position)
    width = fwhm(grid.values, transmission_probability(m, grid.values))
    assert reflectivity_from_fwhm(width) == pytest.approx(r2, abs=1e-4)


def test_reflectivity_from_fwhm_domain():
    with pytest.raises(InvalidParameterError):
        reflectivity_from_fwhm(0.0)
    with pytest.raises(InvalidParameterError):
        reflectivity_from_fwhm(FSR)


def test_noiseless_joint_fit_recovers_parameters():
    result = fit_pnr_curves(model_curves(4.0, 0.7, range(0, 9)))
    assert result.success
    assert result.n_bar_hat == pytest.approx(4.0, abs=1e-6)
    assert result.r2_hat == pytest.approx(0.7, abs=1e-6)
    assert result.scale_hat == pytest.approx(1.0, abs=1e-6)
    assert abs(result.phase_offset_hat) < 1e-6
    assert result.ks == tuple(range(0, 9))
    assert set(result.stderr) == {"n_bar", "r2", "phase_offset", "scale"}


def test_joint_fit_from_doubled_initial_guess():
    result = fit_pnr_curves(model_curves(4.0, 0.7, range(1, 8)), init={"n_bar": 8.0, "r2": 0.8})
    assert result.n_bar_hat == pytest.approx(4.0, abs=1e-5)
    assert result.r2_hat == pytest.approx(0.7, abs=1e-5)


def test_joint_fit_with_fixed_scale():
    result = fit_pnr_curves(model_curves(2.5, 0.8, range(0, 7)), fix_scale=True)
    assert result.scale_hat == 1.0
    assert "scale" not in result.stderr
    assert result.n_bar_hat == pytest.approx(2.5, abs=1e-5)


def test_joint_fit_selection_and_validation():
    curves = model_curves(4.0, 0.7, range(1, 5))
    result = fit_pnr_curves(curves, ks=[2, 3, 4])
    assert result.ks == (2, 3, 4)
    with pytest.raises(InvalidParameterError):
        fit_pnr_curves(curves, ks=[2, 9])
    with pytest.raises(InvalidParameterError):
        fit_pnr_curves(curves[:1])
    with pytest.raises(InvalidParameterError):
        fit_pnr_curves(curves + curves[:1])


def test_joint_fit_rejects_flat_data():
    x = np.linspace(0, 0.5, 51)
    flat = [FringeCurve("coherent", 4.0, k, x, np.full_like(x, 0.1)) for k in (1, 2)]
    with pytest.raises(InvalidParameterError):
        fit_pnr_curves(flat)


def test_count_weighting_needs_standard_errors():
    with pytest.raises(InvalidParameterError):
        fit_pnr_curves(model_curves(4.0, 0.7, range(1, 4)), weights="counts")


def test_per_k_fits():
    results = fit_per_k(model_curves(4.0, 0.7, range(0, 6)))
    assert sorted(results) == [1, 2, 3, 4, 5]
    for k, result in results.items():
        assert result.ks == (k,)
        assert result.scale_hat == 1.0
        assert result.n_bar_hat == pytest.approx(4.0, rel=1e-3)


def test_classical_fit_recovers_mean_photon_number():
    m = MirrorSpec.from_reflectivity(0.7)
    grid = PhaseGrid.one_period(201, center=m.peak_position)
    classical = fringe_scan(CoherentInput(4), m, grid, classical=True)[0]
    result = fit_classical(classical)
    assert result.model == "classical"
    assert result.n_bar_hat == pytest.approx(4.0, abs=1e-7)
    assert result.r2_hat == pytest.approx(0.7, abs=1e-7)


def test_classical_fit_of_truncated_reconstruction_underestimates():
    reconstructed = reconstruct_classical(model_curves(4.0, 0.7, range(0, 8)))
    result = fit_classical(reconstructed)
    assert result.n_bar_hat < 4.0


def test_classical_fit_needs_mean_curve():
    with pytest.raises(InvalidParameterError):
        fit_classical(model_curves(4.0, 0.7, [2])[0])


def test_fit_result_row():
    row = fit_pnr_curves(model_curves(3.0, 0.7, range(0, 6))).as_dict()
    assert row["model"] == "pnr"
    assert row["ks"] == "0,1,2,3,4,5"
    assert "stderr_n_bar" in row


@pytest.mark.parametrize("n_bar", [1.5, 2.5, 3.5, 4.5])
def test_dips_bracket_mean_photon_number(n_bar):
    diagnosis = dip_diagnostic(model_curves(n_bar, 0.7, range(1, 8), points=401))
    assert diagnosis.contains(n_bar)
    assert diagnosis.k_low == int(n_bar)
    assert diagnosis.k_high == int(n_bar) + 1
    assert diagnosis.consistent


def test_dip_bound_text():
    diagnosis = dip_diagnostic(model_curves(3.5, 0.7, range(1, 8), points=401))
    assert diagnosis.bound == "3 < n_bar <= 4"
    assert all(diagnosis.dips[k] for k in (1, 2, 3))
    assert not any(diagnosis.dips[k] for k in (4, 5, 6, 7))


def test_no_dip_when_k_equals_mean():
    diagnosis = dip_diagnostic(model_curves(4.0, 0.7, range(1, 8), points=401))
    assert diagnosis.dips[3]
    assert not diagnosis.dips[4]


def test_dip_diagnosis_open_bounds():
    only_low = DipDiagnosis({1: True, 2: True}, {1: 0.1, 2: 0.1}, 0.0, 2, None)
    assert only_low.bound == "2 < n_bar"
    assert only_low.contains(7.0) and not only_low.contains(2.0)
    only_high = DipDiagnosis({1: False}, {1: 0.0}, 0.0, None, 1)
    assert only_high.bound == "n_bar <= 1"
    assert only_high.contains(0.5)


def test_dip_diagnostic_needs_a_peak():
    m = MirrorSpec.from_reflectivity(0.7)
    x = np.linspace(m.peak_position + 0.02, m.peak_position + 0.2, 50)
    curves = fringe_scan(CoherentInput(3.5), m, x, range(1, 4))
    with pytest.raises(InvalidParameterError):
        dip_diagnostic(curves)


@pytest.mark.slow
@pytest.mark.parametrize("seed", [0, 1, 2])
def test_simulated_dips_bracket_mean_photon_number(seed):
    m = MirrorSpec.from_reflectivity(0.7)
    grid = PhaseGrid.one_period(101, center=m.peak_position)
    result = scan_experiment(CoherentInput(3.5), m, grid, 200_000, DetectorModel(seed=seed))
    diagnosis = dip_diagnostic(result.curves)
    assert diagnosis.contains(3.5)
    assert diagnosis.bound == "3 < n_bar <= 4"


@pytest.mark.slow
@pytest.mark.parametrize("seed", [0, 1])
def test_simulated_joint_fit_with_count_weights(seed):
    m = MirrorSpec.from_reflectivity(0.7)
    grid = PhaseGrid.one_period(101, center=m.peak_position)
    result = scan_experiment(CoherentInput(3.9), m, grid, 20_000, DetectorModel(seed=seed))
    fit = fit_pnr_curves(result.curves, weights="counts")
    assert abs(fit.n_bar_hat - 3.9) < 5 * fit.stderr["n_bar"] + 0.02
    assert fit.r2_hat == pytest.approx(0.7, abs=0.01)


BRIGHT_SEEDS = range(20)


@pytest.fixture(scope="module")
def bright_scans():
    # 201 points across +-0.15 around the peak, as in a piezo scan over one fringe
    m = MirrorSpec.from_reflectivity(0.91)
    grid = PhaseGrid(m.peak_position - 0.15, m.peak_position + 0.15, 201)
    return [
        scan_experiment(CoherentInput(3.9), m, grid, 10_000, DetectorModel(seed=seed))
        for seed in BRIGHT_SEEDS
    ]


@pytest.mark.slow
def test_simulated_fit_recovers_truth_across_seeds(bright_scans):
    recovered = 0
    for result in bright_scans:
        try:
            fit = fit_pnr_curves(result.curves, ks=range(1, 8))
        except FitConvergenceError:
            continue
        if abs(fit.n_bar_hat - 3.9) <= 0.05 * 3.9 and abs(fit.r2_hat - 0.91) <= 0.01 * 0.91:
            recovered += 1
    assert recovered >= 18


@pytest.mark.slow
def test_simulated_dips_bound_mean_across_seeds(bright_scans):
    bounds = [dip_diagnostic(result.curves).bound for result in bright_scans]
    assert sum(b == "3 < n_bar <= 4" for b in bounds) >= 19, bounds
