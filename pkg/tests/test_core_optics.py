import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from fabry_perot.core_optics import (
    FSR,
    MirrorSpec,
    Phase,
    d_T2_dl,
    reflection_probability,
    transfer_R,
    transfer_T,
    transmission_probability,
)
from fabry_perot.errors import InvalidParameterError
from fabry_perot.metrology import fwhm
from fabry_perot.photon_stats import PhaseGrid

r_amps = st.floats(min_value=0.0, max_value=0.995)
phases = st.floats(min_value=-3.0, max_value=3.0)


def test_zero_reflectivity_is_bare_propagation():
    m = MirrorSpec(0.0)
    x = np.linspace(-1, 1, 101)
    np.testing.assert_allclose(transfer_T(m, x).abs2, 1.0, atol=1e-15)
    np.testing.assert_allclose(transfer_R(m, x).abs2, 0.0, atol=1e-15)


@pytest.mark.parametrize("r_amp", [1.0, -0.1, np.nan])
def test_invalid_reflectivity_rejected(r_amp):
    with pytest.raises(InvalidParameterError):
        MirrorSpec(r_amp)


def test_invalid_power_reflectivity_rejected():
    with pytest.raises(InvalidParameterError):
        MirrorSpec.from_reflectivity(1.0)


def test_phase_accessor():
    assert Phase(0.25).phi == pytest.approx(np.pi / 2)
    with pytest.raises(InvalidParameterError):
        Phase(float("inf"))


@given(r_amps, phases)
def test_unitarity(r_amp, x):
    m = MirrorSpec(r_amp)
    total = transfer_T(m, x).abs2 + transfer_R(m, x).abs2
    assert abs(float(total) - 1.0) < 1e-12


@given(r_amps, phases)
def test_rational_forms_match_complex_amplitudes(r_amp, x):
    m = MirrorSpec(r_amp)
    assert float(transmission_probability(m, x)) == pytest.approx(float(transfer_T(m, x).abs2), abs=1e-12)
    assert float(reflection_probability(m, x)) == pytest.approx(float(transfer_R(m, x).abs2), abs=1e-12)


def test_orthogonality():
    m = MirrorSpec.from_reflectivity(0.9)
    x = np.linspace(0, 1, 1000)
    t = transfer_T(m, x).value
    r = transfer_R(m, x).value
    np.testing.assert_allclose(t * np.conj(r) + r * np.conj(t), 0.0, atol=1e-12)


def test_unitarity_and_orthogonality_over_random_pairs():
    rng = np.random.default_rng(20)
    reflectivities = rng.uniform(0.0, 0.999, 1000)
    phis = rng.uniform(0.0, 2 * np.pi, (1000, 100))
    worst_norm = worst_cross = 0.0
    for r2, phi in zip(reflectivities, phis):
        m = MirrorSpec.from_reflectivity(r2)
        t = transfer_T(m, phi / (2 * np.pi))
        r = transfer_R(m, phi / (2 * np.pi))
        worst_norm = max(worst_norm, float(np.max(np.abs(t.abs2 + r.abs2 - 1.0))))
        worst_cross = max(worst_cross, float(np.max(np.abs((t.value * np.conj(r.value)).real))))
    assert worst_norm < 1e-12
    assert worst_cross < 1e-12


@given(r_amps, st.floats(min_value=-1.0, max_value=1.0))
def test_period_is_half_in_l_over_lambda(r_amp, x):
    m = MirrorSpec(r_amp)
    t = transfer_T(m, x).value
    t_shifted = transfer_T(m, x + FSR).value
    assert abs(t - t_shifted) < 1e-9
    r2 = transfer_R(m, x).abs2
    assert abs(r2 - transfer_R(m, x + FSR).abs2) < 1e-9


@given(r_amps)
def test_peak_transmission_is_one(r_amp):
    m = MirrorSpec(r_amp)
    assert float(transmission_probability(m, m.peak_position)) == pytest.approx(1.0, abs=1e-9)


def test_minimum_transmission_matches_brute_force():
    m = MirrorSpec.from_reflectivity(0.7)
    x = np.linspace(0, FSR, 1_000_001)
    expected = (1 - 0.7) ** 2 / (1 + 0.7) ** 2
    assert transmission_probability(m, x).min() == pytest.approx(expected, rel=1e-9)
    assert expected == pytest.approx(0.03114, abs=1e-5)


def test_peaks_shift_left_with_reflectivity():
    positions = [MirrorSpec.from_reflectivity(a).peak_position for a in (0.5, 0.7, 0.9)]
    assert positions[0] > positions[1] > positions[2]


def test_peaks_narrow_with_reflectivity():
    widths = []
    for a in (0.5, 0.7, 0.9):
        m = MirrorSpec.from_reflectivity(a)
        grid = PhaseGrid.one_period(20001, center=m.peak_position)
        widths.append(fwhm(grid.values, transmission_probability(m, grid.values)))
    assert widths[0] > widths[1] > widths[2]


def test_derivative_matches_central_differences(mirror):
    x = np.linspace(-0.5, 0.5, 1001)
    h = 1e-6
    numeric = (transmission_probability(mirror, x + h) - transmission_probability(mirror, x - h)) / (2 * h)
    analytic = d_T2_dl(mirror, x)
    scale = np.abs(analytic).max()
    np.testing.assert_allclose(analytic, numeric, rtol=1e-6, atol=1e-6 * scale)


def test_derivative_vanishes_at_peak(mirror):
    assert abs(float(d_T2_dl(mirror, mirror.peak_position))) < 1e-9


def test_derivative_periodic():
    m = MirrorSpec.from_reflectivity(0.7)
    x = np.random.default_rng(7).uniform(-2, 2, 1000)
    np.testing.assert_allclose(d_T2_dl(m, x), d_T2_dl(m, x + FSR), rtol=1e-7, atol=1e-7)


def test_phase_instance_accepted(mirror):
    assert float(transmission_probability(mirror, Phase(0.1))) == pytest.approx(
        float(transmission_probability(mirror, 0.1))
    )


def test_non_finite_phase_rejected(mirror):
    with pytest.raises(InvalidParameterError):
        transmission_probability(mirror, [0.1, np.nan])
