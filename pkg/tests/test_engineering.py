import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from mwlattice.engineering import (HarmonicModel, LatticeShift, MicrowavePulse,
                                   PopulationDistribution, PushOut,
                                   RepumpPulse, SequenceState, Wait,
                                   coupling_maximizing_shift,
                                   effective_efficiency, filter_survival,
                                   prepare_coherent, prepare_fock,
                                   pulse_unitary, reconstruct_distribution,
                                   run_sequence, superposition_sequence,
                                   zero_coupling_shift)
from mwlattice.spectroscopy import PulseSpec, gaussian_pi_pulse

MODEL = HarmonicModel(omega_vib=2 * math.pi * 116.73e3, n_max=10)


def test_empty_sequence_is_identity():
    initial = SequenceState.pure(10, "up", 0)
    final = run_sequence(initial, [], MODEL)
    assert np.abs(final.rho - initial.rho).max() < 1e-15


def test_lattice_shift_preserves_populations():
    initial = SequenceState.pure(10, "up", 3)
    final = run_sequence(initial, [LatticeShift(0.7), Wait(1e-3),
                                   LatticeShift(0.2)], MODEL)
    assert np.abs(final.rho - initial.rho).max() < 1e-15
    assert final.eta_x == 0.2


def test_pulse_unitary_is_unitary():
    pulse = gaussian_pi_pulse(30e-6)
    u = pulse_unitary(MODEL, pulse, 0.5)
    assert np.abs(u @ u.conj().T - np.eye(u.shape[0])).max() < 1e-9


def test_carrier_pi_pulse_at_zero_shift():
    pulse = gaussian_pi_pulse(30e-6)
    initial = SequenceState.pure(10, "up", 0)
    final = run_sequence(initial, [MicrowavePulse(pulse, target=(0, 0))],
                         MODEL)
    assert final.fidelity("down", 0) == pytest.approx(1.0, abs=1e-6)


def test_push_out_tracks_survival():
    initial = SequenceState.pure(10, "up", 0)
    pulse = gaussian_pi_pulse(30e-6)
    seq = [MicrowavePulse(pulse, target=(0, 0)), PushOut(spin="down")]
    final = run_sequence(initial, seq, MODEL)
    assert final.survival == pytest.approx(0.0, abs=1e-6)
    seq = [PushOut(spin="down")]
    final = run_sequence(initial, seq, MODEL)
    assert final.survival == pytest.approx(1.0, abs=1e-12)


def test_repump_projects_poissonian():
    initial = SequenceState.pure(10, "down", 0, eta_x=1.0)
    final = run_sequence(initial, [RepumpPulse()], MODEL)
    pops = final.populations("up")
    n = np.arange(11)
    poisson = np.exp(-1.0) / np.array([math.factorial(int(i)) for i in n])
    assert np.abs(pops - poisson).max() < 1e-3


def test_coupling_extrema_locations():
    # first-sideband coupling maximal near eta = 1/sqrt(2)... the harmonic
    # |<1|D|0>| = eta e^{-eta^2/2} peaks at eta = 1
    eta = coupling_maximizing_shift(MODEL, 0, 1)
    assert eta == pytest.approx(1.0, abs=1e-3)
    # K[2,2] ~ L_2(eta^2): first zero at eta^2 = 2 - sqrt(2)
    eta22 = zero_coupling_shift(MODEL, 2)
    assert eta22 == pytest.approx(math.sqrt(2 - math.sqrt(2)), abs=1e-6)


def test_superposition_population_split():
    st_ = superposition_sequence(MODEL, 0.5)
    p0, p2 = st_.fidelity("down", 0), st_.fidelity("down", 2)
    assert p2 == pytest.approx(0.5, abs=0.01)
    assert p0 + p2 == pytest.approx(1.0, abs=0.01)


def test_fock_preparation_m2():
    state, fid = prepare_fock(MODEL, 2)
    assert fid > 0.99


def test_prepare_coherent_mean():
    pops, expected = prepare_coherent(MODEL, 1.2)
    assert np.sum(np.arange(11) * pops) == pytest.approx(1.44, rel=1e-3)
    assert np.abs(pops - expected / expected.sum()).max() < 1e-6


def test_effective_efficiency_values():
    assert effective_efficiency(0.7, 3) == pytest.approx(0.973, abs=1e-12)
    assert effective_efficiency(0.5, 1) == 0.5
    assert effective_efficiency(1.0, 2) == 1.0


@settings(deadline=None, max_examples=60)
@given(st.floats(min_value=0.0, max_value=1.0),
       st.integers(min_value=1, max_value=20))
def test_effective_efficiency_monotone(f, n):
    fp = effective_efficiency(f, n)
    assert 0.0 <= fp <= 1.0
    assert fp >= f - 1e-12                        # increasing in N
    assert effective_efficiency(f, n + 1) >= fp - 1e-12
    if f < 1.0:
        assert effective_efficiency(min(f + 0.05, 1.0), n) >= fp - 1e-12


def test_thermal_distribution_cumulative():
    dist = PopulationDistribution.thermal(1.33, 15)
    assert dist.p.sum() == pytest.approx(1.0, rel=1e-12)
    x = 1.33 / 2.33
    assert dist.p[1] / dist.p[0] == pytest.approx(x, rel=1e-9)
    fns = [dist.cumulative(n) for n in range(17)]
    assert all(b >= a for a, b in zip(fns, fns[1:]))
    assert dist.cumulative(0) == 0.0


def test_filter_survival_limits():
    dist = PopulationDistribution.thermal(1.0, 12)
    # perfect filter, one pass: survival = F_n exactly
    for n in (0, 1, 3):
        assert filter_survival(dist, n, 1.0, 1) == pytest.approx(
            dist.cumulative(n), rel=1e-12)
    # zero efficiency: everything survives
    assert filter_survival(dist, 2, 0.0, 5) == pytest.approx(1.0, rel=1e-12)


def test_reconstruction_round_trip_exact():
    dist = PopulationDistribution.thermal(1.33, 12)
    plateaus = np.array([filter_survival(dist, n, 0.7, 3)
                         for n in range(14)])
    rec = reconstruct_distribution(plateaus, f=0.7, repetitions=3,
                                   ceiling=1.0)
    assert np.abs(rec.p - dist.p).max() < 1e-12


def test_reconstruction_with_ceiling_loss():
    dist = PopulationDistribution.thermal(0.8, 12)
    loss = 0.97
    plateaus = np.array([filter_survival(dist, n, 0.8, 2, loss_per_pass=loss)
                         for n in range(14)])
    rec = reconstruct_distribution(plateaus, f=0.8, repetitions=2,
                                   ceiling=loss ** 2)
    assert np.abs(rec.p - dist.p).max() < 1e-12


def test_reconstruction_flags_nonmonotone_input():
    plateaus = np.array([0.5, 0.9, 0.3, 1.0])
    with pytest.raises(ValueError):
        reconstruct_distribution(plateaus, f=1.0)


def test_reconstruction_clips_small_noise_with_warning():
    plateaus = np.array([0.5, 0.7, 0.69, 1.0])
    with pytest.warns(UserWarning):
        rec = reconstruct_distribution(plateaus, f=1.0)
    assert np.all(rec.p >= 0)


def test_population_distribution_validation():
    with pytest.raises(ValueError):
        PopulationDistribution(np.array([-0.1, 1.1]))
    with pytest.raises(ValueError):
        PopulationDistribution(np.array([0.9, 0.9]))
