import math

import numpy as np
import pytest

from leakrepump import pulse
from leakrepump.errors import ConvergenceError, DomainError
from leakrepump.pulse import (
    GROUND,
    PulseEnvelope,
    TwoLevelState,
    ac_stark_phase,
    coupling_ratio,
    propagate,
    rabi_formula,
    scattering_error_floor,
    shaped_pulse_offres_error,
    square_pulse_offres_error,
)

DELTA_HF = 2 * math.pi * 860e6
GAMMA = 1 / 52.7e-3


def constant_drive(rabi, t):
    """Square envelope giving Rabi frequency ``rabi`` for time ``t``."""
    return PulseEnvelope(t, 0.0, amplitude=rabi * t / math.pi)


def test_coupling_ratio():
    assert coupling_ratio() == pytest.approx(0.94280904158206337, abs=1e-15)
    assert coupling_ratio() * 3 / (2 * math.sqrt(2)) == pytest.approx(1, abs=1e-15)
    assert coupling_ratio() * math.pi / 1e-6 == pytest.approx(2.96192195877224e6, rel=1e-12)


def test_resonant_pi_pulse():
    final = propagate(PulseEnvelope(1e-6), 0.0, GROUND)
    assert final.excited_population == pytest.approx(1, abs=1e-9)


@pytest.mark.parametrize("edge", [0.0, 300e-9, 700e-9])
def test_envelope_area_is_pi(edge):
    env = PulseEnvelope(1e-6, edge)
    assert env.area() == pytest.approx(math.pi, abs=1e-9)
    assert env.peak_rabi == pytest.approx(math.pi / 1e-6)


def test_smoothed_resonant_pulse_still_inverts():
    final = propagate(PulseEnvelope(1e-6, 700e-9), 0.0, GROUND, 1e-12)
    assert final.excited_population == pytest.approx(1, abs=1e-9)


def test_envelope_validation():
    with pytest.raises(DomainError):
        PulseEnvelope(0.0)
    with pytest.raises(DomainError):
        PulseEnvelope(1e-6, -1e-9)
    with pytest.raises(DomainError):
        PulseEnvelope(1e-6, 2e-6)
    with pytest.raises(DomainError):
        PulseEnvelope(float("nan"))


def test_propagate_input_validation():
    env = PulseEnvelope(1e-6)
    with pytest.raises(DomainError):
        propagate(env, float("inf"))
    with pytest.raises(DomainError):
        propagate(env, 0.0, GROUND, 1e-2)
    with pytest.raises(DomainError):
        TwoLevelState(complex("nan"), 0)


def test_rabi_oracle_grid():
    rng = np.random.default_rng(20190501)
    worst = 0.0
    for _ in range(50):
        rabi = rng.uniform(1e5, 1e7)
        detuning = rng.uniform(-2e7, 2e7)
        t = rng.uniform(1e-7, 5e-6)
        final = propagate(constant_drive(rabi, t), detuning, GROUND)
        worst = max(worst, abs(final.excited_population - rabi_formula(rabi, detuning, t)))
        assert abs(final.norm - 1) < 1e-9
    assert worst < 1e-6


def test_zero_amplitude_leaves_state():
    env = PulseEnvelope(1e-6, 200e-9, amplitude=0.0)
    start = TwoLevelState(0.6, 0.8j)
    assert propagate(env, 0.0, start) == start
    moved = propagate(env, 1e7, start, 1e-12)
    assert abs(moved.amplitude_g) == pytest.approx(0.6, abs=1e-12)
    assert abs(moved.amplitude_e) == pytest.approx(0.8, abs=1e-12)


@pytest.mark.parametrize("edge", [0.0, 50e-9, 700e-9])
def test_norm_preserved(edge):
    start = TwoLevelState(1 / math.sqrt(2), 1j / math.sqrt(2))
    final = propagate(PulseEnvelope(1e-6, edge), 3e7, start, 1e-12)
    assert abs(final.norm - 1) < 1e-9


def test_smoothed_pulse_against_independent_ode():
    # reference populations from scipy DOP853 (rtol 1e-13) in the interaction picture
    assert shaped_pulse_offres_error(PulseEnvelope(1e-6, 0.0), DELTA_HF) == pytest.approx(
        4.950034118446047e-14, rel=1e-6)
    assert shaped_pulse_offres_error(PulseEnvelope(1e-6, 100e-9), DELTA_HF) == pytest.approx(
        4.9704401750135423e-23, rel=1e-2)


def test_square_error_formula():
    assert square_pulse_offres_error(1e-6, DELTA_HF) == pytest.approx(3.00462712577369e-7, rel=1e-12)
    assert square_pulse_offres_error(1e-6, DELTA_HF) < 1e-6
    one = square_pulse_offres_error(1e-6, DELTA_HF)
    assert square_pulse_offres_error(2e-6, DELTA_HF) == pytest.approx(one / 4, rel=1e-14)
    assert square_pulse_offres_error(1e-6, 2 * DELTA_HF) == pytest.approx(one / 4, rel=1e-14)


@pytest.mark.parametrize("tau,delta", [(1e-6, DELTA_HF), (3.3e-7, 1e9), (5e-6, 7e8)])
def test_square_error_matches_coupling_ratio(tau, delta):
    assert square_pulse_offres_error(tau, delta) == pytest.approx(
        (coupling_ratio() * math.pi / tau / delta) ** 2, rel=1e-14)


@pytest.mark.parametrize("func", [square_pulse_offres_error, ac_stark_phase])
@pytest.mark.parametrize("args", [(0, DELTA_HF), (1e-6, -1.0)])
def test_positive_inputs_required(func, args):
    with pytest.raises(DomainError):
        func(*args)


def test_square_closed_form_is_peak_of_numerical_oscillation():
    tau = 1e-6
    closed = square_pulse_offres_error(tau, DELTA_HF)
    omega = coupling_ratio() * math.pi / tau
    times = np.linspace(0, tau, 20001)[1:]
    trace = np.array([propagate(constant_drive(omega, t), DELTA_HF).excited_population for t in times[::40]])
    # the instantaneous population oscillates between 0 and the closed form
    assert trace.max() <= closed * (1 + 1e-3)
    assert trace.max() >= closed * 0.9
    average = np.mean(trace)
    assert average == pytest.approx(closed / 2, rel=0.05)


def test_edges_reduce_leakage():
    square = shaped_pulse_offres_error(PulseEnvelope(1e-6, 0.0), DELTA_HF)
    shaped = shaped_pulse_offres_error(PulseEnvelope(1e-6, 700e-9), DELTA_HF)
    assert shaped < square


def test_monotone_in_edge_time():
    edges = np.linspace(0, 700e-9, 8)
    leak = [shaped_pulse_offres_error(PulseEnvelope(1e-6, e), DELTA_HF) for e in edges]
    assert all(b <= a for a, b in zip(leak, leak[1:]))


def test_vanishing_edge_recovers_square():
    square = shaped_pulse_offres_error(PulseEnvelope(1e-6, 0.0), DELTA_HF)
    assert shaped_pulse_offres_error(PulseEnvelope(1e-6, 1e-13), DELTA_HF) == pytest.approx(square, rel=1e-3)


def test_scattering_floor():
    floor = scattering_error_floor(1e-6, DELTA_HF, GAMMA)
    assert floor == pytest.approx(5.70137974530112e-12, rel=1e-12)
    assert 1e-12 < floor < 1e-10
    assert scattering_error_floor(1e-6, DELTA_HF, 0.0) == 0
    assert scattering_error_floor(2e-6, DELTA_HF, GAMMA) == pytest.approx(floor / 2, rel=1e-14)


def test_ac_stark_phase():
    phase = ac_stark_phase(1e-6, DELTA_HF)
    assert phase == pytest.approx(8.11781047439223e-4, rel=1e-12)
    assert ac_stark_phase(2e-6, DELTA_HF) == pytest.approx(phase / 2, rel=1e-14)
    # small-angle error of an uncorrected phase is of order 1e-6
    assert 1e-7 < phase**2 < 1e-5


def test_convergence_failure(monkeypatch):
    monkeypatch.setattr(pulse, "_MAX_STEPS", 16)
    with pytest.raises(ConvergenceError):
        propagate(PulseEnvelope(1e-6, 700e-9), DELTA_HF, GROUND, 1e-14)
