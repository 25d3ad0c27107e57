"""Two-level transfer pulses: numerical propagation and closed-form error estimates.

The rotating-frame Hamiltonian is ``H(t) = (Omega(t) sx - delta sz) / 2``.
Propagation uses a fourth-order Magnus integrator, which is exact for a
constant envelope, so square pulses need a single step per segment.
"""
import math
from dataclasses import dataclass, replace

import numpy as np

from .errors import ConvergenceError, DomainError

SQUARE = "square"
SMOOTHED = "edge-smoothed"

_MAX_STEPS = 2**22


@dataclass(frozen=True)
class PulseEnvelope:
    """Pulse with area pi on resonance.

    ``edge_time`` is the raised-cosine turn-on (and turn-off) duration.  The
    flat top lasts ``tau_pi - edge_time`` so the total duration is
    ``tau_pi + edge_time`` and the peak Rabi frequency stays at pi/tau_pi.
    ``amplitude`` scales the whole envelope (1 gives area pi).
    """

    tau_pi: float
    edge_time: float = 0.0
    amplitude: float = 1.0

    def __post_init__(self):
        for name in ("tau_pi", "edge_time", "amplitude"):
            if not math.isfinite(getattr(self, name)):
                raise DomainError(f"{name} must be finite")
        if self.tau_pi <= 0:
            raise DomainError(f"tau_pi must be positive, got {self.tau_pi}")
        if self.edge_time < 0:
            raise DomainError(f"edge_time must be non-negative, got {self.edge_time}")
        if self.edge_time > self.duration / 2:
            raise DomainError("edge_time exceeds half the pulse duration")

    @property
    def shape(self):
        return SQUARE if self.edge_time == 0 else SMOOTHED

    @property
    def duration(self):
        return self.tau_pi + self.edge_time

    @property
    def peak_rabi(self):
        return self.amplitude * math.pi / (self.duration - self.edge_time)

    def scaled(self, factor):
        return replace(self, amplitude=self.amplitude * factor)

    def segments(self):
        """(start, stop) intervals on which the envelope is smooth."""
        T, te = self.duration, self.edge_time
        if te == 0:
            return [(0.0, T)]
        return [(0.0, te), (te, T - te), (T - te, T)]

    def rabi(self, t):
        """Envelope Omega(t) in rad/s; zero outside [0, duration]."""
        t = np.asarray(t, dtype=float)
        T, te, peak = self.duration, self.edge_time, self.peak_rabi
        out = np.where((t >= 0) & (t <= T), peak, 0.0)
        if te > 0:
            rise = t < te
            fall = t > T - te
            out = np.where(rise & (t >= 0), peak * 0.5 * (1 - np.cos(np.pi * t / te)), out)
            out = np.where(fall & (t <= T), peak * 0.5 * (1 - np.cos(np.pi * (T - t) / te)), out)
        return out

    def area(self):
        """On-resonance pulse area by Gauss-Legendre quadrature per segment."""
        x, w = np.polynomial.legendre.leggauss(64)
        total = 0.0
        for a, b in self.segments():
            t = 0.5 * (b - a) * x + 0.5 * (b + a)
            total += 0.5 * (b - a) * float(np.dot(w, self.rabi(t)))
        return total


@dataclass(frozen=True)
class TwoLevelState:
    amplitude_g: complex = 1.0
    amplitude_e: complex = 0.0

    def __post_init__(self):
        for a in (self.amplitude_g, self.amplitude_e):
            if not (math.isfinite(complex(a).real) and math.isfinite(complex(a).imag)):
                raise DomainError("state amplitudes must be finite")

    @property
    def excited_population(self):
        return abs(self.amplitude_e) ** 2

    @property
    def norm(self):
        return math.sqrt(abs(self.amplitude_g) ** 2 + abs(self.amplitude_e) ** 2)

    def as_array(self):
        return np.array([self.amplitude_g, self.amplitude_e], dtype=complex)


GROUND = TwoLevelState(1.0, 0.0)


def _su2(nx, ny, nz):
    """Stack of exp(-i n.sigma) for arrays of vector components."""
    norm = np.sqrt(nx * nx + ny * ny + nz * nz)
    c = np.cos(norm)
    s = np.sinc(norm / np.pi)  # sin(|n|)/|n|, finite at 0
    u = np.empty(norm.shape + (2, 2), dtype=complex)
    u[..., 0, 0] = c - 1j * s * nz
    u[..., 0, 1] = -1j * s * nx - s * ny
    u[..., 1, 0] = -1j * s * nx + s * ny
    u[..., 1, 1] = c + 1j * s * nz
    return u


_GAUSS = math.sqrt(3) / 6


def _magnus_steps(envelope, detuning, a, b, n):
    """One fourth-order Magnus propagator per step on a uniform grid over [a, b]."""
    h = (b - a) / n
    t0 = a + h * np.arange(n)
    om1 = envelope.rabi(t0 + h * (0.5 - _GAUSS))
    om2 = envelope.rabi(t0 + h * (0.5 + _GAUSS))
    nx = h * (om1 + om2) / 4
    ny = math.sqrt(3) * h * h * detuning * (om2 - om1) / 24
    nz = np.full(n, -h * detuning / 2)
    return _su2(nx, ny, nz)


def _chain(mats):
    """Ordered product mats[-1] @ ... @ mats[0] by pairwise reduction."""
    while len(mats) > 1:
        if len(mats) % 2:
            last = mats[-1:]
            mats = np.concatenate([mats[1::2][: len(mats) // 2] @ mats[0::2][: len(mats) // 2], last])
        else:
            mats = mats[1::2] @ mats[0::2]
    return mats[0]


def _segment_propagator(envelope, detuning, a, b, tol):
    if envelope.edge_time == 0 or (b - a) == envelope.duration - 2 * envelope.edge_time:
        # constant envelope: one Magnus step is exact
        return _magnus_steps(envelope, detuning, a, b, 1)[0]
    n = 8
    while n <= _MAX_STEPS:
        coarse = _magnus_steps(envelope, detuning, a, b, n)
        fine = _magnus_steps(envelope, detuning, a, b, 2 * n)
        paired = fine[1::2] @ fine[0::2]
        local_err = np.max(np.abs(coarse - paired))
        if local_err <= tol:
            return _chain(fine)
        n *= 2
    raise ConvergenceError(
        f"propagator did not reach step tolerance {tol} within {_MAX_STEPS} steps"
    )


def propagate(envelope, detuning=0.0, initial=GROUND, step_tolerance=1e-10):
    """Evolve ``initial`` through ``envelope`` at constant ``detuning`` (rad/s).

    The step size on each smooth segment is halved until the per-step
    difference between one step and two half steps is below
    ``step_tolerance``.
    """
    if not (math.isfinite(detuning)):
        raise DomainError("detuning must be finite")
    if not (0 < step_tolerance <= 1e-3):
        raise DomainError(f"step_tolerance must lie in (0, 1e-3], got {step_tolerance}")
    psi = initial.as_array()
    for a, b in envelope.segments():
        if b > a:
            psi = _segment_propagator(envelope, detuning, a, b, step_tolerance) @ psi
    return TwoLevelState(complex(psi[0]), complex(psi[1]))


def rabi_formula(rabi, detuning, t):
    """Excited population after time ``t`` of constant drive, starting in ground."""
    gen = rabi * rabi + detuning * detuning
    if gen == 0:
        return 0.0
    return rabi * rabi / gen * math.sin(math.sqrt(gen) * t / 2) ** 2


def coupling_ratio():
    """Omega_eps / Omega_0: off-resonant |1> -> D3/2 F=2 coupling relative to the transfer drive."""
    return 2 * math.sqrt(2) / 3


def _require_positive(**values):
    for name, v in values.items():
        if not (math.isfinite(v) and v > 0):
            raise DomainError(f"{name} must be positive and finite, got {v}")


def square_pulse_offres_error(tau_pi, delta_hf):
    """(Omega_eps / delta_hf)^2 for a square pi-pulse of length ``tau_pi``."""
    _require_positive(tau_pi=tau_pi, delta_hf=delta_hf)
    return 8 * math.pi**2 / (9 * (delta_hf * tau_pi) ** 2)


def shaped_pulse_offres_error(envelope, delta_hf, step_tolerance=1e-12):
    """Off-resonant excitation of |1> left behind by ``envelope``, by propagation."""
    _require_positive(delta_hf=delta_hf)
    final = propagate(envelope.scaled(coupling_ratio()), delta_hf, GROUND, step_tolerance)
    return final.excited_population


def scattering_error_floor(tau_pi, delta_hf, gamma):
    """Error from decay out of the transiently populated off-resonant level."""
    _require_positive(tau_pi=tau_pi, delta_hf=delta_hf)
    if not (math.isfinite(gamma) and gamma >= 0):
        raise DomainError(f"gamma must be non-negative and finite, got {gamma}")
    return gamma * tau_pi * square_pulse_offres_error(tau_pi, delta_hf)


def ac_stark_phase(tau_pi, delta_hf):
    """Qubit phase from the differential light shift over one pulse (radians)."""
    _require_positive(tau_pi=tau_pi, delta_hf=delta_hf)
    return 4 * math.pi**2 / (9 * delta_hf * tau_pi)


def edge_scan(tau_pi, edge_times, delta_hf, step_tolerance=1e-12):
    """Rows of (edge_time_ns, detuning_hz, leakage_probability)."""
    rows = []
    for te in edge_times:
        env = PulseEnvelope(tau_pi, te)
        rows.append((te * 1e9, delta_hf / (2 * math.pi), shaped_pulse_offres_error(env, delta_hf, step_tolerance)))
    return rows
