"""Single-qubit randomized benchmarking: simulation, decay fits, interleaved error, bootstrap.

Cliffords act on Bloch vectors as the 24 signed permutation matrices of
determinant +1.  Noise is stochastic Pauli, so every shot stays a Pauli
eigenstate and survival is exact bookkeeping.
"""
import csv
import io
import itertools
import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import least_squares

from .errors import DomainError, InsufficientDataError
from .rng import map_units, substream

log = logging.getLogger(__name__)


def _clifford_group():
    mats = []
    for perm in itertools.permutations(range(3)):
        for signs in itertools.product((1, -1), repeat=3):
            m = np.zeros((3, 3), dtype=np.int64)
            m[range(3), perm] = signs
            if round(np.linalg.det(m)) == 1:
                mats.append(m)
    return np.array(mats)


CLIFFORDS = _clifford_group()


@dataclass(frozen=True)
class RBConfig:
    sequence_lengths: tuple = (2, 50, 150)
    sequences_per_length: int = 10
    shots: int = 100
    error_per_clifford: float = 1e-3
    interleaved_extra_error: float = 0.0
    interleaved_leak_rate: float = 0.0
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "sequence_lengths", tuple(int(m) for m in self.sequence_lengths))
        lengths = self.sequence_lengths
        if not lengths or any(m < 1 for m in lengths):
            raise DomainError("sequence lengths must be positive")
        if any(b <= a for a, b in zip(lengths, lengths[1:])):
            raise DomainError("sequence lengths must be strictly increasing")
        if self.sequences_per_length < 1 or self.shots < 1:
            raise DomainError("sequence and shot counts must be at least 1")
        for name in ("error_per_clifford", "interleaved_extra_error"):
            v = getattr(self, name)
            if not 0 <= v <= 0.5:
                raise DomainError(f"{name} must lie in [0, 1/2], got {v}")
        # a fully absorbing interleave is allowed as a limiting case
        if not 0 <= self.interleaved_leak_rate <= 1:
            raise DomainError(f"interleaved_leak_rate must lie in [0, 1], got {self.interleaved_leak_rate}")


@dataclass
class RBDataset:
    lengths: np.ndarray
    seq_index: np.ndarray
    survival: np.ndarray
    shots: np.ndarray

    def __post_init__(self):
        self.lengths = np.asarray(self.lengths, dtype=int)
        self.seq_index = np.asarray(self.seq_index, dtype=int)
        self.survival = np.asarray(self.survival, dtype=float)
        self.shots = np.asarray(self.shots, dtype=int)
        if np.any((self.survival < 0) | (self.survival > 1)):
            raise DomainError("survival frequencies must lie in [0, 1]")
        if np.any(self.shots <= 0):
            raise DomainError("shot counts must be positive")

    def means(self):
        ms = np.unique(self.lengths)
        return ms, np.array([self.survival[self.lengths == m].mean() for m in ms])

    def to_csv(self):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(("length", "seq_index", "survival", "shots"))
        for row in zip(self.lengths, self.seq_index, self.survival, self.shots):
            w.writerow((int(row[0]), int(row[1]), format(float(row[2]), ".9g"), int(row[3])))
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text):
        rows = list(csv.DictReader(io.StringIO(text)))
        return cls(
            [r["length"] for r in rows], [r["seq_index"] for r in rows],
            [r["survival"] for r in rows], [r["shots"] for r in rows],
        )


def _error_flips(rng, eps, prefix_axes, shots):
    """Per-shot parity of errors that flip the final z readout.

    A Pauli error after gate k reaches the end of the self-inverting
    sequence conjugated by the inverse of the first k gates, i.e. as a
    pi-rotation about axis ``prefix_axes[k, a]``.  Only x and y rotations
    flip the measured z.  X, Y, Z each occur with probability eps/2, which
    shrinks the Bloch vector by 1 - 2 eps per gate.
    """
    u = rng.random((prefix_axes.shape[0], shots))
    if eps == 0:
        return np.zeros(shots, dtype=bool)
    kind = np.minimum((u / (eps / 2)).astype(np.int64), 3)
    gate, shot = np.nonzero(kind < 3)
    flips = prefix_axes[gate, kind[gate, shot]] < 2
    return np.bincount(shot[flips], minlength=shots) % 2 == 1


def _run_sequence(args):
    config, interleaved, li, s = args
    m = config.sequence_lengths[li]
    shots = config.shots
    rng = substream(config.seed, int(interleaved), li, s)
    gates = rng.integers(0, len(CLIFFORDS), size=m)
    # prefix rotation R_k = C_k ... C_1; error axis a ends up along row a of R_k
    prefix = np.empty((m, 3, 3), dtype=np.int64)
    net = np.eye(3, dtype=np.int64)
    for k, g in enumerate(gates):
        net = CLIFFORDS[g] @ net
        prefix[k] = net
    prefix_axes = np.abs(prefix).argmax(axis=2)
    flipped = _error_flips(rng, config.error_per_clifford, prefix_axes, shots)
    survived = ~flipped
    if interleaved:
        survived ^= _error_flips(rng, config.interleaved_extra_error, prefix_axes, shots)
        # an ion lost at any of the m interleaves reads dark
        leak = config.interleaved_leak_rate
        p_kept = (1 - leak) ** m
        survived &= rng.random(shots) < p_kept
    return m, s, survived.sum() / shots


def simulate_rb(config, interleaved=False, workers=1):
    """Reference (``interleaved=False``) or interleaved RB dataset."""
    units = [(config, interleaved, li, s)
             for li in range(len(config.sequence_lengths))
             for s in range(config.sequences_per_length)]
    rows = map_units(_run_sequence, units, workers)
    lengths, idx, surv = zip(*rows)
    return RBDataset(lengths, idx, surv, [config.shots] * len(rows))


@dataclass
class DecayFit:
    """survival = amplitude * rate**m + baseline."""

    amplitude: float
    rate: float
    baseline: float
    amplitude_err: float
    rate_err: float
    baseline_err: float
    residual_norm: float = 0.0
    converged: bool = True

    def to_dict(self):
        return dict(self.__dict__)


def _binomial_sigma(freq, shots):
    # Laplace-smoothed so that 0 and 1 frequencies keep a finite weight
    p = (freq * shots + 1) / (shots + 2)
    return np.sqrt(p * (1 - p) / shots)


_RATE_GRID = np.concatenate([1 - np.geomspace(0.5, 1e-8, 400), [1.0]])


def _profile_start(m, y, w):
    """Best (A, p, B) over a grid of rates, solving A and B linearly for each."""
    basis = _RATE_GRID[:, None] ** m[None, :]
    sw = np.sum(w)
    sx, sy = basis @ w, np.dot(w, y)
    sxx, sxy = (basis**2) @ w, basis @ (w * y)
    det = sw * sxx - sx**2
    safe = np.where(np.abs(det) > 1e-300, det, np.inf)
    a = (sw * sxy - sx * sy) / safe
    b = (sy - a * sx) / sw
    a, b = np.clip(a, 0, 1), np.clip(b, 0, 1)
    cost = (((a[:, None] * basis + b[:, None]) - y) ** 2) @ w
    i = int(np.argmin(cost))
    return np.array([max(a[i], 1e-9), _RATE_GRID[i], b[i]])


def fit_decay(dataset, weighted=True):
    """Weighted least-squares fit of ``A p^m + B`` to every sequence's survival."""
    m = dataset.lengths.astype(float)
    y = dataset.survival
    if len(np.unique(m)) < 3:
        raise InsufficientDataError("a decay fit needs at least 3 distinct sequence lengths")
    sigma = _binomial_sigma(y, dataset.shots) if weighted else np.ones_like(y)

    def residuals(x):
        return (x[0] * x[1] ** m + x[2] - y) / sigma

    def jac(x):
        pm = x[1] ** m
        return np.column_stack([pm, x[0] * m * x[1] ** (m - 1), np.ones_like(m)]) / sigma[:, None]

    x0 = _profile_start(m, y, sigma**-2)
    sol = least_squares(residuals, x0, jac=jac, bounds=([0, 1e-9, 0], [1, 1, 1]),
                        xtol=1e-15, ftol=1e-15, gtol=1e-15, max_nfev=2000)
    cov = np.linalg.pinv(sol.jac.T @ sol.jac)
    err = np.sqrt(np.clip(np.diag(cov), 0, None))
    a, p, b = sol.x
    return DecayFit(a, p, b, *err, residual_norm=float(np.linalg.norm(sol.fun)),
                    converged=bool(sol.status > 0))


def interleaved_error(p_ref, p_int):
    """Average error of the interleaved gate, ``(1 - p_int / p_ref) / 2``.

    Noise can make the estimate slightly negative; it is returned unchanged.
    """
    for name, p in (("p_ref", p_ref), ("p_int", p_int)):
        if not (math.isfinite(p) and 0 < p <= 1):
            raise DomainError(f"{name} must lie in (0, 1], got {p}")
    eps = 0.5 * (1 - p_int / p_ref)
    if eps < 0:
        log.warning("negative interleaved error estimate %.3g", eps)
    return eps


@dataclass
class BootstrapResult:
    estimate: float
    lower: float
    upper: float
    confidence: float
    samples: np.ndarray = field(repr=False)
    shot_only: bool = False

    @property
    def half_width(self):
        return 0.5 * (self.upper - self.lower)

    def covers(self, value):
        return self.lower <= value <= self.upper


def _resample(dataset, rng, shot_only):
    surv = np.empty_like(dataset.survival)
    for m in np.unique(dataset.lengths):
        rows = np.flatnonzero(dataset.lengths == m)
        picks = rows if shot_only else rng.choice(rows, size=len(rows), replace=True)
        shots = dataset.shots[picks]
        surv[rows] = rng.binomial(shots, dataset.survival[picks]) / shots
    return RBDataset(dataset.lengths, dataset.seq_index, surv, dataset.shots)


def _irb_estimate(ref, inter):
    return 0.5 * (1 - fit_decay(inter).rate / fit_decay(ref).rate)


def bootstrap_ci(reference, interleaved, resamples=1000, confidence=0.68, seed=0, workers=1):
    """Semi-parametric bootstrap interval for the interleaved-gate error.

    Each resample draws sequences with replacement within every length and
    then redraws each chosen sequence's shots binomially from its observed
    survival frequency.  With one sequence per length only the shots are
    redrawn and ``shot_only`` is set on the result.
    """
    if resamples < 100:
        raise DomainError(f"need at least 100 resamples, got {resamples}")
    if not 0 < confidence < 1:
        raise DomainError(f"confidence must lie in (0, 1), got {confidence}")
    shot_only = any(
        np.bincount(np.unique(d.lengths, return_inverse=True)[1]).min() < 2
        for d in (reference, interleaved)
    )
    if shot_only:
        log.warning("single sequence per length: bootstrap resamples shots only")

    def one(r):
        rng = substream(seed, r)
        return _irb_estimate(_resample(reference, rng, shot_only), _resample(interleaved, rng, shot_only))

    samples = np.array(map_units(one, range(resamples), workers))
    lo, hi = np.quantile(samples, [(1 - confidence) / 2, (1 + confidence) / 2])
    return BootstrapResult(_irb_estimate(reference, interleaved), float(lo), float(hi),
                           confidence, samples, shot_only)


@dataclass
class PopulationDecayFit:
    rate: float
    rate_err: float
    converged: bool


def fit_population_decay(cycles, survival, shots=None):
    """Per-cycle decay constant ``lam`` of ``survival = exp(-lam * n)``."""
    n = np.asarray(cycles, dtype=float)
    y = np.asarray(survival, dtype=float)
    if len(n) < 3 or len(n) != len(y):
        raise InsufficientDataError("a population-decay fit needs at least 3 points")
    if np.any(n < 0):
        raise DomainError("cycle counts must be non-negative")
    scale = max(n.max(), 1.0)
    sigma = _binomial_sigma(y, shots) if shots is not None else np.ones_like(y)

    def residuals(x):
        return (np.exp(-x[0] * n / scale) - y) / sigma

    x0 = max(-math.log(max(y[np.argmax(n)], 1e-12)), 0.0)
    sol = least_squares(residuals, [x0], bounds=([0], [np.inf]),
                        xtol=1e-15, ftol=1e-15, gtol=1e-15)
    jtj = float(sol.jac[:, 0] @ sol.jac[:, 0])
    var = 1 / jtj if jtj > 0 else 0.0
    if shots is None and len(n) > 1:
        var *= 2 * sol.cost / max(len(n) - 1, 1)
    return PopulationDecayFit(sol.x[0] / scale, math.sqrt(var) / scale, bool(sol.status > 0))


def simulate_population_decay(rate, cycles, shots, seed):
    """Binomially sampled |1> survival after each cycle count."""
    rng = substream(seed, 0)
    truth = np.exp(-rate * np.asarray(cycles, dtype=float))
    return rng.binomial(shots, truth) / shots


def expected_survival(config, m, interleaved=False):
    """Exact mean survival of :func:`simulate_rb` at sequence length ``m``."""
    m = np.asarray(m, dtype=float)
    shrink = 1 - 2 * config.error_per_clifford
    kept = 1.0
    if interleaved:
        shrink = shrink * (1 - 2 * config.interleaved_extra_error)
        kept = (1 - config.interleaved_leak_rate) ** m
    return kept * (0.5 + 0.5 * shrink**m)
