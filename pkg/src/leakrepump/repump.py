"""Repump cycles: deterministic transfer matrices and an event-level Monte Carlo.

Populations are ordered (|0>, |L->, |1>, |L+>).  A pump matrix ``R`` is
column-stochastic: ``R[i, j]`` is the probability that one cycle takes
state ``j`` to state ``i``.
"""
import csv
import io
import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .atomic import (
    BRACKET_MANIFOLD,
    LEAK_MINUS,
    LEAK_PLUS,
    QUBIT_0,
    QUBIT_1,
    STATE_LABELS,
    AtomicConstants,
    Sublevel,
    load_branching_table,
)
from .errors import DomainError
from .rng import map_units, substream

N_STATES = 4
I0, ILM, I1, ILP = range(4)
# hidden D3/2 F=2 shelf sublevels m = -1, 0, +1 follow the four S1/2 states
SHELF = (4, 5, 6)
N_EVENT_STATES = 7
BLOCK_SIZE = 4096

CSV_COLUMNS = ("cycle", "p0", "pLm", "p1", "pLp", "se0", "seLm", "se1", "seLp")

_S_INDEX = {QUBIT_0: I0, LEAK_MINUS: ILM, QUBIT_1: I1, LEAK_PLUS: ILP}
_INITIAL = dict(zip(STATE_LABELS, range(4)))


def as_population(p, tol=1e-12):
    """Validate a physical 4-component population vector."""
    p = np.asarray(p, dtype=float)
    if p.shape != (N_STATES,):
        raise DomainError(f"population vector must have 4 entries, got shape {p.shape}")
    if np.any(p < -tol) or np.any(p > 1 + tol):
        raise DomainError(f"populations must lie in [0, 1]: {p}")
    if abs(math.fsum(p) - 1) > tol:
        raise DomainError(f"populations sum to {math.fsum(p)!r}, not 1")
    return p


def basis_population(label):
    p = np.zeros(N_STATES)
    p[_INITIAL[label]] = 1.0
    return p


@dataclass(frozen=True)
class PumpMatrix:
    r: np.ndarray

    def __post_init__(self):
        r = np.array(self.r, dtype=float)
        if r.shape != (4, 4):
            raise DomainError(f"pump matrix must be 4x4, got {r.shape}")
        if np.any(r < 0) or np.any(r > 1):
            raise DomainError("pump matrix entries must be probabilities")
        if np.any(np.abs(r.sum(axis=0) - 1) > 1e-12):
            raise DomainError(f"pump matrix columns must sum to 1: {r.sum(axis=0)}")
        for q in (I0, I1):
            if not np.array_equal(r[:, q], np.eye(4)[q]):
                raise DomainError("qubit columns of a pump matrix must be basis vectors")
        pairs = [((ILM, ILM), (ILP, ILP)), ((I0, ILM), (I0, ILP)),
                 ((I1, ILM), (I1, ILP)), ((ILP, ILM), (ILM, ILP))]
        for a, b in pairs:
            if abs(r[a] - r[b]) > 1e-12:
                raise DomainError("pump matrix violates the leakage-state symmetry")
        r.setflags(write=False)
        object.__setattr__(self, "r", r)

    def __matmul__(self, p):
        return self.r @ p

    def leakage_column(self):
        """Destination distribution of |L->: (to |0>, stay, to |1>, cross)."""
        return self.r[:, ILM].copy()


def ideal_pump_matrix(exact=False):
    """One perfect cycle: each leakage state goes 1/3 to |0>, 1/3 to |1>, 1/3 stays.

    With ``exact=True`` a plain object array of :class:`fractions.Fraction`
    is returned instead, for rational arithmetic in :func:`apply_cycles`.
    """
    if exact:
        zero, third = Fraction(0), Fraction(1, 3)
        r = np.array([[Fraction(int(i == j)) for j in range(4)] for i in range(4)], dtype=object)
        r[:, ILM] = (third, third, third, zero)
        r[:, ILP] = (third, zero, third, third)
        return r
    third = 1.0 / 3.0
    r = np.eye(4)
    r[:, ILM] = (third, third, third, 0.0)
    r[:, ILP] = (third, 0.0, third, third)
    return PumpMatrix(r)


def apply_cycles(matrix, p0, n, scale=1.0, offset=0.0):
    """Array of shape (n+1, 4) whose row k is ``scale * R^k p0 + offset``.

    Object-dtype inputs such as Fraction arrays are propagated without rounding.
    """
    if n < 0:
        raise DomainError(f"cycle count must be non-negative, got {n}")
    r = matrix.r if isinstance(matrix, PumpMatrix) else np.asarray(matrix)
    dtype = object if r.dtype == object else float
    if dtype is float:
        r = r.astype(float)
    p = np.asarray(p0, dtype=dtype)
    out = np.empty((n + 1, N_STATES), dtype=dtype)
    for k in range(n + 1):
        out[k] = p
        p = r @ p
    if scale == 1 and offset == 0:
        return out
    return scale * out + offset


@dataclass(frozen=True)
class RepumpConfig:
    """Knobs of the event-level repump simulation.

    ``transfer_fidelity`` is the success probability of each quadrupole
    transfer pulse.  ``pol_impurity_935`` is the chance that a 935 nm
    excitation lands in the m_f = 0 bracket sublevel instead of keeping m_f.
    Shelved D3/2 F=2 population is returned to S1/2 before readout only when
    ``shelf_cleanup`` is set.  ``simultaneous_transfer`` records whether the
    two transfer pulses fire together; the event model gives the same
    statistics either way because 935 nm light follows both.
    """

    transfer_fidelity: float = 1.0
    pol_impurity_935: float = 0.0
    shelf_cleanup: bool = True
    n_cycles: int = 10
    trials: int = 1000
    seed: int = 0
    initial: str = "L-"
    prep_error: float = 0.0
    readout_error: float = 0.0
    simultaneous_transfer: bool = False

    def __post_init__(self):
        for name in ("transfer_fidelity", "pol_impurity_935", "prep_error", "readout_error"):
            v = getattr(self, name)
            if not 0 <= v <= 1:
                raise DomainError(f"{name} must lie in [0, 1], got {v}")
        if self.trials < 1:
            raise DomainError(f"trials must be at least 1, got {self.trials}")
        if self.n_cycles < 0:
            raise DomainError(f"n_cycles must be non-negative, got {self.n_cycles}")
        if self.initial not in _INITIAL:
            raise DomainError(f"initial state must be one of {STATE_LABELS}, got {self.initial!r}")


def _decay_table(constants, table):
    """(3, 7) array: row m+1 is the decay distribution of bracket sublevel m."""
    out = np.zeros((3, N_EVENT_STATES))
    for m in (-1, 0, 1):
        for level, w in table[Sublevel(BRACKET_MANIFOLD, 1, m)].items():
            if level not in _S_INDEX:
                raise DomainError(f"branching destination {level} is outside the readout basis")
            out[m + 1, _S_INDEX[level]] += constants.branch_to_S * w
        out[m + 1, SHELF[m + 1]] += constants.branch_to_D
    return out


def _bracket_mix(m, impurity):
    """Distribution over bracket m' in (-1, 0, 1) reached from D3/2 F=1 m by 935 nm light."""
    mix = np.zeros(3)
    mix[1] += impurity
    mix[m + 1] += 1 - impurity
    return mix


def event_transfer_matrix(config, constants=None, table=None):
    """Exact single-cycle 7x7 transfer matrix of the Monte Carlo event model.

    States are the four S1/2 readout states followed by the three shelf
    sublevels.  Shelved population is dark during the cycle.
    """
    constants = constants or AtomicConstants()
    table = table if table is not None else load_branching_table()
    decay = _decay_table(constants, table)
    f, q = config.transfer_fidelity, config.pol_impurity_935
    m = np.eye(N_EVENT_STATES)
    # |L-> is driven to D3/2 F=1 m=+1 and |L+> to m=-1 (Delta m_f = +-2)
    for src, d_m in ((ILM, +1), (ILP, -1)):
        col = np.zeros(N_EVENT_STATES)
        col[src] = 1 - f
        col += f * (_bracket_mix(d_m, q) @ decay)
        m[:, src] = col
    return m


def cleanup_matrix(config, constants=None, table=None):
    """7x7 map applied before readout: sends shelved population back to S1/2."""
    if not config.shelf_cleanup:
        return np.eye(N_EVENT_STATES)
    constants = constants or AtomicConstants()
    table = table if table is not None else load_branching_table()
    decay = _decay_table(constants, table)
    q = config.pol_impurity_935
    # shelf m -> bracket -> decay, repeated until absorbed in S1/2
    step = np.stack([_bracket_mix(m, q) @ decay for m in (-1, 0, 1)], axis=1)
    to_s, to_shelf = step[:4], step[4:]
    absorbed = to_s @ np.linalg.inv(np.eye(3) - to_shelf)
    c = np.zeros((N_EVENT_STATES, N_EVENT_STATES))
    c[:4, :4] = np.eye(4)
    c[:4, 4:] = absorbed
    return c


def _flip_matrix(e):
    return (1 - e) * np.eye(4) + (e / 3) * (np.ones((4, 4)) - np.eye(4))


def expected_trajectory(config, constants=None, table=None):
    """Exact mean populations of :func:`run_monte_carlo`, shape (n+1, 4), plus shelf."""
    constants = constants or AtomicConstants()
    table = table if table is not None else load_branching_table()
    step = event_transfer_matrix(config, constants, table)
    clean = cleanup_matrix(config, constants, table)
    readout = _flip_matrix(config.readout_error)
    state = np.zeros(N_EVENT_STATES)
    state[:4] = _flip_matrix(config.prep_error) @ basis_population(config.initial)
    pops = np.empty((config.n_cycles + 1, 4))
    shelf = np.empty(config.n_cycles + 1)
    for k in range(config.n_cycles + 1):
        seen = clean @ state
        pops[k] = readout @ seen[:4]
        shelf[k] = seen[4:].sum()
        state = step @ state
    return pops, shelf


def effective_pump_matrix(config, constants=None, table=None):
    """4x4 pump matrix equivalent to one event cycle when nothing is shelved."""
    constants = constants or AtomicConstants()
    if constants.branch_to_D != 0:
        raise DomainError("an effective 4x4 pump matrix requires branch_to_D = 0")
    return PumpMatrix(event_transfer_matrix(config, constants, table)[:4, :4])


@dataclass
class Trajectory:
    """Trial-averaged populations at cycle indices 0..n with binomial standard errors."""

    cycles: np.ndarray
    mean: np.ndarray
    stderr: np.ndarray
    shelf: np.ndarray
    trials: int
    counts: np.ndarray = field(repr=False, default=None)

    @property
    def leakage(self):
        return self.mean[:, ILM] + self.mean[:, ILP]

    def rows(self):
        for k, p, s in zip(self.cycles, self.mean, self.stderr):
            yield (int(k), *p, *s)

    def to_csv(self, fh=None):
        buf = fh if fh is not None else io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for row in self.rows():
            w.writerow([row[0]] + [format(float(x), ".9g") for x in row[1:]])
        if fh is None:
            return buf.getvalue()

    def to_records(self):
        return [dict(zip(CSV_COLUMNS, row)) for row in self.rows()]


def read_trajectory_csv(path_or_text):
    """Parse the trajectory CSV layout into (cycles, populations, stderrs)."""
    if "\n" in str(path_or_text):
        fh = io.StringIO(path_or_text)
    else:
        fh = open(path_or_text, newline="")
    with fh:
        reader = csv.DictReader(fh)
        missing = set(CSV_COLUMNS) - set(reader.fieldnames or ())
        if missing:
            raise DomainError(f"trajectory CSV lacks columns {sorted(missing)}")
        rows = list(reader)
    cycles = np.array([int(r["cycle"]) for r in rows])
    pops = np.array([[float(r[c]) for c in CSV_COLUMNS[1:5]] for r in rows])
    errs = np.array([[float(r[c]) for c in CSV_COLUMNS[5:]] for r in rows])
    return cycles, pops, errs


def _sample_rows(rng, cdf, rows):
    """Draw one outcome per element from distributions ``cdf[rows]``."""
    u = rng.random(len(rows))
    idx = (u[:, None] >= cdf[rows]).sum(axis=1)
    return np.minimum(idx, cdf.shape[1] - 1)


def _flip(rng, state, e):
    """With probability e replace an S1/2 state by a uniformly chosen other one."""
    if e == 0:
        return state
    u = rng.random(len(state))
    shift = rng.integers(1, 4, size=len(state))
    flip = (u < e) & (state < 4)
    out = state.copy()
    out[flip] = (state[flip] + shift[flip]) % 4
    return out


def _run_block(args):
    block, size, config, decay_cdf = args
    rng = substream(config.seed, block, 0)
    read_rng = substream(config.seed, block, 1)
    f, q = config.transfer_fidelity, config.pol_impurity_935
    state = np.full(size, _INITIAL[config.initial], dtype=np.int64)
    state = _flip(rng, state, config.prep_error)
    counts = np.zeros((config.n_cycles + 1, N_EVENT_STATES), dtype=np.int64)

    def excite_and_decay(gen, d_m):
        # 935 nm excitation from D3/2 m=d_m, then one spontaneous decay
        impure = gen.random(len(d_m)) < q
        bracket = np.where(impure, 0, d_m)
        return _sample_rows(gen, decay_cdf, bracket + 1)

    for k in range(config.n_cycles + 1):
        seen = state
        if config.shelf_cleanup:
            seen = state.copy()
            while True:
                shelved = np.flatnonzero(seen >= 4)
                if shelved.size == 0:
                    break
                seen[shelved] = excite_and_decay(read_rng, seen[shelved] - 5)
        seen = _flip(read_rng, seen, config.readout_error)
        counts[k] = np.bincount(seen, minlength=N_EVENT_STATES)
        if k == config.n_cycles:
            break
        # transfer pulses for |L-> then |L+>; order is irrelevant since 935 nm follows both
        u = rng.random((2, size))
        d_m = np.zeros(size, dtype=np.int64)
        moved = np.zeros(size, dtype=bool)
        for row, (src, target_m) in enumerate(((ILM, +1), (ILP, -1))):
            hit = (state == src) & (u[row] < f)
            d_m[hit] = target_m
            moved |= hit
        idx = np.flatnonzero(moved)
        state[idx] = excite_and_decay(rng, d_m[idx])
    return counts


def run_monte_carlo(config, constants=None, table=None, workers=1):
    """Simulate ``config.trials`` independent ions through ``config.n_cycles`` cycles.

    Trials are processed in fixed-size blocks, each with its own random
    substream, so the result depends only on (seed, trials, config).
    """
    if config.trials < 1:
        raise DomainError("trials must be at least 1")
    constants = constants or AtomicConstants()
    table = table if table is not None else load_branching_table()
    decay_cdf = np.cumsum(_decay_table(constants, table), axis=1)
    decay_cdf[:, -1] = 1.0
    n_blocks = -(-config.trials // BLOCK_SIZE)
    units = [(b, min(BLOCK_SIZE, config.trials - b * BLOCK_SIZE), config, decay_cdf)
             for b in range(n_blocks)]
    counts = sum(map_units(_run_block, units, workers))
    mean_all = counts / config.trials
    mean = mean_all[:, :4]
    stderr = np.sqrt(mean * (1 - mean) / config.trials)
    return Trajectory(
        cycles=np.arange(config.n_cycles + 1),
        mean=mean,
        stderr=stderr,
        shelf=mean_all[:, 4:].sum(axis=1),
        trials=config.trials,
        counts=counts,
    )


def fig2_synthetic_dataset(config, seed=None, constants=None, table=None, workers=1):
    """Measurement layout of the leakage-pumping figure: 1000 shots per point."""
    from dataclasses import replace

    config = replace(config, trials=1000, seed=config.seed if seed is None else seed)
    return run_monte_carlo(config, constants, table, workers)
