"""Level structure of 171Yb+, quadrupole coupling geometry and decay branching."""
import json
import math
import re
from dataclasses import dataclass, field
from fractions import Fraction
from importlib import resources
from typing import NamedTuple

from .errors import DomainError

S_MANIFOLD = "S1/2"
D_MANIFOLD = "D3/2"
BRACKET_MANIFOLD = "3[3/2]1/2"


class Sublevel(NamedTuple):
    manifold: str
    F: int
    m: int

    def __str__(self):
        return f"{self.manifold} F={self.F} m={self.m}"

    @classmethod
    def parse(cls, text):
        match = re.fullmatch(r"\s*(\S+)\s+F=(\d+)\s+m=([+-]?\d+)\s*", text)
        if match is None:
            raise DomainError(f"cannot parse sublevel {text!r}; expected e.g. 'S1/2 F=1 m=-1'")
        manifold, F, m = match.groups()
        F, m = int(F), int(m)
        if abs(m) > F:
            raise DomainError(f"sublevel {text!r} has |m| > F")
        return cls(manifold, F, m)


# Readout ordering used throughout: (|0>, |L->, |1>, |L+>).
QUBIT_0 = Sublevel(S_MANIFOLD, 0, 0)
LEAK_MINUS = Sublevel(S_MANIFOLD, 1, -1)
QUBIT_1 = Sublevel(S_MANIFOLD, 1, 0)
LEAK_PLUS = Sublevel(S_MANIFOLD, 1, 1)
S_STATES = (QUBIT_0, LEAK_MINUS, QUBIT_1, LEAK_PLUS)
STATE_LABELS = ("0", "L-", "1", "L+")


@dataclass(frozen=True)
class TransitionGeometry:
    """Polarization angle ``theta`` and k-vector angle ``phi`` (radians),
    both measured from the quantization axis."""

    theta: float
    phi: float

    def __post_init__(self):
        if not (math.isfinite(self.theta) and math.isfinite(self.phi)):
            raise DomainError("transition angles must be finite")


@dataclass(frozen=True)
class AtomicConstants:
    """Physical constants of the repump scheme (SI units, angular frequencies in rad/s)."""

    delta_hf: float = 2 * math.pi * 860e6
    gamma_D: float = 1 / 52.7e-3
    bracket_lifetime: float = 38e-9
    branch_to_S: float = 0.982
    branch_to_D: float = None

    def __post_init__(self):
        for name in ("delta_hf", "gamma_D", "bracket_lifetime"):
            value = getattr(self, name)
            if not (math.isfinite(value) and value > 0):
                raise DomainError(f"{name} must be positive and finite, got {value}")
        if not 0 <= self.branch_to_S <= 1:
            raise DomainError(f"branch_to_S must lie in [0, 1], got {self.branch_to_S}")
        # branch_to_D is derived so the two always sum to one exactly
        if self.branch_to_D is not None and abs(self.branch_to_S + self.branch_to_D - 1) > 1e-12:
            raise DomainError("branch_to_S + branch_to_D must equal 1")
        object.__setattr__(self, "branch_to_D", 1.0 - self.branch_to_S)


# Physical parameters of the demonstration that the simulation does not use.
DOCUMENTED_CONSTANTS = {
    "magnetic_field_gauss": 5.6,
    "qubit_splitting_hz": 12.643e9,
    "zeeman_splitting_hz": 7.8e6,
    "microwave_pi_time_s": 20e-6,
    "quadrupole_power_w": 8e-3,
    "quadrupole_beam_diameter_m": 50e-6,
    "quadrupole_pi_time_s": 1e-6,
    "edge_time_s": 700e-9,
}


@dataclass(frozen=True)
class SublevelDistribution:
    weights: dict = field(default_factory=dict)

    def __post_init__(self):
        for level, w in self.weights.items():
            if not 0 <= w <= 1:
                raise DomainError(f"weight {w} on {level} outside [0, 1]")
        total = math.fsum(self.weights.values())
        if abs(total - 1) > 1e-12:
            raise DomainError(f"weights sum to {total!r}, not 1")

    def mass(self, predicate):
        return math.fsum(w for level, w in self.weights.items() if predicate(level))

    def __getitem__(self, level):
        return self.weights.get(level, 0.0)


def geometric_factor(delta_m, geom):
    """Relative quadrupole Rabi frequency for a Delta m_f = ``delta_m`` transition.

    Only |delta_m| matters.  Returns a value in [0, 1/2].
    """
    if delta_m not in (-2, -1, 0, 1, 2):
        raise DomainError(f"delta_m must be one of 0, +-1, +-2, got {delta_m!r}")
    th, ph = geom.theta, geom.phi
    k = abs(delta_m)
    if k == 0:
        return 0.5 * abs(math.cos(th) * math.sin(2 * ph))
    if k == 1:
        return abs(complex(math.cos(th) * math.cos(2 * ph), math.sin(th) * math.cos(ph))) / math.sqrt(6)
    return abs(complex(0.5 * math.cos(th) * math.sin(2 * ph), math.sin(th) * math.sin(ph))) / math.sqrt(6)


def selection_table(geom, threshold=0.0):
    """Allowed (delta_m, strength) pairs with strength >= threshold, strongest first."""
    if not threshold >= 0:
        raise DomainError(f"threshold must be non-negative, got {threshold}")
    rows = [(dm, geometric_factor(dm, geom)) for dm in (2, -2, 1, -1, 0)]
    rows = [r for r in rows if r[1] >= threshold]
    # stable sort keeps +dm before -dm at equal strength
    return sorted(rows, key=lambda r: -r[1])


def _parse_weight(value):
    if isinstance(value, str):
        return float(Fraction(value))
    return float(value)


def load_branching_table(path=None):
    """Read a branching table: ``{source sublevel: {S1/2 sublevel: weight}}``.

    Weights are conditional on decay to S1/2 and must sum to one per source.
    With no ``path`` the packaged default table is returned.
    """
    if path is None:
        text = resources.files("leakrepump").joinpath("data/branching.json").read_text()
    else:
        with open(path) as fh:
            text = fh.read()
    raw = json.loads(text)
    table = {}
    for key, dest in raw.items():
        if key.startswith("_"):
            continue
        source = Sublevel.parse(key)
        if source.manifold != BRACKET_MANIFOLD or source.F != 1:
            raise DomainError(f"branching source {key!r} is not a {BRACKET_MANIFOLD} F=1 sublevel")
        weights = {}
        for level, w in dest.items():
            level = Sublevel.parse(level)
            if level.manifold != S_MANIFOLD:
                raise DomainError(f"branching destination {level} is not in {S_MANIFOLD}")
            weights[level] = _parse_weight(w)
        total = math.fsum(weights.values())
        if abs(total - 1) > 1e-12:
            raise DomainError(f"conditional weights for {key!r} sum to {total!r}, not 1")
        table[source] = weights
    missing = {Sublevel(BRACKET_MANIFOLD, 1, m) for m in (-1, 0, 1)} - set(table)
    if missing:
        raise DomainError(f"branching table lacks sources {sorted(map(str, missing))}")
    return table


def bracket_decay_distribution(source, constants=None, table=None):
    """Where population in a 3[3/2]1/2 F=1 sublevel ends up after one decay.

    ``source`` is a :class:`Sublevel` or just its m_f.  S1/2 mass totals
    ``branch_to_S``; the rest goes to D3/2 F=2 with the same m_f.
    """
    constants = constants or AtomicConstants()
    table = table if table is not None else load_branching_table()
    if isinstance(source, int):
        source = Sublevel(BRACKET_MANIFOLD, 1, source)
    if source not in table:
        raise DomainError(f"no decay data for {source}")
    weights = {level: constants.branch_to_S * w for level, w in table[source].items()}
    if constants.branch_to_D > 0:
        weights[Sublevel(D_MANIFOLD, 2, source.m)] = constants.branch_to_D
    return SublevelDistribution(weights)
