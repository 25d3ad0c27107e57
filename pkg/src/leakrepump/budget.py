"""Leakage budget for a repump schedule inside an error-correction cycle.

Ideal pumping removes two thirds of the leaked population per cycle while
each cycle itself leaks ``eps_l`` and causes qubit errors ``eps_q``.
"""
import math
from dataclasses import dataclass
from decimal import Decimal

from .errors import DomainError, InfeasibleTargetError


@dataclass(frozen=True)
class BudgetInput:
    eps0: float = 1e-3
    eps_l: float = 0.0
    eps_q: float = 2e-5
    suppression_target: float = 1000.0
    cycle_time: float = 10e-6

    def __post_init__(self):
        for name in ("eps0", "eps_l", "eps_q"):
            v = getattr(self, name)
            if not 0 <= v <= 1:
                raise DomainError(f"{name} must lie in [0, 1], got {v}")
        if not self.suppression_target >= 1:
            raise DomainError(f"suppression_target must be >= 1, got {self.suppression_target}")
        if not self.cycle_time > 0:
            raise DomainError(f"cycle_time must be positive, got {self.cycle_time}")


def _times(n, x):
    # decimal product of the shortest repr, so 7 * 2e-5 is 1.4e-4 and not 1.4000000000000001e-4
    return float(n * Decimal(repr(float(x))))


def _check_n(n):
    if n < 0:
        raise DomainError(f"cycle count must be non-negative, got {n}")


def leakage_after_cycles(eps0, eps_l, n):
    _check_n(n)
    decay = 3.0 ** -n
    return eps0 * decay + 1.5 * eps_l * (1 - decay)


def total_error(eps0, eps_q, eps_l, n):
    _check_n(n)
    return float(Decimal(repr(float(eps0))) + Decimal(repr(_times(n, eps_q + eps_l))))


def leakage_floor(eps_l):
    """Leakage that n -> infinity cycles settle to."""
    return 1.5 * eps_l


def min_cycles(eps0, eps_l, suppression_target):
    """Fewest cycles bringing leakage to ``eps0 / suppression_target`` or below."""
    if not suppression_target >= 1:
        raise DomainError(f"suppression_target must be >= 1, got {suppression_target}")
    goal = eps0 / suppression_target
    floor = leakage_floor(eps_l)
    if leakage_after_cycles(eps0, eps_l, 0) <= goal:
        return 0
    if floor >= goal:
        raise InfeasibleTargetError(
            f"leakage floor 3*eps_l/2 = {floor:.3g} does not allow the target {goal:.3g}", floor
        )
    # closed-form estimate, then settle exactly against the formula
    n = max(0, math.ceil(math.log((eps0 - floor) / (goal - floor), 3)) - 1)
    while leakage_after_cycles(eps0, eps_l, n) > goal:
        n += 1
    while n > 0 and leakage_after_cycles(eps0, eps_l, n - 1) <= goal:
        n -= 1
    return n


def schedule_time(n, cycle_time):
    _check_n(n)
    return _times(n, cycle_time)


def budget_report(inp):
    n = min_cycles(inp.eps0, inp.eps_l, inp.suppression_target)
    return {
        "n_min": n,
        "leakage_final": leakage_after_cycles(inp.eps0, inp.eps_l, n),
        "total_error": total_error(inp.eps0, inp.eps_q, inp.eps_l, n),
        "total_added": total_error(0.0, inp.eps_q, inp.eps_l, n),
        "schedule_time": schedule_time(n, inp.cycle_time),
    }
