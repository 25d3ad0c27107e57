"""Five-parameter pump model ``P(n) = A R^n P(0) + B`` and its least-squares fit.

``B`` is a scalar added to every population component.
"""
import math
from dataclasses import asdict, dataclass, fields

import numpy as np
from scipy.optimize import least_squares

from .errors import ConstraintViolation, DomainError, InsufficientDataError
from .repump import ILM, ILP, I0, I1, PumpMatrix

A_BOUNDS = (0.0, 1.2)
B_BOUNDS = (-0.1, 0.1)
_PENALTY = 1e6


@dataclass(frozen=True)
class PumpModelParams:
    """Leakage-column probabilities plus SPAM scale ``scale_A`` and offset ``offset_B``.

    ``r_to0``, ``r_stay`` and ``r_to1`` are the chances that a leaked ion
    goes to |0>, stays in the same leakage state, or goes to |1> in one
    cycle; whatever remains crosses to the other leakage state.
    """

    r_to0: float
    r_stay: float
    r_to1: float
    scale_A: float = 1.0
    offset_B: float = 0.0

    def as_array(self):
        return np.array([getattr(self, f.name) for f in fields(self)])

    @classmethod
    def from_array(cls, x):
        return cls(*(float(v) for v in x))

    @property
    def cross(self):
        return 1.0 - self.r_to0 - self.r_stay - self.r_to1

    def check(self):
        for name in ("r_to0", "r_stay", "r_to1"):
            v = getattr(self, name)
            if not 0 <= v <= 1:
                raise DomainError(f"{name} must lie in [0, 1], got {v}")
        if not A_BOUNDS[0] < self.scale_A <= A_BOUNDS[1]:
            raise DomainError(f"scale_A must lie in (0, 1.2], got {self.scale_A}")
        if not B_BOUNDS[0] <= self.offset_B <= B_BOUNDS[1]:
            raise DomainError(f"offset_B must lie in [-0.1, 0.1], got {self.offset_B}")
        if self.cross < -1e-12:
            raise ConstraintViolation(
                f"r_to0 + r_stay + r_to1 = {1 - self.cross:.12g} exceeds 1"
            )
        return self


PARAM_NAMES = tuple(f.name for f in fields(PumpModelParams))


@dataclass
class FitResult:
    params: PumpModelParams
    param_uncertainties: PumpModelParams
    residual_norm: float
    converged: bool
    iterations: int
    covariance: np.ndarray = None

    def interval(self, z=1.96):
        """Symmetric (lower, upper) arrays at ``z`` standard deviations."""
        x, s = self.params.as_array(), self.param_uncertainties.as_array()
        return x - z * s, x + z * s

    def to_dict(self):
        return {
            "params": asdict(self.params),
            "uncertainties": asdict(self.param_uncertainties),
            "residual_norm": self.residual_norm,
            "converged": self.converged,
            "iterations": self.iterations,
        }


def _raw_matrix(r_to0, r_stay, r_to1):
    cross = 1.0 - r_to0 - r_stay - r_to1
    r = np.eye(4)
    r[:, ILM] = (r_to0, r_stay, r_to1, cross)
    r[:, ILP] = (r_to0, cross, r_to1, r_stay)
    return r


def build_pump_matrix(params):
    """Pump matrix with identity qubit columns and mirrored leakage columns."""
    params.check()
    r = _raw_matrix(params.r_to0, params.r_stay, params.r_to1)
    r[:, ILM] = np.clip(r[:, ILM], 0, 1)
    r[:, ILP] = np.clip(r[:, ILP], 0, 1)
    return PumpMatrix(r)


def _evaluate(x, p0, cycle_indices):
    r = _raw_matrix(*x[:3])
    n_max = int(max(cycle_indices))
    powers = np.empty((n_max + 1, 4))
    p = np.asarray(p0, dtype=float)
    for k in range(n_max + 1):
        powers[k] = p
        p = r @ p
    return x[3] * powers[np.asarray(cycle_indices, dtype=int)] + x[4]


def predict(params, p0, cycle_indices):
    """Model populations (len(cycle_indices), 4) at the requested cycle counts."""
    build_pump_matrix(params)
    idx = np.asarray(cycle_indices, dtype=int)
    if np.any(idx < 0):
        raise DomainError("cycle indices must be non-negative")
    return _evaluate(params.as_array(), p0, idx)


def _prepare(cycles, populations, stderrs):
    cycles = np.asarray(cycles, dtype=int)
    pops = np.asarray(populations, dtype=float)
    errs = np.asarray(stderrs, dtype=float)
    if pops.shape != (len(cycles), 4) or errs.shape != pops.shape:
        raise DomainError("dataset must provide 4 populations and 4 standard errors per cycle")
    if len(np.unique(cycles)) < 3:
        raise InsufficientDataError(
            f"need at least 3 distinct cycle indices to fit 5 parameters, got {len(np.unique(cycles))}"
        )
    # points without a positive error bar carry no usable weight
    mask = errs > 0
    if mask.sum() <= len(PARAM_NAMES):
        raise InsufficientDataError("fewer usable data values than fit parameters")
    return cycles, pops, errs, mask


def residual_norm(params, p0, cycles, populations, stderrs):
    """Square root of the error-weighted sum of squared residuals."""
    cycles, pops, errs, mask = _prepare(cycles, populations, stderrs)
    r = (_evaluate(params.as_array(), p0, cycles) - pops)[mask] / errs[mask]
    return float(math.sqrt(np.dot(r, r)))


_STARTS = [
    (1 / 3, 1 / 3, 1 / 3), (0.5, 0.2, 0.2), (0.2, 0.5, 0.2), (0.2, 0.2, 0.5),
    (0.1, 0.1, 0.1), (0.4, 0.4, 0.1), (0.4, 0.1, 0.4), (0.1, 0.4, 0.4),
]


def fit_pump_model(cycles, populations, stderrs, p0, initial_guess=None, max_nfev=2000):
    """Weighted least-squares fit of :class:`PumpModelParams` to a population trajectory.

    Nine starts are tried: ``initial_guess`` (ideal pumping if omitted) and
    eight fixed points spread over the probability simplex.  Uncertainties
    are the square roots of the diagonal of ``(J^T J)^-1`` at the optimum,
    so they scale with the supplied standard errors.
    """
    cycles, pops, errs, mask = _prepare(cycles, populations, stderrs)
    if initial_guess is None:
        initial_guess = PumpModelParams(1 / 3, 1 / 3, 1 / 3, 1.0, 0.0)
    initial_guess.check()

    def residuals(x):
        r = ((_evaluate(x, p0, cycles) - pops)[mask] / errs[mask])
        return np.append(r, _PENALTY * max(0.0, x[0] + x[1] + x[2] - 1.0))

    lower = [0, 0, 0, A_BOUNDS[0] + 1e-9, B_BOUNDS[0]]
    upper = [1, 1, 1, A_BOUNDS[1], B_BOUNDS[1]]
    starts = [initial_guess.as_array()]
    starts += [np.array([*s, 1.0, 0.0]) for s in _STARTS[: 8]]

    best, nfev = None, 0
    for x0 in starts:
        sol = least_squares(residuals, x0, bounds=(lower, upper), method="trf",
                            xtol=1e-14, ftol=1e-14, gtol=1e-14, max_nfev=max_nfev)
        nfev += sol.nfev
        if best is None or sol.cost < best.cost:
            best = sol

    jac = best.jac[:-1]
    cov = np.linalg.pinv(jac.T @ jac)
    sigma = np.sqrt(np.clip(np.diag(cov), 0, None))
    x = best.x.copy()
    # the penalty admits sums a hair above one
    excess = x[0] + x[1] + x[2] - 1
    if excess > 0:
        x[:3] -= excess / 3
    return FitResult(
        params=PumpModelParams.from_array(x),
        param_uncertainties=PumpModelParams.from_array(sigma),
        residual_norm=float(np.linalg.norm(best.fun[:-1])),
        converged=bool(best.status > 0),
        iterations=int(nfev),
        covariance=cov,
    )


def synthetic_trajectory(params, p0, n_max, shots, rng):
    """Binomially sampled model populations with their estimated standard errors."""
    cycles = np.arange(n_max + 1)
    truth = np.clip(predict(params, p0, cycles), 0, 1)
    observed = rng.binomial(shots, truth) / shots
    stderr = np.sqrt(observed * (1 - observed) / shots)
    return cycles, observed, stderr
