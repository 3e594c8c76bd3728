"""Restricted-family (Gaussian) relaxations of learning and unlearning.

Both objectives have the form ``E_q[linear term] + KL(q || reference)``:

* learning:   ``-E_q[log p(y | theta)] + KL(q || prior)``
* unlearning: ``+E_q[log p(y_g | theta)] + KL(q || posterior)``

Each equals the corresponding information loss up to a parameter-free
constant. ``q`` is a Gaussian evaluated on the reference's grid, truncated
to the reference's support and renormalized there.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence, Tuple

import numpy as np
from scipy import stats

from .errors import AntedataError, DomainError, FamilyEscapesGridError, LineSearchError
from .grid import GridDensity, Support, expect_values, kl_divergence, normalize
from .models import Dataset, GroupSel, Model, loglik_group

#: Largest Gaussian mass allowed beyond a grid end that truncates the support.
ESCAPE_MASS = 1e-8


@dataclass(frozen=True)
class VariationalParams:
    mean: float
    log_sd: float

    def __post_init__(self):
        if not (math.isfinite(self.mean) and math.isfinite(self.log_sd)):
            raise DomainError(f"variational parameters must be finite: {self}")

    @property
    def sd(self) -> float:
        return math.exp(self.log_sd)

    def as_array(self) -> np.ndarray:
        return np.array([self.mean, self.log_sd])

    @classmethod
    def from_array(cls, x) -> "VariationalParams":
        return cls(float(x[0]), float(x[1]))


@dataclass(frozen=True)
class OptimizerConfig:
    max_iters: int = 2000
    step_size: float = 1.0
    tolerance: float = 1e-12
    seed: int = 0

    def __post_init__(self):
        if self.max_iters < 1 or not self.step_size > 0 or not self.tolerance > 0:
            raise DomainError(f"invalid optimizer config: {self}")


@dataclass(frozen=True)
class VariationalResult:
    params: VariationalParams
    objective_trace: Tuple[float, ...]
    converged: bool
    final_kl_to_reference: Optional[float] = None

    @property
    def iterations(self) -> int:
        return len(self.objective_trace) - 1

    @property
    def final_objective(self) -> float:
        return self.objective_trace[-1]

    def to_dict(self) -> dict:
        d = {
            "mean": self.params.mean,
            "log_sd": self.params.log_sd,
            "converged": self.converged,
            "iterations": self.iterations,
            "final_objective": self.final_objective,
        }
        kl = self.final_kl_to_reference
        if kl is not None:
            d["final_kl_to_reference"] = kl if math.isfinite(kl) else None
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    def trace_csv(self) -> str:
        return "iter,objective\n" + "".join(f"{i},{v!r}\n" for i, v in enumerate(self.objective_trace))


#: Narrowest Gaussian, in grid spacings, that the grid still resolves.
MIN_SD_SPACINGS = 2.0


def gaussian_on_grid(
    params: VariationalParams,
    reference: GridDensity,
    support: Optional[Support] = None,
    mask: Optional[np.ndarray] = None,
) -> GridDensity:
    """Gaussian ``q`` on the reference's grid, zero outside ``mask``.

    ``mask`` defaults to the reference's support.
    """
    grid = reference.grid
    if params.sd < MIN_SD_SPACINGS * grid.spacing:
        raise FamilyEscapesGridError(f"sd {params.sd:.3g} is below the grid resolution {grid.spacing:.3g}")
    cut_lo, cut_hi = grid.truncated_ends(support)
    outside = 0.0
    if cut_lo:
        outside += stats.norm.cdf(grid.lo, params.mean, params.sd)
    if cut_hi:
        outside += stats.norm.sf(grid.hi, params.mean, params.sd)
    if outside > ESCAPE_MASS:
        raise FamilyEscapesGridError(f"{outside:.3g} of N({params.mean:.4g}, {params.sd:.4g}^2) lies off the grid")
    z = (grid.nodes - params.mean) / params.sd
    keep = reference.support_mask if mask is None else mask
    logq = np.where(keep, -0.5 * z * z, -np.inf)
    return normalize(logq, grid, support)[0]


@dataclass(frozen=True, eq=False)
class Objective:
    """``E_q[linear] + KL(q || reference)`` for Gaussian ``q``.

    ``q`` lives where the reference is positive and ``linear`` is finite;
    a node where the data are impossible carries no mass, which keeps the
    objective finite on grids that include such nodes (e.g. 0 and 1 for a
    Bernoulli likelihood).
    """

    reference: GridDensity
    linear: np.ndarray = field(repr=False)
    support: Optional[Support] = None

    @property
    def mask(self) -> np.ndarray:
        return self.reference.support_mask & np.isfinite(self.linear)

    def density(self, params: VariationalParams) -> GridDensity:
        return gaussian_on_grid(params, self.reference, self.support, self.mask)

    def __call__(self, params: VariationalParams) -> float:
        q = self.density(params)
        return expect_values(self.linear, q) + kl_divergence(q, self.reference)


def unlearn_objective(posterior: GridDensity, model: Model, data: Dataset, group: GroupSel, *, iid: bool = False) -> Objective:
    ll = loglik_group(model, posterior.grid.nodes, data, group, iid=iid)
    return Objective(posterior, ll, model.support)


def learn_objective(prior: GridDensity, model: Model, data: Dataset) -> Objective:
    model.check(data)
    ll = model.loglik_data(prior.grid.nodes, data)
    return Objective(prior, -ll, model.support)


def objective_unlearn(params, posterior, model, data, group) -> float:
    return unlearn_objective(posterior, model, data, group)(params)


def objective_learn(params, prior, model, data) -> float:
    return learn_objective(prior, model, data)(params)


def moment_match(p: GridDensity) -> VariationalParams:
    return VariationalParams(p.mean(), 0.5 * math.log(p.var()))


def gradient(objective: Callable[[VariationalParams], float], params: VariationalParams, rel_step: float = 1e-5) -> np.ndarray:
    """Central differences with step ``rel_step * max(1, |param|)`` per coordinate."""
    x = params.as_array()
    g = np.empty(2)
    for i in range(2):
        h = rel_step * max(1.0, abs(x[i]))
        up, dn = x.copy(), x.copy()
        up[i] += h
        dn[i] -= h
        fu = objective(VariationalParams.from_array(up))
        fd = objective(VariationalParams.from_array(dn))
        if not (math.isfinite(fu) and math.isfinite(fd)):
            raise DomainError("objective is not finite on the difference stencil")
        g[i] = (fu - fd) / (2 * h)
    return g


def _safe(objective, x) -> float:
    try:
        return objective(VariationalParams.from_array(x))
    except AntedataError:
        return math.inf


def fit(
    objective: Callable[[VariationalParams], float],
    init: VariationalParams,
    config: OptimizerConfig = OptimizerConfig(),
    reference: Optional[GridDensity] = None,
) -> VariationalResult:
    """Gradient descent with halving backtracking.

    Each iteration starts from ``config.step_size`` and halves until the
    objective strictly drops. The run stops once a step gains less than
    ``config.tolerance``. ``reference``, when given, is compared to the
    fitted density in ``final_kl_to_reference``.
    """
    x = init.as_array()
    f = objective(init)
    trace = [f]
    converged = False
    for _ in range(config.max_iters):
        g = gradient(objective, VariationalParams.from_array(x))
        gg = float(g @ g)
        step = config.step_size
        for _ in range(60):
            trial = x - step * g
            ft = _safe(objective, trial)
            if ft < f:
                break
            if math.isfinite(ft) and step * gg < config.tolerance:
                # even the predicted gain is below tolerance
                converged = True
                break
            step *= 0.5
        else:
            raise LineSearchError("no decrease found after 60 halvings")
        if converged:
            break
        gain = f - ft
        x, f = trial, ft
        trace.append(f)
        if gain < config.tolerance:
            converged = True
            break
    params = VariationalParams.from_array(x)
    kl = None
    if reference is not None and isinstance(objective, Objective):
        try:
            kl = kl_divergence(objective.density(params), reference)
        except AntedataError:
            kl = math.inf
    return VariationalResult(params, tuple(trace), converged, kl)


def random_family_members(n: int, mean_range: Tuple[float, float], log_sd_range: Tuple[float, float], seed: int) -> Sequence[VariationalParams]:
    rng = np.random.default_rng(seed)
    means = rng.uniform(*mean_range, size=n)
    log_sds = rng.uniform(*log_sd_range, size=n)
    return [VariationalParams(float(m), float(s)) for m, s in zip(means, log_sds)]
