"""Unlearning side: the deletion loss, the optimal deletion rule and its checks.

Removing a group ``g`` from a posterior divides out the group's likelihood
contribution and renormalizes. The normalizer is the reciprocal of the
leave-group-out predictive ``p(y_g | y_-g)``, and the reduced evidence
follows from the chain rule ``log p(y) = log p(y_-g) + log p(y_g | y_-g)``.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, Dict, Optional, Sequence

import numpy as np

from .errors import DivergenceError, DomainError, SupportMismatchError
from .grid import GridDensity, boundary_mass, expect_values, kl_divergence, normalize
from .learn import LearnInputs, posterior_exact
from .models import Dataset, GroupSel, Model, loglik_group

#: Kernel mass fraction on truncated grid ends above which deletion refuses.
DIVERGENCE_FRACTION = 1e-4

TERM_NAMES = (
    "neg_entropy",
    "log_evidence_rest",
    "neg_log_posterior",
    "neg_log_evidence_full",
    "log_lik_deleted",
)


@dataclass(frozen=True)
class DeleteInputs:
    posterior: GridDensity
    log_evidence_full: float
    model: Model
    data: Dataset
    group: GroupSel
    iid: bool = False  # force the per-point group likelihood

    def __post_init__(self):
        self.data.mask(self.group)

    @cached_property
    def _group_loglik(self) -> np.ndarray:
        ll = loglik_group(self.model, self.posterior.grid.nodes, self.data, self.group, iid=self.iid)
        ll.setflags(write=False)
        return ll

    def group_loglik(self) -> np.ndarray:
        return self._group_loglik


@dataclass(frozen=True)
class DeleteOutputs:
    antedata: GridDensity
    log_predictive: float
    log_evidence_rest: float

    def sidecar_json(self) -> str:
        return json.dumps(
            {"log_predictive": self.log_predictive, "log_evidence_rest": self.log_evidence_rest},
            sort_keys=True,
        )


@dataclass(frozen=True)
class InfoLossReport:
    total: float
    terms: Dict[str, float] = field(default_factory=dict)

    def to_json(self) -> str:
        return json.dumps({"total": self.total, "terms": self.terms}, sort_keys=True)


def deletion_kernel(inputs: DeleteInputs) -> np.ndarray:
    """Unnormalized log antedata: ``log posterior - log lik(group)``.

    Nodes where both are zero stay at zero mass. A node where the posterior
    is positive but the group is impossible means the posterior and model
    disagree, and raises.
    """
    post = inputs.posterior.logw
    ll = inputs.group_loglik()
    live = post > -np.inf
    if np.any(ll[live] == -np.inf):
        raise SupportMismatchError("posterior has mass where the deleted group is impossible")
    return np.where(live, post - np.where(live, ll, 0.0), -np.inf)


def delete_group_exact(inputs: DeleteInputs) -> DeleteOutputs:
    """Remove ``inputs.group`` from the posterior exactly."""
    if not inputs.data.mask(inputs.group).any():
        return DeleteOutputs(inputs.posterior, 0.0, inputs.log_evidence_full)
    kernel = deletion_kernel(inputs)
    grid = inputs.posterior.grid
    frac = boundary_mass(kernel, grid, inputs.model.support)
    if frac > DIVERGENCE_FRACTION:
        raise DivergenceError(
            f"{frac:.3g} of the deletion kernel's mass is on truncated grid ends; "
            "the deletion is not integrable on this grid"
        )
    antedata, logz = normalize(kernel, grid, inputs.model.support)
    log_pred = -logz
    return DeleteOutputs(antedata, log_pred, inputs.log_evidence_full - log_pred)


def delete_sequence(inputs: DeleteInputs, groups: Sequence[GroupSel]) -> DeleteOutputs:
    """Delete several groups one after another, shrinking the data each time."""
    post, ev, data = inputs.posterior, inputs.log_evidence_full, inputs.data
    total_pred = 0.0
    for g in groups:
        out = delete_group_exact(DeleteInputs(post, ev, inputs.model, data, g, inputs.iid))
        post, ev = out.antedata, out.log_evidence_rest
        total_pred += out.log_predictive
        data = data.without(g)
    return DeleteOutputs(post, total_pred, ev)


def info_loss_deletion(q: GridDensity, inputs: DeleteInputs, log_evidence_rest: float) -> InfoLossReport:
    """Output minus input information for a candidate antedata ``q``."""
    mask = q.support_mask
    post = inputs.posterior.logw
    ll = inputs.group_loglik()
    if np.any(post[mask] == -np.inf):
        raise SupportMismatchError("q has mass where the posterior has none")
    if np.any(ll[mask] == -np.inf):
        raise SupportMismatchError("q has mass where the deleted group is impossible")
    mass = expect_values(np.ones(q.grid.n), q)
    terms = {
        "neg_entropy": expect_values(q.logw, q),
        "log_evidence_rest": log_evidence_rest * mass,
        "neg_log_posterior": -expect_values(post, q),
        "neg_log_evidence_full": -inputs.log_evidence_full * mass,
        "log_lik_deleted": expect_values(ll, q),
    }
    return InfoLossReport(math.fsum(terms.values()), terms)


def verify_zero_loss(inputs: DeleteInputs) -> float:
    """``|loss|`` at the exact deletion; zero up to round-off."""
    out = delete_group_exact(inputs)
    return abs(info_loss_deletion(out.antedata, inputs, out.log_evidence_rest).total)


def delete_via_refit(prior: GridDensity, model: Model, data: Dataset, group: GroupSel, *, iid: bool = False):
    """Both routes to the leave-group-out posterior: (delete-route, refit-route)."""
    full = posterior_exact(LearnInputs(prior, model, data))
    deleted = delete_group_exact(DeleteInputs(full.posterior, full.log_evidence, model, data, group, iid))
    refit = posterior_exact(LearnInputs(prior, model, data.without(group)))
    return deleted, refit


def verify_equivalence(
    prior: GridDensity, model: Model, data: Dataset, group: GroupSel, *, iid: bool = False
) -> float:
    """KL(deletion-route antedata || posterior refitted without the group)."""
    deleted, refit = delete_via_refit(prior, model, data, group, iid=iid)
    return kl_divergence(deleted.antedata, refit.posterior)


# ---------------------------------------------------------------------------
# Perturbation checks around the optimum
# ---------------------------------------------------------------------------


def gaussian_bump(center: float, width: float) -> Callable[[np.ndarray], np.ndarray]:
    def bump(theta):
        return np.exp(-0.5 * ((np.asarray(theta) - center) / width) ** 2)

    return bump


def default_bump(grid) -> Callable[[np.ndarray], np.ndarray]:
    """Gaussian bump at the grid midpoint, one tenth of the domain wide."""
    return gaussian_bump(0.5 * (grid.lo + grid.hi), 0.1 * (grid.hi - grid.lo))


def perturbation_direction(q: GridDensity, bump: Callable[[np.ndarray], np.ndarray]) -> np.ndarray:
    """Zero-mass direction ``q * (b - E_q b)`` built from a bump ``b``.

    Weighting by ``q`` keeps ``q + eps * direction`` positive for
    ``|eps| < 1 / max|b - E_q b|`` and makes it vanish wherever ``q`` does.
    The direction itself must be negligible on both end nodes.
    """
    b = np.asarray(bump(q.grid.nodes), dtype=float)
    if not np.all(np.isfinite(b)):
        raise DomainError("bump must be finite on the grid")
    centered = b - expect_values(b, q)
    eta = np.where(q.support_mask, q.density * centered, 0.0)
    scale = np.max(np.abs(eta))
    if np.max(np.abs(centered[q.support_mask])) <= 1e-12 * max(1.0, np.max(np.abs(b))):
        raise DomainError("bump is constant on the support of q")
    if max(abs(eta[0]), abs(eta[-1])) > 1e-4 * scale:
        raise DomainError("perturbation must decay to zero at the grid boundaries")
    return eta


def perturb(q: GridDensity, direction: np.ndarray, eps: float, support=None) -> GridDensity:
    vals = q.density + eps * direction
    if np.any(vals < 0):
        raise DomainError(f"q + eps * bump goes negative at eps={eps}")
    with np.errstate(divide="ignore"):
        return normalize(np.log(vals), q.grid, support)[0]


def perturbation_stationarity_check(
    inputs: DeleteInputs,
    bump: Optional[Callable[[np.ndarray], np.ndarray]] = None,
    epsilons: Sequence[float] = (-0.02, -0.01, 0.0, 0.01, 0.02),
) -> np.ndarray:
    """Deletion loss at ``q* + eps * bump`` (renormalized) for each ``eps``."""
    out = delete_group_exact(inputs)
    q = out.antedata
    direction = perturbation_direction(q, bump or default_bump(q.grid))
    vals = []
    for eps in epsilons:
        qe = q if eps == 0 else perturb(q, direction, eps, inputs.model.support)
        vals.append(info_loss_deletion(qe, inputs, out.log_evidence_rest).total)
    return np.array(vals)


def fit_parabola(epsilons, values):
    """Least-squares ``a e^2 + b e + c``; returns ``(a, b, c, vertex)``."""
    a, b, c = np.polyfit(np.asarray(epsilons, float), np.asarray(values, float), 2)
    return a, b, c, (-b / (2 * a) if a != 0 else math.inf)
