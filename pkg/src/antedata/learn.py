"""Learning side: exact grid posterior, evidence, and the processing loss."""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .errors import SupportMismatchError
from .grid import GridDensity, expect_values, normalize
from .models import Dataset, Model


@dataclass(frozen=True)
class LearnInputs:
    prior: GridDensity
    model: Model
    data: Dataset


@dataclass(frozen=True)
class LearnOutputs:
    posterior: GridDensity
    log_evidence: float

    def sidecar_json(self) -> str:
        return json.dumps({"log_evidence": self.log_evidence}, sort_keys=True)


def full_loglik(inputs: LearnInputs) -> np.ndarray:
    inputs.model.check(inputs.data)
    return inputs.model.loglik_data(inputs.prior.grid.nodes, inputs.data)


def posterior_exact(inputs: LearnInputs) -> LearnOutputs:
    """Bayes' theorem on the grid; the evidence is the normalizer."""
    if len(inputs.data) == 0:
        return LearnOutputs(inputs.prior, 0.0)
    ll = full_loglik(inputs)
    with np.errstate(invalid="ignore"):
        kernel = np.where(inputs.prior.support_mask, inputs.prior.logw + ll, -np.inf)
    post, logz = normalize(kernel, inputs.prior.grid, inputs.model.support)
    return LearnOutputs(post, logz)


def info_loss_processing(q: GridDensity, inputs: LearnInputs, log_evidence: float) -> float:
    """``E_q[log q - log prior + log evidence - log lik]``.

    Terms are accumulated in log-space; nodes where ``q`` has no mass add 0.
    """
    mask = q.support_mask
    ll = full_loglik(inputs)
    prior = inputs.prior.logw
    if np.any(prior[mask] == -np.inf) or np.any(ll[mask] == -np.inf):
        raise SupportMismatchError("q has mass where prior x likelihood is zero")
    neg_entropy = expect_values(q.logw, q)
    cross_prior = expect_values(prior, q)
    exp_ll = expect_values(ll, q)
    return neg_entropy + log_evidence - cross_prior - exp_ll
