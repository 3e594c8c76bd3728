"""Verification sweep over the built-in models.

For every model, one seeded dataset is split by several seeded random
partitions. Each group is deleted from the full posterior and the result
is checked against a refit, against the zero-loss property, against the
evidence chain rule, and (for conjugate models) against the closed-form
predictive. One seeded group per partition also gets a batch of random
perturbation sweeps around the optimum.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .delete import (
    DeleteInputs,
    delete_group_exact,
    fit_parabola,
    gaussian_bump,
    info_loss_deletion,
    perturb,
    perturbation_direction,
)
from .errors import AntedataError
from .grid import GridDensity, kl_divergence, make_grid
from .learn import LearnInputs, posterior_exact
from .models import (
    AR1Model,
    BernoulliModel,
    ConjugateState,
    Dataset,
    GaussianModel,
    Model,
    PoissonModel,
    beta_state,
    conjugate_downdate,
    conjugate_log_marginal,
    conjugate_mean_sd,
    conjugate_to_grid,
    conjugate_update,
    gamma_state,
    gaussian_state,
    partition_labels,
    simulate,
)

MODEL_NAMES = ("bernoulli", "gaussian", "poisson", "ar1")
EPSILONS = (-0.02, -0.01, 0.0, 0.01, 0.02)

DEFAULT_THRESHOLDS = {
    "equivalence_kl": 1e-8,
    "zero_loss": 1e-8,
    "evidence_chain": 1e-8,
    "vertex": 1e-3,
    "closed_form_predictive": 1e-6,
    "iid_shortcut_gap": 1e-3,
}


@dataclass(frozen=True)
class Case:
    """A model with its prior state, true parameter and grid bounds."""

    model: Model
    prior_state: ConjugateState
    theta_true: float
    lo: float
    hi: float


def builtin_case(name: str, *, iid_shortcut: bool = False) -> Case:
    if name == "bernoulli":
        return Case(BernoulliModel(), beta_state(2.0, 2.0), 0.6, 0.0, 1.0)
    if name == "gaussian":
        return Case(GaussianModel(1.0), gaussian_state(0.0, 1 / 9.0, 1.0), 1.5, -30.0, 30.0)
    if name == "poisson":
        st = gamma_state(2.0, 0.5)
        m, s = conjugate_mean_sd(st)
        return Case(PoissonModel(), st, 3.0, 0.0, m + 10 * s)
    if name == "ar1":
        return Case(AR1Model(0.7, 1.0, iid_shortcut), gaussian_state(0.0, 1 / 9.0, 1.0), 0.5, -30.0, 30.0)
    raise ValueError(f"unknown built-in model {name!r}")


def case_prior(case: Case, n: int) -> GridDensity:
    return conjugate_to_grid(case.prior_state, make_grid(case.lo, case.hi, n))


@dataclass
class Check:
    name: str
    value: Optional[float]
    threshold: float
    passed: bool
    detail: str = ""

    def __post_init__(self):
        v = None if self.value is None else float(self.value)
        self.value = v if v is not None and math.isfinite(v) else None


def _max(xs):
    xs = list(xs)
    return max(xs) if xs else 0.0


def random_bumps(q: GridDensity, count: int, seed: int):
    """Seeded Gaussian bumps placed relative to ``q``'s mean and spread."""
    rng = np.random.default_rng(seed)
    m, s = q.mean(), math.sqrt(q.var())
    for _ in range(count):
        yield gaussian_bump(m + rng.uniform(-1.5, 1.5) * s, s * rng.uniform(0.5, 2.0))


def perturbation_sweep(inputs: DeleteInputs, count: int, seed: int, epsilons=EPSILONS):
    """Loss at ``q* + eps * bump`` for ``count`` random bumps; rows are bumps."""
    out = delete_group_exact(inputs)
    q = out.antedata
    rows = []
    for bump in random_bumps(q, count, seed):
        direction = perturbation_direction(q, bump)
        row = []
        for eps in epsilons:
            qe = q if eps == 0 else perturb(q, direction, eps, inputs.model.support)
            row.append(info_loss_deletion(qe, inputs, out.log_evidence_rest).total)
        rows.append(row)
    return np.array(rows)


@dataclass
class SuiteConfig:
    models: Tuple[str, ...] = MODEL_NAMES
    n_obs: int = 20
    partitions: int = 5
    groups_per_partition: int = 4
    grid_n: int = 4001
    perturbations: int = 50
    force_iid: bool = False
    seed: int = 0
    thresholds: Dict[str, float] = field(default_factory=lambda: dict(DEFAULT_THRESHOLDS))


def run_model(name: str, cfg: SuiteConfig) -> Dict[str, list]:
    case = builtin_case(name, iid_shortcut=cfg.force_iid)
    model = case.model
    prior = case_prior(case, cfg.grid_n)
    base = simulate(model, case.theta_true, cfg.n_obs, "single", cfg.seed)
    full = None
    res = {"equivalence_kl": [], "zero_loss": [], "evidence_chain": [], "closed_form_predictive": [],
           "min_perturbed_loss": [], "vertex": [], "iid_shortcut_kl": []}
    for p in range(cfg.partitions):
        labels = partition_labels(cfg.n_obs, f"random:{cfg.groups_per_partition}", cfg.seed + 1000 * (p + 1))
        data = Dataset(base.values, labels)
        full = posterior_exact(LearnInputs(prior, model, data))
        for g in data.labels:
            inputs = DeleteInputs(full.posterior, full.log_evidence, model, data, g)
            out = delete_group_exact(inputs)
            refit = posterior_exact(LearnInputs(prior, model, data.without(g)))
            res["equivalence_kl"].append(kl_divergence(out.antedata, refit.posterior))
            res["zero_loss"].append(abs(info_loss_deletion(out.antedata, inputs, out.log_evidence_rest).total))
            res["evidence_chain"].append(abs(out.log_evidence_rest - refit.log_evidence))
            if model.conjugate:
                exact = conjugate_log_marginal(conjugate_update(case.prior_state, data.without(g)), data, g)
                res["closed_form_predictive"].append(abs(out.log_predictive - exact))
            if model.has_conditional:
                shortcut = delete_group_exact(DeleteInputs(full.posterior, full.log_evidence, model, data, g, iid=True))
                res["iid_shortcut_kl"].append(kl_divergence(shortcut.antedata, refit.posterior))
        g = data.labels[int(np.random.default_rng(cfg.seed + p).integers(len(data.labels)))]
        inputs = DeleteInputs(full.posterior, full.log_evidence, model, data, g)
        sweep = perturbation_sweep(inputs, cfg.perturbations, cfg.seed + 7919 * (p + 1))
        nonzero = [i for i, e in enumerate(EPSILONS) if e != 0]
        res["min_perturbed_loss"].append(float(sweep[:, nonzero].min()))
        for row in sweep:
            a, _, _, vertex = fit_parabola(EPSILONS, row)
            res["vertex"].append(abs(vertex) if a > 0 else math.inf)
    return res


def run_suite(cfg: SuiteConfig = SuiteConfig()) -> dict:
    """Run the sweep and return a JSON-ready scorecard."""
    th = {**DEFAULT_THRESHOLDS, **cfg.thresholds}
    checks: List[Check] = []
    for name in cfg.models:
        try:
            r = run_model(name, cfg)
        except AntedataError as exc:
            checks.append(Check(f"{name}.run", math.nan, 0.0, False, f"{type(exc).__name__}: {exc}"))
            continue
        def below(key, values):
            v = _max(values)
            checks.append(Check(f"{name}.{key}", v, th[key], bool(v < th[key])))

        below("equivalence_kl", r["equivalence_kl"])
        below("zero_loss", r["zero_loss"])
        below("evidence_chain", r["evidence_chain"])
        if r["closed_form_predictive"]:
            below("closed_form_predictive", r["closed_form_predictive"])
        pos = min(r["min_perturbed_loss"])
        checks.append(Check(f"{name}.perturbed_loss_positive", pos, 0.0, pos > 0, "min over eps != 0"))
        below("vertex", r["vertex"])
        if r["iid_shortcut_kl"]:
            gap = _max(r["iid_shortcut_kl"])
            checks.append(Check(f"{name}.iid_shortcut_gap", gap, th["iid_shortcut_gap"], gap > th["iid_shortcut_gap"],
                                "the per-point shortcut must be detectably wrong"))
    return {
        "settings": {
            "models": list(cfg.models),
            "n_obs": cfg.n_obs,
            "partitions": cfg.partitions,
            "groups_per_partition": cfg.groups_per_partition,
            "grid_n": cfg.grid_n,
            "perturbations": cfg.perturbations,
            "force_iid": cfg.force_iid,
            "seed": cfg.seed,
        },
        "checks": [asdict(c) for c in checks],
        "passed": all(c.passed for c in checks),
    }
