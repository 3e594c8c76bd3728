"""Likelihoods, synthetic data, and closed-form conjugate families.

Models evaluate log-likelihoods on whole arrays of parameter values at
once; every array-valued method takes ``theta`` of shape ``(m,)`` and
returns shape ``(m,)`` (or ``(n_obs, m)`` for per-observation terms).
"""

from __future__ import annotations

import csv
import io
import json
import math
import re
from dataclasses import dataclass, field
from typing import Dict, Iterable, Optional, Sequence, Tuple, Union

import numpy as np
from scipy import special, stats

from .errors import DegenerateDensityError, DomainError, DowndateError, UnknownGroupError
from .grid import REAL_LINE, GridDensity, ParameterGrid, Support, normalize

GroupSel = Union[str, Sequence[str]]


def as_labels(group: GroupSel) -> Tuple[str, ...]:
    if isinstance(group, str):
        return (group,)
    return tuple(group)


# ---------------------------------------------------------------------------
# Data
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class Dataset:
    """Ordered observations, each carrying exactly one opaque group label.

    ``positions`` records each observation's index in the original series so
    that subsets of time-ordered data keep their spacing.
    """

    values: np.ndarray
    groups: Tuple[str, ...]
    positions: Optional[np.ndarray] = None

    def __post_init__(self):
        v = np.array(self.values, dtype=float).reshape(-1)
        g = tuple(str(x) for x in self.groups)
        if len(g) != len(v):
            raise DomainError(f"{len(v)} observations but {len(g)} group labels")
        pos = np.arange(len(v)) if self.positions is None else np.array(self.positions, dtype=int)
        if pos.shape != v.shape:
            raise DomainError("positions must match observations")
        if len(pos) > 1 and np.any(np.diff(pos) <= 0):
            raise DomainError("positions must be strictly increasing")
        for arr in (v, pos):
            arr.setflags(write=False)
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "groups", g)
        object.__setattr__(self, "positions", pos)

    def __len__(self) -> int:
        return len(self.values)

    @property
    def labels(self) -> Tuple[str, ...]:
        """Distinct labels in order of first appearance."""
        return tuple(dict.fromkeys(self.groups))

    def mask(self, group: GroupSel) -> np.ndarray:
        labels = as_labels(group)
        known = set(self.groups)
        missing = [lab for lab in labels if lab not in known]
        if missing:
            raise UnknownGroupError(f"unknown group label(s): {', '.join(missing)}")
        wanted = set(labels)
        return np.array([g in wanted for g in self.groups], dtype=bool)

    def subset(self, mask) -> "Dataset":
        mask = np.asarray(mask, dtype=bool)
        return Dataset(
            self.values[mask],
            tuple(g for g, keep in zip(self.groups, mask) if keep),
            self.positions[mask],
        )

    def only(self, group: GroupSel) -> "Dataset":
        return self.subset(self.mask(group))

    def without(self, group: GroupSel) -> "Dataset":
        return self.subset(~self.mask(group))

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["value", "group"])
        for v, g in zip(self.values, self.groups):
            w.writerow([repr(float(v)), g])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "Dataset":
        rows = list(csv.reader(io.StringIO(text)))
        if not rows or [c.strip() for c in rows[0]] != ["value", "group"]:
            raise DomainError("dataset CSV must start with header value,group")
        body = [r for r in rows[1:] if r]
        return cls(np.array([float(r[0]) for r in body]), tuple(r[1].strip() for r in body))

    @classmethod
    def empty(cls) -> "Dataset":
        return cls(np.empty(0), ())


# ---------------------------------------------------------------------------
# Models
# ---------------------------------------------------------------------------


class Model:
    """A likelihood over a scalar parameter.

    Subclasses implement :meth:`loglik_points`. Models whose observations are
    conditionally independent given the parameter leave ``has_conditional``
    False; a group's log-likelihood is then the sum of its members' terms.
    """

    name = "model"
    support: Support = REAL_LINE
    conjugate: Optional[str] = None
    has_conditional = False

    def check(self, data: Dataset) -> None:
        pass

    def loglik_points(self, theta, data: Dataset) -> np.ndarray:
        raise NotImplementedError

    def loglik_data(self, theta, data: Dataset) -> np.ndarray:
        theta = np.atleast_1d(np.asarray(theta, dtype=float))
        if len(data) == 0:
            return np.zeros_like(theta)
        # sorting first makes the sum independent of observation order
        return np.sort(self.loglik_points(theta, data), axis=0).sum(axis=0)

    def loglik_group_conditional(self, theta, data: Dataset, group: GroupSel) -> np.ndarray:
        """``log p(y_g | theta, y_-g)`` as joint minus marginal of the rest."""
        theta = np.atleast_1d(np.asarray(theta, dtype=float))
        rest = data.without(group)
        return self.loglik_data(theta, data) - self.loglik_data(theta, rest)

    def sample(self, rng: np.random.Generator, theta: float, n: int) -> np.ndarray:
        raise NotImplementedError

    def describe(self) -> dict:
        return {"name": self.name}


def loglik_group(model: Model, theta, data: Dataset, group: GroupSel, *, iid: bool = False):
    """Log-likelihood contribution of ``group``.

    Uses the model's conditional form ``log p(y_g | theta, y_-g)`` when it
    declares one, unless ``iid`` forces the per-point sum.
    """
    mask = data.mask(group)
    scalar = np.ndim(theta) == 0
    th = np.atleast_1d(np.asarray(theta, dtype=float))
    if not mask.any():
        out = np.zeros_like(th)
    elif model.has_conditional and not iid:
        out = model.loglik_group_conditional(th, data, group)
    else:
        # the group scored on its own, as if the rest of the data were absent
        out = model.loglik_points(th, data.subset(mask)).sum(axis=0)
    return float(out[0]) if scalar else out


@dataclass(frozen=True)
class BernoulliModel(Model):
    name = "bernoulli"
    support = (0.0, 1.0)
    conjugate = "beta-bernoulli"

    def check(self, data):
        if not np.all((data.values == 0) | (data.values == 1)):
            raise DomainError("Bernoulli observations must be 0 or 1")

    def loglik_points(self, theta, data):
        th = np.atleast_1d(np.asarray(theta, dtype=float))[None, :]
        y = data.values[:, None]
        return special.xlogy(y, th) + special.xlog1py(1.0 - y, -th)

    def sample(self, rng, theta, n):
        return (rng.random(n) < theta).astype(float)


@dataclass(frozen=True)
class GaussianModel(Model):
    """Gaussian observations with unknown mean and known noise scale."""

    noise_sd: float = 1.0
    name = "gaussian"
    conjugate = "gaussian-known-variance"

    def __post_init__(self):
        if not self.noise_sd > 0:
            raise DomainError("noise_sd must be positive")

    def loglik_points(self, theta, data):
        th = np.atleast_1d(np.asarray(theta, dtype=float))[None, :]
        y = data.values[:, None]
        s2 = self.noise_sd**2
        return -0.5 * math.log(2 * math.pi * s2) - (y - th) ** 2 / (2 * s2)

    def sample(self, rng, theta, n):
        return theta + self.noise_sd * rng.standard_normal(n)

    def describe(self):
        return {"name": self.name, "noise_sd": self.noise_sd}


@dataclass(frozen=True)
class PoissonModel(Model):
    name = "poisson"
    support = (0.0, math.inf)
    conjugate = "gamma-poisson"

    def check(self, data):
        v = data.values
        if not np.all((v >= 0) & (v == np.round(v))):
            raise DomainError("Poisson observations must be non-negative integers")

    def loglik_points(self, theta, data):
        th = np.atleast_1d(np.asarray(theta, dtype=float))[None, :]
        y = data.values[:, None]
        return special.xlogy(y, th) - th - special.gammaln(y + 1.0)

    def sample(self, rng, theta, n):
        return rng.poisson(theta, n).astype(float)


@dataclass(frozen=True)
class AR1Model(Model):
    """Stationary Gaussian AR(1) whose mean-reversion level is the parameter.

    ``y_t = theta + phi (y_{t-1} - theta) + noise_sd * e_t``, started from
    the stationary law. Observations are not conditionally independent, so
    a group's contribution is ``log p(y_g | theta, y_-g)``. Setting
    ``iid_shortcut`` drops that and scores the group's own sub-series,
    ``log p(y_g | theta)``, which ignores what the rest of the data says.
    """

    phi: float = 0.8
    noise_sd: float = 1.0
    iid_shortcut: bool = False
    name = "ar1"

    def __post_init__(self):
        if not abs(self.phi) < 1:
            raise DomainError("AR(1) needs |phi| < 1 for stationarity")
        if not self.noise_sd > 0:
            raise DomainError("noise_sd must be positive")

    @property
    def has_conditional(self):
        return not self.iid_shortcut

    def loglik_points(self, theta, data):
        # Markov transitions across gaps of d steps: coefficient phi^d,
        # variance noise^2 (1 - phi^(2d)) / (1 - phi^2); the first point is stationary.
        th = np.atleast_1d(np.asarray(theta, dtype=float))[None, :]
        y = data.values
        stat_var = self.noise_sd**2 / (1 - self.phi**2)
        gaps = np.diff(data.positions)
        coef = np.concatenate([[0.0], self.phi**gaps])
        var = stat_var * (1 - coef**2)
        prev = np.concatenate([[0.0], y[:-1]])[:, None]
        mean = th + coef[:, None] * (prev - th)
        return -0.5 * np.log(2 * math.pi * var)[:, None] - (y[:, None] - mean) ** 2 / (2 * var[:, None])

    def sample(self, rng, theta, n):
        out = np.empty(n)
        out[0] = theta + self.noise_sd / math.sqrt(1 - self.phi**2) * rng.standard_normal()
        for t in range(1, n):
            out[t] = theta + self.phi * (out[t - 1] - theta) + self.noise_sd * rng.standard_normal()
        return out

    def describe(self):
        return {"name": self.name, "phi": self.phi, "noise_sd": self.noise_sd, "iid_shortcut": self.iid_shortcut}


def make_model(cfg: dict) -> Model:
    cfg = dict(cfg)
    name = cfg.pop("name", None)
    builders = {"bernoulli": BernoulliModel, "gaussian": GaussianModel, "poisson": PoissonModel, "ar1": AR1Model}
    if name not in builders:
        raise DomainError(f"unknown model {name!r}; choose from {sorted(builders)}")
    try:
        return builders[name](**cfg)
    except TypeError as exc:
        raise DomainError(f"bad parameters for model {name!r}: {exc}") from None


# ---------------------------------------------------------------------------
# Synthetic data
# ---------------------------------------------------------------------------


def partition_labels(n: int, scheme: str, seed: int = 0) -> Tuple[str, ...]:
    """Group labels for ``n`` observations.

    ``scheme`` is one of ``"K folds"``/``"folds:K"`` (contiguous blocks),
    ``"random:K"`` (seeded balanced shuffle), ``"loo"`` (one group per
    observation) or ``"single"``. Labels are ``g1, g2, ...``.
    """
    s = scheme.strip().lower()
    if s == "single":
        return ("g1",) * n
    if s == "loo":
        return tuple(f"g{i + 1}" for i in range(n))
    m = re.fullmatch(r"(?:folds:(\d+)|(\d+)\s*folds?|random:(\d+))", s)
    if not m:
        raise DomainError(f"unknown partition rule {scheme!r}")
    k = int(next(x for x in m.groups() if x is not None))
    if not 1 <= k <= n:
        raise DomainError(f"cannot split {n} observations into {k} groups")
    blocks = np.array_split(np.arange(n), k)
    labels = np.empty(n, dtype=object)
    for i, idx in enumerate(blocks):
        labels[idx] = f"g{i + 1}"
    if m.group(3) is not None:
        labels = labels[np.random.default_rng(seed).permutation(n)]
    return tuple(labels)


def simulate(model: Model, theta_true: float, n: int, groups: str = "single", seed: int = 0) -> Dataset:
    """Draw ``n`` observations with numpy's PCG64 generator seeded by ``seed``."""
    if n < 1:
        raise DomainError("simulate needs n >= 1")
    labels = partition_labels(n, groups, seed)
    rng = np.random.Generator(np.random.PCG64(seed))
    return Dataset(model.sample(rng, theta_true, n), labels)


# ---------------------------------------------------------------------------
# Conjugate families
# ---------------------------------------------------------------------------

_FAMILY_KEYS = {
    "beta-bernoulli": ("alpha", "beta"),
    "gaussian-known-variance": ("mean", "precision", "noise_var"),
    "gamma-poisson": ("shape", "rate"),
}


@dataclass(frozen=True)
class ConjugateState:
    family: str
    hyperparameters: Dict[str, float] = field(default_factory=dict)

    def __post_init__(self):
        if self.family not in _FAMILY_KEYS:
            raise DomainError(f"unknown conjugate family {self.family!r}")
        keys = _FAMILY_KEYS[self.family]
        if set(self.hyperparameters) != set(keys):
            raise DomainError(f"{self.family} needs hyperparameters {keys}")
        hp = {k: float(self.hyperparameters[k]) for k in keys}
        object.__setattr__(self, "hyperparameters", hp)
        _check_legal(self.family, hp, DomainError)

    def __getitem__(self, key):
        return self.hyperparameters[key]

    def to_json(self) -> str:
        return json.dumps({"family": self.family, "hyperparameters": self.hyperparameters}, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "ConjugateState":
        obj = json.loads(text)
        return cls(obj["family"], obj["hyperparameters"])


def beta_state(alpha, beta) -> ConjugateState:
    return ConjugateState("beta-bernoulli", {"alpha": alpha, "beta": beta})


def gaussian_state(mean, precision, noise_var=1.0) -> ConjugateState:
    return ConjugateState("gaussian-known-variance", {"mean": mean, "precision": precision, "noise_var": noise_var})


def gamma_state(shape, rate) -> ConjugateState:
    return ConjugateState("gamma-poisson", {"shape": shape, "rate": rate})


def _check_legal(family, hp, exc):
    bad = [k for k, v in hp.items() if not (math.isfinite(v) and (v > 0 or k == "mean"))]
    if bad:
        raise exc(f"{family} hyperparameters out of range: " + ", ".join(f"{k}={hp[k]}" for k in bad))


def _select(data: Dataset, group: Optional[GroupSel]) -> np.ndarray:
    return data.values if group is None else data.only(group).values


def _suff_stats(family: str, y: np.ndarray) -> Tuple[float, float]:
    if family == "beta-bernoulli":
        if not np.all((y == 0) | (y == 1)):
            raise DomainError("beta-bernoulli needs 0/1 observations")
        return float(y.sum()), float(len(y))
    if family == "gamma-poisson":
        if not np.all((y >= 0) & (y == np.round(y))):
            raise DomainError("gamma-poisson needs non-negative integer observations")
    return float(y.sum()), float(len(y))


def _shift(state: ConjugateState, y: np.ndarray, sign: int, exc) -> ConjugateState:
    s, n = _suff_stats(state.family, y)
    hp = dict(state.hyperparameters)
    if state.family == "beta-bernoulli":
        hp["alpha"] += sign * s
        hp["beta"] += sign * (n - s)
    elif state.family == "gamma-poisson":
        hp["shape"] += sign * s
        hp["rate"] += sign * n
    else:
        nv = hp["noise_var"]
        eta = hp["precision"] * hp["mean"] + sign * s / nv
        hp["precision"] += sign * n / nv
        hp["mean"] = eta / hp["precision"] if hp["precision"] > 0 else math.nan
    _check_legal(state.family, hp, exc)
    return ConjugateState(state.family, hp)


def conjugate_update(state: ConjugateState, data: Dataset, group: Optional[GroupSel] = None) -> ConjugateState:
    """Add ``group``'s sufficient statistics (all data when ``group`` is None)."""
    return _shift(state, _select(data, group), +1, DomainError)


def conjugate_downdate(state: ConjugateState, data: Dataset, group: Optional[GroupSel] = None) -> ConjugateState:
    """Subtract ``group``'s sufficient statistics; raises DowndateError if that goes illegal."""
    return _shift(state, _select(data, group), -1, DowndateError)


def conjugate_logpdf(state: ConjugateState, theta) -> np.ndarray:
    hp = state.hyperparameters
    th = np.asarray(theta, dtype=float)
    with np.errstate(divide="ignore"):
        if state.family == "beta-bernoulli":
            return stats.beta.logpdf(th, hp["alpha"], hp["beta"])
        if state.family == "gamma-poisson":
            return stats.gamma.logpdf(th, hp["shape"], scale=1.0 / hp["rate"])
        return stats.norm.logpdf(th, hp["mean"], 1.0 / math.sqrt(hp["precision"]))


def conjugate_support(state: ConjugateState) -> Support:
    return {"beta-bernoulli": (0.0, 1.0), "gamma-poisson": (0.0, math.inf)}.get(state.family, REAL_LINE)


def conjugate_to_grid(state: ConjugateState, grid: ParameterGrid) -> GridDensity:
    """Closed-form density on ``grid``, renormalized by quadrature."""
    lw = np.where(
        (grid.nodes >= conjugate_support(state)[0]) & (grid.nodes <= conjugate_support(state)[1]),
        conjugate_logpdf(state, np.clip(grid.nodes, *conjugate_support(state))),
        -np.inf,
    )
    if np.any(lw == np.inf) or np.any(np.isnan(lw)):
        raise DegenerateDensityError(f"{state.family} density is unbounded on the grid")
    return normalize(lw, grid, conjugate_support(state))[0]


def conjugate_mean_sd(state: ConjugateState) -> Tuple[float, float]:
    hp = state.hyperparameters
    if state.family == "beta-bernoulli":
        a, b = hp["alpha"], hp["beta"]
        return a / (a + b), math.sqrt(a * b / ((a + b) ** 2 * (a + b + 1)))
    if state.family == "gamma-poisson":
        return hp["shape"] / hp["rate"], math.sqrt(hp["shape"]) / hp["rate"]
    return hp["mean"], 1.0 / math.sqrt(hp["precision"])


def _log_partition(state: ConjugateState) -> float:
    hp = state.hyperparameters
    if state.family == "beta-bernoulli":
        return float(special.betaln(hp["alpha"], hp["beta"]))
    if state.family == "gamma-poisson":
        return float(special.gammaln(hp["shape"]) - hp["shape"] * math.log(hp["rate"]))
    tau, m = hp["precision"], hp["mean"]
    return 0.5 * tau * m * m - 0.5 * math.log(tau) + 0.5 * math.log(2 * math.pi)


def _log_base_measure(state: ConjugateState, y: np.ndarray) -> float:
    if state.family == "beta-bernoulli":
        return 0.0
    if state.family == "gamma-poisson":
        return float(-special.gammaln(y + 1.0).sum())
    nv = state.hyperparameters["noise_var"]
    return float((-0.5 * math.log(2 * math.pi * nv) - y**2 / (2 * nv)).sum())


def conjugate_log_marginal(state: ConjugateState, data: Dataset, group: Optional[GroupSel] = None) -> float:
    """Closed-form ``log p(y_group | state)``, the marginal likelihood."""
    y = _select(data, group)
    post = _shift(state, y, +1, DomainError)
    return _log_partition(post) - _log_partition(state) + _log_base_measure(state, y)
