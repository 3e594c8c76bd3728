"""Run configuration: one JSON document per run."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, Optional, Tuple

import numpy as np

from .errors import ConfigError, DomainError
from .grid import GridDensity, ParameterGrid, normalize
from .models import (
    ConjugateState,
    Dataset,
    Model,
    beta_state,
    conjugate_mean_sd,
    conjugate_to_grid,
    gamma_state,
    gaussian_state,
    make_model,
    simulate,
)
from .varinf import OptimizerConfig

DEFAULT_GRID_N = 4001


@dataclass
class RunConfig:
    model: Optional[Dict[str, Any]] = None
    prior: Optional[Dict[str, Any]] = None
    data: Dict[str, Any] = field(default_factory=lambda: {"values": [], "groups": []})
    grid: Dict[str, Any] = field(default_factory=dict)
    group: Any = None
    cv: Dict[str, Any] = field(default_factory=dict)
    vi: Dict[str, Any] = field(default_factory=dict)
    verify: Dict[str, Any] = field(default_factory=dict)
    seed: int = 0
    base_dir: Path = Path(".")

    @classmethod
    def from_dict(cls, obj: dict, base_dir: Path = Path(".")) -> "RunConfig":
        if not isinstance(obj, dict):
            raise ConfigError("config must be a JSON object")
        known = {"model", "prior", "data", "grid", "group", "cv", "vi", "verify", "seed"}
        extra = set(obj) - known - {"$schema", "description"}
        if extra:
            raise ConfigError(f"unknown config keys: {sorted(extra)}")
        kw = {k: obj[k] for k in known if k in obj}
        return cls(base_dir=base_dir, **kw)

    @classmethod
    def load(cls, path, *, grid_n: Optional[int] = None, seed: Optional[int] = None) -> "RunConfig":
        path = Path(path)
        if not path.is_file():
            raise ConfigError(f"config file not found: {path}")
        try:
            obj = json.loads(path.read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config is not valid JSON: {exc}") from None
        cfg = cls.from_dict(obj, path.parent)
        if grid_n is not None:
            cfg.grid = {**cfg.grid, "n": grid_n}
        if seed is not None:
            cfg.seed = seed
        cfg.check_files()
        return cfg

    def check_files(self) -> None:
        if "path" in self.data and not (self.base_dir / self.data["path"]).is_file():
            raise ConfigError(f"data file not found: {self.base_dir / self.data['path']}")

    # -- builders ---------------------------------------------------------

    def require(self, *keys) -> None:
        missing = [k for k in keys if getattr(self, k) is None]
        if missing:
            raise ConfigError(f"config needs {', '.join(repr(k) for k in missing)}")

    def build_model(self) -> Model:
        self.require("model")
        try:
            return make_model(self.model)
        except DomainError as exc:
            raise ConfigError(str(exc)) from None

    def prior_state(self) -> Optional[ConjugateState]:
        self.require("model", "prior")
        p = dict(self.prior)
        fam = p.get("family")
        try:
            if fam == "beta":
                return beta_state(p["alpha"], p["beta"])
            if fam == "gamma":
                return gamma_state(p["shape"], p["rate"])
            if fam == "gaussian":
                nv = self.model.get("noise_sd", 1.0) ** 2
                return gaussian_state(p["mean"], 1.0 / p["sd"] ** 2, nv)
            if fam == "uniform":
                return None
        except KeyError as exc:
            raise ConfigError(f"prior {fam!r} is missing {exc}") from None
        except (DomainError, ZeroDivisionError, TypeError) as exc:
            raise ConfigError(f"bad prior: {exc}") from None
        raise ConfigError(f"unknown prior family {fam!r}")

    def default_bounds(self) -> Tuple[float, float]:
        self.require("model", "prior")
        fam = self.prior.get("family")
        if fam == "uniform":
            return float(self.prior["lo"]), float(self.prior["hi"])
        if fam == "beta":
            return 0.0, 1.0
        m, s = conjugate_mean_sd(self.prior_state())
        if fam == "gamma":
            return 0.0, m + 10 * s
        return m - 10 * s, m + 10 * s

    def build_grid(self) -> ParameterGrid:
        lo, hi = self.default_bounds()
        lo = self.grid.get("lo", lo)
        hi = self.grid.get("hi", hi)
        n = self.grid.get("n", DEFAULT_GRID_N)
        try:
            grid = ParameterGrid(lo, hi, n)
        except DomainError as exc:
            raise ConfigError(f"bad grid: {exc}") from None
        fam = self.prior.get("family")
        if fam == "beta" and (grid.lo < 0 or grid.hi > 1):
            raise ConfigError("a beta prior needs a grid inside [0, 1]")
        if fam == "gamma" and grid.lo < 0:
            raise ConfigError("a gamma prior needs a grid inside [0, inf)")
        if fam == "uniform" and (grid.lo > self.prior["lo"] or grid.hi < self.prior["hi"]):
            raise ConfigError("grid must cover the uniform prior's support")
        return grid

    def build_prior(self, grid: Optional[ParameterGrid] = None) -> GridDensity:
        grid = grid or self.build_grid()
        state = self.prior_state()
        if state is not None:
            return conjugate_to_grid(state, grid)
        lo, hi = float(self.prior["lo"]), float(self.prior["hi"])
        inside = (grid.nodes >= lo - 1e-12) & (grid.nodes <= hi + 1e-12)
        return normalize(np.where(inside, 0.0, -np.inf), grid, (lo, hi))[0]

    def load_data(self, model: Optional[Model] = None) -> Dataset:
        d = self.data
        try:
            if "path" in d:
                ds = Dataset.from_csv((self.base_dir / d["path"]).read_text())
            elif "simulate" in d:
                s = d["simulate"]
                ds = simulate(model or self.build_model(), float(s["theta"]), int(s["n"]),
                              s.get("groups", "single"), int(s.get("seed", self.seed)))
            elif "values" in d:
                ds = Dataset(np.asarray(d["values"], dtype=float), tuple(d.get("groups", ["g1"] * len(d["values"]))))
            else:
                raise ConfigError("data needs one of 'path', 'simulate' or 'values'")
        except KeyError as exc:
            raise ConfigError(f"data section is missing {exc}") from None
        except DomainError as exc:
            raise ConfigError(f"bad data: {exc}") from None
        if model is not None:
            try:
                model.check(ds)
            except DomainError as exc:
                raise ConfigError(str(exc)) from None
        return ds

    def groups_to_delete(self, data: Dataset) -> Tuple[str, ...]:
        g = self.group
        if g is None:
            raise ConfigError("config needs 'group' for this command")
        if g == "all":
            return data.labels
        return (g,) if isinstance(g, str) else tuple(g)

    def optimizer(self) -> OptimizerConfig:
        vi = self.vi
        try:
            return OptimizerConfig(
                max_iters=int(vi.get("max_iters", 2000)),
                step_size=float(vi.get("step_size", 1.0)),
                tolerance=float(vi.get("tolerance", 1e-12)),
                seed=int(vi.get("seed", self.seed)),
            )
        except DomainError as exc:
            raise ConfigError(str(exc)) from None
