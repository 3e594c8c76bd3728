"""Command-line entry point.

Exit codes: 0 success, 1 verification failure, 2 configuration error,
3 numerical error. Errors print one line on stderr.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import tempfile
import time
from datetime import datetime, timezone
from importlib import resources
from pathlib import Path
from typing import Callable, Dict

from . import __version__
from .config import RunConfig
from .cv import METHODS, CVPlan, compare_methods, run_cv
from .delete import DeleteInputs, delete_group_exact, info_loss_deletion
from .errors import AntedataError, ConfigError, DomainError, UnknownGroupError
from .learn import LearnInputs, posterior_exact
from .suite import MODEL_NAMES, SuiteConfig, run_suite
from .varinf import VariationalParams, fit, moment_match, unlearn_objective

EXIT_OK, EXIT_FAIL, EXIT_CONFIG, EXIT_NUMERIC = 0, 1, 2, 3


def load_schema(name: str) -> dict:
    """One of the JSON schemas shipped in ``antedata/schemas``."""
    return json.loads(resources.files("antedata").joinpath("schemas", f"{name}.schema.json").read_text())


def write_atomic(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        os.unlink(tmp)
        raise


def dump_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, indent=2, allow_nan=False) + "\n"


class Run:
    """Output directory plus timing metadata for one command."""

    def __init__(self, command: str, out: Path):
        self.command = command
        self.out = out
        self.started = datetime.now(timezone.utc)
        self.t0 = time.perf_counter()
        self.timings: Dict[str, object] = {}

    def write(self, name: str, text: str) -> None:
        write_atomic(self.out / name, text)

    def write_json(self, name: str, obj) -> None:
        self.write(name, dump_json(obj))

    def finish(self) -> None:
        self.write_json("metadata.json", {
            "command": self.command,
            "version": __version__,
            "started_at": self.started.isoformat(),
            "elapsed_s": time.perf_counter() - self.t0,
            "timings": self.timings,
        })


def _setup(cfg: RunConfig):
    model = cfg.build_model()
    grid = cfg.build_grid()
    prior = cfg.build_prior(grid)
    data = cfg.load_data(model)
    return model, prior, data


def cmd_fit(cfg: RunConfig, run: Run) -> int:
    model, prior, data = _setup(cfg)
    res = posterior_exact(LearnInputs(prior, model, data))
    run.write("prior.csv", prior.to_csv())
    run.write("posterior.csv", res.posterior.to_csv())
    run.write_json("evidence.json", {"log_evidence": res.log_evidence})
    return EXIT_OK


def _deletion(cfg: RunConfig):
    model, prior, data = _setup(cfg)
    groups = cfg.groups_to_delete(data)
    data.mask(groups)
    full = posterior_exact(LearnInputs(prior, model, data))
    iid = bool(cfg.model.get("iid_shortcut", False))
    inputs = DeleteInputs(full.posterior, full.log_evidence, model, data, groups, iid)
    return prior, full, inputs


def cmd_unlearn(cfg: RunConfig, run: Run) -> int:
    prior, full, inputs = _deletion(cfg)
    out = delete_group_exact(inputs)
    report = info_loss_deletion(out.antedata, inputs, out.log_evidence_rest)
    run.write("prior.csv", prior.to_csv())
    run.write("posterior.csv", full.posterior.to_csv())
    run.write_json("evidence.json", {"log_evidence": full.log_evidence})
    run.write("antedata.csv", out.antedata.to_csv())
    run.write_json("predictive.json", {"log_predictive": out.log_predictive, "log_evidence_rest": out.log_evidence_rest})
    run.write_json("info_loss.json", {"total": report.total, "terms": report.terms})
    return EXIT_OK


def cmd_vi_unlearn(cfg: RunConfig, run: Run) -> int:
    _, full, inputs = _deletion(cfg)
    obj = unlearn_objective(full.posterior, inputs.model, inputs.data, inputs.group, iid=inputs.iid)
    init = cfg.vi.get("init")
    start = moment_match(full.posterior) if init is None else VariationalParams(float(init["mean"]), float(init["log_sd"]))
    try:
        exact = delete_group_exact(inputs).antedata
    except AntedataError:
        exact = None
    res = fit(obj, start, cfg.optimizer(), reference=exact)
    run.write_json("variational.json", res.to_dict())
    run.write("trace.csv", res.trace_csv())
    return EXIT_OK


def cmd_verify(cfg: RunConfig, run: Run) -> int:
    v = dict(cfg.verify)
    unknown = set(v.get("models", ())) - set(MODEL_NAMES)
    if unknown:
        raise ConfigError(f"unknown verify models: {sorted(unknown)}")
    defaults = SuiteConfig()
    suite = SuiteConfig(
        models=tuple(v.get("models", defaults.models)),
        n_obs=int(v.get("n_obs", defaults.n_obs)),
        partitions=int(v.get("partitions", defaults.partitions)),
        groups_per_partition=int(v.get("groups_per_partition", defaults.groups_per_partition)),
        grid_n=int(cfg.grid.get("n", v.get("grid_n", defaults.grid_n))),
        perturbations=int(v.get("perturbations", defaults.perturbations)),
        force_iid=bool(v.get("force_iid", False)),
        seed=int(cfg.seed),
        thresholds={**defaults.thresholds, **v.get("thresholds", {})},
    )
    try:
        card = run_suite(suite)
    except DomainError as exc:
        raise ConfigError(str(exc)) from None
    run.write_json("scorecard.json", card)
    return EXIT_OK if card["passed"] else EXIT_FAIL


def cmd_cv(cfg: RunConfig, run: Run) -> int:
    model, prior, data = _setup(cfg)
    c = dict(cfg.cv)
    folds = c.get("folds", "all")
    folds = data.labels if folds == "all" else tuple(folds)
    methods = c.get("methods", ["exact-delete", "refit"])
    bad = [m for m in methods if m not in METHODS]
    if bad:
        raise ConfigError(f"unknown CV methods {bad}; choose from {list(METHODS)}")
    reports = {}
    for m in methods:
        plan = CVPlan(folds, m, cfg.optimizer(), bool(c.get("cross_check", False)),
                      bool(cfg.model.get("iid_shortcut", False)), int(c.get("workers", 1)))
        plan.validate(data)
        reports[m] = run_cv(prior, model, data, plan)
    comparisons, ratios = [], {}
    for i, a in enumerate(methods):
        for b in methods[i + 1:]:
            s = compare_methods(reports[a], reports[b])
            ratios[f"{a}/{b}"] = s.pop("runtime_ratio")
            comparisons.append(s)
    run.write_json("cv_report.json", {
        "reports": {m: r.to_dict() for m, r in reports.items()},
        "comparisons": comparisons,
    })
    for m, r in reports.items():
        run.write(f"cv_folds_{m}.csv", r.folds_csv())
    run.timings = {"fold_runtime_s": {m: r.timings() for m, r in reports.items()}, "runtime_ratio": ratios}
    return EXIT_OK if all(r.complete for r in reports.values()) else EXIT_NUMERIC


COMMANDS: Dict[str, Callable[[RunConfig, Run], int]] = {
    "fit": cmd_fit,
    "unlearn": cmd_unlearn,
    "vi-unlearn": cmd_vi_unlearn,
    "verify": cmd_verify,
    "cv": cmd_cv,
}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="antedata", description="Exact and variational Bayesian learning and unlearning on grids.")
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sp = sub.add_parser(name)
        sp.add_argument("--config", required=True, type=Path, help="JSON run configuration")
        sp.add_argument("--out", type=Path, default=Path("out"), help="output directory")
        sp.add_argument("--grid-n", type=int, default=None, help="override the number of grid nodes")
        sp.add_argument("--seed", type=int, default=None, help="override the run seed")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = RunConfig.load(args.config, grid_n=args.grid_n, seed=args.seed)
        run = Run(args.command, args.out)
        code = COMMANDS[args.command](cfg, run)
        run.finish()
        return code
    except (ConfigError, UnknownGroupError) as exc:
        print(f"antedata: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except AntedataError as exc:
        print(f"antedata: numerical error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
