"""Batch experiment runner.

Plans come from an INI file ([task], [plan], [cell.*] sections) or from a
named preset; each (cell, seed) pair becomes one training run that writes a
trace CSV and a summary JSON, and the plan ends with an aggregate CSV of
per-cell gap statistics. Workers regenerate their task from the seed, so
runs are independent and the pool never ships arrays between processes.

Exit codes: 0 all runs finished finite, 1 some run diverged (or a report
mismatch), 2 invalid configuration.
"""
from __future__ import annotations

import argparse
import configparser
import dataclasses
import json
import math
import os
import re
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .augment import SyntheticTask, gen_synthetic, sample_original
from .core import Rng
from .models import SoftmaxLinear, zeros_predictor
from .theory import CeObjective, best_found_floor, estimate_constants, theory_stepsizes
from .trainers import (
    AugDrop,
    Augmented,
    MixLoss,
    Original,
    TrainConfig,
    WeMix,
    run_scheme,
    write_trace_csv,
)

_SCHEME_NAMES = ("original", "augmented", "augdrop", "mixloss", "wemix")
_COMMON_CELL_KEYS = (
    "scheme", "batch", "epochs", "momentum", "weight_decay", "lr_decay",
    "lr_every", "task_delta_y", "task_delta_p",
)
_SCHEME_KEYS = {
    "original": ("eta",),
    "augmented": ("eta",),
    "augdrop": ("t1", "m1", "m2", "eta1", "eta2", "t2"),
    "mixloss": ("lam", "delta_y", "m0", "eta"),
    "wemix": ("lam", "delta_y", "t1", "t2", "m0", "eta1", "eta2"),
}
_SCHEME_REQUIRED = {
    "original": ("eta",),
    "augmented": ("eta",),
    "augdrop": ("t1", "m1", "m2", "eta1", "eta2"),
    "mixloss": ("lam", "delta_y", "m0", "eta"),
    "wemix": ("lam", "delta_y", "t1", "t2", "m0", "eta1", "eta2"),
}
_TASK_KEYS = ("mode", "n", "m", "d", "k", "delta_y", "delta_p", "teacher_scale")
_PLAN_KEYS = ("preset", "seeds", "outdir", "mode", "eval_n", "constraint_floor")


@dataclass(frozen=True)
class Cell:
    name: str
    scheme: object
    train: dict = field(default_factory=dict)
    task_delta_y: float | None = None
    task_delta_p: float | None = None


@dataclass(frozen=True)
class ExperimentPlan:
    task: SyntheticTask
    cells: tuple
    seeds: tuple
    outdir: str
    mode: str = "practical"
    eval_n: int = 0
    constraint_floor: bool = False

    def __post_init__(self):
        if len(self.cells) < 1 or len(self.seeds) < 1:
            raise ValueError("a plan needs at least one cell and one seed")
        if self.mode not in ("practical", "theory"):
            raise ValueError("mode must be 'practical' or 'theory'")


# ---------------------------------------------------------------------------
# presets: each maps one study to one command, with constants frozen from
# the tuning runs recorded alongside the acceptance suite


def _plateau_cells(deltas, key):
    cells = []
    for d in deltas:
        cells.append(Cell(
            name=f"aug-{key}{str(d).replace('.', '')}",
            scheme=Augmented(eta=1.0),
            train={"batch": 4000, "epochs": 300},
            **{f"task_{key}": d},
        ))
    return tuple(cells)


def _table1_cells():
    eta = 0.5
    return (
        Cell("original", Original(eta=eta), {"batch": 64, "epochs": 64}),
        Cell("augmented", Augmented(eta=eta), {"batch": 64, "epochs": 32}),
        Cell("augdrop", AugDrop(t1=1000, m1=64, m2=64, eta1=eta, eta2=eta, t2=1000)),
        Cell("mixloss", MixLoss(lam=0.6, delta_y=0.4, m0=33, eta=eta), {"epochs": 1}),
        Cell("wemix", WeMix(lam=0.6, delta_y=0.4, t1=1000, t2=1000, m0=33,
                            eta1=eta, eta2=eta)),
    )


def presets() -> dict:
    canon = SyntheticTask(mode="label_bias", n=2000, m=4000, d=10, k=5, delta_y=0.4)
    return {
        "lemma2-plateau": ExperimentPlan(
            task=dataclasses.replace(canon, delta_y=0.0),
            cells=_plateau_cells((0.1, 0.2, 0.4), "delta_y"),
            seeds=tuple(range(5)), outdir="runs/lemma2-plateau",
        ),
        "table1-desk": ExperimentPlan(
            task=canon, cells=_table1_cells(),
            seeds=tuple(range(5)), outdir="runs/table1-desk",
        ),
        "augdrop-membership": ExperimentPlan(
            task=canon,
            cells=(Cell("augdrop", AugDrop(t1=1000, m1=64, m2=64,
                                           eta1=0.5, eta2=0.5, t2=1000)),),
            seeds=tuple(range(5)), outdir="runs/augdrop-membership",
            constraint_floor=True,
        ),
        "small-bias": ExperimentPlan(
            task=SyntheticTask(mode="label_bias", n=100, m=2000, d=10, k=5,
                               delta_y=0.01),
            cells=(
                Cell("original", Original(eta=0.5), {"batch": 20, "epochs": 400}),
                Cell("augmented", Augmented(eta=0.5), {"batch": 20, "epochs": 20}),
            ),
            seeds=tuple(range(5)), outdir="runs/small-bias", eval_n=4000,
        ),
        "label-preserving": ExperimentPlan(
            task=SyntheticTask(mode="input_shift", n=2000, m=4000, d=10, k=5,
                               delta_p=0.2),
            cells=_plateau_cells((0.05, 0.2), "delta_p") + (
                Cell("augdrop-p02", AugDrop(t1=1000, m1=64, m2=64,
                                            eta1=0.5, eta2=0.5, t2=1000),
                     task_delta_p=0.2),
            ),
            seeds=tuple(range(5)), outdir="runs/label-preserving",
        ),
    }


# ---------------------------------------------------------------------------
# config parsing


def _parse_num(section, key, raw, kind, errors):
    try:
        return kind(raw)
    except ValueError:
        errors.append(f"[{section}] key '{key}' is not a valid {kind.__name__}: {raw!r}")
        return None


def _parse_seeds(raw, errors):
    try:
        seeds = tuple(int(tok) for tok in raw.replace(",", " ").split())
    except ValueError:
        errors.append(f"[plan] seeds must be a list of integers: {raw!r}")
        return ()
    if not seeds:
        errors.append("[plan] seeds must name at least one seed")
    return seeds


def _parse_task(cp, errors) -> SyntheticTask | None:
    sec = dict(cp["task"])
    for key in sec:
        if key not in _TASK_KEYS:
            errors.append(f"[task] unknown key '{key}'")
    kw = {}
    for key, kind in (("mode", str), ("n", int), ("m", int), ("d", int), ("k", int),
                      ("delta_y", float), ("delta_p", float), ("teacher_scale", float)):
        if key in sec:
            val = sec[key] if kind is str else _parse_num("task", key, sec[key], kind, errors)
            if val is not None:
                kw[key] = val
    try:
        return SyntheticTask(**kw)
    except (ValueError, TypeError) as exc:
        errors.append(f"[task] {exc}")
        return None


def _parse_cell(name, sec, mode, errors) -> Cell | None:
    prefix = f"[cell.{name}]"
    if not re.fullmatch(r"[A-Za-z0-9_-]+", name):
        errors.append(f"{prefix} cell names must be alphanumeric with - or _")
        return None
    scheme_name = sec.get("scheme")
    if scheme_name is None:
        errors.append(f"{prefix} missing required key 'scheme'")
        return None
    if scheme_name not in _SCHEME_NAMES:
        errors.append(f"{prefix} unknown scheme '{scheme_name}' "
                      f"(one of {', '.join(_SCHEME_NAMES)})")
        return None
    allowed = set(_COMMON_CELL_KEYS) | set(_SCHEME_KEYS[scheme_name])
    for key in sec:
        if key not in allowed:
            errors.append(f"{prefix} unknown key '{key}'")
    missing = [k for k in _SCHEME_REQUIRED[scheme_name] if k not in sec]
    if missing:
        errors.append(f"{prefix} missing required keys: {', '.join(missing)}")
        return None
    if mode == "theory" and scheme_name == "wemix":
        errors.append(f"{prefix} theory mode does not resolve wemix schedules")
        return None

    kw = {}
    bad = False
    int_keys = {"t1", "t2", "m0", "m1", "m2"}
    for key in _SCHEME_KEYS[scheme_name]:
        if key not in sec:
            continue
        kind = int if key in int_keys else float
        val = _parse_num(f"cell.{name}", key, sec[key], kind, errors)
        if val is None:
            bad = True
        else:
            kw[key] = val
    if bad:
        return None
    ctor = {"original": Original, "augmented": Augmented, "augdrop": AugDrop,
            "mixloss": MixLoss, "wemix": WeMix}[scheme_name]
    try:
        scheme = ctor(**kw)
    except ValueError as exc:
        errors.append(f"{prefix} {exc}")
        return None

    train = {}
    for key, kind in (("batch", int), ("epochs", int), ("momentum", float),
                      ("weight_decay", float), ("lr_decay", float), ("lr_every", int)):
        if key in sec:
            val = _parse_num(f"cell.{name}", key, sec[key], kind, errors)
            if val is None:
                bad = True
            else:
                train[key] = val
    overrides = {}
    for key in ("task_delta_y", "task_delta_p"):
        if key in sec:
            val = _parse_num(f"cell.{name}", key, sec[key], float, errors)
            if val is None:
                bad = True
            else:
                overrides[key] = val
    if bad:
        return None
    return Cell(name=name, scheme=scheme, train=train, **overrides)


def validate_config(path) -> tuple[ExperimentPlan | None, list[str]]:
    """Parse a plan, collecting every violation instead of stopping early."""
    errors: list[str] = []
    cp = configparser.ConfigParser()
    try:
        with open(path, "r", encoding="utf-8") as fh:
            cp.read_file(fh)
    except OSError as exc:
        return None, [f"cannot read config: {exc}"]
    except configparser.Error as exc:
        return None, [f"malformed config: {exc}"]

    known = {"task", "plan"}
    cell_sections = [s for s in cp.sections() if s.startswith("cell.")]
    for s in cp.sections():
        if s not in known and not s.startswith("cell."):
            errors.append(f"unknown section [{s}]")

    plan_sec = dict(cp["plan"]) if cp.has_section("plan") else {}
    for key in plan_sec:
        if key not in _PLAN_KEYS:
            errors.append(f"[plan] unknown key '{key}'")

    preset_name = plan_sec.get("preset")
    if preset_name is not None:
        if preset_name not in presets():
            errors.append(f"[plan] unknown preset '{preset_name}' "
                          f"(one of {', '.join(sorted(presets()))})")
            return None, errors
        if cp.has_section("task") or cell_sections:
            errors.append("preset plans do not take [task] or [cell.*] sections")
        plan = presets()[preset_name]
        if "seeds" in plan_sec:
            seeds = _parse_seeds(plan_sec["seeds"], errors)
            if seeds:
                plan = dataclasses.replace(plan, seeds=seeds)
        if "outdir" in plan_sec:
            plan = dataclasses.replace(plan, outdir=plan_sec["outdir"])
        if "mode" in plan_sec:
            try:
                plan = dataclasses.replace(plan, mode=plan_sec["mode"])
            except ValueError as exc:
                errors.append(f"[plan] {exc}")
        return (plan, errors) if not errors else (None, errors)

    if not cp.has_section("task"):
        errors.append("missing [task] section (keys: mode, n, m, d, k, delta_y, delta_p)")
        task = None
    else:
        task = _parse_task(cp, errors)

    mode = plan_sec.get("mode", "practical")
    if not cp.has_section("plan"):
        errors.append("missing [plan] section (required keys: seeds, outdir)")
        seeds, outdir = (), None
    else:
        seeds = _parse_seeds(plan_sec["seeds"], errors) if "seeds" in plan_sec else ()
        if "seeds" not in plan_sec:
            errors.append("[plan] missing required key 'seeds'")
        outdir = plan_sec.get("outdir")
        if outdir is None:
            errors.append("[plan] missing required key 'outdir'")

    eval_n = 0
    if "eval_n" in plan_sec:
        eval_n = _parse_num("plan", "eval_n", plan_sec["eval_n"], int, errors) or 0
    constraint_floor = False
    if "constraint_floor" in plan_sec:
        try:
            constraint_floor = cp.getboolean("plan", "constraint_floor")
        except ValueError:
            errors.append("[plan] constraint_floor must be a boolean")

    if not cell_sections:
        errors.append("no [cell.*] sections (at least one training cell required)")
    cells = []
    for s in cell_sections:
        cell = _parse_cell(s[len("cell."):], dict(cp[s]), mode, errors)
        if cell is not None:
            cells.append(cell)
    names = [c.name for c in cells]
    for dup in {n for n in names if names.count(n) > 1}:
        errors.append(f"duplicate cell name '{dup}'")

    if errors or task is None or outdir is None:
        return None, errors
    try:
        plan = ExperimentPlan(task=task, cells=tuple(cells), seeds=seeds,
                              outdir=outdir, mode=mode, eval_n=eval_n,
                              constraint_floor=constraint_floor)
    except ValueError as exc:
        return None, [str(exc)]
    return plan, []


# ---------------------------------------------------------------------------
# running


def _cell_task(plan: ExperimentPlan, cell: Cell) -> SyntheticTask:
    task = plan.task
    if cell.task_delta_y is not None:
        task = dataclasses.replace(task, delta_y=cell.task_delta_y)
    if cell.task_delta_p is not None:
        task = dataclasses.replace(task, delta_p=cell.task_delta_p)
    return task


def _theory_scheme(cell: Cell, task, arch, orig, aug, planted, seed):
    """Resolve the cell's schedule from estimated constants.

    A short full-batch probe supplies the iterate cloud; the declared
    generator bias stands in for the estimated one (the generator plants it
    exactly, and its estimators are validated separately).
    """
    probe_cfg = TrainConfig(scheme=Original(eta=0.5), batch=orig.n, epochs=60,
                            seed=seed, keep_iterates=True)
    probe = run_scheme(zeros_predictor(arch), orig, aug, probe_cfg)
    cloud = probe.iterates[::6]
    consts = estimate_constants(
        arch, orig, aug, probe.iterates[0], cloud,
        delta_y=task.delta_y, delta_p=task.delta_p if task.mode == "input_shift" else None,
        rng=np.random.default_rng(seed), floor_hints=[planted.w_star.ravel()],
    )
    shift = task.mode == "input_shift"
    name = type(cell.scheme).__name__.lower()
    lam = getattr(cell.scheme, "lam", None)
    mode = {"original": "original",
            "augmented": "augmented_shift" if shift else "augmented",
            "augdrop": "augdrop_shift" if shift else "augdrop",
            "mixloss": "mixloss"}[name]
    sched = theory_stepsizes(consts, mode, n=orig.n, lam=lam)
    v = dict(sched.values)
    train = dict(cell.train)
    if name == "original":
        scheme = Original(eta=v["eta"])
        train.update(batch=1, epochs=max(1, v["iters"] // orig.n))
    elif name == "augmented":
        batch = min(int(v["m0"]), aug.n)
        per_epoch = max(1, aug.n // batch)
        scheme = Augmented(eta=v["eta"])
        train.update(batch=batch, epochs=max(1, round(v["iters"] / per_epoch)))
    elif name == "augdrop":
        scheme = AugDrop(t1=int(v["t1"]), m1=min(int(v["m1"]), 4 * aug.n),
                         m2=int(v["m2"]), eta1=v["eta1"], eta2=v["eta2"])
    else:
        scheme = MixLoss(lam=lam, delta_y=cell.scheme.delta_y,
                         m0=int(v["m0"]), eta=v["eta"])
        train["epochs"] = 1
    resolved = {k: (int(x) if isinstance(x, int) else float(x)) for k, x in v.items()}
    return scheme, train, resolved, list(sched.warnings), consts


def _run_one(plan: ExperimentPlan, cell: Cell, seed: int) -> dict:
    t_start = time.perf_counter()
    task = _cell_task(plan, cell)
    orig, aug, planted = gen_synthetic(task, Rng(seed, 0))
    arch = SoftmaxLinear(d=task.d, k=task.k)
    rng = np.random.default_rng(seed)

    if plan.eval_n > 0:
        eval_set = sample_original(planted, Rng(seed, 7), plan.eval_n)
    else:
        eval_set = orig
    gap_obj = CeObjective.over(arch, eval_set)
    floor, _ = best_found_floor(gap_obj, arch.param_count, rng,
                                extra_starts=[planted.w_star.ravel()], n_random=1)

    resolved: dict = {}
    warnings: list[str] = []
    scheme, train = cell.scheme, dict(cell.train)
    if plan.mode == "theory":
        scheme, train, resolved, warnings, _ = _theory_scheme(
            cell, task, arch, orig, aug, planted, seed)

    ltilde_ref = 0.0
    if plan.constraint_floor:
        obj_t = CeObjective.over(arch, aug)
        ltilde_ref, _ = best_found_floor(obj_t, arch.param_count, rng, n_random=1)

    cfg = TrainConfig(scheme=scheme, seed=seed, eval_orig=eval_set, eval_aug=aug,
                      ltilde_ref=ltilde_ref, **train)
    trace = run_scheme(zeros_predictor(arch), orig, aug, cfg)

    csv_name = f"{cell.name}__seed{seed}.csv"
    write_trace_csv(trace, os.path.join(plan.outdir, csv_name))

    summary = {
        "cell": cell.name,
        "seed": seed,
        "scheme": type(scheme).__name__.lower(),
        "task": dataclasses.asdict(task),
        "final_L": trace.rows[-1].L,
        "floor": floor,
        "final_gap": trace.rows[-1].L - floor,
        "initial_gap": trace.rows[0].L - floor,
        "ltilde_floor": ltilde_ref if plan.constraint_floor else None,
        "aborted": trace.aborted,
        "iterations": trace.meta["iterations"],
        "wall_time": time.perf_counter() - t_start,
        "trace_csv": csv_name,
        "resolved": resolved,
        "warnings": warnings,
    }
    with open(os.path.join(plan.outdir, f"{cell.name}__seed{seed}.json"), "w",
              encoding="utf-8") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return summary


def _worker(args) -> dict:
    plan_dict, cell, seed = args
    return _run_one(ExperimentPlan(**plan_dict), cell, seed)


def _aggregate_rows(summaries, cell_order) -> list[dict]:
    rows = []
    for name in cell_order:
        gaps = [s["final_gap"] for s in summaries if s["cell"] == name and not s["aborted"]]
        aborted = sum(1 for s in summaries if s["cell"] == name and s["aborted"])
        if gaps:
            median = float(np.median(gaps))
            mean = float(np.mean(gaps))
            std = float(np.std(gaps))
        else:
            median = mean = std = math.nan
        rows.append({"cell": name, "seeds": len(gaps) + aborted, "median_gap": median,
                     "mean_gap": mean, "std_gap": std, "aborted": aborted})
    return rows


def _format_aggregate(rows) -> str:
    out = ["cell,seeds,median_gap,mean_gap,std_gap,aborted"]
    for r in rows:
        out.append(",".join([
            r["cell"], str(r["seeds"]), repr(r["median_gap"]), repr(r["mean_gap"]),
            repr(r["std_gap"]), str(r["aborted"]),
        ]))
    return "\n".join(out) + "\n"


def run_plan(plan: ExperimentPlan, jobs: int = 1) -> tuple[list[dict], int]:
    """Execute every (cell, seed) pair; returns (aggregate rows, exit code)."""
    os.makedirs(plan.outdir, exist_ok=True)
    probe = os.path.join(plan.outdir, ".writable")
    with open(probe, "w", encoding="utf-8") as fh:  # I/O failure surfaces here,
        fh.write("ok\n")                            # before any run starts
    os.remove(probe)

    pairs = [(cell, seed) for cell in plan.cells for seed in plan.seeds]
    if jobs > 1:
        plan_dict = {f.name: getattr(plan, f.name) for f in dataclasses.fields(plan)}
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            summaries = list(pool.map(
                _worker, [(plan_dict, cell, seed) for cell, seed in pairs]))
    else:
        summaries = [_run_one(plan, cell, seed) for cell, seed in pairs]

    # Sorted so report() can reproduce the file from summaries alone.
    rows = _aggregate_rows(summaries, sorted(c.name for c in plan.cells))
    with open(os.path.join(plan.outdir, "aggregate.csv"), "w", encoding="utf-8") as fh:
        fh.write(_format_aggregate(rows))
    code = 1 if any(s["aborted"] for s in summaries) else 0
    return rows, code


def report(outdir: str) -> int:
    """Re-aggregate a finished directory from its per-run summaries.

    Rewrites aggregate.csv (noting when the stored copy was stale) and keeps
    the run exit-code convention: 1 when any summarized run diverged.
    """
    names = sorted(f for f in os.listdir(outdir) if f.endswith(".json"))
    if not names:
        print(f"no run summaries in {outdir}", file=sys.stderr)
        return 2
    summaries = []
    for name in names:
        with open(os.path.join(outdir, name), "r", encoding="utf-8") as fh:
            summaries.append(json.load(fh))
    order = sorted(set(s["cell"] for s in summaries))
    rows = _aggregate_rows(summaries, order)
    text = _format_aggregate(rows)
    print(text, end="")

    agg_path = os.path.join(outdir, "aggregate.csv")
    if os.path.exists(agg_path):
        with open(agg_path, "r", encoding="utf-8") as fh:
            stored = _parse_aggregate(fh.read())
        by_cell = {r["cell"]: r for r in stored}
        stale = len(stored) != len(rows)
        for fresh in rows:
            old = by_cell.get(fresh["cell"])
            if old is None:
                stale = True
                continue
            for key in ("median_gap", "mean_gap", "std_gap"):
                a, b = fresh[key], old[key]
                if not ((math.isnan(a) and math.isnan(b)) or abs(a - b) <= 1e-12):
                    stale = True
        if stale:
            print("stored aggregate.csv was stale; rewritten", file=sys.stderr)
    with open(agg_path, "w", encoding="utf-8") as fh:
        fh.write(text)
    return 1 if any(s["aborted"] for s in summaries) else 0


def _parse_aggregate(text: str) -> list[dict]:
    lines = [ln for ln in text.splitlines() if ln]
    rows = []
    for ln in lines[1:]:
        cell, seeds, med, mean, std, aborted = ln.split(",")
        rows.append({"cell": cell, "seeds": int(seeds), "median_gap": float(med),
                     "mean_gap": float(mean), "std_gap": float(std),
                     "aborted": int(aborted)})
    return rows


# ---------------------------------------------------------------------------
# entry point


def _build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="augbias",
                                 description="batch runner for bias-corrected "
                                             "augmentation training studies")
    sub = ap.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="execute a plan from a config or preset")
    run.add_argument("config", nargs="?", help="INI plan file")
    run.add_argument("--preset", choices=sorted(presets()), help="built-in plan")
    run.add_argument("--outdir", help="override the plan's output directory")
    run.add_argument("--seed-offset", type=int, default=0,
                     help="added to every seed in the plan")
    run.add_argument("--jobs", type=int, default=1,
                     help="parallel worker processes")

    val = sub.add_parser("validate", help="check a config without running")
    val.add_argument("config")

    rep = sub.add_parser("report", help="re-aggregate a finished run directory")
    rep.add_argument("outdir")
    return ap


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)

    if args.command == "validate":
        plan, errors = validate_config(args.config)
        if errors:
            for e in errors:
                print(e, file=sys.stderr)
            return 2
        print(f"ok: {len(plan.cells)} cell(s), {len(plan.seeds)} seed(s), "
              f"outdir {plan.outdir}")
        return 0

    if args.command == "report":
        return report(args.outdir)

    if (args.config is None) == (args.preset is None):
        print("run needs exactly one of: a config path, or --preset", file=sys.stderr)
        return 2
    if args.preset is not None:
        plan = presets()[args.preset]
    else:
        plan, errors = validate_config(args.config)
        if errors:
            for e in errors:
                print(e, file=sys.stderr)
            return 2
    if args.outdir:
        plan = dataclasses.replace(plan, outdir=args.outdir)
    if args.seed_offset:
        plan = dataclasses.replace(
            plan, seeds=tuple(s + args.seed_offset for s in plan.seeds))
    if args.jobs < 1:
        print("--jobs must be at least 1", file=sys.stderr)
        return 2

    rows, code = run_plan(plan, jobs=args.jobs)
    for row in rows:
        print(f"{row['cell']}: median gap {row['median_gap']:.6g} "
              f"(mean {row['mean_gap']:.6g} +/- {row['std_gap']:.6g}, "
              f"{row['aborted']} aborted)")
    return code


if __name__ == "__main__":
    sys.exit(main())
