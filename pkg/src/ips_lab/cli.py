"""Command-line entry point ``ips-lab``.

Exit codes: 0 success, 2 invalid input (including unknown flags), 1 internal
error.  Every command that writes files also writes ``<out>.manifest.json``;
``ips-lab replay`` re-runs a manifest and checks the CSV/JSON outputs byte
for byte.

CSV columns
  ips:        group,boundary,index,tnr,tpr
  solve:      tnr0,tpr0,tnr1,tpr1,objective,fairness,frontier_dist0,frontier_dist1
  weller:     t1..tn,label1..labeln (1 if the label is allowed)
  theorem6:   instance,metric,c,fairness,best_value,n_optima,exists_clean,min_max_distance,truncated
  sweep:      c,best_value,metric_at_opt,fairness_at_opt,exists_clean,slack
"""
from __future__ import annotations

import argparse
import json
import math
import os
import sys
import time

import numpy as np

from . import __version__
from .cherrypick import (
    ForcedCherryConfig,
    detect,
    default_cp_tol,
    theorem6_replication,
    theorem8_search,
    tradeoff_sweep,
)
from .generators import DENSITIES, GeneratorConfig, generate, make_battery
from .io import (
    RunManifest,
    curve_svg,
    dumps_json,
    file_sha256,
    instance_sha256,
    ips_svg,
    load_instance,
    load_json,
    manifest_path,
    parse_real,
    read_csv,
    save_instance,
    ternary_svg,
    write_csv,
    write_json,
    write_text,
)
from .ips import area, ips_from_distribution
from .metrics import FAIRNESS_IDS, check_first_quadrant_condition
from .multilabel import LimitRatioMatrix, weller_limit_partition, weller_partition
from .problem import GroupedProblem, ProblemError
from .solver import (
    FairnessProblemSpec,
    OperatingPointPair,
    SolveResult,
    SolverError,
    brute_force_oracle,
    optima_frontier_distances,
    solve_grid,
    solve_thresholds,
)

SOLVE_HEADER = ["tnr0", "tpr0", "tnr1", "tpr1", "objective", "fairness", "frontier_dist0", "frontier_dist1"]


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


def _range(text: str) -> list[float]:
    """``a:b:step`` inclusive of ``b`` (to 1e-9), or a comma list."""
    if ":" in text:
        a, b, step = (parse_real(v) for v in text.split(":"))
        if step <= 0:
            raise argparse.ArgumentTypeError("step must be positive")
        n = int(math.floor((b - a) / step + 1e-9))
        return [a + k * step for k in range(n + 1)]
    return [parse_real(v) for v in text.split(",")]


def _floats(text: str) -> list[float]:
    return [parse_real(v) for v in text.split(",")]


def _real(text: str) -> float:
    try:
        return parse_real(text)
    except (ValueError, ZeroDivisionError) as exc:
        raise argparse.ArgumentTypeError(f"not a real number: {text!r}") from exc


# ---------------------------------------------------------------- commands


def _spec(args) -> FairnessProblemSpec:
    return FairnessProblemSpec(args.metric, args.fairness, args.c, args.metric_scale)


def _optima_rows(problem: GroupedProblem, result: SolveResult):
    dist = optima_frontier_distances(problem, result)
    for o, (d0, d1) in zip(result.optima, dist):
        yield [*o.x0, *o.x1, o.objective, o.fairness, d0, d1]


def cmd_validate(args, ctx):
    prob = load_instance(args.instance)
    out = {"groups": {g: {"prior": e.prior, "p0": e.p0, "p1": e.p1, "n_atoms": len(e.dist)}
                      for g, e in prob.items()}}
    pooled = prob.pooled()
    out["base_rates"] = [pooled.p0, pooled.p1]
    sys.stdout.write(dumps_json(out))
    ctx["instance"] = prob


def cmd_ips(args, ctx):
    prob = load_instance(args.instance)
    ctx["instance"] = prob
    gids = [args.group] if args.group else prob.group_ids
    for g in gids:
        if g not in prob:
            raise ProblemError(f"unknown group {g!r}")
    geoms = {g: ips_from_distribution(prob[g].dist) for g in gids}
    rows = []
    for g, geo in geoms.items():
        rows += [[g, "upper", k, x, y] for k, (x, y) in enumerate(geo.upper)]
        rows += [[g, "lower", k, x, y] for k, (x, y) in enumerate(geo.lower)]
    summary = {g: {"area": area(geo), "n_upper": len(geo.upper), "n_lower": len(geo.lower)}
               for g, geo in geoms.items()}
    sys.stdout.write(dumps_json(summary))
    if args.out:
        write_csv(args.out, ["group", "boundary", "index", "tnr", "tpr"], rows)
        ctx["outputs"].append(args.out)
    if args.svg:
        write_text(args.svg, ips_svg(geoms, title="achievable (tnr, tpr)"))
        ctx["outputs"].append(args.svg)


def _solve(prob, args):
    spec = _spec(args)
    if args.method == "grid":
        return solve_grid(prob, spec, args.h, args.opt_tol, args.max_optima)
    if args.method == "thresholds":
        return solve_thresholds(prob, spec, args.steps, args.opt_tol, args.max_optima)
    return brute_force_oracle(prob, spec, args.lambda_steps, args.opt_tol)


def cmd_solve(args, ctx):
    prob = load_instance(args.instance)
    ctx["instance"] = prob
    res = _solve(prob, args)
    summary = {"group_ids": list(res.group_ids), "spec": res.spec.to_dict(), "method": res.method,
               "h": res.h, "opt_tol": res.opt_tol, "best_value": res.best_value,
               "n_optima": res.n_optima, "truncated": res.truncated,
               "n_candidates": list(res.n_candidates)}
    sys.stdout.write(dumps_json(summary))
    if args.out:
        write_csv(args.out, SOLVE_HEADER, _optima_rows(prob, res))
        ctx["outputs"].append(args.out)
    if args.json:
        write_json(args.json, summary)
        ctx["outputs"].append(args.json)
    if args.svg:
        geoms = {g: ips_from_distribution(prob[g].dist) for g in res.group_ids}
        pts = [res.best.x0, res.best.x1]
        write_text(args.svg, ips_svg(geoms, pts, title="optimum"))
        ctx["outputs"].append(args.svg)


def _read_optima(path: str) -> list[OperatingPointPair]:
    header, rows = read_csv(path)
    idx = {name: header.index(name) for name in SOLVE_HEADER[:6] if name in header}
    if len(idx) < 6:
        raise ProblemError(f"{path}: optima CSV needs columns {','.join(SOLVE_HEADER[:6])}")
    out = []
    for r in rows:
        v = {k: float(r[i]) for k, i in idx.items()}
        out.append(OperatingPointPair((v["tnr0"], v["tpr0"]), (v["tnr1"], v["tpr1"]),
                                      v["objective"], v["fairness"]))
    return out


def cmd_detect(args, ctx):
    prob = load_instance(args.instance)
    ctx["instance"] = prob
    optima = _read_optima(args.optima)
    if not optima:
        raise ProblemError("no optima to classify")
    res = SolveResult(tuple(prob.group_ids), FairnessProblemSpec(), max(o.objective for o in optima),
                      optima, args.h, 0.0, len(optima))
    cp_tol = args.cp_tol if args.cp_tol is not None else default_cp_tol(args.h)
    rep = detect(prob, res, cp_tol)
    out = dict(rep.to_dict(), frontier_dist=rep.frontier_dist.tolist(),
               cherry_picks=[bool(v) for v in rep.cherry_picks])
    sys.stdout.write(dumps_json(rep.to_dict()))
    if args.out:
        write_json(args.out, out)
        ctx["outputs"].append(args.out)


_KIND_ALIASES = {"two_point": "two_point", "binned": "binned_density", "binned_density": "binned_density",
                 "adversarial": "adversarial_pair", "adversarial_pair": "adversarial_pair",
                 "lemma": "lemma_partition", "lemma_partition": "lemma_partition", "battery": "battery"}


def cmd_generate(args, ctx):
    kind = _KIND_ALIASES[args.kind]
    if kind == "battery":
        battery = make_battery(args.n, args.seed)
        write_json(args.out, {"instances": [p.to_json_dict() for p in battery]})
        ctx["outputs"].append(args.out)
        return
    binned = GeneratorConfig("binned_density", bins=args.bins, density=args.density,
                             jitter=args.jitter, seed=args.seed)
    base = GeneratorConfig("two_point", seed=args.seed) if args.base == "two_point" else binned
    if kind == "two_point":
        cfg = base if args.base == "two_point" else GeneratorConfig("two_point", seed=args.seed)
    elif kind == "binned_density":
        cfg = binned
    else:
        cfg = GeneratorConfig(kind, base=base, coarse_bins=args.coarse_bins, gamma=args.gamma,
                              eps_prime=args.eps_prime, seed=args.seed)
    prob = generate(cfg)
    ctx["instance"] = prob
    ctx["params"]["config"] = cfg.to_dict()
    save_instance(args.out, prob)
    ctx["outputs"].append(args.out)


def cmd_weller(args, ctx):
    if (args.omega is None) == (args.limit_ratios is None):
        raise ProblemError("give exactly one of --omega or --limit-ratios")
    if args.omega is not None:
        pts, labels = weller_partition(args.omega, args.grid)
    else:
        data = load_json(args.limit_ratios)
        R = LimitRatioMatrix.from_json(data["R"] if isinstance(data, dict) else data)
        pts, labels = weller_limit_partition(R, args.grid)
    n = pts.shape[1]
    empty = int((~labels.any(axis=1)).sum())
    sys.stdout.write(dumps_json({"n_points": len(pts), "n_multi_label": int((labels.sum(axis=1) > 1).sum()),
                                 "n_empty": empty}))
    if args.out:
        header = [f"t{i + 1}" for i in range(n)] + [f"label{i + 1}" for i in range(n)]
        write_csv(args.out, header, ([*p, *map(int, lab)] for p, lab in zip(pts, labels)))
        ctx["outputs"].append(args.out)
    if args.svg:
        if n != 3:
            raise ProblemError("ternary SVG needs exactly 3 labels")
        write_text(args.svg, ternary_svg(pts, labels, title="weighted argmax partition"))
        ctx["outputs"].append(args.svg)


def _load_battery(path: str) -> list[GroupedProblem]:
    data = load_json(path)
    if "generate" in data:
        g = data["generate"]
        return make_battery(int(g.get("n", 20)), int(g.get("seed", 0)))
    return [GroupedProblem.from_json_dict(d) for d in data["instances"]]


def cmd_experiment(args, ctx):
    if args.name == "theorem6":
        if not args.battery:
            raise ProblemError("theorem6 needs --battery")
        battery = _load_battery(args.battery)
        ctx["params"]["battery_sha256"] = [instance_sha256(p) for p in battery]
        summary = theorem6_replication(battery, args.metrics.split(";"), args.cs, args.h, args.cp_tol)
        cols = ["instance", "metric", "c", "fairness", "best_value", "n_optima", "exists_clean",
                "min_max_distance", "truncated"]
        write_csv(args.out, cols, ([cell[k] for k in cols] for cell in summary.cells))
        ctx["outputs"].append(args.out)
        sys.stdout.write(dumps_json({"cells": len(summary.cells), "all_clean": summary.all_clean,
                                     "failures": summary.failures}))
        return
    cfg = ForcedCherryConfig.from_dict(load_json(args.config)) if args.config else ForcedCherryConfig()
    ctx["params"]["config"] = cfg.to_dict()
    finding = theorem8_search(cfg)
    out = {"found": finding.found, "params": finding.params, "report": finding.report,
           "config": cfg.to_dict(), "log": finding.log}
    if finding.result is not None:
        res = finding.result
        out["optima_head"] = [[*o.x0, *o.x1, o.objective, o.fairness] for o in res.optima[:20]]
        out["best_value"] = res.best_value
    if not finding.found:
        out["outcome"] = "none found"
    write_json(args.out, out)
    ctx["outputs"].append(args.out)
    sys.stdout.write(dumps_json({"found": finding.found, "params": finding.params,
                                 "cells_evaluated": len(finding.log)}))


def cmd_sweep(args, ctx):
    prob = load_instance(args.instance)
    ctx["instance"] = prob
    rows = tradeoff_sweep(prob, args.metric, args.fairness, args.c, args.h, args.cp_tol)
    cols = ["c", "best_value", "metric_at_opt", "fairness_at_opt", "exists_clean", "slack"]
    write_csv(args.out, cols, ([r[k] for k in cols] for r in rows))
    ctx["outputs"].append(args.out)
    if args.svg:
        cs = [r["c"] for r in rows]
        write_text(args.svg, curve_svg(cs, {"metric at optimum": [r["metric_at_opt"] for r in rows],
                                            "fairness at optimum": [r["fairness_at_opt"] for r in rows]},
                                       "penalty weight c", "trade-off"))
        ctx["outputs"].append(args.svg)


def cmd_check_fqc(args, ctx):
    prob = load_instance(args.instance)
    ctx["instance"] = prob
    rep = check_first_quadrant_condition(args.fairness, prob, args.grid_n)
    out = {"fairness": rep.fairness, "passes": rep.passes, "n_checked": rep.n_checked,
           "witness": rep.witness}
    sys.stdout.write(dumps_json(out))
    if args.out:
        write_json(args.out, out)
        ctx["outputs"].append(args.out)


def cmd_replay(args, ctx):
    man = RunManifest.from_dict(load_json(args.manifest))
    out_dir = os.path.abspath(args.out_dir)
    os.makedirs(out_dir, exist_ok=True)
    argv = list(man.argv)
    mapping = {}
    for k, tok in enumerate(argv):
        flag, eq, val = tok.partition("=")
        if eq and flag in man.output_flags:
            prefix, path = flag + "=", val
        elif k > 0 and argv[k - 1] in man.output_flags:
            prefix, path = "", tok
        else:
            continue
        new = os.path.join(out_dir, os.path.basename(path))
        mapping[os.path.normpath(os.path.join(man.cwd, path))] = new
        argv[k] = prefix + new
    prev = os.getcwd()
    os.chdir(man.cwd)
    try:
        code = run(argv, write_manifest=False)
    finally:
        os.chdir(prev)
    if code != 0:
        return code
    checks = []
    for o in man.outputs:
        if not o["byte_identical"]:
            continue
        src = os.path.normpath(os.path.join(man.cwd, o["path"]))
        new = mapping.get(src)
        same = new is not None and os.path.exists(new) and file_sha256(new) == o["sha256"]
        checks.append({"path": o["path"], "replayed": new, "identical": same})
    ok = all(c["identical"] for c in checks)
    sys.stdout.write(dumps_json({"identical": ok, "outputs": checks}))
    return 0 if ok else 1


# ---------------------------------------------------------------- parser

OUTPUT_FLAGS = ("--out", "--svg", "--json")


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="ips-lab", description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def problem_flags(sp, with_c=True):
        sp.add_argument("--metric", default="accuracy",
                        help="accuracy | precision | immediate_utility:T | saturating_linear:A,B,CAP_TNR,CAP_TPR")
        sp.add_argument("--fairness", default="dp", choices=FAIRNESS_IDS)
        if with_c:
            sp.add_argument("--c", type=_real, default=1.0)
        sp.add_argument("--metric-scale", type=_real, default=1.0)
        sp.add_argument("--h", type=_real, default=1.0 / 256)

    sp = sub.add_parser("validate", help="check an instance and print base rates")
    sp.add_argument("instance")
    sp.set_defaults(func=cmd_validate)

    sp = sub.add_parser("ips", help="frontier and lower-boundary vertices")
    sp.add_argument("instance")
    sp.add_argument("--group")
    sp.add_argument("--out")
    sp.add_argument("--svg")
    sp.set_defaults(func=cmd_ips)

    sp = sub.add_parser("solve", help="solve the penalised fairness problem")
    sp.add_argument("instance")
    problem_flags(sp)
    sp.add_argument("--opt-tol", type=_real, default=1e-6)
    sp.add_argument("--method", choices=("grid", "thresholds", "oracle"), default="grid")
    sp.add_argument("--steps", type=int, default=64)
    sp.add_argument("--lambda-steps", type=int, default=2)
    sp.add_argument("--max-optima", type=int, default=200_000)
    sp.add_argument("--out")
    sp.add_argument("--json")
    sp.add_argument("--svg")
    sp.set_defaults(func=cmd_solve)

    sp = sub.add_parser("detect", help="classify optima from a solve CSV")
    sp.add_argument("instance")
    sp.add_argument("--optima", required=True)
    sp.add_argument("--h", type=_real, default=1.0 / 256)
    sp.add_argument("--cp-tol", type=_real)
    sp.add_argument("--out")
    sp.set_defaults(func=cmd_detect)

    sp = sub.add_parser("generate", help="write a synthetic instance")
    sp.add_argument("--kind", choices=sorted(_KIND_ALIASES), default="two_point")
    sp.add_argument("--base", choices=("two_point", "binned"), default="binned")
    sp.add_argument("--bins", type=int, default=8)
    sp.add_argument("--density", choices=DENSITIES, default="uniform")
    sp.add_argument("--jitter", type=_real, default=0.0)
    sp.add_argument("--coarse-bins", type=int, default=1)
    sp.add_argument("--gamma", type=_real, default=0.5)
    sp.add_argument("--eps-prime", type=_real, default=0.1)
    sp.add_argument("--n", type=int, default=20, help="battery size")
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--out", required=True)
    sp.set_defaults(func=cmd_generate)

    sp = sub.add_parser("weller", help="weighted-argmax partition of the simplex")
    sp.add_argument("--omega", type=_floats)
    sp.add_argument("--limit-ratios")
    sp.add_argument("--grid", type=int, default=200)
    sp.add_argument("--out")
    sp.add_argument("--svg")
    sp.set_defaults(func=cmd_weller)

    sp = sub.add_parser("experiment", help="clean-optimum replication or forced cherry-picking search")
    sp.add_argument("name", choices=("theorem6", "theorem8"))
    sp.add_argument("--battery")
    sp.add_argument("--config")
    sp.add_argument("--metrics", default="accuracy;immediate_utility:0.3;precision",
                    help="semicolon-separated metric list")
    sp.add_argument("--cs", type=_floats, default=[0.5, 2.0, 8.0])
    sp.add_argument("--h", type=_real, default=1.0 / 256)
    sp.add_argument("--cp-tol", type=_real)
    sp.add_argument("--out", required=True)
    sp.set_defaults(func=cmd_experiment)

    sp = sub.add_parser("sweep", help="fairness trade-off curve over penalty weights")
    sp.add_argument("instance")
    problem_flags(sp, with_c=False)
    sp.add_argument("--c", type=_range, required=True, help="a:b:step or comma list")
    sp.add_argument("--cp-tol", type=_real)
    sp.add_argument("--out", required=True)
    sp.add_argument("--svg")
    sp.set_defaults(func=cmd_sweep)

    sp = sub.add_parser("check-fqc", help="first-quadrant condition of a squared fairness measure")
    sp.add_argument("instance")
    sp.add_argument("--fairness", choices=FAIRNESS_IDS, required=True)
    sp.add_argument("--grid-n", type=int, default=16)
    sp.add_argument("--out")
    sp.set_defaults(func=cmd_check_fqc)

    sp = sub.add_parser("replay", help="re-run a manifest and compare outputs byte for byte")
    sp.add_argument("manifest")
    sp.add_argument("--out-dir", required=True)
    sp.set_defaults(func=cmd_replay)
    return p


def _jsonable(v):
    if isinstance(v, (str, int, float, bool)) or v is None:
        return v
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    return str(v)


def run(argv=None, write_manifest: bool = True) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        sys.stderr.write(f"ips-lab: error: {exc}\n")
        return 2
    except SystemExit as exc:  # --help / --version
        return int(exc.code or 0)
    ctx = {"outputs": [], "instance": None, "params": {}}
    t0 = time.perf_counter()
    try:
        code = args.func(args, ctx) or 0
    except (ProblemError, SolverError, ValueError, KeyError, FileNotFoundError, IsADirectoryError) as exc:
        sys.stderr.write(f"ips-lab: {type(exc).__name__}: {exc}\n")
        return 2
    except Exception as exc:  # noqa: BLE001 - reported as internal error
        sys.stderr.write(f"ips-lab: internal error: {type(exc).__name__}: {exc}\n")
        return 1
    if write_manifest and ctx["outputs"] and args.command != "replay":
        params = {k: _jsonable(v) for k, v in vars(args).items() if k != "func"}
        params.update(ctx["params"])
        man = RunManifest(args.command, argv, params,
                          instance_sha256(ctx["instance"]) if ctx["instance"] is not None else None,
                          __version__, time.perf_counter() - t0, os.getcwd(),
                          output_flags={f: True for f in OUTPUT_FLAGS})
        for path in ctx["outputs"]:
            man.add_output(path)
        man.save(manifest_path(ctx["outputs"][0]))
    return code


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
