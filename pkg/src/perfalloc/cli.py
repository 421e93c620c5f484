"""Command-line front door.

Wires the pipeline end to end: generate or ingest a workload, augment it
into training data, train the parameter model, predict runtime curves,
select allocations, simulate allocation policies, and evaluate the whole
thing with repeated cross-validation.

Exit codes: 0 success, 1 validation error, 2 I/O error, 3 infeasible
selection.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
import time
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import allocsim, forest as forest_mod
from .errors import InfeasibleSelectionError
from .evaluation import CvPlan, EvalReport, ablation, cross_validate
from .features import load_workload, save_workload, vectorize
from .ppm import PpmFamily
from .selection import NodeShape, SelectionObjective, factorize_cores
from .synth import generate_workload
from .training import DEFAULT_N_GRID, augment_training_data

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_IO = 2
EXIT_INFEASIBLE = 3


def _parse_grid(text: str) -> tuple[int, ...]:
    """Grid syntax: ``a..b`` for a contiguous range, or comma-separated
    values like ``1,3,8,16,32,48``."""
    text = text.strip()
    if ".." in text:
        lo, hi = text.split("..", 1)
        lo_i, hi_i = int(lo), int(hi)
        if lo_i < 1 or hi_i < lo_i:
            raise ValueError(f"invalid grid range {text!r}")
        return tuple(range(lo_i, hi_i + 1))
    values = tuple(int(v) for v in text.split(",") if v.strip())
    if not values or any(b <= a for a, b in zip(values, values[1:])) or values[0] < 1:
        raise ValueError(f"invalid grid {text!r}")
    return values


def _parse_node(text: str) -> NodeShape:
    parts = text.split(",")
    if len(parts) != 3:
        raise ValueError("node shape must be C,M,em (cores, memory GB, executor memory GB)")
    return NodeShape(cores=int(parts[0]), memory_gb=float(parts[1]), executor_memory_gb=float(parts[2]))


def _parse_policy(text: str, idle_timeout: float) -> allocsim.AllocationPolicy:
    kind, _, rest = text.partition(":")
    if kind == "sa":
        return allocsim.StaticAllocation(n=int(rest))
    if kind == "da":
        lo, hi = rest.split(",")
        return allocsim.DynamicAllocation(n_min=int(lo), n_max=int(hi), idle_timeout=idle_timeout)
    if kind == "rule":
        return allocsim.RuleAllocation(n_predicted=int(rest), idle_timeout=idle_timeout)
    raise ValueError(f"unknown policy {text!r} (expected sa:N, da:MIN,MAX, or rule:N)")


def _write_json(path: Path, payload) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, sort_keys=True, indent=2)
        fh.write("\n")


def cmd_gen_synthetic(args: argparse.Namespace) -> int:
    records = generate_workload(count=args.count, seed=args.seed, n_grid=args.train_grid, noise=args.noise)
    save_workload(records, args.out)
    print(f"wrote {len(records)} synthetic queries to {args.out}")
    return EXIT_OK


def cmd_train(args: argparse.Namespace) -> int:
    t0 = time.perf_counter()
    records = load_workload(args.workload)
    trainable = [r for r in records if r.trainable]
    if not trainable:
        raise ValueError("workload contains no trainable records")
    family = PpmFamily(args.ppm)
    data = augment_training_data(trainable, n_grid=args.train_grid)
    examples = data.for_family(family)
    model = forest_mod.train(examples, n_estimators=args.estimators, rng_seed=args.seed, family=family)
    forest_mod.save_model(model, args.model)
    wall = time.perf_counter() - t0

    residuals = [family.fit(curve).residual for curve in _training_curves(trainable, args.train_grid)]
    degenerate = sum(ex.degenerate for ex in examples)
    print(f"trained {family.value} forest on {len(examples)} examples "
          f"({args.estimators} trees, seed {args.seed})")
    print(f"fit residuals: mean {np.mean(residuals):.4f}, max {np.max(residuals):.4f}; "
          f"{degenerate} degenerate fits")
    print(f"model written to {args.model} ({Path(args.model).stat().st_size} bytes) "
          f"in {wall:.2f} s")
    return EXIT_OK


def _training_curves(records, n_grid):
    from .training import training_curve

    return [training_curve(r, n_grid) for r in records if r.trainable]


def cmd_predict(args: argparse.Namespace) -> int:
    model = forest_mod.load_model(args.model)
    records = load_workload(args.workload)
    family = model.family
    queries = []
    for rec in records:
        x = vectorize(rec.features, model.schema)
        prediction = model.predict(x)  # one scoring call per query
        ppm = family.decode(prediction)
        params = {name: getattr(ppm, name) for name in family.target_names}
        queries.append(
            {
                "query_id": rec.query_id,
                "family": family.value,
                "params": params,
                "curve": [[int(n), ppm.evaluate(int(n))] for n in args.grid],
            }
        )
    payload = {"family": family.value, "grid": list(args.grid), "queries": queries}
    _write_json(Path(args.out), payload)
    print(f"predicted {len(queries)} queries with one model scoring each; wrote {args.out}")
    return EXIT_OK


def _load_selection_inputs(path: Path) -> list[tuple[str, object]]:
    """Accepts a predict output file or ``{"curve": [[n, t], ...]}``."""
    from .ppm import AllocationCurve

    with open(path, "r", encoding="utf-8") as fh:
        payload = json.load(fh)
    if "queries" in payload:
        out = []
        for q in payload["queries"]:
            family = PpmFamily(q["family"])
            params = q["params"]
            if family is PpmFamily.POWER_LAW:
                from .ppm import PowerLawPPM

                model = PowerLawPPM(a=params["a"], b=params["b"], m=params["m"])
            else:
                from .ppm import AmdahlPPM

                model = AmdahlPPM(s=params["s"], p=params["p"])
            out.append((q["query_id"], model))
        return out
    if "curve" in payload:
        return [("curve", AllocationCurve(tuple((int(n), float(t)) for n, t in payload["curve"])))]
    raise ValueError(f"{path} is neither a prediction file nor a curve file")


def cmd_select(args: argparse.Namespace) -> int:
    if (args.max_slowdown is None) == (not args.elbow):
        raise ValueError("exactly one of --max-slowdown or --elbow is required")
    n_range = (args.grid[0], args.grid[-1])
    if args.elbow:
        objective = SelectionObjective(kind="elbow", n_range=n_range)
    else:
        objective = SelectionObjective(kind="limited_slowdown", n_range=n_range, h=args.max_slowdown)

    results = []
    for query_id, model in _load_selection_inputs(Path(args.input)):
        chosen = objective.select(model)
        entry: dict = {"query_id": query_id, "objective": objective.label, "chosen_n": chosen}
        if args.node is not None:
            # The chosen allocation is interpreted as a total-core budget
            # when packing executors onto nodes.
            k = chosen if args.ec is None else chosen * args.ec
            fact = factorize_cores(k, args.node)
            entry["factorization"] = {
                "total_cores": k,
                "e_c": fact.e_c,
                "executors": fact.n,
                "waste": fact.waste,
            }
        results.append(entry)
    _write_json(Path(args.out), {"objective": objective.label, "selections": results})
    print(f"selected allocations for {len(results)} queries; wrote {args.out}")
    return EXIT_OK


def cmd_simulate(args: argparse.Namespace) -> int:
    records = load_workload(args.workload)
    profiles = [r.profile for r in records if r.profile is not None]
    if not profiles:
        raise ValueError("simulation needs records with profiles")
    cluster = allocsim.ClusterModel(
        allocation_lag=args.lag, grant_batch=args.batch, capacity=args.capacity
    )
    policies = [_parse_policy(p, args.idle_timeout) for p in args.policy]
    if len(policies) < 2:
        raise ValueError("need at least two --policy values to compare")

    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    works = [allocsim.SimWork.from_profile(p) for p in profiles]
    report = allocsim.compare_policies(works, policies, cluster, baseline=args.baseline)

    if args.skylines:
        for work in works:
            for policy in policies:
                res = allocsim.simulate(work, policy, cluster)
                name = f"skyline_{work.query_id}_{policy.label.replace(':', '_').replace(',', '-')}.csv"
                with open(out_dir / name, "w", encoding="utf-8", newline="") as fh:
                    writer = csv.writer(fh)
                    writer.writerow(["time_s", "executors"])
                    for t, n in res.skyline.samples:
                        writer.writerow([t, n])
                    writer.writerow([res.skyline.end_time, res.skyline.samples[-1][1]])

    with open(out_dir / "comparison.csv", "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            ["query_id", "policy", "runtime_s", "max_n", "auc", "n_ratio", "auc_ratio", "speedup", "fully_allocated"]
        )
        for row in report.rows:
            writer.writerow(
                [row.query_id, row.policy, row.runtime, row.max_n, row.auc,
                 row.n_ratio, row.auc_ratio, row.speedup, int(row.reached_full_allocation)]
            )
    _write_json(out_dir / "summary.json", {"baseline": report.baseline, "policies": report.aggregate()})
    print(f"simulated {len(works)} queries under {len(policies)} policies; results in {out_dir}")
    return EXIT_OK


def _report_csv_rows(report: EvalReport) -> list[list]:
    return [[n.n, report.family.value, n.mean, n.std] for n in report.errors]


def cmd_evaluate(args: argparse.Namespace) -> int:
    records = load_workload(args.workload)
    plan = CvPlan(k=args.folds, repeats=args.repeats, rng_seed=args.seed)
    families = [PpmFamily(args.ppm)] if args.ppm != "both" else list(PpmFamily)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)

    subsets = {}
    for spec_text in args.ablate or []:
        name, _, feats = spec_text.partition("=")
        if not feats:
            raise ValueError(f"--ablate expects NAME=feat1,feat2,..., got {spec_text!r}")
        subsets[name] = [f.strip() for f in feats.split(",") if f.strip()]

    error_rows: list[list] = []
    selection_rows: list[list] = []
    for family in families:
        report = cross_validate(
            records, family, plan,
            n_grid=args.train_grid,
            n_estimators=args.estimators,
            n_jobs=args.jobs,
        )
        _write_json(out_dir / f"report_{family.value}.json", report.to_dict())
        error_rows.extend(_report_csv_rows(report))
        for stat in report.selection:
            selection_rows.append(
                [stat.objective, family.value, stat.mean_chosen_n, stat.std_chosen_n,
                 stat.mean_realized_slowdown, stat.std_realized_slowdown]
            )
        print(f"{family.value}: mean E(n) over {report.fold_count} folds: "
              + ", ".join(f"E({e.n})={e.mean:.3f}" for e in report.errors))

        if subsets:
            abl = ablation(records, subsets, plan, n_grid=args.train_grid, family=family,
                           n_estimators=args.estimators, n_jobs=args.jobs)
            payload = {
                "full": abl.full.to_dict(),
                "subsets": {name: rep.to_dict() for name, rep in abl.subsets.items()},
            }
            _write_json(out_dir / f"ablation_{family.value}.json", payload)

    with open(out_dir / "errors.csv", "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["n", "series", "mean_error", "std_error"])
        writer.writerows(error_rows)
    with open(out_dir / "selection.csv", "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["objective", "series", "mean_chosen_n", "std_chosen_n",
                         "mean_realized_slowdown", "std_realized_slowdown"])
        writer.writerows(selection_rows)
    print(f"evaluation reports written to {out_dir}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="perfalloc",
        description="Predictive price-performance modeling and executor allocation toolkit",
        formatter_class=argparse.ArgumentDefaultsHelpFormatter,
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p: argparse.ArgumentParser) -> None:
        p.add_argument("--seed", type=int, default=0, help="seed for all randomness in this command")
        p.add_argument("--train-grid", type=_parse_grid, default=DEFAULT_N_GRID,
                       metavar="GRID", help="executor grid for curves (a..b or comma list)")

    p = sub.add_parser("gen-synthetic", help="generate a synthetic workload file",
                       formatter_class=argparse.ArgumentDefaultsHelpFormatter)
    add_common(p)
    p.add_argument("--count", type=int, required=True, help="number of queries")
    p.add_argument("--noise", type=float, default=0.05, help="multiplicative noise on observed curves")
    p.add_argument("--out", required=True, help="output workload path (JSON lines)")
    p.set_defaults(func=cmd_gen_synthetic)

    p = sub.add_parser("train", help="train the parameter model",
                       formatter_class=argparse.ArgumentDefaultsHelpFormatter)
    add_common(p)
    p.add_argument("--workload", required=True)
    p.add_argument("--model", required=True, help="output model path (JSON)")
    p.add_argument("--ppm", choices=["pl", "al"], default="pl", help="model family")
    p.add_argument("--estimators", type=int, default=100, help="trees in the forest")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("predict", help="predict model parameters and runtime curves",
                       formatter_class=argparse.ArgumentDefaultsHelpFormatter)
    add_common(p)
    p.add_argument("--model", required=True)
    p.add_argument("--workload", required=True, help="queries to score (features are used)")
    p.add_argument("--grid", type=_parse_grid, default=tuple(range(1, 49)),
                   help="allocations to evaluate the predicted model at")
    p.add_argument("--out", required=True, help="output JSON path")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("select", help="choose allocations from predictions",
                       formatter_class=argparse.ArgumentDefaultsHelpFormatter)
    add_common(p)
    p.add_argument("--input", required=True, help="predict output JSON, or a {'curve': ...} file")
    p.add_argument("--max-slowdown", type=float, default=None, metavar="H",
                   help="limited-slowdown objective with threshold H")
    p.add_argument("--elbow", action="store_true", help="elbow-point objective (the default strategy)")
    p.add_argument("--grid", type=_parse_grid, default=tuple(range(1, 49)),
                   help="allocation range to select within")
    p.add_argument("--node", type=_parse_node, default=None, metavar="C,M,EM",
                   help="node shape for factorizing the chosen cores")
    p.add_argument("--ec", type=int, default=None,
                   help="cores per executor used to convert executor counts to total cores")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_select)

    p = sub.add_parser("simulate", help="simulate allocation policies and compare",
                       formatter_class=argparse.ArgumentDefaultsHelpFormatter)
    add_common(p)
    p.add_argument("--workload", required=True, help="workload with profiles")
    p.add_argument("--policy", action="append", required=True,
                   help="sa:N, da:MIN,MAX, or rule:N (repeatable)")
    p.add_argument("--baseline", type=int, default=0, help="index of the baseline policy")
    p.add_argument("--lag", type=float, default=5.0, help="seconds between grant batches")
    p.add_argument("--batch", type=int, default=5, help="executors granted per batch")
    p.add_argument("--capacity", type=int, default=200, help="cluster executor capacity")
    p.add_argument("--idle-timeout", type=float, default=60.0,
                   help="idle seconds before DA/Rule release an executor")
    p.add_argument("--skylines", action="store_true", help="also write per-run skyline CSVs")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("evaluate", help="repeated k-fold evaluation",
                       formatter_class=argparse.ArgumentDefaultsHelpFormatter)
    add_common(p)
    p.add_argument("--workload", required=True)
    p.add_argument("--ppm", choices=["pl", "al", "both"], default="both")
    p.add_argument("--folds", type=int, default=5)
    p.add_argument("--repeats", type=int, default=10)
    p.add_argument("--estimators", type=int, default=100)
    p.add_argument("--jobs", type=int, default=None, help="parallel fold workers (default: CPU count)")
    p.add_argument("--ablate", action="append", metavar="NAME=f1,f2,...",
                   help="also evaluate a reduced feature subset (repeatable)")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_evaluate)

    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except InfeasibleSelectionError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except (ValueError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
