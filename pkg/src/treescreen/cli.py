"""Command-line driver for the screening-test design pipeline.

Subcommands: fit, synth, design, evaluate, compare, export, report.
Exit codes: 0 success, 1 computational failure, 2 usage or config error.
A JSON config file supplies defaults; explicit flags override it. The
TREESCREEN_OUT environment variable overrides the output directory.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import archive
from .copula import Condition, McmcConfig, fit_gcfm
from .decision import (
    AdaptiveTest,
    build_full_test,
    build_short_test,
    compare_methods,
    delta_distribution,
    design_tree,
    evaluate_on_holdout,
    roc_points,
)
from .errors import InvalidConfig, SchemaError, TreescreenError
from .items import load_dataset, load_item_bank
from .population import generate_population, generate_pruning_reservoir
from .risk import RiskConfig, fit_risk_model, posterior_mean_prob
from .tree import export_tree, import_tree


def _file_hash(path):
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()[:16]


def _out_dir(args):
    out = os.environ.get("TREESCREEN_OUT") or args.out
    if not out:
        raise InvalidConfig("no output directory (use --out or TREESCREEN_OUT)")
    path = Path(out)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _write_manifest(out_dir, command, inputs, outputs, params):
    doc = {
        "command": command,
        "inputs": {str(k): _file_hash(v) for k, v in inputs.items() if v},
        "outputs": {str(k): _file_hash(v) for k, v in outputs.items()},
        "params": params,
    }
    with open(out_dir / f"{command}_manifest.json", "w") as fh:
        json.dump(doc, fh, indent=1, sort_keys=True)


def _int_list(text):
    return [int(v) for v in str(text).split(",") if v != ""]


def _float_list(text):
    return [float(v) for v in str(text).split(",") if v != ""]


def _apply_config(args):
    """Fill unset argparse values from the JSON config file, if given."""
    if not getattr(args, "config", None):
        return args
    with open(args.config) as fh:
        cfg = json.load(fh)
    if not isinstance(cfg, dict):
        raise InvalidConfig("config file must hold a JSON object")
    for key, val in cfg.items():
        attr = key.replace("-", "_")
        if hasattr(args, attr) and getattr(args, attr) is None:
            setattr(args, attr, val)
    return args


# ---------------------------------------------------------------------------
# subcommands

def cmd_fit(args):
    args = _apply_config(args)
    for req in ("bank", "data"):
        if getattr(args, req) is None:
            raise InvalidConfig(f"fit requires --{req}")
    out = _out_dir(args)
    bank = load_item_bank(args.bank)
    data = load_dataset(args.data, bank)
    k = args.k if args.k is not None else 2
    seed = args.seed if args.seed is not None else 0
    burn = args.burn_in if args.burn_in is not None else 300
    draws = args.draws if args.draws is not None else 200
    copula = fit_gcfm(data, k, McmcConfig(burn_in=burn, draws=draws, seed=seed))
    risk = fit_risk_model(
        data,
        RiskConfig(
            num_trees=args.num_trees if args.num_trees is not None else 50,
            burn_in=burn,
            draws=draws,
            seed=seed + 1,
        ),
    )
    cop_path = out / "copula.npz"
    risk_path = out / "risk.npz"
    h1 = archive.save_copula(copula, cop_path)
    h2 = archive.save_risk(risk, risk_path)
    _write_manifest(
        out, "fit",
        {"bank": args.bank, "data": args.data},
        {"copula": cop_path, "risk": risk_path},
        {"k": k, "seed": seed, "burn_in": burn, "draws": draws,
         "copula_hash": h1, "risk_hash": h2},
    )
    print(f"wrote {cop_path} ({h1}) and {risk_path} ({h2})")
    return 0


def cmd_synth(args):
    args = _apply_config(args)
    for req in ("bank", "copula", "risk", "N", "D"):
        if getattr(args, req) is None:
            raise InvalidConfig(f"synth requires --{req}")
    out = _out_dir(args)
    bank = load_item_bank(args.bank)
    copula = archive.load_copula(args.copula)
    risk = archive.load_risk(args.risk)
    seed = args.seed if args.seed is not None else 0
    predicate = None
    if args.predicate:
        predicate = [Condition.parse(t) for t in str(args.predicate).split("&")]
    pop = generate_population(copula, risk, bank, args.N, args.D, seed, predicate)
    res_count = args.reservoir if args.reservoir is not None else 100_000
    if res_count > 0:
        pop.pruning_reservoir = generate_pruning_reservoir(
            copula, risk, bank, res_count, seed + 1, predicate
        )
    pop_path = out / "population.npz"
    h = archive.save_population(pop, pop_path)
    _write_manifest(
        out, "synth",
        {"bank": args.bank, "copula": args.copula, "risk": args.risk},
        {"population": pop_path},
        {"N": args.N, "D": args.D, "M": pop.M, "seed": seed,
         "predicate": args.predicate, "reservoir": res_count, "hash": h},
    )
    print(f"wrote {pop_path} (M={pop.M}, {h})")
    return 0


def cmd_design(args):
    args = _apply_config(args)
    for req in ("bank", "population", "m"):
        if getattr(args, req) is None:
            raise InvalidConfig(f"design requires --{req}")
    m_values = _int_list(args.m)
    if not m_values or min(m_values) < 1:
        raise InvalidConfig(f"m values must be >= 1, got {args.m}")
    w = args.w if args.w is not None else 0.5
    out = _out_dir(args)
    bank = load_item_bank(args.bank)
    pop = archive.load_population(args.population)
    kind = args.constraint if args.constraint is not None else "maxipp"
    min_node = args.min_node if args.min_node is not None else 25
    report = []
    outputs = {}
    for m in m_values:
        tree = design_tree(
            pop, m, pop.pruning_reservoir, kind,
            min_node=min_node, prune_threshold=args.prune_threshold,
        )
        test = build_short_test(pop, tree, w)
        path = out / f"test_m{m}.json"
        export_tree(tree, bank, test.threshold, path)
        outputs[f"test_m{m}"] = path
        report.append(
            {
                "m": m,
                "threshold": test.threshold,
                "pooled_utility": test.achieved_utility,
                "n_leaves": tree.n_leaves,
                "depth": tree.depth(),
            }
        )
    full = build_full_test(pop, w)
    report_path = out / "thresholds.json"
    with open(report_path, "w") as fh:
        json.dump(
            {"w": w, "full_threshold": full.threshold,
             "full_pooled_utility": full.achieved_utility, "tests": report},
            fh, indent=1,
        )
    outputs["thresholds"] = report_path
    _write_manifest(
        out, "design",
        {"bank": args.bank, "population": args.population},
        outputs,
        {"m": m_values, "w": w, "constraint": kind, "min_node": min_node},
    )
    for row in report:
        print(f"m={row['m']}: threshold={row['threshold']:.4f} "
              f"pooled_utility={row['pooled_utility']:.4f} leaves={row['n_leaves']}")
    return 0


def _load_tests(paths, bank):
    tests = []
    for p in paths:
        tree, threshold = import_tree(p, bank)
        m = tree.constraint.value if tree.constraint.kind == "maxipp" else 0
        tests.append((m, AdaptiveTest(tree=tree, threshold=threshold, name=f"maxipp-{m}")))
    return sorted(tests, key=lambda t: t[0])


def cmd_evaluate(args):
    args = _apply_config(args)
    for req in ("bank", "population", "risk", "holdout", "tests"):
        if getattr(args, req) is None:
            raise InvalidConfig(f"evaluate requires --{req}")
    out = _out_dir(args)
    bank = load_item_bank(args.bank)
    pop = archive.load_population(args.population)
    risk = archive.load_risk(args.risk)
    holdout = load_dataset(args.holdout, bank)
    if holdout.n == 0:
        raise InvalidConfig("holdout dataset is empty")
    w_values = _float_list(args.w) if args.w is not None else [0.5]
    tests = _load_tests(args.tests, bank)
    X_hold = holdout.encoded
    y_hold = holdout.outcomes
    hold_scores_full = posterior_mean_prob(risk, X_hold)

    table_rows = []
    delta_rows = []
    summaries = []
    for w in w_values:
        full = build_full_test(pop, w)
        hold_full = evaluate_on_holdout(full, X_hold, y_hold, w, scores=hold_scores_full)
        table_rows.append({"m": "full", "w": w, "split": "holdout", **hold_full})
        for m, test in tests:
            short = build_short_test(pop, test.tree, w)
            hold_short = evaluate_on_holdout(short, X_hold, y_hold, w)
            table_rows.append({"m": m, "w": w, "split": "holdout", **hold_short})
            sample = delta_distribution(pop, short, full, w, m=m)
            for j, d in enumerate(sample.draws):
                delta_rows.append({"m": m, "w": w, "draw": j, "delta": float(d)})
            summaries.append(
                {
                    "w": w,
                    **sample.boxplot_summary(),
                    "holdout_delta": hold_short["utility"] - hold_full["utility"],
                }
            )

    table_path = out / "evaluation.csv"
    with open(table_path, "w", newline="") as fh:
        wr = csv.DictWriter(fh, ["m", "w", "split", "sensitivity", "specificity", "utility"])
        wr.writeheader()
        wr.writerows(table_rows)
    delta_path = out / "deltas.csv"
    with open(delta_path, "w", newline="") as fh:
        wr = csv.DictWriter(fh, ["m", "w", "draw", "delta"])
        wr.writeheader()
        wr.writerows(delta_rows)
    summary_path = out / "delta_summary.json"
    with open(summary_path, "w") as fh:
        json.dump(summaries, fh, indent=1)
    roc_path = out / "roc.csv"
    roc = roc_points(hold_scores_full, y_hold)
    with open(roc_path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["specificity", "sensitivity"])
        wr.writerows([[f"{a:.6f}", f"{b:.6f}"] for a, b in roc])
    outputs = {
        "evaluation": table_path, "deltas": delta_path,
        "delta_summary": summary_path, "roc": roc_path,
    }
    if args.plots:
        outputs.update(_render_plots(out, delta_rows, summaries, roc))
    _write_manifest(
        out, "evaluate",
        {"bank": args.bank, "population": args.population,
         "risk": args.risk, "holdout": args.holdout},
        outputs,
        {"w": w_values, "tests": [str(p) for p in args.tests]},
    )
    for row in table_rows:
        print(f"m={row['m']} w={row['w']}: sens={row['sensitivity']:.3f} "
              f"spec={row['specificity']:.3f} utility={row['utility']:.3f}")
    return 0


def cmd_compare(args):
    args = _apply_config(args)
    for req in ("population", "m"):
        if getattr(args, req) is None:
            raise InvalidConfig(f"compare requires --{req}")
    out = _out_dir(args)
    pop = archive.load_population(args.population)
    m_values = _int_list(args.m)
    w_values = _float_list(args.w) if args.w is not None else [0.5]
    kinds = str(args.constraint).split(",") if args.constraint else ["maxipp"]
    criteria = str(args.criteria).split(",") if args.criteria else None
    kwargs = {} if criteria is None else {"criteria": criteria}
    rows = compare_methods(
        pop, m_values, kinds, w_values=w_values,
        reservoir=pop.pruning_reservoir,
        min_node=args.min_node if args.min_node is not None else 25,
        **kwargs,
    )
    path = out / "comparison.csv"
    with open(path, "w", newline="") as fh:
        wr = csv.DictWriter(
            fh, ["n_items", "tree_type", "criterion", "w",
                 "sensitivity", "specificity", "utility", "threshold"],
        )
        wr.writeheader()
        wr.writerows(rows)
    _write_manifest(
        out, "compare", {"population": args.population}, {"comparison": path},
        {"m": m_values, "w": w_values, "kinds": kinds},
    )
    print(f"wrote {path} ({len(rows)} cells)")
    return 0


def cmd_export(args):
    """Validate a deployment file against a bank and re-emit it normalized."""
    args = _apply_config(args)
    for req in ("bank", "tree", "out_file"):
        if getattr(args, req) is None:
            raise InvalidConfig(f"export requires --{req}")
    bank = load_item_bank(args.bank)
    tree, threshold = import_tree(args.tree, bank)
    doc = export_tree(tree, bank, threshold, args.out_file)
    print(f"wrote {args.out_file} ({doc['provenance']['content_hash']})")
    return 0


def _render_plots(out, delta_rows, summaries, roc):
    import matplotlib

    matplotlib.use("svg")
    import matplotlib.pyplot as plt

    outputs = {}
    if delta_rows:
        ms = sorted({r["m"] for r in delta_rows})
        groups = [[r["delta"] for r in delta_rows if r["m"] == m] for m in ms]
        fig, ax = plt.subplots(figsize=(6, 4))
        ax.boxplot(groups, tick_labels=[str(m) for m in ms])
        for i, m in enumerate(ms):
            pts = [s for s in summaries if s["m"] == m]
            if pts and "holdout_delta" in pts[0]:
                ax.plot(i + 1, pts[0]["holdout_delta"], "r*", markersize=10)
        ax.axhline(0.0, color="gray", lw=0.5)
        ax.set_xlabel("test length m")
        ax.set_ylabel("utility difference vs full test")
        box_path = out / "delta_boxplot.svg"
        fig.savefig(box_path)
        plt.close(fig)
        outputs["delta_boxplot"] = box_path
    fig, ax = plt.subplots(figsize=(4.5, 4.5))
    ax.plot(1.0 - roc[:, 0], roc[:, 1], "-o", markersize=2)
    ax.plot([0, 1], [0, 1], "--", color="gray", lw=0.5)
    ax.set_xlabel("1 - specificity")
    ax.set_ylabel("sensitivity")
    roc_path = out / "roc.svg"
    fig.savefig(roc_path)
    plt.close(fig)
    outputs["roc_plot"] = roc_path
    return outputs


def cmd_report(args):
    """Render SVG figures from previously written evaluate CSVs."""
    args = _apply_config(args)
    for req in ("deltas", "roc"):
        if getattr(args, req) is None:
            raise InvalidConfig(f"report requires --{req}")
    out = _out_dir(args)
    with open(args.deltas, newline="") as fh:
        delta_rows = [
            {"m": int(r["m"]), "w": float(r["w"]), "delta": float(r["delta"])}
            for r in csv.DictReader(fh)
        ]
    with open(args.roc, newline="") as fh:
        rd = csv.DictReader(fh)
        roc = np.array([[float(r["specificity"]), float(r["sensitivity"])] for r in rd])
    outputs = _render_plots(out, delta_rows, [], roc)
    for name, path in outputs.items():
        print(f"wrote {path}")
    return 0


# ---------------------------------------------------------------------------

def build_parser():
    parser = argparse.ArgumentParser(
        prog="treescreen",
        description="Design and evaluate length-constrained tree-based screening tests.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="JSON config file; flags override its values")
        p.add_argument("--out", help="output directory (or env TREESCREEN_OUT)")
        p.add_argument("--seed", type=int)

    p = sub.add_parser("fit", help="fit the item model and risk model")
    common(p)
    p.add_argument("--bank")
    p.add_argument("--data")
    p.add_argument("--k", type=int, help="number of latent factors")
    p.add_argument("--num-trees", type=int)
    p.add_argument("--burn-in", type=int)
    p.add_argument("--draws", type=int)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("synth", help="generate the posterior predictive population")
    common(p)
    p.add_argument("--bank")
    p.add_argument("--copula")
    p.add_argument("--risk")
    p.add_argument("--N", type=int, help="rows per posterior draw")
    p.add_argument("--D", type=int, help="number of posterior draws")
    p.add_argument("--predicate", help="e.g. 'Age>=15', '&'-joined")
    p.add_argument("--reservoir", type=int, help="pruning reservoir size (0 disables)")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("design", help="grow, prune, and threshold tests per m")
    common(p)
    p.add_argument("--bank")
    p.add_argument("--population")
    p.add_argument("--m", help="comma-separated test lengths")
    p.add_argument("--w", type=float)
    p.add_argument("--constraint", choices=["maxipp", "maxdepth"])
    p.add_argument("--min-node", type=int)
    p.add_argument("--prune-threshold", type=float)
    p.set_defaults(func=cmd_design)

    p = sub.add_parser("evaluate", help="score tests on a held-out dataset")
    common(p)
    p.add_argument("--bank")
    p.add_argument("--population")
    p.add_argument("--risk")
    p.add_argument("--holdout")
    p.add_argument("--tests", nargs="+", help="deployment files to evaluate")
    p.add_argument("--w", help="comma-separated weights")
    p.add_argument("--plots", action="store_true", help="also render SVG figures")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("compare", help="calibration-method comparison grid")
    common(p)
    p.add_argument("--population")
    p.add_argument("--m")
    p.add_argument("--w")
    p.add_argument("--constraint", help="comma-separated: maxipp,maxdepth")
    p.add_argument("--criteria", help="comma-separated criterion names")
    p.add_argument("--min-node", type=int)
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("export", help="validate and re-emit a deployment file")
    common(p)
    p.add_argument("--bank")
    p.add_argument("--tree")
    p.add_argument("--out-file")
    p.set_defaults(func=cmd_export)

    p = sub.add_parser("report", help="render figures from evaluate CSVs")
    common(p)
    p.add_argument("--deltas")
    p.add_argument("--roc")
    p.set_defaults(func=cmd_report)

    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (InvalidConfig, SchemaError, FileNotFoundError, json.JSONDecodeError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except TreescreenError as exc:
        print(f"failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
