"""Command-line experiment runner.

    imba-ssl <train|compare|sweep-gamma|ablate-aug|evaluate>
             --config PATH [--out DIR] [--methods a,b]
             [--gammas 0.2,0.4,...] [--blending always|selective|both]

Exit codes: 0 success, 1 runtime failure, 2 usage/config error. The
IMBASSL_SEED environment variable (comma-separated ints) overrides the
config's seed list. All tables are CSV; summaries are JSON.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys

from . import experiments, losses
from .errors import ConfigError
from .experiments import (METHODS, ExperimentConfig, RunResult, load_experiment_config,
                          run_seeds, summarize)
from .metrics import evaluate, write_report_json, write_roc_csv
from .model import load_checkpoint, save_checkpoint
from .trainer import write_history_csv

STRONG_AUG_SCALE = 3.0


def _write_json(payload: dict, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(json.dumps(payload, sort_keys=True, indent=2) + "\n")


def _method_dir(out_dir: str, method: str) -> str:
    path = os.path.join(out_dir, method)
    os.makedirs(path, exist_ok=True)
    return path


def _run_and_store(cfg: ExperimentConfig, method: str, out_dir: str,
                   gamma=None, blending=None, aug_scale=1.0) -> tuple[dict, list[RunResult]]:
    results = run_seeds(cfg, method, gamma=gamma, blending=blending, aug_scale=aug_scale)
    for res in results:
        if res.history.failed:
            raise RuntimeError(f"{method} seed {res.seed} diverged ({res.history.failure})")
    mdir = _method_dir(out_dir, method)
    for res in results:
        sdir = os.path.join(mdir, f"seed{res.seed}")
        os.makedirs(sdir, exist_ok=True)
        write_history_csv(res.history, os.path.join(sdir, "history.csv"))
        save_checkpoint(res.model, os.path.join(sdir, "checkpoint.txt"))
    summary = summarize(method, results)
    _write_json(summary, os.path.join(mdir, "summary.json"))
    return summary, results


def cmd_train(args) -> int:
    cfg = load_experiment_config(args.config)
    summary, _ = _run_and_store(cfg, cfg.method, args.out)
    mean, std = summary["mean"], summary["std"]
    print(f"{cfg.method}: UAR {mean['uar']:.4f} ± {std['uar']:.4f}, "
          f"G-mean {mean['g_mean']:.4f} ± {std['g_mean']:.4f}, "
          f"avg AUC {mean['avg_auc']:.4f} ± {std['avg_auc']:.4f}")
    print(f"wrote {os.path.join(args.out, cfg.method, 'summary.json')}")
    return 0


def cmd_compare(args) -> int:
    cfg = load_experiment_config(args.config)
    methods = [m.strip() for m in args.methods.split(",") if m.strip()]
    if len(methods) < 2:
        raise ConfigError("compare needs at least 2 methods (--methods a,b)")
    for m in methods:
        if m not in METHODS:
            raise ConfigError(f"unknown method {m!r}; valid: {', '.join(sorted(METHODS))}")
    summaries = [_run_and_store(cfg, m, args.out)[0] for m in methods]
    n_classes = len(summaries[0]["mean"]["per_class_recall"])
    header = (["method", "uar", "g_mean", "avg_auc"]
              + [f"recall_c{c}" for c in range(n_classes)] + ["delta_uar"])
    baseline_uar = summaries[0]["mean"]["uar"]
    rows = []
    for s in summaries:
        m = s["mean"]
        rows.append([s["method"], repr(m["uar"]), repr(m["g_mean"]), repr(m["avg_auc"])]
                    + [repr(r) for r in m["per_class_recall"]]
                    + [repr(m["uar"] - baseline_uar)])
    out_csv = os.path.join(args.out, "compare.csv")
    os.makedirs(args.out, exist_ok=True)
    with open(out_csv, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows)
    best = max(range(len(summaries)), key=lambda i: summaries[i]["mean"]["uar"])
    print(f"{'method':<22} {'UAR':>8} {'G-mean':>8} {'avgAUC':>8} {'dUAR':>8}")
    for i, s in enumerate(summaries):
        m = s["mean"]
        marker = " *" if i == best else ""
        print(f"{s['method']:<22} {m['uar']:>8.4f} {m['g_mean']:>8.4f} "
              f"{m['avg_auc']:>8.4f} {m['uar'] - baseline_uar:>+8.4f}{marker}")
    print(f"wrote {out_csv}")
    return 0


def cmd_sweep_gamma(args) -> int:
    cfg = load_experiment_config(args.config)
    gammas = sorted(float(g) for g in args.gammas.split(",") if g.strip())
    if not gammas:
        raise ConfigError("sweep-gamma needs --gammas")
    for g in gammas:
        if not 0.0 < g <= 1.0:
            raise ConfigError(f"gamma {g} out of range (0, 1]")
    if args.blending == "both":
        modes = [losses.ALWAYS_ON, losses.SELECTIVE]
    else:
        modes = [experiments.normalize_blending(args.blending)]
    n_classes = cfg.dims[-1]
    header = (["blending", "gamma", "uar", "g_mean", "avg_auc"]
              + [f"recall_c{c}" for c in range(n_classes)])
    rows = []
    for mode in modes:
        for g in gammas:
            results = run_seeds(cfg, "uda-abcl", gamma=g, blending=mode)
            s = summarize("uda-abcl", results)["mean"]
            rows.append([mode, repr(g), repr(s["uar"]), repr(s["g_mean"]), repr(s["avg_auc"])]
                        + [repr(r) for r in s["per_class_recall"]])
            print(f"blending={mode} gamma={g}: UAR {s['uar']:.4f}, "
                  f"recalls {['%.3f' % r for r in s['per_class_recall']]}")
    os.makedirs(args.out, exist_ok=True)
    out_csv = os.path.join(args.out, "gamma_sweep.csv")
    with open(out_csv, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows)
    print(f"wrote {out_csv}")
    return 0


def cmd_ablate_aug(args) -> int:
    cfg = load_experiment_config(args.config)
    rows = []
    for method in ("uda", "uda-abcl"):
        for aug, scale in (("weak", 1.0), ("strong", STRONG_AUG_SCALE)):
            results = run_seeds(cfg, method, aug_scale=scale)
            s = summarize(method, results)["mean"]
            rows.append([method, aug, repr(s["uar"]), repr(s["g_mean"]), repr(s["avg_auc"])])
            print(f"{method} + {aug}: UAR {s['uar']:.4f}, G-mean {s['g_mean']:.4f}, "
                  f"avg AUC {s['avg_auc']:.4f}")
    os.makedirs(args.out, exist_ok=True)
    out_csv = os.path.join(args.out, "aug_ablation.csv")
    with open(out_csv, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["method", "augmentation", "uar", "g_mean", "avg_auc"])
        writer.writerows(rows)
    print(f"wrote {out_csv}")
    return 0


def cmd_evaluate(args) -> int:
    cfg = load_experiment_config(args.config)
    mdir = os.path.join(args.out, cfg.method)
    if not os.path.isdir(mdir):
        raise ConfigError(f"no stored runs under {mdir}; run `imba-ssl train` first")
    for seed in cfg.seeds:
        sdir = os.path.join(mdir, f"seed{seed}")
        ckpt = os.path.join(sdir, "checkpoint.txt")
        if not os.path.exists(ckpt):
            raise ConfigError(f"missing checkpoint: {ckpt}")
        model = load_checkpoint(ckpt)
        splits = experiments.build_splits(cfg, seed)
        report = evaluate(model, splits.test)
        write_report_json(report, os.path.join(sdir, "eval.json"))
        write_roc_csv(model, splits.test, os.path.join(sdir, "roc.csv"))
        print(f"seed {seed}: UAR {report.uar:.4f}, G-mean {report.g_mean:.4f}, "
              f"avg AUC {report.avg_auc:.4f}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="imba-ssl",
                                     description="imbalanced semi-supervised training harness")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", required=True, help="experiment INI file")
        p.add_argument("--out", default="runs", help="output directory (default: runs)")

    common(sub.add_parser("train", help="train the configured method over all seeds"))
    p_cmp = sub.add_parser("compare", help="train several methods and tabulate test metrics")
    common(p_cmp)
    p_cmp.add_argument("--methods", required=True, help="comma-separated method names")
    p_swp = sub.add_parser("sweep-gamma", help="ABCL compensation-strength sweep")
    common(p_swp)
    p_swp.add_argument("--gammas", required=True, help="comma-separated gamma values in (0,1]")
    p_swp.add_argument("--blending", default="always", choices=["always", "selective", "both"])
    common(sub.add_parser("ablate-aug", help="weak vs strong augmentation, UDA vs ABCL"))
    common(sub.add_parser("evaluate", help="re-evaluate stored checkpoints on the test split"))
    return parser


COMMANDS = {
    "train": cmd_train,
    "compare": cmd_compare,
    "sweep-gamma": cmd_sweep_gamma,
    "ablate-aug": cmd_ablate_aug,
    "evaluate": cmd_evaluate,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except ConfigError as err:
        print(f"config error: {err}", file=sys.stderr)
        return 2
    except Exception as err:  # runtime failure
        print(f"error: {err}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
