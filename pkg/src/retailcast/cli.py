"""Command line interface: generate, classify, select, run, report."""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import pandas as pd

from .config import ExperimentConfig, default_config, load_config


def _config(args) -> ExperimentConfig:
    over = {
        "seed": getattr(args, "seed", None),
        "out_dir": getattr(args, "out", None),
        "cases": tuple(args.cases.split(",")) if getattr(args, "cases", None) else None,
        "models": tuple(args.models.split(",")) if getattr(args, "models", None) else None,
        "plot": True if getattr(args, "plot", False) else None,
    }
    if getattr(args, "panel", None):
        over["panel_path"] = args.panel
    if args.config:
        return load_config(args.config, over)
    return default_config(**{k: v for k, v in over.items() if v is not None})


def cmd_generate(args) -> int:
    from .panelgen import summarize_panel, generate_panel, write_panel_csv
    cfg = _config(args)
    panel = generate_panel(cfg.profile)
    write_panel_csv(panel, args.output)
    stats = summarize_panel(panel, cfg.profile.cutoff_date)
    print(f"wrote {len(panel)} rows, {stats.series_count} series to {args.output}")
    print(f"train missingness {stats.avg_missingness:.4f}  eliminated {stats.eliminated_ratio:.4f}  "
          f"new {stats.new_ratio:.4f}")
    return 0


def cmd_classify(args) -> int:
    from .demandclass import classify_series_table
    from .panelgen import read_panel_csv
    table = classify_series_table(read_panel_csv(args.panel))
    table = table.assign(**{"class": table["class"].map(lambda c: getattr(c, "value", c))})
    table[["series_key", "adi", "cv2", "class"]].to_csv(args.output, index=False, float_format="%.10g")
    print(table["class"].value_counts().to_string())
    return 0


def cmd_select(args) -> int:
    from .runner import load_panel, select_features, split_spec
    from .preprocess import build_feature_matrix
    cfg = _config(args)
    panel = load_panel(cfg)
    matrix = build_feature_matrix(panel, split_spec(cfg, panel), cfg.features, seed=cfg.seed)
    features, decision = select_features(matrix, cfg)
    if decision is None:
        print("feature selection disabled (run_boruta = false)", file=sys.stderr)
        return 1
    decision.to_frame().to_csv(args.output, index=False)
    print(f"kept {len(features)} features: {', '.join(features)}")
    return 0


def cmd_run(args) -> int:
    from .runner import run_all
    cfg = _config(args)
    report = run_all(cfg)
    print(report.summary().to_string(index=False, float_format=lambda v: f"{v:.4f}"))
    for c in report.failed:
        print(f"FAILED {c.case}/{c.model}", file=sys.stderr)
    return report.exit_code


def cmd_report(args) -> int:
    out = Path(args.out or "out")
    summary = out / "summary.csv"
    if not summary.exists():
        print(f"no completed run in {out}", file=sys.stderr)
        return 1
    df = pd.read_csv(summary)
    print(df.to_string(index=False, float_format=lambda v: f"{v:.4f}"))
    timings = out / "timings.csv"
    if timings.exists():
        print()
        print(pd.read_csv(timings).to_string(index=False, float_format=lambda v: f"{v:.4f}"))
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="retailcast", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, out=True):
        sp.add_argument("--config", help="experiment config file")
        sp.add_argument("--seed", type=int)
        if out:
            sp.add_argument("--out", help="output directory")

    g = sub.add_parser("generate", help="write a synthetic panel CSV")
    common(g, out=False)
    g.add_argument("--output", "-o", required=True)
    g.set_defaults(func=cmd_generate)

    c = sub.add_parser("classify", help="demand class per series")
    c.add_argument("--panel", required=True)
    c.add_argument("--output", "-o", required=True)
    c.set_defaults(func=cmd_classify, config=None)

    s = sub.add_parser("select", help="feature selection decisions")
    common(s, out=False)
    s.add_argument("--panel")
    s.add_argument("--output", "-o", required=True)
    s.set_defaults(func=cmd_select)

    r = sub.add_parser("run", help="run the experiment grid")
    common(r)
    r.add_argument("--panel")
    r.add_argument("--cases", help="comma separated subset of A,B,C,D")
    r.add_argument("--models", help="comma separated model names")
    r.add_argument("--plot", action="store_true", help="also write prediction vs actual CSVs")
    r.set_defaults(func=cmd_run)

    rep = sub.add_parser("report", help="print a finished run's tables")
    rep.add_argument("--out")
    rep.set_defaults(func=cmd_report, config=None)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ValueError, KeyError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
