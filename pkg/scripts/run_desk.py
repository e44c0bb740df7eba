"""Run the desk-scale grid (cases A-D x gbdt/naive) and print the summary.

    python3 scripts/run_desk.py --out out/desk [--config configs/desk.ini]
"""
import argparse
import logging
import time
from pathlib import Path

from retailcast.config import load_config
from retailcast.runner import run_all

ROOT = Path(__file__).resolve().parents[1]


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--config", default=str(ROOT / "configs" / "desk.ini"))
    ap.add_argument("--out", default="out/desk")
    ap.add_argument("--seed", type=int)
    args = ap.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(asctime)s %(message)s")
    cfg = load_config(args.config, {"seed": args.seed, "out_dir": args.out})
    t0 = time.perf_counter()
    report = run_all(cfg)
    print(report.summary().to_string(index=False, float_format=lambda v: f"{v:.4f}"))
    print(f"\nfeatures: {', '.join(report.features)}")
    print(f"finished in {time.perf_counter() - t0:.0f}s, outputs in {args.out}")
    return report.exit_code


if __name__ == "__main__":
    raise SystemExit(main())
