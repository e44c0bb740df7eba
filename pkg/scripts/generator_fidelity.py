"""Compare generated panels against the target demand-class mix and lifecycle ratios.

    python3 scripts/generator_fidelity.py --seeds 0 1 2
"""
import argparse

import pandas as pd

from retailcast.demandclass import DemandClass
from retailcast.panelgen import GeneratorProfile, generate_panel, series_keys, summarize_panel

TARGET = {DemandClass.INTERMITTENT: 0.7006, DemandClass.LUMPY: 0.2348, DemandClass.ERRATIC: 0.0311,
          DemandClass.SMOOTH: 0.0243, DemandClass.NO_DEMAND: 0.0092}


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--seeds", type=int, nargs="+", default=[0])
    ap.add_argument("--products", type=int, default=500)
    ap.add_argument("--stores", type=int, default=10)
    args = ap.parse_args()
    rows = []
    for seed in args.seeds:
        prof = GeneratorProfile(n_products=args.products, n_stores=args.stores, seed=seed)
        panel = generate_panel(prof)
        st = summarize_panel(panel, prof.cutoff_date)
        row = {"seed": seed, "series": series_keys(panel).nunique(), "missing": st.avg_missingness,
               "coverage": st.avg_coverage_ratio, "eliminated": st.eliminated_ratio, "new": st.new_ratio}
        row.update({c.value: st.class_distribution[c] for c in TARGET})
        rows.append(row)
    table = pd.DataFrame(rows)
    print(table.to_string(index=False, float_format=lambda v: f"{v:.4f}"))
    print("\ntarget: " + "  ".join(f"{c.value} {v:.4f}" for c, v in TARGET.items()))


if __name__ == "__main__":
    main()
