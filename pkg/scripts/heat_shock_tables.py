"""Full vs reduced sensitivities for the heat-shock model, printed as tables.

    python scripts/heat_shock_tables.py --scale desk --out runs/desk
"""

import argparse

from mssa.cli import run_bench


def main():
    p = argparse.ArgumentParser()
    p.add_argument("--scale", choices=("desk", "paper"), default="desk")
    p.add_argument("--seed", type=int, default=42)
    p.add_argument("--out", default="runs/heat_shock")
    p.add_argument("--timing", action="store_true")
    args = p.parse_args()

    rows = run_bench(args.scale, args.seed, args.out, timing=args.timing)
    for expr in ("x3", "x1"):
        print(f"\nf = {expr}")
        print(f"{'method':<12}{'N':>8}{'estimate':>12}{'+-':>10}{'pairs':>9}{'cost ratio':>12}")
        for r in rows:
            if r["f"] != expr or r["method"] == "gap":
                continue
            N = "" if r.get("N") is None else f"{r['N']:g}"
            ratio = "" if r.get("speedup") is None else f"{r['speedup']:.1f}"
            print(f"{r['method']:<12}{N:>8}{r['value']:>12.4f}{r['halfwidth95']:>10.4f}"
                  f"{r['samples']:>9}{ratio:>12}")


if __name__ == "__main__":
    main()
