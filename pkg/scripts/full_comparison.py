#!/usr/bin/env python3
"""Run the three-topology comparison on one synthetic dataset and
write a summary table plus per-run metrics CSVs.

Centralized training runs once (with early stopping); the shuffled-client
and source-exclusive topologies run once per client count. All runs share
the same dataset, split, and initial weights, so the client count and the
partitioning rule are the only variables.

Example:
    python3 scripts/full_comparison.py --out runs/comparison
    python3 scripts/full_comparison.py --quick --out /tmp/smoke
"""
import argparse
import sys
import time
from pathlib import Path

from fedsim.experiments import (
    DataConfig,
    ExperimentConfig,
    prepare_data,
    run_centralized,
    run_federated,
    write_history_csv,
    write_summary_csv,
)


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--out", default="runs/comparison", help="output directory")
    ap.add_argument("--lr", type=float, default=0.005)
    ap.add_argument("--rounds", type=int, default=75)
    ap.add_argument("--per-class", type=int, default=20)
    ap.add_argument("--classes", type=int, default=11)
    ap.add_argument("--image-size", type=int, default=32)
    ap.add_argument("--skew", type=float, default=1.0,
                    help="class/source skew: 1.0 confines every class to one source")
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--fl-clients", type=int, nargs="+", default=list(range(1, 11)))
    ap.add_argument("--mefl-clients", type=int, nargs="+", default=list(range(2, 11)))
    ap.add_argument("--parallel", action="store_true", help="train clients on a thread pool")
    ap.add_argument("--quick", action="store_true", help="tiny smoke-test settings")
    args = ap.parse_args()

    if args.quick:
        args.rounds, args.per_class, args.image_size = 10, 6, 16
        args.fl_clients, args.mefl_clients = [1, 4], [2]

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    data_cfg = DataConfig(
        classes=args.classes, per_class=args.per_class, skew=args.skew,
        image_size=args.image_size, augment=True,
    )
    base = dict(
        lr=args.lr, rounds=args.rounds, seed=args.seed, data=data_cfg,
        conv_filters=(8, 8, 16, 16), dense_units=32,
    )
    prep = prepare_data(data_cfg, args.seed)
    print(f"dataset: {len(prep.train)} train / {len(prep.test)} test, "
          f"{args.classes} classes, skew={args.skew}")

    rows = []
    t0 = time.perf_counter()
    cl = run_centralized(ExperimentConfig("cl", **base), prep)
    write_history_csv(cl, out / "cl.csv")
    rows.append(("cl", args.lr, 1, cl.final_accuracy))
    print(f"cl           : {cl.final_accuracy:.4f}  ({cl.stop_reason} after {len(cl.records)} epochs)")

    for topology, ks in (("fl", args.fl_clients), ("mefl", args.mefl_clients)):
        for k in ks:
            h = run_federated(ExperimentConfig(topology, clients=k, **base), prep,
                              parallel=args.parallel)
            write_history_csv(h, out / f"{topology}_k{k}.csv")
            rows.append((topology, args.lr, k, h.final_accuracy))
            print(f"{topology} k={k:<2}     : {h.final_accuracy:.4f}")

    write_summary_csv(rows, out / "summary.csv")
    print(f"\nwrote {out}/summary.csv ({time.perf_counter() - t0:.0f}s total)")
    return 0


if __name__ == "__main__":
    sys.exit(main())
