"""Run the stopping-criterion comparison from the command line.

    python3 -m nnkharness --seeds 3 --out comparison/
"""

import argparse
import sys

from .compare import METHODS, run_comparison
from .config import HarnessConfig


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="nnkharness")
    parser.add_argument("--dataset", choices=["synthetic-blobs", "cifar2"], default="synthetic-blobs")
    parser.add_argument("--seeds", type=int, default=3, help="number of seeds (0..n-1)")
    parser.add_argument("--budget", type=int, default=300)
    parser.add_argument("--epochs", type=int, default=40)
    parser.add_argument("--patience", type=int, default=4)
    parser.add_argument("--dropout", type=float, default=0.0)
    parser.add_argument("--subsample", type=int, default=None)
    parser.add_argument("--methods", default=",".join(METHODS))
    parser.add_argument("--out", default="comparison")
    args = parser.parse_args(argv)

    config = HarnessConfig(
        dataset=args.dataset,
        labeled_budget=args.budget,
        max_epochs=args.epochs,
        patience=args.patience,
        dropout_rate=args.dropout,
        subsample=args.subsample,
    )
    rows = run_comparison(config, seeds=range(args.seeds),
                          methods=tuple(args.methods.split(",")), out_dir=args.out)
    for row in rows:
        print(f"{row.method}\tseed {row.seed}\tacc@t* {row.test_acc_at_best:.4f}"
              f"\tstop {row.stop_epoch}\tt* {row.t_star}\t{row.wallclock_s:.1f}s")
    print(f"table written to {args.out}/results.tsv")
    return 0


if __name__ == "__main__":
    sys.exit(main())
