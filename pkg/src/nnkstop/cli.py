"""Command line front end: evaluate, diagnose, serve, replay."""

from __future__ import annotations

import argparse
import sys

from .controller import ControllerConfig
from .diagnostics import importance_from_reports, rank_channels
from .interpolation import EvalOptions, loo_risk_all_channels, loo_risk_full_layer
from .kernels import SIGMA_FIXED, SIGMA_MEDIAN_KNN, KernelSpec
from .nnk import NnkConfig
from .reports import load_run_history, verify_history
from .serve import ServeConfig, serve_loop
from .snapshot import read_snapshot


def _add_kernel_args(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--kernel", choices=["gaussian", "cosine"], default="cosine")
    parser.add_argument("--sigma", type=float, default=None,
                        help="fixed gaussian bandwidth; default re-estimates it per channel")
    parser.add_argument("--k", type=int, default=15, help="initial neighbor count")


def _add_eval_args(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--channels", default=None, help="comma-separated channel subset, e.g. 1,3")
    parser.add_argument("--subsample", type=int, default=None, help="evaluate only this many nodes")
    parser.add_argument("--seed", type=int, default=0, help="subsampling seed, echoed in reports")


def _kernel_spec(args) -> KernelSpec:
    if args.sigma is not None:
        return KernelSpec(kind=args.kernel, sigma=args.sigma, sigma_policy=SIGMA_FIXED)
    return KernelSpec(kind=args.kernel, sigma_policy=SIGMA_MEDIAN_KNN)


def _eval_options(args) -> EvalOptions:
    channel_subset = None
    if getattr(args, "channels", None):
        channel_subset = tuple(int(c) for c in args.channels.split(","))
    return EvalOptions(channel_subset=channel_subset, subsample=args.subsample, seed=args.seed)


def _report_line(rep) -> str:
    name = "full-layer" if rep.channel < 0 else f"channel {rep.channel}"
    return (
        f"{name}: loo_risk={rep.loo_risk:.4f} neighbors={rep.mean_neighbor_count:.2f} "
        f"same_class={rep.mean_same_class_weight:.3f} zeros={rep.zero_fraction:.3f} "
        f"evaluated={rep.evaluated_nodes}"
    )


def _cmd_evaluate(args) -> int:
    snap = read_snapshot(args.snapshot)
    config = NnkConfig(K=args.k, kernel=_kernel_spec(args))
    options = _eval_options(args)
    if args.full_layer:
        print(_report_line(loo_risk_full_layer(snap, config, options)))
        return 0
    for rep in loo_risk_all_channels(snap, config, options):
        print(_report_line(rep))
    return 0


def _cmd_diagnose(args) -> int:
    snap = read_snapshot(args.snapshot)
    config = NnkConfig(K=args.k, kernel=_kernel_spec(args))
    reports = loo_risk_all_channels(snap, config, _eval_options(args))
    for metrics in importance_from_reports(reports):
        print(
            f"channel {metrics.channel}: rank_score={metrics.rank_score:.4f} "
            f"zeros={metrics.zero_fraction:.3f} neighbors={metrics.mean_neighbors:.2f} "
            f"same_class={metrics.mean_same_class_weight:.3f}"
        )
    ranking, passing = rank_channels(reports, args.risk_threshold)
    print(f"ranking: {','.join(str(c) for c in ranking)}")
    print(f"below_threshold({args.risk_threshold:g}): {','.join(str(c) for c in passing) or '-'}")
    return 0


def _cmd_serve(args) -> int:
    controller = ControllerConfig(
        num_channels=args.num_channels,
        patience=args.patience,
        eval_interval=args.eval_interval,
        eval_period=args.eval_period,
    )
    config = ServeConfig(
        controller=controller,
        nnk=NnkConfig(K=args.k, kernel=_kernel_spec(args)),
        options=EvalOptions(subsample=args.subsample, seed=args.seed),
        history_out=args.history_out,
    )
    return serve_loop(sys.stdin.buffer, sys.stdout.buffer, config)


def _cmd_replay(args) -> int:
    config, entries, _ = load_run_history(args.history)
    mismatches = verify_history(config, entries)
    if mismatches:
        for line in mismatches:
            print(line, file=sys.stderr)
        return 1
    print(f"replayed {len(entries)} evaluations: decisions identical")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="nnkstop",
        description="Channel-wise LOO generalization estimates and progressive early stopping",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_eval = sub.add_parser("evaluate", help="one-shot per-channel LOO report for a snapshot")
    p_eval.add_argument("--snapshot", required=True, help="NNKA file or CSV directory")
    _add_kernel_args(p_eval)
    _add_eval_args(p_eval)
    p_eval.add_argument("--full-layer", action="store_true", help="evaluate the concatenated layer instead")
    p_eval.set_defaults(func=_cmd_evaluate)

    p_diag = sub.add_parser("diagnose", help="channel importance metrics and ranking")
    p_diag.add_argument("--snapshot", required=True)
    _add_kernel_args(p_diag)
    _add_eval_args(p_diag)
    p_diag.add_argument("--risk-threshold", type=float, default=0.4)
    p_diag.set_defaults(func=_cmd_diagnose)

    p_serve = sub.add_parser("serve", help="run the framed request/response loop on stdio")
    p_serve.add_argument("--num-channels", type=int, required=True)
    p_serve.add_argument("--patience", type=int, default=20)
    p_serve.add_argument("--eval-interval", type=int, default=1)
    p_serve.add_argument("--eval-period", type=int, default=1)
    _add_kernel_args(p_serve)
    p_serve.add_argument("--subsample", type=int, default=None)
    p_serve.add_argument("--seed", type=int, default=0)
    p_serve.add_argument("--history-out", default=None)
    p_serve.set_defaults(func=_cmd_serve)

    p_replay = sub.add_parser("replay", help="re-run the controller over a stored history")
    p_replay.add_argument("history", help="history file produced by serve --history-out")
    p_replay.set_defaults(func=_cmd_replay)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, OSError) as exc:
        print(f"nnkstop: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
