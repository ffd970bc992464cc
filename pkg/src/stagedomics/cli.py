"""Command line entry point.

Exit codes: 0 success, 1 usage/config error, 2 data validation error,
3 numeric/training failure.
"""

import argparse
import json
import logging
import os
import sys

from . import kernels
from .config import load_config
from .data import generate_synthetic, write_dataset
from .errors import StagedOmicsError
from .pipeline import predict_all, report_all, run_pipeline, stage_all, train_all


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _globals(parser, suppress):
    d = argparse.SUPPRESS if suppress else None
    parser.add_argument("--config", default=d, help="flat YAML config file")
    parser.add_argument("--seed", type=int, default=d, help="base seed (overrides config)")
    parser.add_argument("--out", default=d, help="output directory (overrides config)")
    parser.add_argument("--tune-on-test", action="store_true", default=d,
                        help="choose stage plan and thresholds on the test set")
    parser.add_argument("-v", "--verbose", action="store_true", default=d)


def build_parser():
    p = _Parser(prog="stagedomics", description="Staged multi-omics GCN classification with uncertainty routing.")
    _globals(p, suppress=False)
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    common = _Parser(add_help=False)
    _globals(common, suppress=True)
    data = _Parser(add_help=False)
    data.add_argument("--data", help="dataset directory (overrides config data_dir)")

    sub.add_parser("run", parents=[common, data], help="train, stage and report in one go")
    sub.add_parser("train", parents=[common, data], help="train all seven view configurations")
    sub.add_parser("stage", parents=[common, data], help="pick stage plan and thresholds, write reports")
    sub.add_parser("predict", parents=[common, data], help="re-infer from checkpoints and route test samples")
    rep = sub.add_parser("report", parents=[common, data], help="rewrite the uncertainty histogram")
    rep.add_argument("--bins", type=int, default=None)
    syn = sub.add_parser("synth", parents=[common], help="write a synthetic dataset in the MOGONET layout")
    syn.add_argument("--n", type=int, default=200)
    syn.add_argument("--d", type=int, default=20)
    syn.add_argument("--snr", default="3,0.5,0.5", help="comma-separated per-view separations")
    return p


def _resolve(args):
    path = args.config
    saved = os.path.join(args.out or "out", "config.yaml")
    if path is None and args.command in ("stage", "predict", "report") and os.path.exists(saved):
        path = saved
    over = {}
    if args.seed is not None:
        over["seed"] = args.seed
    if args.out is not None:
        over["out"] = args.out
    if args.tune_on_test:
        over["tune_on_test"] = True
    if getattr(args, "data", None):
        over["data_dir"] = args.data
        over["synthetic_n"] = None
    return load_config(path, **over)


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "synth":
            snr = [float(s) for s in args.snr.split(",")]
            ds = generate_synthetic(args.n, args.d, snr, args.seed or 0)
            write_dataset(ds, args.out or "synthetic_data")
            return 0
        cfg = _resolve(args)
        logging.getLogger(__name__).info("kernel backend: %s", kernels.backend())
        if args.command == "run":
            summary = run_pipeline(cfg)
        elif args.command == "train":
            train_all(cfg)
            return 0
        elif args.command == "stage":
            summary = stage_all(cfg)
        elif args.command == "predict":
            res = predict_all(cfg)
            print(json.dumps({"accuracy": res.accuracy, "stage_fractions": list(res.stage_fractions)}))
            return 0
        else:
            report_all(cfg, bins=args.bins)
            return 0
        print(json.dumps({"plan": summary["plan"], "thresholds": summary["thresholds"],
                          "staged": summary["test"]["staged"],
                          "stage_fractions": summary["test"]["stage_fractions"],
                          "expected_cost": summary["cost"]["expected"]}, sort_keys=True))
        return 0
    except StagedOmicsError as exc:
        print(f"stagedomics: {type(exc).__name__}: {exc}", file=sys.stderr)
        return exc.exit_code
    except ValueError as exc:
        print(f"stagedomics: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
