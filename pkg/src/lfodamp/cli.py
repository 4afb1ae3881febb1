"""``lfodamp`` command line: powerflow, train, eval, sweep, plotdata.

Exit codes: 0 success, 2 configuration error, 3 numerical failure.
"""
from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .case import CaseError
from .config import ConfigError, load_config
from .ddpg import CheckpointError
from .dynamics import InitializationError, NumericalBlowup
from .network import PowerFlowError, SingularNetworkError

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 2, 3


def _parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", action="append", default=[], metavar="PATH",
                        help="config file (repeatable; later files win)")
    common.add_argument("--set", action="append", default=[], metavar="SECTION.KEY=VALUE",
                        dest="overrides", help="override one config key")
    common.add_argument("--seed", help="comma-separated seed list")
    common.add_argument("--out", help="output directory")
    common.add_argument("--channel", help="channel name(s), comma-separated")
    common.add_argument("--controller", help="controller name(s), comma-separated")
    common.add_argument("--paper-scale", action="store_true",
                        help="use the full episode budget instead of the desk-scale default")

    p = argparse.ArgumentParser(prog="lfodamp", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="verb", required=True)
    sub.add_parser("powerflow", parents=[common], help="solve and report the base power flow")
    sub.add_parser("train", parents=[common], help="train the DDPG controller")
    ev = sub.add_parser("eval", parents=[common], help="evaluate controllers over channels")
    ev.add_argument("--checkpoint", help="trained agent checkpoint (.lfo)")
    sub.add_parser("sweep", parents=[common], help="hyperparameter grid search")
    pd = sub.add_parser("plotdata", parents=[common], help="emit figure CSVs")
    pd.add_argument("--from", dest="src", help="directory holding logs/traces (default: --out)")
    pd.add_argument("--svg", action="store_true", help="also write SVG line plots")
    return p


def _apply_flags(args):
    ov = list(args.overrides)
    if args.seed:
        ov.append(f"experiment.seeds={args.seed}")
    if args.out:
        ov.append(f"experiment.out={args.out}")
    if args.channel and "," not in args.channel:
        ov.append(f"scenario.channel={args.channel}")
    if args.controller and "," not in args.controller and args.verb == "train":
        ov.append(f"experiment.controller={args.controller}")
    return load_config(args.config, ov)


def _split(text):
    return [x.strip() for x in text.split(",") if x.strip()] if text else None


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    try:
        cfg = _apply_flags(args)
        out = Path(cfg.out)
        from . import experiments as ex

        if args.verb == "powerflow":
            rep = ex.powerflow_report(cfg)
            print(f"case {rep['case']}: converged in {rep['iterations']} iterations, "
                  f"mismatch {rep['mismatch']:.3e} pu")
            if "tie_transfer_mw" in rep:
                print(f"tie-line transfer: {rep['tie_transfer_mw']:.3f} MW")
        elif args.verb == "train":
            if cfg.controller != "rl":
                raise ConfigError(f"train only applies to controller rl, not {cfg.controller!r}")
            results = ex.run_train(cfg, out, args.paper_scale)
            for seed, recs in results.items():
                tail = recs[-min(cfg.success_window, len(recs)):]
                rate = sum(r.success for r in tail) / len(tail)
                print(f"seed {seed}: {len(recs)} episodes, trailing success {rate:.2f}, "
                      f"log {out / f'seed_{seed}' / 'training_log.csv'}")
        elif args.verb == "eval":
            seeds = [int(s) for s in _split(args.seed)] if args.seed else None
            rows = ex.run_eval(cfg, out, args.checkpoint, seeds, _split(args.channel),
                               _split(args.controller))
            print(f"{len(rows)} evaluation rows written to {out / 'eval_report.csv'}")
        elif args.verb == "sweep":
            ranked = ex.run_sweep(cfg, out)
            best, sr, rt = ranked[0]
            print(f"best of {len(ranked)}: {best} (trailing success {sr:.2f}, return {rt:.1f})")
        elif args.verb == "plotdata":
            files = ex.run_plotdata(args.src or out, out, args.svg)
            for f in files:
                print(f)
    except (ConfigError, CaseError, CheckpointError, FileNotFoundError) as e:
        print(f"lfodamp: error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except (PowerFlowError, SingularNetworkError, InitializationError, NumericalBlowup,
            FloatingPointError) as e:
        print(f"lfodamp: numerical failure: {e}", file=sys.stderr)
        return EXIT_NUMERIC
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
