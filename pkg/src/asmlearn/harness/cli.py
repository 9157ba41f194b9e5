"""Command-line entry point.

Exit codes: 0 success, 1 configuration or usage error, 2 runtime failure.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from ..analysis import BoundDomainError, bound_report
from ..graph import ConfigError
from ..stimuli import MnistFormatError
from .config import ExperimentConfig
from .experiments import dump_json, output_paths, round6, run_experiment, summarize

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 1, 2


class UsageError(Exception):
    pass


class Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


def _global_flags():
    p = argparse.ArgumentParser(add_help=False)
    g = p.add_argument_group("global options")
    g.add_argument("--config", help="key = value config file with [model], [train], ... sections")
    g.add_argument("--seed", type=int)
    g.add_argument("--out", help="output directory")
    g.add_argument("--trials", type=int)
    g.add_argument("--workers", type=int, default=1, help="parallel trial processes (results unchanged)")
    g.add_argument("--quiet", action="store_true")
    g.add_argument("--verbose", action="store_true")
    return p


def _model_flags():
    p = argparse.ArgumentParser(add_help=False)
    g = p.add_argument_group("model and training")
    g.add_argument("--n", type=int)
    g.add_argument("--k", type=int)
    g.add_argument("--p", type=float)
    g.add_argument("--beta", type=float)
    g.add_argument("--T", "--samples", dest="T", type=int, help="training samples per class")
    g.add_argument("--homeostasis-scope", choices=("fiber", "joint", "separate"))
    g.add_argument("--no-homeostasis", action="store_true")
    return p


def _stimulus_flags():
    p = argparse.ArgumentParser(add_help=False)
    g = p.add_argument_group("stimulus classes")
    g.add_argument("--classes", type=int)
    g.add_argument("--r", type=float)
    g.add_argument("--q", type=float)
    g.add_argument("--alpha", type=float, help="core overlap of each class with the first")
    g.add_argument("--num-test", type=int, help="test samples per class")
    return p


def _halfspace_flags():
    p = argparse.ArgumentParser(add_help=False)
    g = p.add_argument_group("halfspace")
    g.add_argument("--delta", type=float)
    g.add_argument("--support", type=int, help="number of nonzero coordinates of v")
    g.add_argument("--threshold", type=float, help="fraction of k needed to answer positive")
    g.add_argument("--hs-num-test", type=int, help="total test examples, half positive")
    g.add_argument("--allow-signed", action="store_true")
    return p


def build_parser():
    glob, model, stim, hs = _global_flags(), _model_flags(), _stimulus_flags(), _halfspace_flags()
    ap = Parser(prog="asmlearn", description="Assembly learning experiments.")
    sub = ap.add_subparsers(dest="command", required=True, parser_class=Parser)

    b = sub.add_parser("bounds", parents=[glob], help="evaluate the closed-form bounds")
    for name, typ, default in (("n", int, 1000), ("k", int, 100), ("p", float, 0.1), ("r", float, 0.9),
                               ("q", float, 0.1), ("alpha", float, 0.2), ("beta", float, 1.0),
                               ("gamma", float, None), ("delta", float, None)):
        b.add_argument(f"--{name}", type=typ, default=default)

    sub.add_parser("train-stimulus", parents=[glob, model, stim], help="stimulus-class learning")
    sub.add_parser("four-class", parents=[glob, model, stim], help="four stimulus classes")
    sub.add_parser("train-halfspace", parents=[glob, model, hs], help="halfspace learning")

    s = sub.add_parser("sweep", parents=[glob, model, stim, hs], help="accuracy over a parameter grid")
    s.add_argument("--param", required=True)
    s.add_argument("--from", dest="start", type=float)
    s.add_argument("--to", dest="stop", type=float)
    s.add_argument("--steps", type=int)
    s.add_argument("--values", help="explicit grid, comma separated")
    s.add_argument("--base", choices=("stimulus", "halfspace", "four-class"))
    s.add_argument("--keep-k", action="store_true", help="do not tie k = n/10 when sweeping n")

    m = sub.add_parser("mnist", parents=[glob], help="feature extractors plus linear readout")
    m.add_argument("--data-dir", help="directory with IDX files (default $ASMLEARN_MNIST_DIR)")
    m.add_argument("--limit", type=int, help="class-balanced subsample of train and test")
    m.add_argument("--test-limit", type=int)
    m.add_argument("--extractor", action="append",
                   help="identity, linear, nonlinear, large-area, random-areas, split-areas (repeatable)")
    m.add_argument("--m", type=int, help="feature count")
    m.add_argument("--epochs", type=int)
    m.add_argument("--lr", type=float)
    m.add_argument("--batch", type=int)
    m.add_argument("--penalty", type=float, help="large-area bias, in multiples of the max input")

    r = sub.add_parser("replay", parents=[glob], help="re-run a saved JSON result and compare")
    r.add_argument("result", help="JSON file written by an earlier run")
    return ap


KIND_OF = {"train-stimulus": "stimulus", "four-class": "four-class", "train-halfspace": "halfspace",
           "sweep": "sweep", "mnist": "mnist"}


def overrides_from(args) -> dict:
    g = lambda name: getattr(args, name, None)  # noqa: E731
    o = {"model.seed": g("seed"), "run.trials": g("trials"),
         "model.n": g("n"), "model.k": g("k"), "model.p": g("p"), "model.beta": g("beta"),
         "train.T": g("T"), "train.homeostasis_scope": g("homeostasis_scope"),
         "stimulus.classes": g("classes"), "stimulus.r": g("r"), "stimulus.q": g("q"),
         "stimulus.alpha": g("alpha"), "stimulus.num_test": g("num_test"),
         "halfspace.delta": g("delta"), "halfspace.support": g("support"),
         "halfspace.threshold": g("threshold"), "halfspace.num_test": g("hs_num_test"),
         "sweep.param": g("param"), "sweep.from": g("start"), "sweep.to": g("stop"),
         "sweep.steps": g("steps"), "sweep.values": g("values"), "sweep.base": g("base"),
         "mnist.data_dir": g("data_dir"), "mnist.limit": g("limit"), "mnist.test_limit": g("test_limit"),
         "mnist.extractors": g("extractor"), "mnist.m": g("m"), "mnist.epochs": g("epochs"),
         "mnist.lr": g("lr"), "mnist.batch": g("batch"), "mnist.penalty": g("penalty")}
    if g("no_homeostasis"):
        o["train.homeostasis_between_classes"] = False
    if g("allow_signed"):
        o["halfspace.allow_signed"] = True
    if g("keep_k"):
        o["sweep.tie_k"] = False
    return o


def cmd_bounds(args, say):
    rep = bound_report(args.n, args.k, args.p, args.r, args.beta, q=args.q, alpha=args.alpha,
                       gamma=args.gamma, delta=args.delta)
    text = dump_json(round6(rep.to_dict()))
    if args.out:
        Path(args.out).mkdir(parents=True, exist_ok=True)
        (Path(args.out) / "bounds.json").write_text(text)
    if not args.quiet:
        sys.stdout.write(text)
    return EXIT_OK


def _report(results, say):
    for row in summarize(results):
        say(f"{row['param']}={row['value']}: accuracy mean {row['mean']:.6g} "
            f"min {row['min']:.6g} max {row['max']:.6g} ({row['trials']} trials, {row['failed']} failed)")
    failed = [m for m in results if m.error]
    for m in failed[:5]:
        say(f"trial {m.trial} (seed {m.seed}) failed: {m.error}")
    return EXIT_RUNTIME if failed and len(failed) == len(results) else EXIT_OK


def cmd_experiment(args, say):
    cfg = ExperimentConfig.resolve(KIND_OF[args.command], args.config, overrides_from(args))
    results = run_experiment(cfg, args.out, workers=args.workers)
    if args.out:
        say(f"wrote {', '.join(str(p) for p in output_paths(args.out, cfg.kind).values())}")
    return _report(results, say)


def cmd_replay(args, say):
    src = Path(args.result)
    try:
        doc = json.loads(src.read_text())
        cfg = ExperimentConfig.from_dict(doc["config"])
    except (OSError, ValueError, KeyError) as exc:
        raise ConfigError(f"cannot replay {src}: {exc}") from None
    out = Path(args.out) if args.out else src.parent / "replay"
    if out.resolve() == src.parent.resolve():
        raise ConfigError("replay output directory must differ from the original")
    results = run_experiment(cfg, out, workers=args.workers)
    same = True
    for name, path in output_paths(out, cfg.kind).items():
        orig = src.parent / path.name
        if orig.exists():
            match = orig.read_bytes() == path.read_bytes()
            same &= match
            say(f"{path.name}: {'identical' if match else 'DIFFERS'}")
    code = _report(results, say)
    return code if same else EXIT_RUNTIME


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_CONFIG
    except SystemExit as exc:  # --help
        return EXIT_OK if exc.code in (0, None) else EXIT_CONFIG
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING if args.quiet else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s")
    say = (lambda msg: None) if args.quiet else print
    try:
        if args.command == "bounds":
            return cmd_bounds(args, say)
        if args.command == "replay":
            return cmd_replay(args, say)
        return cmd_experiment(args, say)
    except (ConfigError, BoundDomainError, MnistFormatError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:
        logging.getLogger(__name__).debug("runtime failure", exc_info=True)
        print(f"runtime failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
