"""Command-line entry point.

Exit codes: 0 success, 1 usage error, 2 bad configuration or input file,
3 numerical failure (gradient audit, CTC self-test, diverged training).
"""
from __future__ import annotations

import argparse
import logging
import os
import sys

from . import analysis, checks
from .encoder import EncoderParams, load_config
from .errors import ConfigError, FormatError, TrainingDiverged
from .features import FrontendConfig, MvnStats, extract_features, read_wav
from .serialization import load_params, save_features, save_params
from .train import TOY_CONFIG, SynthTask, TrainConfig, evaluate, train, write_metrics

EXIT_USAGE, EXIT_CONFIG, EXIT_NUMERIC = 1, 2, 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def default_seed() -> int:
    return int(os.environ.get("MVFLSTM_SEED", "0"))


def _table(args) -> int:
    lines = analysis.table1_report(lstm_biases=args.biases)
    print(analysis.table_csv(lines) if args.csv else analysis.render_table(lines), end="" if args.csv else "\n")
    return 0


def _analyze(args) -> int:
    if args.table1:
        return _table(args)
    if not args.config:
        print("analyze: --config is required unless --table1 is given", file=sys.stderr)
        return EXIT_USAGE
    cfg = load_config(args.config)
    report = analysis.count_params(cfg, args.biases)
    if args.baseline:
        report = report.with_baseline(analysis.count_params(load_config(args.baseline), args.biases))
    if args.csv:
        delta = "" if report.delta_pct is None else f"{report.delta_pct:.4f}"
        print(f"id,total,delta_pct\n{os.path.basename(args.config)},{report.total},{delta}")
    else:
        print(f"multi-view output V = {cfg.multi_view_dim}, time-LSTM input = {cfg.tlstm_input_dim}")
        print(report.render())
    return 0


def _features(args) -> int:
    samples, rate = read_wav(args.wav)
    cfg = FrontendConfig(sample_rate=rate, frame_length=args.frame_length, frame_shift=args.frame_shift,
                         fft_bins=args.bins, lfr_stack=args.stack, lfr_subsample=args.subsample)
    stats = MvnStats.load(args.mvn) if args.mvn else None
    x = extract_features(samples, cfg, stats)
    save_features(args.out, x)
    print(f"{args.out}: {x.shape[0]} frames x {x.shape[1]} features")
    return 0


def _gradcheck(args) -> int:
    ok = True
    for seed in range(args.seed, args.seed + args.seeds):
        report = checks.encoder_ctc_gradcheck(seed=seed, tolerance=args.tolerance)
        print(f"seed {seed}: {report}")
        ok &= report.ok
    return 0 if ok else EXIT_NUMERIC


def _ctc_selftest(args) -> int:
    report = checks.ctc_selftest(args.instances, args.completeness, args.seed)
    print(report)
    return 0 if report.ok(args.tolerance) else EXIT_NUMERIC


def _task(args) -> SynthTask:
    return SynthTask(noise=args.noise, seed=args.seed)


def _train(args) -> int:
    cfg = load_config(args.config) if args.config else TOY_CONFIG
    tc = TrainConfig(learning_rate=args.lr, batch_size=args.batch_size, steps=args.steps,
                     warm_start_steps=args.warm_start, precision=args.precision,
                     eval_every=args.eval_every, seed=args.seed)
    try:
        result = train(cfg, tc, _task(args))
    except TrainingDiverged as exc:
        print(f"training diverged: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    if args.metrics:
        write_metrics(args.metrics, result.log)
    if args.out:
        save_params(args.out, result.params.arrays())
    last = result.log[-1]
    print(f"step {last.step} {last.phase} loss {last.loss:.4f} held-out label error rate {result.final_label_error_rate:.4f}")
    return 0


def _eval(args) -> int:
    cfg = load_config(args.config) if args.config else TOY_CONFIG
    params = EncoderParams.zeros(cfg, "float32").assign(load_params(args.params))
    utts = _task(args).heldout(args.utterances)
    ler, loss = evaluate(params.astype("float64"), cfg, utts)
    print(f"utterances {len(utts)} label error rate {ler:.4f} mean CTC loss {loss:.4f}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="mvflstm", description="Multi-view frequency-LSTM encoder toolkit")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def counting(sp):
        sp.add_argument("--biases", type=int, choices=(1, 2), default=1,
                        help="bias vectors per LSTM gate block (2 = separate input/recurrent biases)")
        sp.add_argument("--csv", action="store_true", help="print id,total,delta_pct CSV")

    sp = sub.add_parser("analyze", help="count trainable parameters of a topology")
    sp.add_argument("--config")
    sp.add_argument("--baseline")
    sp.add_argument("--table1", action="store_true", help="recount the 13-row reference topology table")
    counting(sp)
    sp.set_defaults(func=_analyze)

    sp = sub.add_parser("table1", help="recount the 13 reference topologies")
    counting(sp)
    sp.set_defaults(func=_table)

    sp = sub.add_parser("features", help="16-bit mono WAV -> FEA1 feature file")
    sp.add_argument("wav")
    sp.add_argument("out")
    d = FrontendConfig()
    sp.add_argument("--frame-length", type=int, default=d.frame_length)
    sp.add_argument("--frame-shift", type=int, default=d.frame_shift)
    sp.add_argument("--bins", type=int, default=d.fft_bins)
    sp.add_argument("--stack", type=int, default=d.lfr_stack)
    sp.add_argument("--subsample", type=int, default=d.lfr_subsample)
    sp.add_argument("--mvn", help="JSON statistics to normalise with")
    sp.set_defaults(func=_features)

    sp = sub.add_parser("gradcheck", help="finite-difference audit of encoder + CTC gradients")
    sp.add_argument("--seed", type=int, default=default_seed())
    sp.add_argument("--seeds", type=int, default=1)
    sp.add_argument("--tolerance", type=float, default=1e-4)
    sp.set_defaults(func=_gradcheck)

    sp = sub.add_parser("ctc-selftest", help="CTC loss vs brute-force enumeration")
    sp.add_argument("--instances", type=int, default=1000)
    sp.add_argument("--completeness", type=int, default=100)
    sp.add_argument("--seed", type=int, default=default_seed())
    sp.add_argument("--tolerance", type=float, default=1e-9)
    sp.set_defaults(func=_ctc_selftest)

    t = TrainConfig()
    for name, func in (("train", _train), ("eval", _eval)):
        sp = sub.add_parser(name, help="train on the synthetic task" if name == "train" else
                            "greedy-decode label error rate on held-out synthetic data")
        sp.add_argument("--config", help="topology file (default: built-in toy topology)")
        sp.add_argument("--seed", type=int, default=default_seed())
        sp.add_argument("--noise", type=float, default=SynthTask().noise)
        sp.set_defaults(func=func)
        if name == "train":
            sp.add_argument("--steps", type=int, default=t.steps)
            sp.add_argument("--warm-start", type=int, default=t.warm_start_steps)
            sp.add_argument("--lr", type=float, default=t.learning_rate)
            sp.add_argument("--batch-size", type=int, default=t.batch_size)
            sp.add_argument("--precision", choices=("float32", "float64"), default=t.precision)
            sp.add_argument("--eval-every", type=int, default=t.eval_every)
            sp.add_argument("--out", help="write parameters (MVF1)")
            sp.add_argument("--metrics", help="write step,phase,loss,label_error_rate CSV")
        else:
            sp.add_argument("--params", required=True)
            sp.add_argument("--utterances", type=int, default=t.eval_size)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        return args.func(args)
    except (ConfigError, FormatError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
