"""``wprcn`` command-line entry point.

Exit status is 0 on success, 2 for bad input (experiment file, ``.ts``
file, flags) and 1 for any other failure.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__
from .awpg import AwpgModel, _as_steps
from .data import TsFormatError, drift_stream, parse_ts, save_ts, synthesize
from .experiment import ConfigError, Experiment, load_experiment
from .metrics import EvalReport
from .model import ABLATIONS, load_trained, stage_one_for, train_wprcn
from .wavelet import DensityState

log = logging.getLogger("wprcn")

THREADS_ENV = "WPRCN_THREADS"


class UsageError(Exception):
    pass


def _positive_int(v: str) -> int:
    n = int(v)
    if n < 1:
        raise argparse.ArgumentTypeError("must be a positive integer")
    return n


def _seed(v: str) -> int:
    n = int(v)
    if not 0 <= n < 2**64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return n


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="experiment file")
    common.add_argument("--out", type=Path, default=Path("out"), help="output directory (default: ./out)")
    common.add_argument("--seed", type=_seed, help="run this seed only, overriding the experiment's seeds")
    common.add_argument(
        "--threads",
        type=_positive_int,
        default=None,
        help=f"parallel independent runs (default: ${THREADS_ENV} or 1)",
    )
    common.add_argument("--ablation", choices=ABLATIONS, help="override the experiment's ablation")
    common.add_argument("-v", "--verbose", action="count", default=0)

    parser = argparse.ArgumentParser(prog="wprcn", description="Wavelet probabilistic recurrent convolutional network")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")

    p = sub.add_parser("parse-check", parents=[common], help="validate .ts files")
    p.add_argument("files", nargs="*", type=Path)
    sub.add_parser("synth", parents=[common], help="write the synthetic splits as .ts files")
    sub.add_parser("train-awpg", parents=[common], help="fit and select the AWPG, save its checkpoint")
    p = sub.add_parser("gen-features", parents=[common], help="dump per-channel probabilistic features")
    p.add_argument("--awpg", type=Path, help="AWPG checkpoint (default: <out>/awpg_seed<seed>.ckpt, else train one)")
    sub.add_parser("train", parents=[common], help="train and evaluate over the experiment's seeds")
    sub.add_parser("eval", parents=[common], help="re-evaluate checkpoints written by train")
    sub.add_parser("ablate", parents=[common], help="run A1, A2, A3 and full over the experiment's seeds")
    p = sub.add_parser("bench-density", parents=[common], help="streaming density throughput and drift tracking")
    p.add_argument("--updates", type=_positive_int, default=2000)
    return parser


# -- helpers -----------------------------------------------------------------------------


def _experiment(args) -> Experiment:
    if args.config is None:
        raise UsageError(f"{args.command} needs --config")
    exp = load_experiment(args.config)
    if args.ablation:
        exp.model = replace(exp.model, ablation=args.ablation)
    if args.seed is not None:
        exp.seeds = (args.seed,)
    return exp


def _threads(args) -> int:
    if args.threads is not None:
        return args.threads
    env = os.environ.get(THREADS_ENV)
    if env is None:
        return 1
    try:
        return _positive_int(env)
    except (ValueError, argparse.ArgumentTypeError):
        raise UsageError(f"{THREADS_ENV} must be a positive integer, got {env!r}") from None


def _write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text, encoding="utf-8")
    log.info("wrote %s", path)


def _run_one(job):
    """Train one (seed, ablation) configuration; top-level so worker processes can pickle it."""
    exp, seed, ablation = job
    train, test = exp.load_data()
    cfg = exp.config_for(seed, ablation)
    log.info("run dataset=%s seed=%d ablation=%s digest=%s", exp.name, seed, cfg.ablation, cfg.digest())
    model = train_wprcn(train, cfg)
    return seed, cfg.ablation, cfg.digest(), model.accuracy(test), model


def _run_jobs(jobs, threads: int):
    if threads > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(_run_one, jobs))
    return [_run_one(job) for job in jobs]


# -- commands ----------------------------------------------------------------------------


def cmd_parse_check(args) -> int:
    files = list(args.files)
    if args.config is not None:
        exp = load_experiment(args.config)
        print(f"{args.config}: ok ({exp.name}, seeds {list(exp.seeds)}, ablation {exp.model.ablation})")
        files += [p for p in (exp.train_path, exp.test_path) if p is not None]
    if not files:
        raise UsageError("parse-check needs .ts files or --config")
    for path in files:
        d = parse_ts(path)
        lengths = sorted(set(int(v) for v in d.lengths))
        span = f"L={lengths[0]}" if len(lengths) == 1 else f"L={lengths[0]}..{lengths[-1]}"
        print(f"{path}: ok ({d.name}: {len(d)} cases, n={d.n}, {span}, {len(d.classes)} classes)")
    return 0


def cmd_synth(args) -> int:
    exp = _experiment(args)
    if exp.synthetic is None:
        raise UsageError("experiment has no data.synthetic.* section")
    train, test = synthesize(exp.synthetic)
    args.out.mkdir(parents=True, exist_ok=True)
    save_ts(train, args.out / f"{exp.name}_TRAIN.ts")
    save_ts(test, args.out / f"{exp.name}_TEST.ts")
    print(f"wrote {args.out / (exp.name + '_TRAIN.ts')} and {args.out / (exp.name + '_TEST.ts')}")
    return 0


def _fit_awpg(exp: Experiment, seed: int) -> list[AwpgModel]:
    train, _ = exp.load_data()
    cfg = exp.config_for(seed)
    return stage_one_for(train, cfg)


def cmd_train_awpg(args) -> int:
    exp = _experiment(args)
    lines = ["seed\tmodel\ttrain_class\thidden\tf1\tbeta"]
    for seed in exp.seeds:
        models = _fit_awpg(exp, seed)
        for i, m in enumerate(models):
            suffix = "" if len(models) == 1 else f"_class{m.config.train_class}"
            path = args.out / f"awpg_seed{seed}{suffix}.ckpt"
            path.parent.mkdir(parents=True, exist_ok=True)
            m.save(path)
            lines.append(f"{seed}\t{i}\t{m.config.train_class}\t{m.config.hidden}\t{m.f1:.6f}\t{m.beta:.9g}")
    text = "\n".join(lines) + "\n"
    _write(args.out / "awpg.tsv", text)
    sys.stdout.write(text)
    return 0


def cmd_gen_features(args) -> int:
    exp = _experiment(args)
    seed = exp.seeds[0]
    path = args.awpg or args.out / f"awpg_seed{seed}.ckpt"
    if path.exists():
        model = AwpgModel.load(path)
    elif args.awpg is not None:
        raise UsageError(f"AWPG checkpoint not found: {path}")
    else:
        model = _fit_awpg(exp, seed)[0]
    train, test = exp.load_data()
    names = [f"m{s.m}_j{s.j0}" for s in model.feature_states]
    for split, d in (("train", train), ("test", test)):
        P = model.generate_features(_as_steps(d.X))
        rows = ["sample\tlabel\tchannel\t" + "\t".join(f"t{t}" for t in range(P.shape[2]))]
        for i in range(len(d)):
            for c, name in enumerate(names):
                vals = "\t".join(f"{v:.9g}" for v in P[i, c])
                rows.append(f"{i}\t{d.classes[d.labels[i]]}\t{name}\t{vals}")
        _write(args.out / f"features_{split}.tsv", "\n".join(rows) + "\n")
    print(f"wrote {len(names)}-channel features for {len(train)} train and {len(test)} test cases to {args.out}")
    return 0


def _report(exp: Experiment, results, order=ABLATIONS) -> EvalReport:
    report = EvalReport()
    for seed, ablation, digest, acc, _ in sorted(results, key=lambda r: (order.index(r[1]), r[0])):
        report.add(exp.name, ablation, seed, acc, digest)
    return report


def cmd_train(args) -> int:
    exp = _experiment(args)
    results = _run_jobs([(exp, s, None) for s in exp.seeds], _threads(args))
    args.out.mkdir(parents=True, exist_ok=True)
    for seed, ablation, _, _, model in results:
        model.save(args.out / f"model_{ablation}_seed{seed}.ckpt")
    report = _report(exp, results)
    _write(args.out / "results.tsv", report.to_tsv())
    _write(args.out / "runs.tsv", report.runs_tsv())
    _write(args.out / "summary.json", report.to_json())
    sys.stdout.write(report.runs_tsv())
    return 0


def cmd_eval(args) -> int:
    exp = _experiment(args)
    train, test = exp.load_data()
    report = EvalReport()
    for seed in exp.seeds:
        cfg = exp.config_for(seed)
        path = args.out / f"model_{cfg.ablation}_seed{seed}.ckpt"
        if not path.exists():
            raise UsageError(f"checkpoint not found: {path} (run `wprcn train` first)")
        model = load_trained(path, cfg, train)
        report.add(exp.name, cfg.ablation, seed, model.accuracy(test), cfg.digest())
    _write(args.out / "eval.tsv", report.runs_tsv())
    sys.stdout.write(report.runs_tsv())
    return 0


def ablation_table(report: EvalReport) -> str:
    seeds = sorted({r.seed for r in report.runs})
    lines = ["method\tmean_accuracy\tstd_accuracy\t" + "\t".join(f"seed{s}" for s in seeds)]
    for method in report.methods:
        by_seed = {r.seed: r.accuracy for r in report.runs if r.method == method}
        accs = np.array([by_seed[s] for s in seeds])
        cells = "\t".join(f"{by_seed[s]:.6f}" for s in seeds)
        lines.append(f"{method}\t{accs.mean():.6f}\t{accs.std():.6f}\t{cells}")
    return "\n".join(lines) + "\n"


def cmd_ablate(args) -> int:
    exp = _experiment(args)
    order = ("a1", "a2", "a3", "full")
    jobs = [(exp, s, a) for a in order for s in exp.seeds]
    results = _run_jobs(jobs, _threads(args))
    report = _report(exp, results, order)
    table = ablation_table(report)
    _write(args.out / "ablation.tsv", table)
    _write(args.out / "ablation_runs.tsv", report.runs_tsv())
    _write(args.out / "ablation_summary.json", report.to_json())
    sys.stdout.write(table)
    return 0


def cmd_bench_density(args) -> int:
    seed = args.seed if args.seed is not None else 0
    rng = np.random.default_rng(seed)
    points = rng.random((args.updates, 2))
    rows = ["m\tj0\tn\tgrid_points\tupdates\tmean_touched\tdense_entries"]
    timing = ["m\tj0\tupdates_per_second"]
    for m in (2, 3, 4):
        for j0 in (1, 2, 3, 4, 5):
            state = DensityState(m, j0, 2)
            touched = 0
            start = time.perf_counter()
            for x in points:
                state.update(x)
                touched += state.last_update_touched
            elapsed = time.perf_counter() - start
            mean = touched / len(points)
            rows.append(f"{m}\t{j0}\t2\t{state.n_points}\t{len(points)}\t{mean:.3f}\t{state.n_points * state.gamma}")
            timing.append(f"{m}\t{j0}\t{len(points) / elapsed:.1f}")
    _write(args.out / "bench_density.tsv", "\n".join(rows) + "\n")
    # wall-clock numbers vary run to run, so they live in their own file
    _write(args.out / "bench_density_timing.tsv", "\n".join(timing) + "\n")

    length, start_step = 3000, 1000
    stream = np.clip(drift_stream(length, start_step, 0.4, 0.05, 0.03, rng), 0, 1)
    state = DensityState(2, 4, 1)
    new_mode = np.array([0.7])
    track = ["t\tx\t" + "\t".join(f"alpha_{a:g}" for a in state.alphas)]
    for t, x in enumerate(stream):
        state.update([x])
        dens = state.density(new_mode)
        track.append(f"{t}\t{x:.9g}\t" + "\t".join(f"{v:.9g}" for v in dens))
    _write(args.out / "drift_tracking.tsv", "\n".join(track) + "\n")
    sys.stdout.write("\n".join(rows) + "\n")
    return 0


COMMANDS = {
    "parse-check": cmd_parse_check,
    "synth": cmd_synth,
    "train-awpg": cmd_train_awpg,
    "gen-features": cmd_gen_features,
    "train": cmd_train,
    "eval": cmd_eval,
    "ablate": cmd_ablate,
    "bench-density": cmd_bench_density,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        return COMMANDS[args.command](args)
    except (ConfigError, TsFormatError, UsageError) as exc:
        print(f"wprcn {args.command}: error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001 - any runtime failure maps to exit 1
        print(f"wprcn {args.command}: failed: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
