"""Command-line front end: ``bucketprev estimate | simulate | prior-check``.

Exit codes: 0 success, 2 unreadable/malformed input, 3 invalid configuration.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import sys
from pathlib import Path

from . import __version__
from .bbb import BBBConfig, bbb_record
from .bootstrap import BootstrapConfig, bootstrap_estimate
from .core import DEFAULT_SEED, BucketConfig, bucketize
from .gp import GPConfig, gp_record, gp_sample, prior_check
from .io import InputError, dumps, interval_record, read_histogram_csv, read_labels_csv, read_scores_csv, write_pi_samples_csv
from .simulate import ExperimentSpec, exponential_bucket_weights, run_experiment

EXIT_INPUT = 2
EXIT_CONFIG = 3


class ConfigError(ValueError):
    pass


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="bucketprev", description="Upper-bound prevalence estimation.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    est = sub.add_parser("estimate", help="estimate prevalence from score and label files")
    src = est.add_mutually_exclusive_group(required=True)
    src.add_argument("--scores", type=Path, help="population CSV with a 'score' column")
    src.add_argument("--histogram", type=Path, help="population CSV with 'bucket_index,count'")
    est.add_argument("--labels", type=Path, required=True, help="CSV with 'score,label[,weight][,day]'")
    est.add_argument("--method", choices=["bbb", "gp", "bootstrap", "all"], default="all")
    est.add_argument("--bbb-k", type=int, default=5, help="BBB bucket count (default 5)")
    est.add_argument("--a", type=float, default=None, help="BBB prior a (default 1/K)")
    est.add_argument("--b", type=float, default=None, help="BBB prior b (default 1/K)")
    _gp_args(est)
    est.add_argument("--resamples", type=int, default=1000)
    est.add_argument("--seed", type=int, default=DEFAULT_SEED)
    est.add_argument("--threads", type=int, default=1, help="worker threads for GP chains")
    est.add_argument("--format", choices=["json", "csv"], default="json")
    est.add_argument("--out", type=Path, help="output file (default stdout)")
    est.add_argument("--pi-samples", type=Path, help="write GP prevalence draws to this CSV")

    sim = sub.add_parser("simulate", help="run a coverage experiment from a JSON spec")
    sim.add_argument("--spec", type=Path, required=True)
    sim.add_argument("--out", type=Path, help="summary CSV (default stdout)")
    sim.add_argument("--trials-out", type=Path, help="per-trial long-format CSV")
    sim.add_argument("--threads", type=int, default=1, help="worker processes for trials")

    pc = sub.add_parser("prior-check", help="distance of the GP prior prevalence to Uniform[0, 1]")
    pc.add_argument("--alphas", type=float, nargs="+", default=[0.25, 0.5, 1.0, 2.0, 4.0])
    pc.add_argument("--gp-k", type=int, default=100)
    pc.add_argument("--rho", type=float, default=0.1)
    pc.add_argument("--rate", type=float, default=10.0, help="exponential score rate for bucket weights")
    pc.add_argument("--histogram", type=Path, help="take bucket weights from this histogram instead")
    pc.add_argument("--samples", type=int, default=4000)
    pc.add_argument("--seed", type=int, default=DEFAULT_SEED)
    pc.add_argument("--out", type=Path)
    return p


def _gp_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--gp-k", type=int, default=100, help="GP bucket count (default 100)")
    p.add_argument("--rho", type=float, default=0.1)
    p.add_argument("--alpha", type=float, default=1.0)
    p.add_argument("--chains", type=int, default=4)
    p.add_argument("--warmup", type=int, default=1000)
    p.add_argument("--iters", type=int, default=1000, help="kept iterations per chain")


def _emit(text: str, out: Path | None) -> None:
    if out is None:
        sys.stdout.write(text)
    else:
        out.write_text(text)


def _configs(args):
    try:
        bbb = BBBConfig(K=args.bbb_k, a=args.a, b=args.b)
        gp = GPConfig(
            K=args.gp_k, rho=args.rho, alpha=args.alpha, chains=args.chains,
            warmup_iters=args.warmup, kept_iters=args.iters, seed=args.seed,
        )
        boot = BootstrapConfig(resamples=args.resamples, seed=args.seed)
        if args.threads < 1:
            raise ValueError("--threads must be >= 1")
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    return bbb, gp, boot


def cmd_estimate(args) -> int:
    bbb_cfg, gp_cfg, boot_cfg = _configs(args)
    population = read_scores_csv(args.scores) if args.scores else read_histogram_csv(args.histogram)
    sample = read_labels_csv(args.labels)
    methods = ["bbb", "gp", "bootstrap"] if args.method == "all" else [args.method]
    results = {}
    try:
        for m in methods:
            if m == "bbb":
                summary = bucketize(population, sample, BucketConfig(bbb_cfg.K))
                results[m] = bbb_record(summary, bbb_cfg)
            elif m == "gp":
                summary = bucketize(population, sample, BucketConfig(gp_cfg.K))
                post = gp_sample(summary, gp_cfg, threads=args.threads)
                results[m] = gp_record(post, summary, gp_cfg)
                if args.pi_samples:
                    write_pi_samples_csv(args.pi_samples, post.samples)
            else:
                post, interval = bootstrap_estimate(sample, boot_cfg)
                results[m] = {**interval_record(interval, post), "resamples": boot_cfg.resamples, "seed": boot_cfg.seed}
    except ValueError as exc:
        # e.g. a histogram whose bin count does not divide into K
        raise ConfigError(str(exc)) from exc

    if args.format == "json":
        _emit(dumps({"n_labeled": len(sample), "n_positive": sample.n_positive, "estimates": results}) + "\n", args.out)
    else:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["method", "point", "lower", "upper", "mean", "variance", "converged"])
        for m, r in results.items():
            w.writerow([m, repr(r["point"]), repr(r["lower"]), repr(r["upper"]),
                        repr(r["mean"]), repr(r["variance"]), int(r.get("converged", True))])
        _emit(buf.getvalue(), args.out)
    return 0


def cmd_simulate(args) -> int:
    try:
        raw = json.loads(args.spec.read_text())
    except OSError as exc:
        raise InputError(args.spec, None, exc.strerror or str(exc)) from exc
    except json.JSONDecodeError as exc:
        raise InputError(args.spec, exc.lineno, f"invalid JSON: {exc.msg}") from exc
    try:
        spec = ExperimentSpec.from_dict(raw)
        if args.threads < 1:
            raise ValueError("--threads must be >= 1")
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"{args.spec}: {exc}") from exc

    def progress(msg):
        print(msg, file=sys.stderr, flush=True)

    report = run_experiment(spec, workers=args.threads, progress=progress)
    _emit(report.summary_csv(), args.out)
    if args.trials_out:
        args.trials_out.write_text(report.trials_csv())
    return 0


def cmd_prior_check(args) -> int:
    try:
        if args.samples < 2:
            raise ValueError("--samples must be >= 2")
        cfg = GPConfig(K=args.gp_k, rho=args.rho)
        if args.histogram:
            counts = read_histogram_csv(args.histogram).histogram(args.gp_k)
            weights = counts / counts.sum()
        else:
            if args.rate <= 0:
                raise ValueError("--rate must be positive")
            weights = exponential_bucket_weights(args.rate, args.gp_k)
        result = prior_check(weights, args.alphas, cfg, args.samples, args.seed)
    except InputError:
        raise
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    _emit(dumps(result) + "\n", args.out)
    return 0


COMMANDS = {"estimate": cmd_estimate, "simulate": cmd_simulate, "prior-check": cmd_prior_check}


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
