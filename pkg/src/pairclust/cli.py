"""Command-line interface: generate, cluster, evaluate, benchmark.

Machine-readable output goes to stdout (or files named by --out);
diagnostics go to stderr.  Exit codes: 0 on success, 2 on usage or input
errors.  All commands are deterministic under a fixed --seed; the THREADS
environment variable (positive integer, default 1) caps worker processes
without changing any result.  Wall-time (ms) columns are the only
non-reproducible output fields.
"""

from __future__ import annotations

import argparse
import os
import sys
from dataclasses import dataclass

import numpy as np

from . import fileio
from .bench import BenchmarkConfig, benchmark_rows, render_csv
from .core import AnnotationGraphs, ContractViolation, Dataset, PriorConfig
from .datagen import ExpertSpec, MixtureSpec, generate_annotation_draws, generate_mixture
from .fileio import FileFormatError
from .metrics import centroid_index, kl_mixtures_matched, nmi
from .solver import SolverConfig, run_repetitions


class UsageError(Exception):
    """Invalid flag combination or input content; maps to exit code 2."""


@dataclass(eq=False)
class RepetitionRecord:
    repetition: int
    objective: float
    nmi: float | None
    kl: float | None
    ci: int | None
    ms: float


@dataclass(eq=False)
class RunReport:
    """Per-repetition outcomes plus the index of the best record."""

    records: list
    best_index: int

    @classmethod
    def from_outcomes(cls, outcomes, truth_labels=None, true_params=None) -> "RunReport":
        records = []
        for outcome in outcomes:
            sol = outcome.solution
            k = sol.n_clusters
            score_nmi = score_kl = score_ci = None
            if truth_labels is not None:
                score_nmi = nmi(sol.assignment.labels, truth_labels)
            if true_params is not None:
                true_means, true_vars = true_params
                weights = np.full(k, 1.0 / k)
                fitted = (sol.gaussians.means, sol.gaussians.variances, weights)
                score_kl = kl_mixtures_matched(
                    fitted, (true_means, true_vars, weights))
                score_ci = centroid_index(sol.gaussians.means, true_means)
            records.append(RepetitionRecord(
                outcome.repetition, sol.objective,
                score_nmi, score_kl, score_ci, outcome.wall_ms))
        best = 0
        for i, record in enumerate(records):
            if record.objective > records[best].objective:
                best = i
        return cls(records, best)

    def render_csv(self) -> str:
        def fmt(record, tag) -> str:
            cells = [
                tag, repr(record.objective),
                "" if record.nmi is None else f"{record.nmi:.6f}",
                "" if record.kl is None else f"{record.kl:.6f}",
                "" if record.ci is None else str(record.ci),
                f"{record.ms:.3f}",
            ]
            return ",".join(cells)

        lines = ["repetition,objective,nmi,kl,ci,ms"]
        lines.extend(fmt(r, str(r.repetition)) for r in self.records)
        lines.append(fmt(self.records[self.best_index], "best"))
        return "\n".join(lines) + "\n"


def _threads_from_env() -> int:
    raw = os.environ.get("THREADS")
    if raw is None:
        return 1
    try:
        value = int(raw)
    except ValueError:
        raise UsageError(f"THREADS must be a positive integer, got {raw!r}") from None
    if value < 1:
        raise UsageError(f"THREADS must be a positive integer, got {raw!r}")
    return value


def _derived_seed(*entropy: int) -> int:
    return int(np.random.SeedSequence(list(entropy)).generate_state(1, np.uint64)[0])


def _float_list(text: str):
    try:
        values = tuple(float(part) for part in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"invalid list: {text!r}") from None
    if not values:
        raise argparse.ArgumentTypeError("empty list")
    return values


def cmd_generate(args, workers: int) -> int:
    m = args.n if args.m is None else args.m
    mixture_spec = MixtureSpec(args.n, args.d, args.k,
                               seed=_derived_seed(args.seed, 0))
    dataset, truth = generate_mixture(mixture_spec)
    draws = generate_annotation_draws(
        truth, ExpertSpec(args.p, m, seed=_derived_seed(args.seed, 1)))
    fileio.write_features(f"{args.out}.features.csv", dataset.samples)
    fileio.write_labels(f"{args.out}.labels.txt", truth.labels)
    fileio.write_annotations(f"{args.out}.annotations.txt", draws)
    fileio.write_params(f"{args.out}.params.csv", truth.true_means,
                        truth.true_variances)
    return 0


def cmd_cluster(args, workers: int) -> int:
    dataset = Dataset(fileio.read_features(args.data))
    if args.k > dataset.n_samples:
        raise UsageError(f"--k {args.k} exceeds the {dataset.n_samples} samples")
    if args.annotations is not None:
        graphs = fileio.read_annotations(args.annotations, dataset.n_samples)
    else:
        graphs = AnnotationGraphs.empty(dataset.n_samples)
    prior_config = PriorConfig()
    if args.priors is not None:
        if graphs.m_total == 0:
            print("warning: no annotations; prior mode disabled", file=sys.stderr)
        else:
            prior_config = PriorConfig(True, args.priors)
    truth_labels = None
    if args.truth is not None:
        truth_labels = fileio.read_labels(args.truth)
        if truth_labels.shape[0] != dataset.n_samples:
            raise UsageError("--truth length does not match --data")
    true_params = None
    if args.true_params is not None:
        true_params = fileio.read_params(args.true_params)
        if true_params[0].shape != (args.k, dataset.n_features):
            raise UsageError("--true-params shape does not match --k and --data")
    config = SolverConfig(
        n_clusters=args.k, pi1=args.pi1, pi2=args.pi2,
        max_iterations=args.iters, repetitions=args.reps, seed=args.seed,
        prior_config=prior_config)
    outcomes = run_repetitions(dataset, graphs, config, workers)
    report = RunReport.from_outcomes(outcomes, truth_labels, true_params)
    best = report.records[report.best_index]
    labels = outcomes[report.best_index].solution.assignment.labels
    fileio.write_labels(f"{args.out}.assign.txt", labels)
    fileio.atomic_write_text(f"{args.out}.report.csv", report.render_csv())
    print(best.objective)
    return 0


def cmd_evaluate(args, workers: int) -> int:
    pred = fileio.read_labels(args.pred)
    truth = fileio.read_labels(args.truth)
    if pred.shape[0] != truth.shape[0]:
        raise UsageError(
            f"prediction has {pred.shape[0]} labels, truth has {truth.shape[0]}")
    if (args.pred_params is None) != (args.true_params is None):
        raise UsageError("--pred-params and --true-params must be given together")
    print(f"nmi={nmi(pred, truth):.6f}")
    if args.pred_params is not None:
        pred_means, pred_vars = fileio.read_params(args.pred_params)
        true_means, true_vars = fileio.read_params(args.true_params)
        if pred_means.shape[0] != true_means.shape[0]:
            raise UsageError("parameter files disagree on the cluster count")
        k = pred_means.shape[0]
        weights = np.full(k, 1.0 / k)
        kl = kl_mixtures_matched((pred_means, pred_vars, weights),
                                 (true_means, true_vars, weights))
        print(f"kl={kl:.6f}")
        print(f"ci={centroid_index(pred_means, true_means)}")
    return 0


def cmd_benchmark(args, workers: int) -> int:
    config = BenchmarkConfig(
        datasets=args.datasets, n_samples=args.n, n_features=args.d,
        n_clusters=args.k, p_list=args.p_list, m_multipliers=args.m_list,
        seed=args.seed, pi1=args.pi1, pi2=args.pi2,
        max_iterations=args.iters, repetitions=args.reps)
    csv_text = render_csv(benchmark_rows(config, workers))
    if args.out is None:
        sys.stdout.write(csv_text)
    else:
        fileio.atomic_write_text(args.out, csv_text)
    return 0


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="pairclust",
        description="Semi-supervised clustering from noisy pairwise annotations.")
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("generate", help="write a synthetic benchmark instance")
    gen.add_argument("--n", type=int, default=200, help="samples (default 200)")
    gen.add_argument("--d", type=int, default=10, help="features (default 10)")
    gen.add_argument("--k", type=int, default=4, help="clusters (default 4)")
    gen.add_argument("--p", type=float, default=0.9,
                     help="expert accuracy (default 0.9)")
    gen.add_argument("--m", type=int, default=None,
                     help="annotation count (default: equal to --n)")
    gen.add_argument("--seed", type=int, default=0)
    gen.add_argument("--out", default="synthetic", help="output file prefix")
    gen.set_defaults(handler=cmd_generate)

    clu = sub.add_parser("cluster", help="fit the model to a dataset")
    clu.add_argument("--data", required=True, help="features.csv to cluster")
    clu.add_argument("--k", type=int, required=True, help="cluster count")
    clu.add_argument("--annotations", default=None, help="annotations.txt")
    clu.add_argument("--priors", type=float, default=None, metavar="P",
                     help="enable expert-accuracy priors with accuracy P")
    clu.add_argument("--pi1", type=int, default=10)
    clu.add_argument("--pi2", type=int, default=20)
    clu.add_argument("--iters", type=int, default=500)
    clu.add_argument("--reps", type=int, default=50)
    clu.add_argument("--seed", type=int, default=0)
    clu.add_argument("--truth", default=None,
                     help="true labels; adds NMI to the report")
    clu.add_argument("--true-params", default=None,
                     help="true params.csv; adds KL and CI to the report")
    clu.add_argument("--out", default="cluster", help="output file prefix")
    clu.set_defaults(handler=cmd_cluster)

    ev = sub.add_parser("evaluate", help="score predictions against truth")
    ev.add_argument("--pred", required=True, help="predicted labels file")
    ev.add_argument("--truth", required=True, help="true labels file")
    ev.add_argument("--pred-params", default=None, help="fitted params.csv")
    ev.add_argument("--true-params", default=None, help="true params.csv")
    ev.set_defaults(handler=cmd_evaluate)

    ben = sub.add_parser("benchmark", help="run the synthetic sweep, emit CSV")
    ben.add_argument("--datasets", type=int, default=10)
    ben.add_argument("--n", type=int, default=200)
    ben.add_argument("--d", type=int, default=10)
    ben.add_argument("--k", type=int, default=2)
    ben.add_argument("--p-list", type=_float_list, default=(0.8, 0.9, 1.0),
                     help="comma-separated expert accuracies")
    ben.add_argument("--m-list", type=_float_list,
                     default=(0.0, 0.5, 1.0, 1.5, 2.0, 2.5, 3.0, 3.5, 4.0),
                     help="annotation counts as multiples of --n")
    ben.add_argument("--seed", type=int, default=0)
    ben.add_argument("--pi1", type=int, default=10)
    ben.add_argument("--pi2", type=int, default=20)
    ben.add_argument("--iters", type=int, default=500)
    ben.add_argument("--reps", type=int, default=50)
    ben.add_argument("--out", default=None, help="CSV path (default: stdout)")
    ben.set_defaults(handler=cmd_benchmark)
    return parser


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        workers = _threads_from_env()
        return args.handler(args, workers)
    except (FileFormatError, ContractViolation, UsageError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
