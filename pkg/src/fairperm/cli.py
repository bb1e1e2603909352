"""Command-line front end: ``fairperm {test,sweep,simulate,power}``.

Defaults for ``--threads`` and ``--format`` can be set with the environment
variables FAIRPERM_THREADS and FAIRPERM_FORMAT.
"""

from __future__ import annotations

import argparse
import math
import os
import sys

import numpy as np

from .errors import FairPermError
from .inference import min_detectable_difference, permutation_test, sample_size_estimate
from .io import DatasetSchema, ReportDocument, Stopwatch, read_csv
from .metrics import MetricKind, MetricSpec, Studentization
from .resampling import PermutationPlan, Scheme, rng_stream
from .simlab import Procedure, ScenarioId, SimScenario, StudyConfig, nested_subsample, run_calibration_study

TEST_METRICS = ("mean", "fnr", "fpr", "recall", "tnr", "precision", "accuracy", "auc")
SIDED = {"two": "two-sided", "upper": "upper", "lower": "lower"}


def _threads_default() -> int:
    env = os.environ.get("FAIRPERM_THREADS")
    return int(env) if env else (os.cpu_count() or 1)


def _positive_int(text: str) -> int:
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError("must be a positive integer")
    return value


def _unit_interval(text: str) -> float:
    value = float(text)
    if not 0.0 < value < 1.0:
        raise argparse.ArgumentTypeError("must lie strictly between 0 and 1")
    return value


def _group_pair(text: str) -> tuple[str, str]:
    parts = [p.strip() for p in text.split(",")]
    if len(parts) != 2 or not all(parts) or parts[0] == parts[1]:
        raise argparse.ArgumentTypeError("expected two distinct values as A,B")
    return parts[0], parts[1]


def parse_tau_grid(text: str) -> list[float]:
    """``start:stop:step``, both ends included."""
    try:
        start, stop, step = (float(p) for p in text.split(":"))
    except ValueError:
        raise argparse.ArgumentTypeError("expected start:stop:step") from None
    if step <= 0 or stop < start:
        raise argparse.ArgumentTypeError("need step > 0 and stop >= start")
    count = int(math.floor((stop - start) / step + 1e-9)) + 1
    return [round(start + k * step, 10) for k in range(count)]


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--seed", type=int, required=True, help="master seed")
    p.add_argument("--threads", type=_positive_int, default=_threads_default())
    p.add_argument("--format", choices=("json", "tsv"), default=os.environ.get("FAIRPERM_FORMAT", "json"))
    p.add_argument("--output", help="write the report here instead of stdout")
    p.add_argument("--figure", help="also render a PNG figure (needs matplotlib)")


def _add_data(p: argparse.ArgumentParser, score_required: bool = False) -> None:
    p.add_argument("--input", required=True, help="CSV file with a header row")
    p.add_argument("--group-col", required=True)
    p.add_argument("--label-col", required=True)
    p.add_argument("--score-col", required=score_required)
    if not score_required:
        p.add_argument("--pred-col")
    p.add_argument("--groups", type=_group_pair, required=True, help="A,B")
    p.add_argument("--label-encoding", choices=("auto", "01", "pm1"), default="auto")


def _add_test_options(p: argparse.ArgumentParser) -> None:
    p.add_argument("--scheme", choices=("pooled", "within-outcome"), default="pooled")
    p.add_argument("--permutations", type=_positive_int, default=1000)
    p.add_argument("--bootstrap", type=_positive_int, default=200)
    p.add_argument("--studentize", choices=("pooled", "closed-form", "bootstrap", "none"),
                   default="pooled",
                   help="pooled: permutation sd for replicates, bootstrap sd for the observed split; "
                        "bootstrap: n_b resamples per replicate")
    p.add_argument("--alpha", type=_unit_interval, default=0.05)
    p.add_argument("--sided", choices=tuple(SIDED), default="two")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="fairperm", description="Permutation tests of fairness metric gaps.")
    sub = parser.add_subparsers(dest="command", required=True)

    t = sub.add_parser("test", help="test one metric difference between two groups")
    _add_data(t)
    t.add_argument("--metric", choices=TEST_METRICS, required=True)
    t.add_argument("--threshold", type=float, help="classify score > threshold as positive")
    t.add_argument("--exhaustive", action="store_true", help="enumerate every split (small data)")
    _add_test_options(t)
    _add_common(t)

    s = sub.add_parser("sweep", help="equalized-odds gaps and their tests over a threshold grid")
    _add_data(s, score_required=True)
    s.add_argument("--tau-grid", type=parse_tau_grid, default=parse_tau_grid("0:1:0.01"))
    s.add_argument("--sample-size", type=_positive_int, help="test a nested random subsample of this size")
    _add_test_options(s)
    _add_common(s)

    m = sub.add_parser("simulate", help="null rejection rates on simulated data")
    m.add_argument("--scenario", choices=[x.value for x in ScenarioId], required=True)
    m.add_argument("--procedure", default="studentized",
                   help="comma-separated subset of studentized,unstudentized,basic-bootstrap")
    m.add_argument("--sims", type=_positive_int, default=2000)
    m.add_argument("--permutations", type=_positive_int, default=500)
    m.add_argument("--bootstrap", type=_positive_int, default=200)
    m.add_argument("--alpha", type=_unit_interval, default=0.05)
    m.add_argument("--n", type=_positive_int, help="pairs, or records of group A")
    m.add_argument("--n-b", type=_positive_int, help="records of group B")
    m.add_argument("--metric", choices=TEST_METRICS + ("pearson",))
    m.add_argument("--studentize", choices=("closed-form", "bootstrap", "pooled"))
    m.add_argument("--p-plus-a", type=_unit_interval, default=0.8)
    m.add_argument("--p-plus-b", type=_unit_interval, default=0.2)
    m.add_argument("--tpr", type=_unit_interval, default=0.9)
    m.add_argument("--tnr", type=_unit_interval, default=0.9)
    _add_common(m)

    w = sub.add_parser("power", help="group size needed to detect a target difference")
    w.add_argument("--target-difference", type=float, required=True)
    w.add_argument("--metric", choices=("mean", "fnr", "fpr", "recall", "tnr"), required=True)
    w.add_argument("--variance", type=float, help="per-unit variance of the metric's summand")
    w.add_argument("--input")
    w.add_argument("--group-col")
    w.add_argument("--label-col")
    w.add_argument("--score-col")
    w.add_argument("--pred-col")
    w.add_argument("--groups", type=_group_pair)
    w.add_argument("--label-encoding", choices=("auto", "01", "pm1"), default="auto")
    w.add_argument("--threshold", type=float)
    w.add_argument("--format", choices=("json", "tsv"), default=os.environ.get("FAIRPERM_FORMAT", "json"))
    w.add_argument("--output")
    return parser


# --------------------------------------------------------------------------
# Commands
# --------------------------------------------------------------------------


def _schema(args) -> DatasetSchema:
    return DatasetSchema(
        group_col=args.group_col,
        label_col=args.label_col,
        groups=args.groups,
        score_col=args.score_col,
        pred_col=getattr(args, "pred_col", None),
        label_encoding=args.label_encoding,
    )


def _studentization(choice: str, kind: MetricKind) -> Studentization:
    stud = Studentization(choice)
    if stud is Studentization.CLOSED_FORM and not kind.has_closed_form:
        raise FairPermError(f"{kind.value} has no closed-form variance; use bootstrap or pooled")
    return stud


def _test_config(args, kind: MetricKind, tau) -> dict:
    return {
        "metric": kind.value,
        "threshold": tau,
        "scheme": args.scheme,
        "studentization": _studentization(args.studentize, kind).value,
        "permutations": args.permutations,
        "bootstrap": args.bootstrap,
        "alpha": args.alpha,
        "sided": SIDED[args.sided],
        "seed": args.seed,
    }


def cmd_test(args):
    loaded = read_csv(args.input, _schema(args))
    kind = MetricKind(args.metric)
    config = _test_config(args, kind, args.threshold)
    config["exhaustive"] = args.exhaustive
    metric = MetricSpec(kind, tau=args.threshold, studentization=config["studentization"])
    report = permutation_test(
        loaded.sample,
        metric,
        PermutationPlan(Scheme(args.scheme), args.permutations, args.seed),
        args.bootstrap,
        args.alpha,
        sided=config["sided"],
        exhaustive=args.exhaustive,
        threads=args.threads,
        keep_distribution=bool(args.figure),
    )
    payload = {
        "metric": kind.value,
        "scheme": args.scheme,
        "studentization": metric.studentization.value,
        "groups": list(loaded.sample.group_names),
        "report": report.to_dict(),
    }
    return ReportDocument("test", config, payload, loaded.digest()), report


def cmd_sweep(args):
    loaded = read_csv(args.input, _schema(args))
    sample = loaded.sample
    if args.sample_size is not None:
        if args.sample_size > sample.n:
            raise FairPermError(f"sample size {args.sample_size} exceeds the {sample.n} usable rows")
        order = rng_stream(args.seed, 0, "subsample").generator().permutation(sample.n)
        sample = nested_subsample(sample, args.sample_size, order)
    plan = PermutationPlan(Scheme(args.scheme), args.permutations, args.seed)
    sweeps = {}
    for kind in (MetricKind.EQ_ODDS_0, MetricKind.EQ_ODDS_1):
        metric = MetricSpec(kind, studentization=_studentization(args.studentize, kind))
        sweeps[kind] = min_detectable_difference(
            sample, metric, args.tau_grid, plan, args.alpha,
            n_b=args.bootstrap, sided=SIDED[args.sided], threads=args.threads,
        )
    rows, skipped = [], []
    for r0, r1 in zip(sweeps[MetricKind.EQ_ODDS_0].rows, sweeps[MetricKind.EQ_ODDS_1].rows):
        if r0.skipped or r1.skipped:
            skipped.append({"tau": r0.tau, "reason": r0.skipped or r1.skipped})
            continue
        rows.append({
            "tau": r0.tau,
            "delta_0": r0.difference, "delta_1": r1.difference,
            "threshold_0": r0.threshold, "threshold_1": r1.threshold,
            "detected_0": r0.detected, "detected_1": r1.detected,
            "p_value_0": r0.p_value, "p_value_1": r1.p_value,
        })

    def smallest(key, flag):
        hits = [abs(r[key]) for r in rows if r[flag]]
        return min(hits) if hits else None

    config = _test_config(args, MetricKind.EQ_ODDS_0, None)
    del config["metric"], config["threshold"]
    config["tau_grid"] = args.tau_grid
    config["sample_size"] = args.sample_size
    payload = {
        "groups": list(sample.group_names),
        "n": sample.n,
        "rows": rows,
        "skipped": skipped,
        "min_detected_0": smallest("delta_0", "detected_0"),
        "min_detected_1": smallest("delta_1", "detected_1"),
    }
    return ReportDocument("sweep", config, payload, loaded.digest()), payload


def cmd_simulate(args):
    try:
        procedures = [Procedure(p.strip()) for p in args.procedure.split(",")]
    except ValueError as exc:
        raise FairPermError(str(exc)) from None
    scenario = SimScenario(
        ScenarioId(args.scenario), n=args.n, n_sims=args.sims, n_b=args.n_b,
        p_plus_a=args.p_plus_a, p_plus_b=args.p_plus_b, tpr=args.tpr, tnr=args.tnr,
    )
    base = StudyConfig(
        metric=None if args.metric is None else MetricKind(args.metric),
        studentization=None if args.studentize is None else Studentization(args.studentize),
        n_p=args.permutations, n_b=args.bootstrap, alpha=args.alpha,
    )
    for proc in procedures:  # surface invalid combinations before any work
        StudyConfig(proc, base.metric, base.studentization, n_p=base.n_p).resolve(scenario.scenario)
    studies = run_calibration_study(scenario, args.seed, procedures, base, args.threads)
    config = {
        "scenario": scenario.to_dict(),
        "procedures": [p.value for p in procedures],
        "study": {
            p.value: StudyConfig(p, base.metric, base.studentization, n_p=base.n_p, n_b=base.n_b,
                                 alpha=base.alpha).resolve(scenario.scenario).to_dict()
            for p in procedures
        },
        "seed": args.seed,
    }
    payload = {"studies": [s.to_dict() for s in studies.values()]}
    return ReportDocument("simulate", config, payload), studies


def per_unit_variance(sample, kind: MetricKind, tau) -> float:
    """Pooled variance of the metric's per-record summand.

    For the mean this is the sample variance of the scores; for a
    label-conditional rate it is p(1 - p) of the indicator over the
    conditioning class.
    """
    if kind is MetricKind.MEAN:
        if sample.score is None:
            raise FairPermError("the mean metric needs a score column")
        return float(np.var(sample.score, ddof=1))
    pred = sample.predictions(tau)
    cls = sample.positive if kind.conditioning == "pos" else ~sample.positive
    if not cls.any():
        raise FairPermError("no records in the conditioning class")
    hit = {
        MetricKind.FNR: ~pred, MetricKind.RECALL: pred, MetricKind.FPR: pred, MetricKind.TNR: ~pred,
    }[kind][cls]
    p = float(hit.mean())
    return p * (1 - p)


def cmd_power(args, parser):
    kind = MetricKind(args.metric)
    if args.target_difference <= 0:
        parser.error("--target-difference must be positive")
    if args.variance is None and args.input is None:
        parser.error("give --variance or --input")
    digest = None
    if args.variance is not None:
        v, source = args.variance, "given"
    else:
        missing = [f for f in ("group_col", "label_col", "groups") if getattr(args, f) is None]
        if missing:
            parser.error("--input needs " + ", ".join("--" + m.replace("_", "-") for m in missing))
        loaded = read_csv(args.input, _schema(args))
        digest = loaded.digest()
        v, source = per_unit_variance(loaded.sample, kind, args.threshold), "estimated"
    n = sample_size_estimate(args.target_difference, v)
    unit = "records" if kind is MetricKind.MEAN else f"records with label {'1' if kind.conditioning == 'pos' else '0'}"
    payload = {
        "metric": kind.value,
        "target_difference": args.target_difference,
        "per_unit_variance": v,
        "variance_source": source,
        "n_per_group": n,
        "n_total": 2 * n,
        "unit": unit,
        "caveat": "normal approximation with equal group sizes: twice the sd of the "
                  "difference is taken as the rejection threshold",
    }
    config = {"metric": kind.value, "target_difference": args.target_difference,
              "variance": args.variance, "threshold": args.threshold}
    return ReportDocument("power", config, payload, digest), payload


def _emit(doc: ReportDocument, fmt: str, output: str | None) -> None:
    text = doc.to_tsv() if fmt == "tsv" else doc.to_json()
    if output:
        with open(output, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        with Stopwatch() as clock:
            if args.command == "test":
                doc, result = cmd_test(args)
            elif args.command == "sweep":
                doc, result = cmd_sweep(args)
            elif args.command == "simulate":
                doc, result = cmd_simulate(args)
            else:
                doc, result = cmd_power(args, parser)
        doc.duration_s = clock.elapsed
        _emit(doc, args.format, args.output)
        if getattr(args, "figure", None):
            from .plotting import render

            render(args.command, result, args.figure)
    except (FairPermError, ValueError, OSError) as exc:
        print(f"fairperm: error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
