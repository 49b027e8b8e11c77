"""Synthetic populations and the repeated-trial coverage experiment.

A population is M scores from an exponential distribution truncated to [0, 1]
together with a calibration curve f_h giving P(violating | score).  Each trial
draws a weighted sample of size N without replacement, labels it with
Bernoulli(f_h(score)) and runs every estimator on the same sample.
"""

from __future__ import annotations

import csv
import io
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from functools import cached_property
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.optimize import bisect
from scipy.special import expit

from .bbb import BBBConfig, bbb_posterior, bbb_prevalence
from .bootstrap import BootstrapConfig, bootstrap_estimate
from .core import (
    DEFAULT_SEED,
    BucketConfig,
    IntervalEstimate,
    LabeledSample,
    ScoredPopulation,
    bucketize,
    interval_from_moments,
    interval_from_samples,
)
from .gp import GPConfig, gp_sample

METHODS = ("bbb", "gp", "bootstrap")
CURVE_FAMILIES = ("constant", "piecewise-linear", "logistic-drop")
_LOGISTIC_DROP_DEFAULTS = {"slope": 8.0, "center": 0.6, "drop": 0.6, "drop_at": 0.9, "drop_width": 0.03}


@dataclass(frozen=True)
class CalibrationCurve:
    """P(label = 1 | score) as ``scale * base(score)`` clipped to [0, 1].

    Families and their ``params``:

    * ``constant``: ``value``
    * ``piecewise-linear``: ``knots`` (increasing scores) and ``values``
    * ``logistic-drop``: a logistic rise ``expit(slope * (s - center))``
      multiplied by ``1 - drop * expit((s - drop_at) / drop_width)``, which
      lowers the curve at the top of the score range.  Missing parameters
      take the defaults of :meth:`logistic_drop`.
    """

    family: str
    params: dict = field(default_factory=dict)
    scale: float = 1.0

    def __post_init__(self):
        if self.family not in CURVE_FAMILIES:
            raise ValueError(f"unknown curve family {self.family!r}")
        if self.scale < 0:
            raise ValueError("curve scale must be non-negative")
        if self.family == "logistic-drop":
            unknown = set(self.params) - set(_LOGISTIC_DROP_DEFAULTS)
            if unknown:
                raise ValueError(f"unknown logistic-drop parameter(s): {', '.join(sorted(unknown))}")
            object.__setattr__(self, "params", {**_LOGISTIC_DROP_DEFAULTS, **self.params})
        self.base(np.array([0.0, 1.0]))

    @classmethod
    def constant(cls, value: float) -> "CalibrationCurve":
        return cls("constant", {"value": float(value)})

    @classmethod
    def piecewise_linear(cls, knots, values) -> "CalibrationCurve":
        return cls("piecewise-linear", {"knots": [float(k) for k in knots], "values": [float(v) for v in values]})

    @classmethod
    def logistic_drop(
        cls, slope=8.0, center=0.6, drop=0.6, drop_at=0.9, drop_width=0.03
    ) -> "CalibrationCurve":
        return cls(
            "logistic-drop",
            {"slope": slope, "center": center, "drop": drop, "drop_at": drop_at, "drop_width": drop_width},
        )

    def base(self, s) -> np.ndarray:
        s = np.asarray(s, dtype=float)
        p = self.params
        if self.family == "constant":
            return np.full_like(s, p["value"])
        if self.family == "piecewise-linear":
            knots, values = np.asarray(p["knots"], float), np.asarray(p["values"], float)
            if knots.size < 2 or knots.size != values.size or np.any(np.diff(knots) <= 0):
                raise ValueError("piecewise-linear needs >= 2 increasing knots with matching values")
            return np.interp(s, knots, values)
        rise = expit(p["slope"] * (s - p["center"]))
        return rise * (1.0 - p["drop"] * expit((s - p["drop_at"]) / p["drop_width"]))

    def __call__(self, s) -> np.ndarray:
        return np.clip(self.scale * self.base(s), 0.0, 1.0)

    def scaled(self, scale: float) -> "CalibrationCurve":
        return CalibrationCurve(self.family, dict(self.params), float(scale))

    def to_dict(self) -> dict:
        return {"family": self.family, "params": dict(self.params), "scale": self.scale}

    @classmethod
    def from_dict(cls, d: dict) -> "CalibrationCurve":
        _no_extra(d, {"family", "params", "scale"}, "curve")
        return cls(d["family"], dict(d.get("params", {})), float(d.get("scale", 1.0)))


def truncated_exponential_scores(M: int, rate: float, rng: np.random.Generator) -> np.ndarray:
    """Inverse-CDF draws from density proportional to exp(-rate * s) on [0, 1]."""
    if rate <= 0:
        raise ValueError("rate must be positive")
    u = rng.random(M)
    return np.clip(-np.log1p(u * np.expm1(-rate)) / rate, 0.0, 1.0)


def exponential_bucket_weights(rate: float, K: int) -> np.ndarray:
    """Exact bucket probabilities of the truncated exponential score density."""
    e = np.exp(-rate * np.arange(K + 1) / K)
    w = (e[:-1] - e[1:]) / (1.0 - e[-1])
    return w / w.sum()


def scale_curve_to_prevalence(curve: CalibrationCurve, scores, target: float) -> CalibrationCurve:
    """Bisection on the curve's multiplicative scale so mean f_h(scores) hits ``target``."""
    base = curve.base(scores)
    if not 0.0 < target < 1.0:
        raise ValueError("target prevalence must be in (0, 1)")

    def excess(c):
        return float(np.clip(c * base, 0.0, 1.0).mean()) - target

    hi = 1.0
    while excess(hi) < 0:
        hi *= 2.0
        if hi > 1e12:
            raise ValueError("curve cannot reach the target prevalence")
    c = bisect(excess, 0.0, hi, xtol=1e-15, rtol=1e-12, maxiter=500)
    return curve.scaled(c)


@dataclass(frozen=True)
class PopulationSpec:
    curve: CalibrationCurve
    M: int = 1_000_000
    rate: float = 10.0
    seed: int = DEFAULT_SEED
    target_prevalence: Optional[float] = None

    def __post_init__(self):
        if self.M < 1:
            raise ValueError("population size M must be >= 1")
        if self.rate <= 0:
            raise ValueError("rate must be positive")

    def to_dict(self) -> dict:
        return {
            "M": self.M,
            "rate": self.rate,
            "seed": self.seed,
            "target_prevalence": self.target_prevalence,
            "curve": self.curve.to_dict(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "PopulationSpec":
        _no_extra(d, {"M", "rate", "seed", "target_prevalence", "curve"}, "population")
        return cls(
            curve=CalibrationCurve.from_dict(d["curve"]),
            M=int(d.get("M", 1_000_000)),
            rate=float(d.get("rate", 10.0)),
            seed=int(d.get("seed", DEFAULT_SEED)),
            target_prevalence=d.get("target_prevalence"),
        )


@dataclass(frozen=True)
class SyntheticPopulation:
    population: ScoredPopulation
    curve: CalibrationCurve
    ground_truth: float

    @property
    def scores(self) -> np.ndarray:
        return self.population.scores

    @cached_property
    def violation_probability(self) -> np.ndarray:
        return self.curve(self.population.scores)

    def __iter__(self):
        # unpacks as (population, ground_truth)
        return iter((self.population, self.ground_truth))


def generate_population(spec: PopulationSpec) -> SyntheticPopulation:
    """Scores plus ground-truth prevalence mean(f_h(scores)).

    With ``target_prevalence`` set, the curve is rescaled first so the
    ground truth matches it.
    """
    rng = np.random.default_rng(spec.seed)
    scores = truncated_exponential_scores(spec.M, spec.rate, rng)
    curve = spec.curve
    if spec.target_prevalence is not None:
        curve = scale_curve_to_prevalence(curve, scores, float(spec.target_prevalence))
    pop = ScoredPopulation.from_scores(scores)
    return SyntheticPopulation(pop, curve, float(curve(pop.scores).mean()))


@dataclass(frozen=True)
class SamplingStrategy:
    """Inclusion probability proportional to exp(tilt * score); tilt 0 is simple random sampling."""

    tilt: float = 3.0

    def __post_init__(self):
        if self.tilt < 0:
            raise ValueError("tilt must be non-negative")

    def inclusion_probabilities(self, scores, n: int) -> np.ndarray:
        """First-order inclusion probabilities summing to n, capped at 1."""
        scores = np.asarray(scores, dtype=float)
        M = scores.size
        if not 1 <= n <= M:
            raise ValueError(f"sample size {n} must be in [1, {M}]")
        size = np.exp(self.tilt * (scores - scores.max()))
        pi = np.zeros(M)
        free = np.ones(M, dtype=bool)
        remaining = float(n)
        while True:
            pi[free] = remaining * size[free] / size[free].sum()
            over = free & (pi >= 1.0)
            if not over.any():
                return pi
            pi[over] = 1.0
            free &= ~over
            remaining = n - float((~free).sum())
            if remaining <= 0 or not free.any():
                pi[free] = 0.0
                return pi


def systematic_pps(pi: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Indices of a fixed-size systematic PPS sample over a random ordering.

    Unit i is included with probability exactly ``pi[i]``; the sample size is
    round(sum(pi)).
    """
    n = int(round(pi.sum()))
    order = rng.permutation(pi.size)
    cum = np.cumsum(pi[order])
    cum *= n / cum[-1]
    points = rng.random() + np.arange(n)
    pos = np.minimum(np.searchsorted(cum, points, side="left"), pi.size - 1)
    return order[pos]


def draw_sample(
    synth: SyntheticPopulation,
    strategy: SamplingStrategy,
    n: int,
    seed,
    inclusion: Optional[np.ndarray] = None,
) -> LabeledSample:
    """Weighted sample of n items without replacement, labelled from the curve.

    ``seed`` may be an int, SeedSequence or Generator.  Inclusion weights are
    (1 / inclusion probability) * n / M, so they average about one.
    """
    M = synth.population.size
    if n > M:
        raise ValueError(f"sample size {n} exceeds population size {M}")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    pi = strategy.inclusion_probabilities(synth.scores, n) if inclusion is None else inclusion
    idx = systematic_pps(pi, rng)
    labels = rng.random(idx.size) < synth.violation_probability[idx]
    return LabeledSample(synth.scores[idx], labels.astype(np.int8), (n / M) / pi[idx])


# -- experiment ---------------------------------------------------------------


def _no_extra(d: dict, allowed: set, where: str) -> None:
    if not isinstance(d, dict):
        raise ValueError(f"{where} must be a JSON object")
    extra = set(d) - allowed
    if extra:
        raise ValueError(f"unknown key(s) in {where}: {', '.join(sorted(extra))}")


def _config_from(cls, d: Optional[dict], where: str):
    d = d or {}
    _no_extra(d, set(cls.__dataclass_fields__), where)
    return cls(**d)


@dataclass(frozen=True)
class ExperimentSpec:
    population: PopulationSpec
    strategy: SamplingStrategy = SamplingStrategy()
    n_grid: tuple = (10_000, 20_000, 30_000, 50_000)
    trials: int = 1000
    methods: tuple = METHODS
    seed: int = DEFAULT_SEED
    bbb: BBBConfig = BBBConfig()
    gp: GPConfig = GPConfig()
    bootstrap: BootstrapConfig = BootstrapConfig()

    def __post_init__(self):
        object.__setattr__(self, "n_grid", tuple(int(n) for n in self.n_grid))
        object.__setattr__(self, "methods", tuple(self.methods))
        if self.trials < 1:
            raise ValueError("trials must be >= 1")
        if not self.n_grid or any(n < 1 or n > self.population.M for n in self.n_grid):
            raise ValueError("every N in n_grid must be in [1, M]")
        if not self.methods or any(m not in METHODS for m in self.methods):
            raise ValueError(f"methods must be drawn from {METHODS}")

    def to_dict(self) -> dict:
        return {
            "population": self.population.to_dict(),
            "strategy": asdict(self.strategy),
            "n_grid": list(self.n_grid),
            "trials": self.trials,
            "methods": list(self.methods),
            "seed": self.seed,
            "bbb": asdict(self.bbb),
            "gp": asdict(self.gp),
            "bootstrap": asdict(self.bootstrap),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentSpec":
        _no_extra(d, set(cls.__dataclass_fields__), "experiment spec")
        if "population" not in d:
            raise ValueError("experiment spec needs a population")
        kwargs = {"population": PopulationSpec.from_dict(d["population"])}
        for key in ("n_grid", "methods"):
            if key in d:
                kwargs[key] = tuple(d[key])
        for key in ("trials", "seed"):
            if key in d:
                kwargs[key] = int(d[key])
        kwargs["strategy"] = _config_from(SamplingStrategy, d.get("strategy"), "strategy")
        kwargs["bbb"] = _config_from(BBBConfig, d.get("bbb"), "bbb")
        kwargs["gp"] = _config_from(GPConfig, d.get("gp"), "gp")
        kwargs["bootstrap"] = _config_from(BootstrapConfig, d.get("bootstrap"), "bootstrap")
        return cls(**kwargs)


def low_prevalence_spec(
    n_grid: Sequence[int] = (5_000, 10_000, 20_000, 30_000, 50_000),
    trials: int = 200,
    seed: int = DEFAULT_SEED,
) -> ExperimentSpec:
    """Desk-scale policy: M = 10^6, rate 10, logistic curve with a high-end drop at pi_gt = 3e-4."""
    return ExperimentSpec(
        population=PopulationSpec(
            curve=CalibrationCurve.logistic_drop(), M=1_000_000, rate=10.0, seed=seed, target_prevalence=3e-4
        ),
        strategy=SamplingStrategy(tilt=3.0),
        n_grid=tuple(n_grid),
        trials=trials,
        seed=seed,
    )


@dataclass(frozen=True)
class TrialRecord:
    method: str
    N: int
    trial: int
    point: float = math.nan
    lower: float = math.nan
    upper: float = math.nan
    converged: bool = True
    error: str = ""

    @property
    def failed(self) -> bool:
        return bool(self.error)

    @property
    def ci_size(self) -> float:
        return self.upper - self.lower

    def wrong_ci(self, truth: float) -> int:
        return int(not (self.lower < truth < self.upper))

    def wrong_upper(self, truth: float) -> int:
        return int(truth > self.upper)


@dataclass(frozen=True)
class MethodSummary:
    method: str
    N: int
    trials: int
    avg_ci_size: float
    ci_size_se: float
    wrong_ci_rate: float
    wrong_upper_rate: float
    failures: int


SUMMARY_COLUMNS = ["method", "N", "trials", "avg_ci_size", "wrong_ci_rate", "wrong_upper_rate", "failures"]
TRIAL_COLUMNS = [
    "method", "N", "trial", "point", "lower", "upper",
    "ci_size", "wrong_ci", "wrong_upper", "converged", "error",
]


@dataclass
class ExperimentReport:
    ground_truth: float
    records: list

    def summaries(self) -> list[MethodSummary]:
        groups: dict = {}
        for r in self.records:
            groups.setdefault((r.method, r.N), []).append(r)
        out = []
        for (method, N), recs in groups.items():
            ok = [r for r in recs if not r.failed]
            sizes = np.array([r.ci_size for r in ok])
            out.append(
                MethodSummary(
                    method=method,
                    N=N,
                    trials=len(ok),
                    avg_ci_size=float(sizes.mean()) if ok else math.nan,
                    ci_size_se=float(sizes.std(ddof=1) / math.sqrt(len(ok))) if len(ok) > 1 else math.nan,
                    wrong_ci_rate=float(np.mean([r.wrong_ci(self.ground_truth) for r in ok])) if ok else math.nan,
                    wrong_upper_rate=(
                        float(np.mean([r.wrong_upper(self.ground_truth) for r in ok])) if ok else math.nan
                    ),
                    failures=len(recs) - len(ok),
                )
            )
        return out

    def summary(self, method: str, N: int) -> MethodSummary:
        for s in self.summaries():
            if s.method == method and s.N == N:
                return s
        raise KeyError((method, N))

    def summary_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(SUMMARY_COLUMNS)
        for s in self.summaries():
            w.writerow([s.method, s.N, s.trials, repr(s.avg_ci_size), repr(s.wrong_ci_rate),
                        repr(s.wrong_upper_rate), s.failures])
        return buf.getvalue()

    def trials_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(TRIAL_COLUMNS)
        for r in self.records:
            failed = r.failed
            w.writerow([
                r.method, r.N, r.trial, repr(r.point), repr(r.lower), repr(r.upper),
                "" if failed else repr(r.ci_size),
                "" if failed else r.wrong_ci(self.ground_truth),
                "" if failed else r.wrong_upper(self.ground_truth),
                int(r.converged), r.error,
            ])
        return buf.getvalue()


def trial_seeds(seed: int, N: int, trial: int):
    """(sample generator, {method: seed}) for one trial; every method sees the same sample."""
    ss = np.random.SeedSequence([seed, N, trial])
    sample_ss, method_ss = ss.spawn(2)
    method_seeds = method_ss.generate_state(len(METHODS), np.uint64)
    return np.random.default_rng(sample_ss), {m: int(s) for m, s in zip(METHODS, method_seeds)}


def estimate_method(
    method: str, population_by_K: dict, sample: LabeledSample, spec: ExperimentSpec, seed: int
) -> tuple[IntervalEstimate, bool]:
    """(interval, converged) for one method; ``population_by_K`` maps K to a histogram population."""
    if method == "bbb":
        summary = bucketize(population_by_K[spec.bbb.K], sample, BucketConfig(spec.bbb.K))
        post = bbb_prevalence(bbb_posterior(summary, spec.bbb), summary)
        return interval_from_moments(post.mean, post.variance), True
    if method == "gp":
        cfg = replace(spec.gp, seed=seed)
        summary = bucketize(population_by_K[cfg.K], sample, BucketConfig(cfg.K))
        post = gp_sample(summary, cfg)
        return interval_from_samples(post.samples), post.converged
    if method == "bootstrap":
        cfg = replace(spec.bootstrap, seed=seed)
        return bootstrap_estimate(sample, cfg)[1], True
    raise ValueError(f"unknown method {method!r}")


class _TrialContext:
    def __init__(self, spec: ExperimentSpec, synth: SyntheticPopulation):
        self.spec = spec
        self.synth = synth
        Ks = {spec.bbb.K, spec.gp.K}
        self.population_by_K = {
            K: ScoredPopulation.from_histogram(synth.population.histogram(K)) for K in Ks
        }
        self._inclusion: dict = {}

    def inclusion(self, N: int) -> np.ndarray:
        if N not in self._inclusion:
            self._inclusion[N] = self.spec.strategy.inclusion_probabilities(self.synth.scores, N)
        return self._inclusion[N]

    def run(self, N: int, trial: int) -> list[TrialRecord]:
        rng, seeds = trial_seeds(self.spec.seed, N, trial)
        sample = draw_sample(self.synth, self.spec.strategy, N, rng, inclusion=self.inclusion(N))
        records = []
        for method in self.spec.methods:
            try:
                est, converged = estimate_method(method, self.population_by_K, sample, self.spec, seeds[method])
                records.append(TrialRecord(method, N, trial, est.point, est.lower, est.upper, converged))
            except Exception as exc:  # recorded per trial, excluded from averages
                records.append(TrialRecord(method, N, trial, error=f"{type(exc).__name__}: {exc}"))
        return records


_WORKER: Optional[_TrialContext] = None


def _init_worker(spec: ExperimentSpec, synth: SyntheticPopulation) -> None:
    global _WORKER
    _WORKER = _TrialContext(spec, synth)


def _run_task(task):
    return _WORKER.run(*task)


def run_experiment(
    spec: ExperimentSpec,
    workers: int = 1,
    progress: Optional[Callable[[str], None]] = None,
    synth: Optional[SyntheticPopulation] = None,
) -> ExperimentReport:
    """Run ``spec.trials`` paired trials for each N and method.

    Trials are keyed by (seed, N, trial index), so the report does not depend
    on ``workers`` or scheduling order.
    """
    if synth is None:
        synth = generate_population(spec.population)
    tasks = [(N, t) for N in spec.n_grid for t in range(spec.trials)]
    results = []
    step = max(1, len(tasks) // 20)
    if workers <= 1:
        ctx = _TrialContext(spec, synth)
        for i, task in enumerate(tasks, 1):
            results.append(ctx.run(*task))
            if progress and (i % step == 0 or i == len(tasks)):
                progress(f"{i}/{len(tasks)} trials")
    else:
        with ProcessPoolExecutor(workers, initializer=_init_worker, initargs=(spec, synth)) as pool:
            for i, recs in enumerate(pool.map(_run_task, tasks, chunksize=max(1, len(tasks) // (8 * workers))), 1):
                results.append(recs)
                if progress and (i % step == 0 or i == len(tasks)):
                    progress(f"{i}/{len(tasks)} trials")
    order = {m: i for i, m in enumerate(spec.methods)}
    records = sorted((r for recs in results for r in recs), key=lambda r: (order[r.method], r.N, r.trial))
    return ExperimentReport(ground_truth=synth.ground_truth, records=records)


def read_summary_csv(text: str) -> list[dict]:
    rows = list(csv.DictReader(io.StringIO(text)))
    out = []
    for r in rows:
        out.append({
            "method": r["method"], "N": int(r["N"]), "trials": int(r["trials"]),
            "avg_ci_size": float(r["avg_ci_size"]), "wrong_ci_rate": float(r["wrong_ci_rate"]),
            "wrong_upper_rate": float(r["wrong_upper_rate"]), "failures": int(r["failures"]),
        })
    return out
