"""Quality metrics of phase estimates and the Monte Carlo study driver.

Accuracy is the percentage of consumers whose estimated phase matches the
truth. The confidence factor is the worst (over a zone's consumers) margin
between the weight of the true phase and the best wrong phase. Sensitivity
is the population standard deviation of the decision weights across noise
realisations, averaged over consumers and phases.
"""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np

from .consensus import ConsensusError, PhaseEstimate, consensus_majority, consensus_weighted, estimate_naive, per_reference_estimates
from .correlation import correlation_tensor
from .synth.panel import multiplicative_noise

logger = logging.getLogger(__name__)


class EvaluationError(ValueError):
    pass


def _phases(x) -> np.ndarray:
    return np.asarray(getattr(x, "phases", x))


def accuracy(est, truth) -> float:
    """100 x (1 - mismatches / L)."""
    e, t = _phases(est), _phases(truth)
    if isinstance(truth, Mapping) or hasattr(truth, "phases") and isinstance(truth.phases, Mapping):
        raise EvaluationError("pass the true phases as an array aligned with the estimate")
    if e.shape != t.shape:
        raise EvaluationError(f"roster mismatch: {e.shape[0] if e.ndim else 0} estimates vs {t.shape[0] if t.ndim else 0} true phases")
    if e.size == 0:
        raise EvaluationError("no consumers to score")
    return 100.0 * (1.0 - np.count_nonzero(e != t) / e.size)


def margins(weights, truth) -> np.ndarray:
    """Per consumer: weight of the true phase minus the largest wrong-phase weight."""
    w = np.where(np.isnan(weights), -np.inf, np.asarray(weights, dtype=float))
    t = np.asarray(truth)
    rows = np.arange(len(t))
    true_w = w[rows, t]
    wrong = w.copy()
    wrong[rows, t] = -np.inf
    return true_w - wrong.max(axis=1)


def confidence_factor(weights, truth, scheme: str = "S3") -> float:
    """Smallest true-vs-best-wrong margin in the zone.

    For S2 the margin is divided by the spread (max - min) of the zone's
    weights, since S2 weights are not bounded.
    """
    w = np.asarray(getattr(weights, "G", getattr(weights, "weights", weights)), dtype=float)
    if w.shape[0] == 0:
        raise EvaluationError("empty zone")
    f = float(margins(w, _phases(truth)).min())
    if scheme == "S2":
        spread = float(np.nanmax(w) - np.nanmin(w))
        f = f / spread if spread > 0 else 0.0
    return f


def self_confidence(weights, scheme: str = "S3") -> float:
    """Field-mode confidence: margin of the predicted phase (no ground truth)."""
    w = np.asarray(getattr(weights, "weights", weights), dtype=float)
    pred = np.argmax(np.where(np.isnan(w), -np.inf, w), axis=1)
    return confidence_factor(w, pred, scheme)


def sensitivity_std(per_run_weights: Sequence) -> float:
    """Population std over runs of every weight entry, averaged over entries."""
    runs = [np.asarray(getattr(w, "weights", w), dtype=float) for w in per_run_weights]
    if len(runs) < 2:
        raise EvaluationError("sensitivity needs at least two Monte Carlo runs")
    stack = np.stack(runs)
    return float(np.nanmean(stack.std(axis=0)))


# --------------------------------------------------------------------------
# Monte Carlo over metering noise
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class Model:
    metric: str
    scheme: str

    @property
    def name(self) -> str:
        return f"{self.scheme}-{self.metric}"


ALL_MODELS = tuple(Model(j, s) for j in ("J1", "J2", "J3") for s in ("S1", "S2", "S3", "S4")) + (Model("J1", "S0"),)


@dataclass(frozen=True, eq=False)
class ZoneTask:
    """Measurements for one zone: consumers (T x L) and references (each T x 3)."""

    zone: int
    consumers: np.ndarray
    truth: np.ndarray
    references: tuple[np.ndarray, ...]
    reference_ids: tuple
    beta: float = 0.0
    naive_reference: np.ndarray | None = None
    naive_reference_id: object = None
    consumer_ids: tuple = ()


@dataclass
class ModelResult:
    zone: int
    model: Model
    accuracy: list[float] = field(default_factory=list)
    confidence: list[float] = field(default_factory=list)
    weights: list[np.ndarray] = field(default_factory=list)
    skipped: int = 0

    @property
    def mean_accuracy(self) -> float:
        return float(np.mean(self.accuracy)) if self.accuracy else float("nan")

    @property
    def mean_confidence(self) -> float:
        return float(np.mean(self.confidence)) if self.confidence else float("nan")

    @property
    def sensitivity(self) -> float:
        if len(self.weights) < 2:
            return 0.0 if self.weights else float("nan")
        return sensitivity_std(self.weights)

    @property
    def n_consumers(self) -> int:
        return len(self.weights[0]) if self.weights else 0

    def summary(self) -> dict:
        return {
            "zone": self.zone, "metric": self.model.metric, "scheme": self.model.scheme,
            "A": self.mean_accuracy, "F": self.mean_confidence, "D": self.sensitivity,
            "Q": len(self.accuracy), "L": self.n_consumers, "skipped": self.skipped,
        }


def noisy_measurements(task: ZoneTask, tau_ref: float, tau_cons: float, rng: np.random.Generator):
    """One metering-noise realisation of a zone: (consumers, references, naive reference)."""
    cons = task.consumers * multiplicative_noise(task.consumers.shape, tau_cons, rng)
    refs = [r * multiplicative_noise(r.shape, tau_ref, rng) for r in task.references]
    naive = None
    if task.naive_reference is not None:
        naive = task.naive_reference * multiplicative_noise(task.naive_reference.shape, tau_ref, rng)
    return cons, refs, naive


def estimate_zone(task: ZoneTask, models: Sequence[Model], cons, refs, naive=None) -> dict[Model, PhaseEstimate | None]:
    """Estimates of every model on one set of measurements; None where a model is undefined."""
    out: dict = {}
    tensors = {}
    for model in models:
        try:
            if model.scheme == "S0":
                ref = naive if naive is not None else (refs[0] if refs else None)
                rid = task.naive_reference_id if naive is not None else (task.reference_ids[0] if refs else None)
                if ref is None:
                    raise ConsensusError("no reference for S0")
                t = correlation_tensor([ref], cons, model.metric, task.beta, [rid], task.zone)
                if t.n_references == 0:
                    raise ConsensusError("reference excluded")
                out[model] = estimate_naive(t.values[0], model.metric, rid)
                continue
            if model.metric not in tensors:
                tensors[model.metric] = correlation_tensor(refs, cons, model.metric, task.beta,
                                                           task.reference_ids, task.zone)
            t = tensors[model.metric]
            if t.n_references == 0:
                raise ConsensusError("no usable reference")
            if model.scheme == "S1":
                out[model] = consensus_majority(per_reference_estimates(t), t)
            else:
                out[model] = consensus_weighted(t, model.scheme)[1]
        except ConsensusError as exc:
            logger.debug("zone %s %s skipped: %s", task.zone, model.name, exc)
            out[model] = None
    return out


def _run_zone(task: ZoneTask, models: Sequence[Model], tau_ref: float, tau_cons: float,
              rng: np.random.Generator) -> dict[Model, tuple[float, float, np.ndarray] | None]:
    cons, refs, naive = noisy_measurements(task, tau_ref, tau_cons, rng)
    out = {}
    for model, est in estimate_zone(task, models, cons, refs, naive).items():
        if est is None:
            out[model] = None
        else:
            out[model] = (accuracy(est, task.truth), confidence_factor(est.weights, task.truth, model.scheme), est.weights)
    return out


def zone_rng(seed: int, zone: int, run: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([seed, zone, run]))


def run_monte_carlo(tasks: Sequence[ZoneTask], models: Sequence[Model], tau_ref: float, tau_cons: float,
                    n_runs: int, seed: int, threads: int = 1) -> list[ModelResult]:
    """Repeat noisy identification ``n_runs`` times per zone.

    Run q of zone c draws its noise from ``SeedSequence([seed, c, q])``, so the
    outcome is independent of thread count and scheduling.
    """
    results = {(t.zone, m): ModelResult(t.zone, m) for t in tasks for m in models}

    def one(args):
        task, q = args
        return task.zone, _run_zone(task, models, tau_ref, tau_cons, zone_rng(seed, task.zone, q))

    jobs = [(t, q) for t in tasks if t.consumers.shape[1] > 0 for q in range(n_runs)]
    if threads > 1:
        with ThreadPoolExecutor(threads) as pool:
            outcomes = list(pool.map(one, jobs))
    else:
        outcomes = [one(j) for j in jobs]
    for zone, res in outcomes:
        for model, val in res.items():
            r = results[(zone, model)]
            if val is None:
                r.skipped += 1
                continue
            a, f, w = val
            r.accuracy.append(a)
            r.confidence.append(f)
            r.weights.append(w)
    return [r for r in results.values() if r.accuracy or r.skipped]


def overall_accuracy(results: Iterable[ModelResult], model: Model) -> float:
    """Consumer-weighted mean accuracy over zones for one model."""
    num = den = 0.0
    for r in results:
        if r.model == model and r.accuracy:
            num += r.mean_accuracy * r.n_consumers
            den += r.n_consumers
    return num / den if den else float("nan")


def mean_over_zones(results: Iterable[ModelResult], model: Model, attr: str) -> float:
    vals = [getattr(r, attr) for r in results if r.model == model and r.accuracy]
    return float(np.mean(vals)) if vals else float("nan")


# --------------------------------------------------------------------------
# ranking
# --------------------------------------------------------------------------

def rank_models(reports: Sequence[Mapping], key: Callable[[Mapping], tuple] | None = None) -> list[tuple[int, Mapping]]:
    """Rank by higher A, then higher F, then lower D. Equal keys share a rank."""
    key = key or (lambda r: (-r["A"], -r["F"], r["D"]))
    ordered = sorted(reports, key=key)
    ranked = []
    for pos, rep in enumerate(ordered):
        if ranked and key(rep) == key(ranked[-1][1]):
            ranked.append((ranked[-1][0], rep))
        else:
            ranked.append((pos + 1, rep))
    return ranked
