"""Frozen-representation evaluation, lambda sweeps, adversary audits, reports.

A representation is judged by retraining fresh classifiers on it: one for the
private label ``u`` (privacy accuracy, lower is better) and one for the task
label ``y`` (utility accuracy, higher is better). Every method is scored with
the same :class:`EvalSpec`, so adversary strength is identical across them.
"""

from __future__ import annotations

import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Optional, Sequence, Union

import numpy as np

from . import tensor as T
from .datasets import LabeledDataset, Split, batches
from .nn import AdamState, Classifier, ModelSpec, adam_step, param_digest
from .objectives import DataError, cross_entropy_loss, derangement, jsd_mi_bound, make_negative_batch
from .rng import stream
from .training import TrainConfig, TrainResult, check_lambda, extract_features, train
from .tensor import Tensor

DEFAULT_LAMBDAS = (1.0, 0.9, 0.5, 0.0)
DEFAULT_AUDIT_ARCHITECTURES = ((32,), (64, 64, 64), (64, 64, 64, 64, 64))


class ComparisonError(ValueError):
    """Points that cannot be compared (different datasets)."""


@dataclass(frozen=True)
class EvalSpec:
    """Architecture and training budget of the evaluation classifiers."""

    hidden: tuple[int, ...] = (32,)
    epochs: int = 30
    lr: float = 2e-3
    batch_size: int = 64

    def __post_init__(self):
        object.__setattr__(self, "hidden", tuple(int(h) for h in self.hidden))

    def to_dict(self) -> dict:
        return {"hidden": list(self.hidden), "epochs": self.epochs, "lr": self.lr, "batch_size": self.batch_size}


def fit_classifier(features: np.ndarray, labels: np.ndarray, num_classes: int, spec: EvalSpec,
                   rng: np.random.Generator) -> Classifier:
    missing = sorted(set(range(num_classes)) - set(np.unique(labels).tolist()))
    if missing:
        raise DataError(f"classes {missing} are absent from the training split")
    clf = Classifier(ModelSpec(features.shape[1], spec.hidden, num_classes), rng)
    opt = AdamState(clf.params, lr=spec.lr)
    split = Split(features, labels)
    for _ in range(spec.epochs):
        for batch in batches(split, spec.batch_size, rng):
            opt.zero_grad()
            T.backward(cross_entropy_loss(clf.classify(Tensor(batch.x)), batch.u))
            adam_step(opt)
    return clf


def heldout_accuracy(features_train, labels_train, features_test, labels_test, num_classes, spec, rng) -> float:
    clf = fit_classifier(features_train, labels_train, num_classes, spec, rng)
    return float(np.mean(clf.predict(features_test) == labels_test))


@dataclass(frozen=True)
class TradeoffPoint:
    method: str
    privacy_accuracy: float
    utility_accuracy: Optional[float]
    seeds: tuple[int, ...]
    fingerprint: str
    privacy_std: float = 0.0
    utility_std: float = 0.0
    mi_bound: Optional[float] = None
    lam: Optional[float] = None

    def __post_init__(self):
        object.__setattr__(self, "seeds", tuple(int(s) for s in self.seeds))
        if not self.seeds:
            raise ValueError("TradeoffPoint needs at least one seed")
        if not self.fingerprint:
            raise ValueError("TradeoffPoint needs a dataset fingerprint")
        for v in (self.privacy_accuracy, self.utility_accuracy):
            if v is not None and not 0.0 <= v <= 1.0:
                raise ValueError(f"accuracy {v} outside [0, 1]")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["seeds"] = list(self.seeds)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "TradeoffPoint":
        return cls(**d)


def evaluate_point(method: str, features_train: np.ndarray, features_test: np.ndarray, dataset: LabeledDataset,
                   spec: EvalSpec, seeds: Sequence[int], mi_bound: Optional[float] = None,
                   lam: Optional[float] = None) -> TradeoffPoint:
    """Retrain one adversary and one task classifier per seed on frozen features."""
    priv, util = [], []
    for s in seeds:
        priv.append(heldout_accuracy(features_train, dataset.train.u, features_test, dataset.test.u, dataset.k_u, spec,
                                  stream(s, "eval", "privacy")))
        if dataset.train.y is not None:
            util.append(heldout_accuracy(features_train, dataset.train.y, features_test, dataset.test.y, dataset.k_y,
                                      spec, stream(s, "eval", "utility")))
    return TradeoffPoint(
        method=method,
        privacy_accuracy=float(np.mean(priv)),
        privacy_std=float(np.std(priv)),
        utility_accuracy=float(np.mean(util)) if util else None,
        utility_std=float(np.std(util)) if util else 0.0,
        seeds=tuple(seeds),
        fingerprint=dataset.fingerprint,
        mi_bound=mi_bound,
        lam=lam,
    )


# adversary audit ----------------------------------------------------------

@dataclass(frozen=True)
class AdversaryAuditRow:
    architecture: str
    accuracy: float
    std: float = 0.0


@dataclass
class AuditReport:
    rows: list[AdversaryAuditRow]

    @property
    def worst_case(self) -> float:
        return max(r.accuracy for r in self.rows)

    def to_dict(self) -> dict:
        return {"rows": [asdict(r) for r in self.rows], "worst_case": self.worst_case}


def architecture_id(hidden: Sequence[int]) -> str:
    return f"mlp-depth{len(hidden) + 1}-" + "x".join(str(h) for h in hidden)


def adversary_audit(features_train: np.ndarray, features_test: np.ndarray, dataset: LabeledDataset,
                    architectures: Sequence[Sequence[int]], seeds: Sequence[int],
                    base: EvalSpec = EvalSpec()) -> AuditReport:
    """Retrain adversaries of several depths/widths; report each and the worst case."""
    rows = []
    for hidden in architectures:
        spec = replace(base, hidden=tuple(hidden))
        accs = [heldout_accuracy(features_train, dataset.train.u, features_test, dataset.test.u, dataset.k_u, spec,
                              stream(s, "audit", architecture_id(hidden))) for s in seeds]
        rows.append(AdversaryAuditRow(architecture_id(hidden), float(np.mean(accs)), float(np.std(accs))))
    return AuditReport(rows)


# lambda sweep -------------------------------------------------------------

def heldout_mi_bound(result: TrainResult, split: Split, seed: int) -> float:
    """JSD bound of the trained critic and extractor on held-out rows."""
    models = result.models
    x = Tensor(split.X)
    z = Tensor(extract_features(models.extractor, split.X))
    u = T.one_hot(split.u, models.classifier.num_classes)
    pair = make_negative_batch(x, z, u, None, permutation=derangement(len(split), stream(seed, "eval", "mi")))
    return jsd_mi_bound(models.critic, pair).item()


@dataclass(frozen=True)
class SweepJob:
    lam: float
    seed: int
    train: TrainConfig
    eval: EvalSpec
    dataset: LabeledDataset


@dataclass(frozen=True)
class JobResult:
    lam: float
    seed: int
    privacy_accuracy: float
    utility_accuracy: Optional[float]
    mi_bound: float
    extractor_digest: str

    def to_dict(self) -> dict:
        return asdict(self)


def run_job(job: SweepJob) -> JobResult:
    """Train at one (lambda, seed) and evaluate the resulting features."""
    result = train(replace(job.train, lam=job.lam, seed=job.seed), job.dataset)
    ext = result.models.extractor
    ftr, fte = extract_features(ext, job.dataset.train.X), extract_features(ext, job.dataset.test.X)
    point = evaluate_point("tiprdc", ftr, fte, job.dataset, job.eval, [job.seed])
    return JobResult(job.lam, job.seed, point.privacy_accuracy, point.utility_accuracy,
                     heldout_mi_bound(result, job.dataset.test, job.seed), param_digest(ext))


def dedupe_grid(grid: Sequence[float]) -> list[float]:
    if not grid:
        raise ValueError("lambda grid is empty")
    out = sorted({float(l) for l in grid})
    for lam in out:
        check_lambda(lam)
    return out


def run_jobs(jobs: Sequence[SweepJob], parallel: int = 1) -> list[JobResult]:
    """Run jobs serially or on ``parallel`` worker processes; results keep job order."""
    if parallel <= 1 or len(jobs) <= 1:
        return [run_job(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=parallel) as pool:
        return list(pool.map(run_job, jobs))


def aggregate(results: Sequence[JobResult], fingerprint: str) -> list[TradeoffPoint]:
    points = []
    for lam in sorted({r.lam for r in results}):
        rs = sorted((r for r in results if r.lam == lam), key=lambda r: r.seed)
        priv = [r.privacy_accuracy for r in rs]
        util = [r.utility_accuracy for r in rs if r.utility_accuracy is not None]
        points.append(TradeoffPoint(
            method=f"tiprdc@lam={lam:g}",
            privacy_accuracy=float(np.mean(priv)),
            privacy_std=float(np.std(priv)),
            utility_accuracy=float(np.mean(util)) if util else None,
            utility_std=float(np.std(util)) if util else 0.0,
            seeds=tuple(r.seed for r in rs),
            fingerprint=fingerprint,
            mi_bound=float(np.mean([r.mi_bound for r in rs])),
            lam=lam,
        ))
    return points


def sweep_lambda(config: TrainConfig, dataset: LabeledDataset, grid: Sequence[float] = DEFAULT_LAMBDAS,
                 seeds: Sequence[int] = (0, 1, 2), eval_spec: EvalSpec = EvalSpec(),
                 parallel: int = 1) -> list[TradeoffPoint]:
    """One train + evaluate per (lambda, seed); points sorted by lambda."""
    jobs = [SweepJob(lam, s, config, eval_spec, dataset) for lam in dedupe_grid(grid) for s in seeds]
    return aggregate(run_jobs(jobs, parallel), dataset.fingerprint)


# comparison and reports ---------------------------------------------------

def pareto_flags(points: Sequence[TradeoffPoint]) -> list[bool]:
    """True for points no other point beats on both privacy and utility."""
    flags = []
    for p in points:
        beaten = any(
            q.privacy_accuracy < p.privacy_accuracy and (q.utility_accuracy or 0.0) > (p.utility_accuracy or 0.0)
            for q in points if q is not p
        )
        flags.append(not beaten)
    return flags


def dominates(a: TradeoffPoint, b: TradeoffPoint, tol: float = 0.0) -> bool:
    """``a`` is at least as private and as useful as ``b``, up to ``tol``."""
    return a.privacy_accuracy <= b.privacy_accuracy + tol and (a.utility_accuracy or 0.0) >= (b.utility_accuracy or 0.0) - tol


@dataclass
class ComparisonReport:
    points: list[TradeoffPoint]
    pareto: list[bool] = field(default_factory=list)

    def __post_init__(self):
        if not self.pareto:
            self.pareto = pareto_flags(self.points)

    def records(self) -> list[dict]:
        return [dict(p.to_dict(), pareto=flag) for p, flag in zip(self.points, self.pareto)]


def compare_baselines(points: Sequence[TradeoffPoint]) -> ComparisonReport:
    """Merge hybrid-trained and baseline points evaluated on the same dataset."""
    prints = {p.fingerprint for p in points}
    if len(prints) > 1:
        raise ComparisonError(f"points come from different datasets: {sorted(prints)}")
    return ComparisonReport(list(points))


def _fmt(v: Optional[float]) -> str:
    return "-" if v is None else f"{v:.4f}"


def format_table(report: ComparisonReport) -> str:
    header = f"{'method':<28} {'privacy':>8} {'+-':>7} {'utility':>8} {'+-':>7} {'mi_bound':>9}  pareto"
    lines = [header, "-" * len(header)]
    for p, flag in zip(report.points, report.pareto):
        lines.append(
            f"{p.method:<28} {_fmt(p.privacy_accuracy):>8} {_fmt(p.privacy_std):>7} {_fmt(p.utility_accuracy):>8} "
            f"{_fmt(p.utility_std):>7} {_fmt(p.mi_bound):>9}  {'*' if flag else ''}"
        )
    if report.points:
        lines.append(f"dataset fingerprint: {report.points[0].fingerprint}")
    return "\n".join(lines) + "\n"


def write_report(directory: Union[str, Path], report: ComparisonReport, stem: str = "report") -> dict[str, Path]:
    """Write ``<stem>.txt`` (table), ``<stem>.jsonl`` (one point per line),
    and ``<stem>_series.csv`` (method, privacy_accuracy, utility_accuracy)."""
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    paths = {"table": d / f"{stem}.txt", "records": d / f"{stem}.jsonl", "series": d / f"{stem}_series.csv"}
    paths["table"].write_text(format_table(report), encoding="utf-8")
    paths["records"].write_text("".join(json.dumps(r, sort_keys=True) + "\n" for r in report.records()), encoding="utf-8")
    rows = ["method,privacy_accuracy,utility_accuracy"]
    rows += [f"{p.method},{p.privacy_accuracy!r},{'' if p.utility_accuracy is None else repr(p.utility_accuracy)}"
             for p in report.points]
    paths["series"].write_text("\n".join(rows) + "\n", encoding="utf-8")
    return paths
