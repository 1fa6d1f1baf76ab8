"""Pretraining and the three-phase hybrid update.

Per batch, in order:

1. the adversarial classifier descends the cross-entropy on ``u`` (features
   detached, so the extractor is untouched);
2. the critic ascends the JSD bound (features detached);
3. the extractor descends ``-lam * CE - (1 - lam) * JSD`` through fresh
   forward passes of the just-updated classifier and critic.

Only the optimizer of the model owning a phase steps in that phase.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Mapping, Optional, Sequence, Union

import numpy as np

from . import tensor as T
from .datasets import LabeledDataset, Split, batches
from .nn import (
    AdamState,
    Classifier,
    ConfigError,
    Critic,
    CriticSpec,
    Extractor,
    ModelSpec,
    adam_step,
)
from .objectives import DataError, cross_entropy_loss, derangement, jsd_mi_bound, make_negative_batch
from .rng import stream
from .tensor import Tensor

PHASES = ("pat", "maxmi", "extractor")


@dataclass(frozen=True)
class TrainConfig:
    lam: float = 0.9
    batch_size: int = 64
    epochs: int = 30
    pretrain_epochs: int = 2
    lr_extractor: float = 5e-4
    lr_classifier: float = 5e-3
    lr_critic: float = 1e-3
    decay_epochs: int = 10
    decay_gamma: float = 0.5
    seed: int = 0
    feature_dim: int = 8
    extractor_hidden: tuple[int, ...] = (64,)
    extractor_output_activation: str = "tanh"
    classifier_hidden: tuple[int, ...] = (32,)
    critic_hidden: tuple[int, ...] = (64, 32)
    critic_injection: Mapping[str, int] = field(default_factory=lambda: {"x": 0, "z": 1, "u": 2})
    classifier_steps: int = 5
    critic_steps: int = 1

    def __post_init__(self):
        for name in ("extractor_hidden", "classifier_hidden", "critic_hidden"):
            object.__setattr__(self, name, tuple(int(h) for h in getattr(self, name)))
        object.__setattr__(self, "critic_injection", dict(self.critic_injection))
        check_lambda(self.lam)
        if self.batch_size < 2:
            raise ConfigError("TrainConfig.batch_size must be >= 2")
        for name in ("epochs", "pretrain_epochs"):
            if getattr(self, name) < 0:
                raise ConfigError(f"TrainConfig.{name} must be >= 0")
        for name in ("classifier_steps", "critic_steps"):
            if getattr(self, name) < 1:
                raise ConfigError(f"TrainConfig.{name} must be >= 1")

    def to_dict(self) -> dict:
        d = asdict(self)
        for k, v in d.items():
            if isinstance(v, tuple):
                d[k] = list(v)
        d["critic_injection"] = dict(sorted(self.critic_injection.items()))
        return d


def step_decay(epoch: int, every: int, gamma: float) -> float:
    """Learning-rate multiplier ``gamma ** (epoch // every)``; ``every=0`` disables decay."""
    return 1.0 if every <= 0 else gamma ** (epoch // every)


def check_lambda(lam: float) -> None:
    if not 0.0 <= lam <= 1.0:
        raise ConfigError(f"lambda must lie in [0, 1], got {lam}")


@dataclass(frozen=True)
class TraceRecord:
    step: int
    epoch: int
    iteration: int
    phase: str
    classifier_loss: Optional[float] = None
    mi_bound: Optional[float] = None
    objective: Optional[float] = None


@dataclass
class Models:
    extractor: Extractor
    classifier: Classifier
    critic: Critic

    def as_dict(self) -> dict:
        return {"extractor": self.extractor, "classifier": self.classifier, "critic": self.critic}


@dataclass
class Optimizers:
    extractor: AdamState
    classifier: AdamState
    critic: AdamState


def build_models(config: TrainConfig, d_x: int, k_u: int) -> Models:
    ext = Extractor(
        ModelSpec(d_x, config.extractor_hidden, config.feature_dim, output_activation=config.extractor_output_activation),
        stream(config.seed, "init", "extractor"),
    )
    clf = Classifier(ModelSpec(config.feature_dim, config.classifier_hidden, k_u), stream(config.seed, "init", "classifier"))
    critic = Critic(
        CriticSpec(d_x, config.feature_dim, k_u, config.critic_hidden, config.critic_injection),
        stream(config.seed, "init", "critic"),
    )
    return Models(ext, clf, critic)


def build_optimizers(models: Models, config: TrainConfig) -> Optimizers:
    def adam(model, lr):
        return AdamState(model.params, lr=lr)

    return Optimizers(
        adam(models.extractor, config.lr_extractor),
        adam(models.classifier, config.lr_classifier),
        adam(models.critic, config.lr_critic),
    )


def extract_features(extractor: Extractor, X: np.ndarray) -> np.ndarray:
    return extractor.extract(Tensor(X)).data.copy()


def classifier_accuracy(extractor: Extractor, classifier: Classifier, split: Split) -> float:
    pred = classifier.predict(extract_features(extractor, split.X))
    return float(np.mean(pred == split.u))


def pretrain(
    extractor: Extractor,
    classifier: Classifier,
    split: Split,
    config: TrainConfig,
    optimizers: Optional[Optimizers] = None,
    rng: Optional[np.random.Generator] = None,
) -> float:
    """Cooperatively fit extractor and classifier to predict ``u``.

    Returns the training-split accuracy after the last epoch.
    """
    if len(split) == 0:
        raise DataError("pretrain: empty dataset")
    rng = rng if rng is not None else stream(config.seed, "pretrain")
    if optimizers is None:
        opt_e = AdamState(extractor.params, lr=config.lr_extractor)
        opt_c = AdamState(classifier.params, lr=config.lr_classifier)
    else:
        opt_e, opt_c = optimizers.extractor, optimizers.classifier
    for _ in range(config.pretrain_epochs):
        for batch in batches(split, config.batch_size, rng):
            opt_e.zero_grad()
            opt_c.zero_grad()
            loss = cross_entropy_loss(classifier.classify(extractor.extract(Tensor(batch.x))), batch.u)
            T.backward(loss)
            adam_step(opt_c)
            adam_step(opt_e)
    return classifier_accuracy(extractor, classifier, split)


def phase3_objective(
    models: Models, x: Tensor, u: np.ndarray, u_onehot: Tensor, perm: np.ndarray, lam: float,
    include_classifier: bool = True, include_mi: bool = True,
) -> tuple[Tensor, Optional[Tensor], Optional[Tensor]]:
    """Build ``-lam * CE - (1 - lam) * JSD`` for the extractor update.

    Returns ``(loss, ce, bound)``; ``ce`` or ``bound`` is None when its term
    is excluded.
    """
    z = models.extractor.extract(x)
    terms, ce, bound = [], None, None
    if include_classifier:
        ce = cross_entropy_loss(models.classifier.classify(z), u)
        terms.append(T.mul(ce, -lam))
    if include_mi:
        pair = make_negative_batch(x, z, u_onehot, None, permutation=perm)
        bound = jsd_mi_bound(models.critic, pair)
        terms.append(T.mul(bound, -(1.0 - lam)))
    if not terms:
        raise ConfigError("phase 3 needs at least one objective term")
    loss = terms[0] if len(terms) == 1 else T.add(terms[0], terms[1])
    return loss, ce, bound


def hybrid_step(
    models: Models,
    batch,
    lam: float,
    optimizers: Optimizers,
    rng: np.random.Generator,
    config: Optional[TrainConfig] = None,
    *,
    include_classifier: bool = True,
    include_mi: bool = True,
    on_phase: Optional[Callable[[str], None]] = None,
) -> list[dict]:
    """Run the three sequential updates on one batch.

    Args:
        on_phase: called with the phase name right after that phase's update,
            e.g. to snapshot parameters.

    Returns:
        One record (``phase``, ``classifier_loss``, ``mi_bound``,
        ``objective``) per phase.
    """
    notify = on_phase or (lambda phase: None)
    check_lambda(lam)
    n = batch.x.shape[0]
    if n < 2:
        raise DataError("hybrid_step: batch size must be >= 2")
    k_u = models.classifier.num_classes
    classifier_steps = config.classifier_steps if config else 1
    critic_steps = config.critic_steps if config else 1
    x = Tensor(batch.x)
    u_onehot = T.one_hot(batch.u, k_u)
    perm = derangement(n, rng)

    # phase 1: adversary descends CE on detached features
    for _ in range(classifier_steps):
        optimizers.classifier.zero_grad()
        z = models.extractor.extract(x).detach()
        ce = cross_entropy_loss(models.classifier.classify(z), batch.u)
        T.backward(ce)
        adam_step(optimizers.classifier)
    notify("pat")
    rec1 = {"phase": "pat", "classifier_loss": ce.item(), "mi_bound": None, "objective": None}

    # phase 2: critic ascends the bound on detached features
    for _ in range(critic_steps):
        optimizers.critic.zero_grad()
        z = models.extractor.extract(x).detach()
        bound = jsd_mi_bound(models.critic, make_negative_batch(x, z, u_onehot, None, permutation=perm))
        T.backward(T.mul(bound, -1.0))
        adam_step(optimizers.critic)
    notify("maxmi")
    rec2 = {"phase": "maxmi", "classifier_loss": None, "mi_bound": bound.item(), "objective": None}

    # phase 3: extractor against the updated classifier and critic
    for opt in (optimizers.extractor, optimizers.classifier, optimizers.critic):
        opt.zero_grad()
    loss, ce3, bound3 = phase3_objective(models, x, batch.u, u_onehot, perm, lam, include_classifier, include_mi)
    T.backward(loss)
    adam_step(optimizers.extractor)
    for opt in (optimizers.classifier, optimizers.critic):
        opt.zero_grad()
    notify("extractor")
    rec3 = {
        "phase": "extractor",
        "classifier_loss": None if ce3 is None else ce3.item(),
        "mi_bound": None if bound3 is None else bound3.item(),
        "objective": -loss.item(),
    }
    return [rec1, rec2, rec3]


@dataclass
class TrainResult:
    models: Models
    trace: list[TraceRecord]
    pretrain_accuracy: float
    config: TrainConfig


def train(
    config: TrainConfig,
    dataset: LabeledDataset,
    models: Optional[Models] = None,
    *,
    include_classifier: bool = True,
    include_mi: bool = True,
) -> TrainResult:
    """Pretrain, then run ``config.epochs`` epochs of hybrid steps.

    ``include_classifier`` / ``include_mi`` drop a term from the extractor
    objective (ablations); phases 1 and 2 still run.
    """
    if len(dataset.train) == 0:
        raise DataError("train: empty dataset")
    models = models or build_models(config, dataset.d_x, dataset.k_u)
    pre_acc = pretrain(models.extractor, models.classifier, dataset.train, config, rng=stream(config.seed, "pretrain"))
    # pretraining moments are not carried into the adversarial game
    optimizers = build_optimizers(models, config)
    batch_rng = stream(config.seed, "batching")
    neg_rng = stream(config.seed, "negatives")
    trace: list[TraceRecord] = []
    iteration = 0
    base_lrs = [(opt, opt.lr) for opt in (optimizers.extractor, optimizers.classifier, optimizers.critic)]
    for epoch in range(config.epochs):
        for opt, lr in base_lrs:
            opt.lr = lr * step_decay(epoch, config.decay_epochs, config.decay_gamma)
        for batch in batches(dataset.train, config.batch_size, batch_rng):
            for rec in hybrid_step(
                models, batch, config.lam, optimizers, neg_rng, config,
                include_classifier=include_classifier, include_mi=include_mi,
            ):
                trace.append(TraceRecord(step=len(trace), epoch=epoch, iteration=iteration, **rec))
            iteration += 1
    return TrainResult(models, trace, pre_acc, config)


def write_trace(path: Union[str, Path], records: Iterable[TraceRecord]) -> None:
    """One JSON object per line with keys step, epoch, iteration, phase,
    classifier_loss, mi_bound, objective (null when not computed)."""
    with Path(path).open("w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(json.dumps(asdict(rec), sort_keys=True) + "\n")


def read_trace(path: Union[str, Path]) -> list[TraceRecord]:
    with Path(path).open(encoding="utf-8") as fh:
        return [TraceRecord(**json.loads(line)) for line in fh if line.strip()]


def phase_series(trace: Sequence[TraceRecord], phase: str, key: str) -> np.ndarray:
    return np.array([getattr(r, key) for r in trace if r.phase == phase], dtype=np.float64)
