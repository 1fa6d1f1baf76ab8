"""Feature extractor, adversarial classifier, MI critic, and Adam.

All three models are small multilayer perceptrons built on
:mod:`tiprdc.tensor`. The critic differs from a plain MLP in that its three
inputs (a raw-data candidate, the feature, and the one-hot private label) are
concatenated into the network at configurable layers.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Optional, Sequence, Union

import numpy as np

from . import tensor as T
from .tensor import ShapeError, Tensor

ACTIVATIONS = {
    "relu": T.relu,
    "sigmoid": T.sigmoid,
    "softplus": T.softplus,
    "tanh": T.tanh,
    "linear": lambda x: x,
}

CHECKPOINT_FORMAT = "tiprdc-checkpoint"
CHECKPOINT_VERSION = 1


class ConfigError(ValueError):
    """Invalid model or training configuration."""


@dataclass(frozen=True)
class ModelSpec:
    """Layer-by-layer description of an MLP.

    ``hidden`` lists hidden widths; ``activation`` is either one tag applied to
    every hidden layer or one tag per hidden layer. The output layer uses
    ``output_activation``.
    """

    input_dim: int
    hidden: tuple[int, ...]
    output_dim: int
    activation: Union[str, tuple[str, ...]] = "relu"
    output_activation: str = "linear"

    def __post_init__(self):
        object.__setattr__(self, "hidden", tuple(int(h) for h in self.hidden))
        if not isinstance(self.activation, str):
            object.__setattr__(self, "activation", tuple(self.activation))
        if len(self.hidden) < 1:
            raise ConfigError("ModelSpec.hidden: at least one hidden layer is required")
        if min((self.input_dim, self.output_dim) + self.hidden) < 1:
            raise ConfigError("ModelSpec: all widths must be positive")
        for tag in self.activations + (self.output_activation,):
            if tag not in ACTIVATIONS:
                raise ConfigError(f"ModelSpec.activation: unknown activation {tag!r}")

    @property
    def activations(self) -> tuple[str, ...]:
        if isinstance(self.activation, str):
            return (self.activation,) * len(self.hidden)
        if len(self.activation) != len(self.hidden):
            raise ConfigError("ModelSpec.activation: need one tag per hidden layer")
        return self.activation

    @property
    def widths(self) -> tuple[int, ...]:
        return (self.input_dim,) + self.hidden + (self.output_dim,)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["hidden"] = list(self.hidden)
        if not isinstance(self.activation, str):
            d["activation"] = list(self.activation)
        return d

    @classmethod
    def from_dict(cls, d: Mapping) -> "ModelSpec":
        d = dict(d)
        if not isinstance(d.get("activation", "relu"), str):
            d["activation"] = tuple(d["activation"])
        return cls(**d)


def glorot_uniform(fan_in: int, fan_out: int, rng: np.random.Generator) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=(fan_in, fan_out))


def init_params(layer_shapes: Sequence[tuple[int, int]], seed: Union[int, np.random.Generator]) -> list[Tensor]:
    """Glorot-uniform weights and zero biases, as ``[W0, b0, W1, b1, ...]``."""
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    params = []
    for fan_in, fan_out in layer_shapes:
        params.append(T.parameter(glorot_uniform(fan_in, fan_out, rng)))
        params.append(T.parameter(np.zeros(fan_out)))
    return params


class MLP:
    """Fully connected network described by a :class:`ModelSpec`."""

    def __init__(self, spec: ModelSpec, seed: Union[int, np.random.Generator] = 0):
        self.spec = spec
        w = spec.widths
        self.params = init_params(list(zip(w[:-1], w[1:])), seed)

    @property
    def layers(self) -> list[tuple[Tensor, Tensor]]:
        return list(zip(self.params[0::2], self.params[1::2]))

    def forward(self, x: Tensor) -> Tensor:
        if x.data.ndim != 2 or x.shape[1] != self.spec.input_dim:
            raise ShapeError(f"{type(self).__name__}: expected (batch, {self.spec.input_dim}) input, got {x.shape}")
        tags = self.spec.activations + (self.spec.output_activation,)
        h = x
        for (W, b), tag in zip(self.layers, tags):
            h = ACTIVATIONS[tag](T.bias_add(T.matmul(h, W), b))
        return h

    __call__ = forward

    def zero_grad(self) -> None:
        for p in self.params:
            p.grad = None

    def state(self) -> list[np.ndarray]:
        return [p.data.copy() for p in self.params]

    def load_state(self, arrays: Sequence[np.ndarray]) -> None:
        if len(arrays) != len(self.params):
            raise ConfigError(f"expected {len(self.params)} arrays, got {len(arrays)}")
        for p, a in zip(self.params, arrays):
            a = np.asarray(a, dtype=np.float64)
            if a.shape != p.shape:
                raise ShapeError(f"load_state: shape {a.shape} does not match parameter {p.shape}")
            p.data = a.copy()


class Extractor(MLP):
    """Maps raw data rows to feature rows."""

    def extract(self, x: Tensor) -> Tensor:
        return self.forward(x)


class Classifier(MLP):
    """Maps feature rows to class logits."""

    @property
    def num_classes(self) -> int:
        return self.spec.output_dim

    def classify(self, z: Tensor) -> Tensor:
        return self.forward(z)

    def predict(self, z: np.ndarray) -> np.ndarray:
        return self.forward(Tensor(z)).data.argmax(axis=1)


@dataclass(frozen=True)
class CriticSpec:
    """Critic layout: hidden widths plus the layer at which each input enters.

    Layer ``i`` consumes ``concat(h_{i-1}, *inputs injected at i)``; layer 0
    has no previous activation. The last layer (index ``len(hidden)``) emits
    one score per row.
    """

    x_dim: int
    z_dim: int
    u_dim: int
    hidden: tuple[int, ...] = (64, 32)
    injection: Mapping[str, int] = field(default_factory=lambda: {"x": 0, "z": 1, "u": 2})
    activation: str = "relu"

    def __post_init__(self):
        object.__setattr__(self, "hidden", tuple(int(h) for h in self.hidden))
        object.__setattr__(self, "injection", dict(self.injection))
        if len(self.hidden) < 1 or min(self.hidden) < 1:
            raise ConfigError("CriticSpec.hidden: need at least one positive hidden width")
        if min(self.x_dim, self.z_dim, self.u_dim) < 1:
            raise ConfigError("CriticSpec: input widths must be positive")
        if set(self.injection) != {"x", "z", "u"}:
            raise ConfigError(f"CriticSpec.injection: must name exactly x, z, u; got {sorted(self.injection)}")
        n_layers = len(self.hidden) + 1
        for name, layer in self.injection.items():
            if not 0 <= int(layer) < n_layers:
                raise ConfigError(f"CriticSpec.injection[{name!r}]={layer} outside [0, {n_layers})")
        if 0 not in self.injection.values():
            raise ConfigError("CriticSpec.injection: some input must enter at layer 0")
        if self.activation not in ACTIVATIONS:
            raise ConfigError(f"CriticSpec.activation: unknown activation {self.activation!r}")

    def input_dims(self) -> dict[str, int]:
        return {"x": self.x_dim, "z": self.z_dim, "u": self.u_dim}

    def layer_shapes(self) -> list[tuple[int, int]]:
        dims = self.input_dims()
        outs = self.hidden + (1,)
        shapes, prev = [], 0
        for i, out in enumerate(outs):
            fan_in = prev + sum(dims[k] for k, layer in self.injection.items() if layer == i)
            shapes.append((fan_in, out))
            prev = out
        return shapes

    def to_dict(self) -> dict:
        return {
            "x_dim": self.x_dim,
            "z_dim": self.z_dim,
            "u_dim": self.u_dim,
            "hidden": list(self.hidden),
            "injection": dict(sorted(self.injection.items())),
            "activation": self.activation,
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "CriticSpec":
        return cls(**dict(d))


class Critic:
    """Scores (x-candidate, z, u) triples; high for joint, low for shuffled."""

    def __init__(self, spec: CriticSpec, seed: Union[int, np.random.Generator] = 0):
        self.spec = spec
        self.params = init_params(spec.layer_shapes(), seed)
        self._order = ("x", "z", "u")

    @property
    def layers(self) -> list[tuple[Tensor, Tensor]]:
        return list(zip(self.params[0::2], self.params[1::2]))

    def critic_score(self, x: Tensor, z: Tensor, u_onehot: Tensor) -> Tensor:
        """Return a (batch, 1) tensor of scores."""
        inputs = {"x": x, "z": z, "u": u_onehot}
        dims = self.spec.input_dims()
        n = x.shape[0]
        for name, t in inputs.items():
            if t.data.ndim != 2 or t.shape != (n, dims[name]):
                raise ShapeError(f"critic_score: input {name!r} has shape {t.shape}, expected ({n}, {dims[name]})")
        act = ACTIVATIONS[self.spec.activation]
        h: Optional[Tensor] = None
        last = len(self.layers) - 1
        for i, (W, b) in enumerate(self.layers):
            parts = [] if h is None else [h]
            parts += [inputs[k] for k in self._order if self.spec.injection[k] == i]
            h_in = parts[0] if len(parts) == 1 else T.concat(parts, axis=1)
            h = T.bias_add(T.matmul(h_in, W), b)
            if i < last:
                h = act(h)
        return h

    __call__ = critic_score

    def zero_grad(self) -> None:
        for p in self.params:
            p.grad = None

    def state(self) -> list[np.ndarray]:
        return [p.data.copy() for p in self.params]

    def load_state(self, arrays: Sequence[np.ndarray]) -> None:
        MLP.load_state(self, arrays)  # same flat layout


Model = Union[MLP, Critic]


def zero_params(model: Model) -> None:
    for p in model.params:
        p.data = np.zeros_like(p.data)


def param_digest(model: Model) -> str:
    h = hashlib.sha256()
    for p in model.params:
        h.update(np.ascontiguousarray(p.data).tobytes())
    return h.hexdigest()


@dataclass
class AdamState:
    """Adam moments for one parameter list."""

    params: list[Tensor]
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step_count: int = 0
    m: list[np.ndarray] = field(default_factory=list)
    v: list[np.ndarray] = field(default_factory=list)

    def __post_init__(self):
        if not self.m:
            self.m = [np.zeros_like(p.data) for p in self.params]
            self.v = [np.zeros_like(p.data) for p in self.params]

    def zero_grad(self) -> None:
        for p in self.params:
            p.grad = None


def adam_step(state: AdamState) -> None:
    """Apply one bias-corrected Adam update to ``state.params`` using their grads.

    Parameters receive new arrays; arrays referenced by earlier graphs are
    left untouched.
    """
    missing = [i for i, p in enumerate(state.params) if p.grad is None]
    if missing:
        raise T.GradientError(f"adam_step: parameters {missing} have no gradient")
    lr = state.lr
    state.step_count += 1
    t = state.step_count
    c1 = 1.0 - state.beta1**t
    c2 = 1.0 - state.beta2**t
    for i, p in enumerate(state.params):
        g = p.grad
        state.m[i] = state.beta1 * state.m[i] + (1.0 - state.beta1) * g
        state.v[i] = state.beta2 * state.v[i] + (1.0 - state.beta2) * g * g
        m_hat = state.m[i] / c1
        v_hat = state.v[i] / c2
        p.data = p.data - lr * m_hat / (np.sqrt(v_hat) + state.eps)


# checkpoints --------------------------------------------------------------

def config_hash(config: Mapping) -> str:
    blob = json.dumps(config, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()


def _model_record(model: Model) -> dict:
    kind = "critic" if isinstance(model, Critic) else type(model).__name__.lower()
    return {
        "kind": kind,
        "spec": model.spec.to_dict(),
        "params": [{"shape": list(p.shape), "values": p.data.reshape(-1).tolist()} for p in model.params],
    }


def save_checkpoint(path: Union[str, Path], models: Mapping[str, Model], seed: int, config: Mapping) -> str:
    """Write models as a JSON document and return its sha256.

    Layout (version 1)::

        {"format": "tiprdc-checkpoint", "version": 1, "seed": int,
         "config_hash": hex, "config": {...},
         "models": {name: {"kind": "extractor"|"classifier"|"critic"|"mlp",
                           "spec": {...},
                           "params": [{"shape": [..], "values": [..]}, ...]}}}

    Keys are sorted, separators are compact, and floats use Python's
    shortest round-trip repr, so equal parameters give equal bytes.
    """
    doc = {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "seed": int(seed),
        "config_hash": config_hash(config),
        "config": config,
        "models": {name: _model_record(m) for name, m in models.items()},
    }
    blob = json.dumps(doc, sort_keys=True, separators=(",", ":")).encode("utf-8")
    Path(path).write_bytes(blob)
    return hashlib.sha256(blob).hexdigest()


_KINDS = {"extractor": Extractor, "classifier": Classifier, "mlp": MLP}


def load_checkpoint(path: Union[str, Path]) -> tuple[dict[str, Model], dict]:
    """Inverse of :func:`save_checkpoint`; returns ``(models, header)``."""
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    if doc.get("format") != CHECKPOINT_FORMAT:
        raise ConfigError(f"{path}: not a checkpoint file")
    if doc.get("version") != CHECKPOINT_VERSION:
        raise ConfigError(f"{path}: unsupported checkpoint version {doc.get('version')}")
    models: dict[str, Model] = {}
    for name, rec in doc["models"].items():
        if rec["kind"] == "critic":
            model: Model = Critic(CriticSpec.from_dict(rec["spec"]))
        else:
            model = _KINDS[rec["kind"]](ModelSpec.from_dict(rec["spec"]))
        model.load_state([np.array(p["values"], dtype=np.float64).reshape(p["shape"]) for p in rec["params"]])
        models[name] = model
    header = {k: doc[k] for k in ("seed", "config_hash", "config", "version")}
    return models, header


def parameters(models: Iterable[Model]) -> list[Tensor]:
    return [p for m in models for p in m.params]
