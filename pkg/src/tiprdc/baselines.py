"""Comparison schemes: Gaussian noise, Laplace DP, autoencoder, and PCA + Laplace."""

from __future__ import annotations

import warnings
from dataclasses import asdict, dataclass
from typing import Optional

import numpy as np

from . import tensor as T
from .datasets import LabeledDataset, Split, batches
from .nn import MLP, AdamState, ConfigError, ModelSpec, adam_step
from .rng import stream
from .tensor import Tensor

KINDS = ("noisy", "dp", "encoder", "hybrid")
RAW_PIXEL_SIGMA = 40.0  # raw-pixel units; rescale for standardized data
DP_BUDGETS = (0.1, 0.2, 0.5, 0.9)


class ZeroSensitivityWarning(UserWarning):
    """A feature had zero range on the train split and was passed through."""


@dataclass(frozen=True)
class BaselineConfig:
    kind: str
    sigma: float = RAW_PIXEL_SIGMA
    epsilon: float = 0.5
    retained_dim: int = 8
    encoder_hidden: tuple[int, ...] = (64,)
    encoder_dim: int = 16
    encoder_activation: str = "tanh"
    encoder_epochs: int = 20
    encoder_lr: float = 1e-3
    batch_size: int = 64
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "encoder_hidden", tuple(self.encoder_hidden))
        if self.kind not in KINDS:
            raise ConfigError(f"BaselineConfig.kind: unknown kind {self.kind!r}; choose from {KINDS}")
        if self.sigma <= 0:
            raise ConfigError("BaselineConfig.sigma must be > 0")
        if self.epsilon <= 0:
            raise ConfigError("BaselineConfig.epsilon must be > 0")
        if self.retained_dim < 1:
            raise ConfigError("BaselineConfig.retained_dim must be >= 1")

    @property
    def label(self) -> str:
        if self.kind == "noisy":
            return f"noisy@sigma={self.sigma:g}"
        if self.kind == "dp":
            return f"dp@eps={self.epsilon:g}"
        if self.kind == "hybrid":
            return f"hybrid@eps={self.epsilon:g},k={self.retained_dim}"
        return "encoder"

    def to_dict(self) -> dict:
        d = asdict(self)
        d["encoder_hidden"] = list(self.encoder_hidden)
        return d


def noisy_transform(X: np.ndarray, sigma: float, rng: np.random.Generator) -> np.ndarray:
    """X + N(0, sigma^2) i.i.d. per entry."""
    if sigma <= 0:
        raise ConfigError("noisy_transform: sigma must be > 0")
    return X + rng.normal(0.0, sigma, size=X.shape)


def feature_range(X_train: np.ndarray) -> np.ndarray:
    """Per-column max - min, used as the Laplace sensitivity."""
    return X_train.max(axis=0) - X_train.min(axis=0)


def dp_transform(X: np.ndarray, epsilon: float, sensitivity, rng: np.random.Generator) -> np.ndarray:
    """Add Laplace(0, sensitivity / epsilon) noise to each column.

    Columns with zero sensitivity get no noise and raise a
    :class:`ZeroSensitivityWarning`.
    """
    if epsilon <= 0:
        raise ConfigError("dp_transform: epsilon must be > 0")
    scale = np.broadcast_to(np.asarray(sensitivity, dtype=np.float64) / epsilon, (X.shape[1],))
    dead = np.flatnonzero(scale == 0)
    if dead.size:
        warnings.warn(f"dp_transform: zero-range features {dead.tolist()} passed through", ZeroSensitivityWarning)
    noise = rng.laplace(0.0, np.where(scale > 0, scale, 1.0), size=X.shape)
    return X + np.where(scale > 0, noise, 0.0)


# autoencoder --------------------------------------------------------------

@dataclass
class Autoencoder:
    encoder: MLP
    decoder: MLP

    def encode(self, X: np.ndarray) -> np.ndarray:
        return self.encoder(Tensor(X)).data.copy()

    def reconstruction_mse(self, X: np.ndarray) -> float:
        recon = self.decoder(self.encoder(Tensor(X))).data
        return float(np.mean((recon - X) ** 2))


def build_autoencoder(d_x: int, hidden, dim: int, activation: str, rng: np.random.Generator,
                      output_activation: Optional[str] = None) -> Autoencoder:
    out_act = activation if output_activation is None else output_activation
    enc = MLP(ModelSpec(d_x, tuple(hidden), dim, activation=activation, output_activation=out_act), rng)
    dec = MLP(ModelSpec(dim, tuple(reversed(tuple(hidden))), d_x, activation=activation), rng)
    return Autoencoder(enc, dec)


def train_autoencoder(ae: Autoencoder, X_train: np.ndarray, epochs: int, lr: float, batch_size: int,
                      rng: np.random.Generator) -> float:
    """Minimize mean squared reconstruction error; returns the final train MSE."""
    opt = AdamState(ae.encoder.params + ae.decoder.params, lr=lr)
    split = Split(X_train, np.zeros(len(X_train), dtype=np.int64))
    for _ in range(epochs):
        for batch in batches(split, batch_size, rng):
            opt.zero_grad()
            x = Tensor(batch.x)
            diff = T.sub(ae.decoder(ae.encoder(x)), x)
            T.backward(T.mean(T.mul(diff, diff)))
            adam_step(opt)
    return ae.reconstruction_mse(X_train)


def encoder_transform(X: np.ndarray, ae: Autoencoder) -> np.ndarray:
    return ae.encode(X)


# PCA ----------------------------------------------------------------------

@dataclass(frozen=True)
class PCA:
    mean: np.ndarray
    components: np.ndarray  # (k, d), orthonormal rows
    explained_variance: np.ndarray  # (d,), all eigenvalues, descending

    @classmethod
    def fit(cls, Z: np.ndarray, k: int) -> "PCA":
        if k > Z.shape[1]:
            raise ConfigError(f"PCA: retained_dim {k} exceeds feature dimension {Z.shape[1]}")
        mean = Z.mean(axis=0)
        _, s, vt = np.linalg.svd(Z - mean, full_matrices=False)
        var = s**2 / (len(Z) - 1)
        full = np.zeros(Z.shape[1])
        full[: var.size] = var
        return cls(mean, vt[:k].copy(), full)

    @property
    def explained_ratio(self) -> float:
        k = self.components.shape[0]
        return float(self.explained_variance[:k].sum() / self.explained_variance.sum())

    def transform(self, Z: np.ndarray) -> np.ndarray:
        return (Z - self.mean) @ self.components.T


def hybrid_transform(Z: np.ndarray, pca: PCA, epsilon: float, sensitivity, rng: np.random.Generator) -> np.ndarray:
    """Project encoded features onto the retained components, then add Laplace noise."""
    return dp_transform(pca.transform(Z), epsilon, sensitivity, rng)


# dispatch -----------------------------------------------------------------

@dataclass
class BaselineOutput:
    config: BaselineConfig
    train: np.ndarray
    test: np.ndarray
    info: dict


def run_baseline(config: BaselineConfig, dataset: LabeledDataset) -> BaselineOutput:
    """Protect both splits with one baseline; randomness comes only from ``config.seed``."""
    Xtr, Xte = dataset.train.X, dataset.test.X
    noise = stream(config.seed, "baseline", config.kind, "noise")
    info: dict = {}
    if config.kind == "noisy":
        return BaselineOutput(config, noisy_transform(Xtr, config.sigma, noise),
                              noisy_transform(Xte, config.sigma, noise), info)
    if config.kind == "dp":
        sens = feature_range(Xtr)
        info["sensitivity"] = sens.tolist()
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always", ZeroSensitivityWarning)
            out = BaselineOutput(config, dp_transform(Xtr, config.epsilon, sens, noise),
                                 dp_transform(Xte, config.epsilon, sens, noise), info)
        info["warnings"] = sorted({str(w.message) for w in caught})
        return out

    ae = build_autoencoder(dataset.d_x, config.encoder_hidden, config.encoder_dim, config.encoder_activation,
                           stream(config.seed, "baseline", "encoder", "init"))
    info["reconstruction_mse"] = train_autoencoder(ae, Xtr, config.encoder_epochs, config.encoder_lr,
                                                   config.batch_size, stream(config.seed, "baseline", "encoder", "batches"))
    Ztr, Zte = encoder_transform(Xtr, ae), encoder_transform(Xte, ae)
    if config.kind == "encoder":
        return BaselineOutput(config, Ztr, Zte, info)

    pca = PCA.fit(Ztr, config.retained_dim)
    sens = feature_range(pca.transform(Ztr))
    info.update(explained_ratio=pca.explained_ratio, sensitivity=sens.tolist())
    return BaselineOutput(config, hybrid_transform(Ztr, pca, config.epsilon, sens, noise),
                          hybrid_transform(Zte, pca, config.epsilon, sens, noise), info)
