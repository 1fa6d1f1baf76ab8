"""Feature files shared by trained extractors and baselines.

A feature file is an uncompressed ``.npz`` archive with arrays:

- ``train``, ``test``: float64 feature matrices, rows aligned with the
  dataset's train/test splits;
- ``method``: 0-d unicode array naming the producing method;
- ``fingerprint``: 0-d unicode array with the dataset fingerprint.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Union

import numpy as np


@dataclass(frozen=True)
class FeatureFile:
    method: str
    train: np.ndarray
    test: np.ndarray
    fingerprint: str


def save_features(path: Union[str, Path], method: str, train: np.ndarray, test: np.ndarray, fingerprint: str) -> None:
    with open(path, "wb") as fh:
        np.savez(fh, train=np.asarray(train, dtype=np.float64), test=np.asarray(test, dtype=np.float64),
                 method=np.array(method), fingerprint=np.array(fingerprint))


def load_features(path: Union[str, Path]) -> FeatureFile:
    with np.load(path, allow_pickle=False) as z:
        return FeatureFile(str(z["method"]), z["train"].copy(), z["test"].copy(), str(z["fingerprint"]))
