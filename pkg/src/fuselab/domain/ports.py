"""
Ports — Protocol-based interfaces between the harness and the model families.

The harness only needs to enumerate a grid, rank cells by complexity, fit a
cell on a training Dataset and predict on another Dataset. Each model family
(Combined Model, random forest, linear regression) satisfies these contracts
structurally, without inheritance:

  harness ← Estimator / FittedModel (protocols) ← estimators.py (implementations)
"""

from __future__ import annotations

from collections.abc import Mapping, Sequence
from typing import Protocol, runtime_checkable

import numpy as np
from numpy.typing import NDArray

from fuselab.domain.models import Dataset

HparamValue = int | float | str
Hparams = Mapping[str, HparamValue]


@runtime_checkable
class FittedModel(Protocol):
    """A trained model of one family."""

    @property
    def n_parameters(self) -> int: ...

    def predict(self, dataset: Dataset) -> NDArray[np.float64]: ...


@runtime_checkable
class Estimator(Protocol):
    """
    Port: one model family with its hyperparameter grid.

    `cells()` enumerates the grid as the product over sorted keys, so a cell's
    position is its lexicographic rank. `complexity` orders tied cells
    (fewer parameters first).
    """

    @property
    def kind(self) -> str: ...

    def cells(self) -> Sequence[Hparams]: ...

    def complexity(self, hparams: Hparams, train: Dataset) -> int: ...

    def fit(self, train: Dataset, hparams: Hparams, seed: int) -> FittedModel: ...
