"""
Linear regression baseline: least squares with a tiny ridge damping.

Solves min ‖y − Xβ − b‖² + λ‖β‖² with the intercept unpenalised, via the
centered normal equations (XcᵀXc + λI)β = Xcᵀyc and b = ȳ − x̄ᵀβ. The default
λ = 1e-8 only keeps collinear one-hot blocks solvable; it is not a statistical
regulariser.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.typing import ArrayLike

from fuselab.errors import ArgumentError, ShapeError, StateError
from fuselab.numerics import Vector, as_matrix

DEFAULT_RIDGE = 1e-8


@dataclass(frozen=True, slots=True)
class LinearModel:
    """Coefficients + intercept; `coefficients is None` means not fitted."""

    coefficients: Vector | None = None
    intercept: float = 0.0
    ridge: float = DEFAULT_RIDGE

    @property
    def is_fitted(self) -> bool:
        return self.coefficients is not None

    @property
    def n_parameters(self) -> int:
        return 0 if self.coefficients is None else self.coefficients.shape[0] + 1


def fit_ols(x: ArrayLike, y: ArrayLike, ridge: float = DEFAULT_RIDGE) -> LinearModel:
    features = as_matrix(x, "X")
    target = np.asarray(y, dtype=np.float64)
    n, p = features.shape
    if n == 0:
        raise ArgumentError("cannot fit a linear model on zero rows")
    if target.shape != (n,):
        raise ShapeError(f"y has shape {target.shape}, expected ({n},)")
    if ridge < 0:
        raise ArgumentError(f"ridge must be >= 0, got {ridge}")

    x_mean = features.mean(axis=0)
    y_mean = float(target.mean())
    xc = features - x_mean
    yc = target - y_mean
    gram = xc.T @ xc + ridge * np.eye(p)
    try:
        beta = np.linalg.solve(gram, xc.T @ yc)
    except np.linalg.LinAlgError:
        # Only reachable with ridge == 0 on rank-deficient data.
        beta = np.linalg.lstsq(xc, yc, rcond=None)[0]
    coefficients = np.asarray(beta, dtype=np.float64)
    coefficients.setflags(write=False)
    return LinearModel(
        coefficients=coefficients,
        intercept=y_mean - float(x_mean @ coefficients),
        ridge=ridge,
    )


def lin_predict(model: LinearModel, x: ArrayLike) -> Vector:
    if model.coefficients is None:
        raise StateError("linear model used before fit_ols")
    features = as_matrix(x, "X")
    if features.shape[1] != model.coefficients.shape[0]:
        raise ShapeError(
            f"model has {model.coefficients.shape[0]} coefficients, input has "
            f"{features.shape[1]} columns"
        )
    return features @ model.coefficients + model.intercept
