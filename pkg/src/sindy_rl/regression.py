"""Sequentially thresholded least squares with ridge regularization.

Solves the sparse linear system ``targets = theta @ coefficients`` one
target column at a time: repeatedly ridge-solve on the active feature set,
zero out coefficients whose magnitude falls below the threshold, and stop
when the active set is stable.  The active set is non-increasing across
iterations, so the loop terminates in at most F iterations.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "RegressionProblem",
    "StlsqConfig",
    "CoefficientMatrix",
    "ColumnDiagnostics",
    "RankDeficiencyError",
    "ridge_solve",
    "stlsq",
]


class RankDeficiencyError(np.linalg.LinAlgError):
    """Unregularized solve on a rank-deficient masked system."""


@dataclass(frozen=True)
class RegressionProblem:
    """Design matrix of feature evaluations and the per-dimension targets."""

    theta: np.ndarray
    targets: np.ndarray

    def __post_init__(self):
        theta = np.asarray(self.theta, dtype=float)
        targets = np.asarray(self.targets, dtype=float)
        if targets.ndim == 1:
            targets = targets[:, None]
        if theta.ndim != 2 or targets.ndim != 2:
            raise ValueError("theta and targets must be 2-D")
        if theta.shape[0] != targets.shape[0]:
            raise ValueError(
                f"row count mismatch: theta has {theta.shape[0]}, targets {targets.shape[0]}")
        if theta.shape[0] < 1:
            raise ValueError("need at least one sample")
        if not np.all(np.isfinite(theta)):
            raise ValueError("theta contains non-finite entries")
        if not np.all(np.isfinite(targets)):
            raise ValueError("targets contain non-finite entries")
        object.__setattr__(self, "theta", theta)
        object.__setattr__(self, "targets", targets)

    @property
    def n_samples(self) -> int:
        return self.theta.shape[0]

    @property
    def n_features(self) -> int:
        return self.theta.shape[1]

    @property
    def n_targets(self) -> int:
        return self.targets.shape[1]


@dataclass(frozen=True)
class StlsqConfig:
    """Threshold, ridge weight, iteration cap, and optional column scaling."""

    threshold: float = 0.0009
    ridge_alpha: float = 1e-6
    max_iterations: int = 20
    normalize_columns: bool = False

    def __post_init__(self):
        if self.threshold < 0:
            raise ValueError("threshold must be nonnegative")
        if self.ridge_alpha < 0:
            raise ValueError("ridge_alpha must be nonnegative")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be at least 1")


@dataclass(frozen=True)
class ColumnDiagnostics:
    """Per-target-column record of how the STLSQ iteration ended."""

    iterations: int
    support_stable: bool
    empty_support: bool
    residual: float


@dataclass(frozen=True)
class CoefficientMatrix:
    """F x n coefficient array with an explicit active-entry mask."""

    values: np.ndarray
    active_mask: np.ndarray
    diagnostics: tuple[ColumnDiagnostics, ...] = field(default=(), compare=False)

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        mask = np.asarray(self.active_mask, dtype=bool)
        if values.shape != mask.shape:
            raise ValueError("values and active_mask must share a shape")
        if np.any(values[~mask] != 0.0):
            raise ValueError("inactive entries must be exactly zero")
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "active_mask", mask)

    @property
    def n_features(self) -> int:
        return self.values.shape[0]

    @property
    def n_targets(self) -> int:
        return self.values.shape[1]

    def nonzero_count(self) -> int:
        return int(np.count_nonzero(self.values))


def ridge_solve(
    theta: np.ndarray,
    target: np.ndarray,
    alpha: float,
    mask: np.ndarray | None = None,
) -> np.ndarray:
    """Ridge regression restricted to the masked-in features.

    Minimizes ``||theta[:, mask] @ w - target||^2 + alpha * ||w||^2`` and
    returns a full-length weight vector with exact zeros at masked-out
    positions.  Solved via lstsq on the ridge-augmented system so that
    near-collinear feature columns are handled stably.
    """
    theta = np.asarray(theta, dtype=float)
    target = np.asarray(target, dtype=float).ravel()
    if alpha < 0:
        raise ValueError("alpha must be nonnegative")
    n_features = theta.shape[1]
    if mask is None:
        mask = np.ones(n_features, dtype=bool)
    mask = np.asarray(mask, dtype=bool)
    if not np.any(mask):
        raise ValueError("mask must keep at least one feature active")
    sub = theta[:, mask]
    if alpha == 0.0:
        solution, _, rank, _ = np.linalg.lstsq(sub, target, rcond=None)
        if rank < sub.shape[1]:
            raise RankDeficiencyError(
                f"masked system is rank deficient (rank {rank} < {sub.shape[1]}) "
                "and alpha is zero")
    else:
        augmented = np.vstack([sub, np.sqrt(alpha) * np.eye(sub.shape[1])])
        rhs = np.concatenate([target, np.zeros(sub.shape[1])])
        solution, _, _, _ = np.linalg.lstsq(augmented, rhs, rcond=None)
    weights = np.zeros(n_features)
    weights[mask] = solution
    return weights


def stlsq(problem: RegressionProblem, config: StlsqConfig) -> CoefficientMatrix:
    """Sequentially thresholded least squares, each target column independently."""
    theta = problem.theta
    if config.normalize_columns:
        scales = np.linalg.norm(theta, axis=0)
        scales[scales == 0.0] = 1.0
    else:
        scales = np.ones(problem.n_features)
    theta_scaled = theta / scales

    values = np.zeros((problem.n_features, problem.n_targets))
    masks = np.zeros((problem.n_features, problem.n_targets), dtype=bool)
    diagnostics: list[ColumnDiagnostics] = []
    for col in range(problem.n_targets):
        target = problem.targets[:, col]
        mask = np.ones(problem.n_features, dtype=bool)
        weights = np.zeros(problem.n_features)
        stable = False
        iterations = 0
        for iterations in range(1, config.max_iterations + 1):
            weights = ridge_solve(theta_scaled, target, config.ridge_alpha, mask)
            # Thresholding applies to coefficients in original feature units.
            new_mask = (np.abs(weights / scales) >= config.threshold) & mask
            if not np.any(new_mask):
                mask = new_mask
                weights = np.zeros(problem.n_features)
                stable = True
                break
            if np.array_equal(new_mask, mask):
                stable = True
                break
            mask = new_mask
        if not stable and np.any(mask):
            # Iteration cap hit: refit on the last active set so the result
            # is still the inner solver's output for that mask.
            weights = ridge_solve(theta_scaled, target, config.ridge_alpha, mask)
        weights = np.where(mask, weights, 0.0)
        residual = float(np.linalg.norm(theta_scaled @ weights - target))
        values[:, col] = weights / scales
        masks[:, col] = mask
        diagnostics.append(ColumnDiagnostics(
            iterations=iterations,
            support_stable=stable,
            empty_support=not np.any(mask),
            residual=residual,
        ))
    return CoefficientMatrix(values=values, active_mask=masks,
                             diagnostics=tuple(diagnostics))
