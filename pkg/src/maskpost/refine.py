"""Coarse-to-fine subdivision rendering of mask score fields.

Each subdivision step doubles the grid resolution by bilinear upsampling,
then re-predicts only the most uncertain points (those with logits closest
to zero) through a :class:`PointPredictor`. Iterating the step renders a
low-resolution mask up to the target resolution while spending prediction
budget almost exclusively on instance boundaries.
"""
from __future__ import annotations

import math
from abc import ABC, abstractmethod
from dataclasses import dataclass

import numpy as np

from .core import ScoreField, resample, sample_points

__all__ = [
    "PointPredictor",
    "OracleFieldPredictor",
    "IdentityPredictor",
    "SubdivisionConfig",
    "TrainSampleConfig",
    "uncertainty",
    "select_most_uncertain",
    "upsample_x2",
    "plain_upsample",
    "subdivision_step",
    "subdivision_render",
    "biased_point_sample",
    "flip_fuse",
]


class PointPredictor(ABC):
    """Produces refined logits for continuous unit-square query points.

    ``predict`` receives the query points (box-normalized, align-corners
    convention) together with the current interpolated logits at those
    points, and returns one finite logit per point. Implementations must be
    deterministic for a fixed instance; both bundled implementations are
    immutable and therefore safe to share across concurrently running
    renders.
    """

    @abstractmethod
    def predict(self, points: np.ndarray, current: np.ndarray) -> np.ndarray:
        """Return refined logits, shape ``(n,)``, for ``(n, 2)`` query points."""


class OracleFieldPredictor(PointPredictor):
    """Answers queries by sampling a fixed high-resolution reference field."""

    def __init__(self, field: ScoreField) -> None:
        self.field = field

    def predict(self, points: np.ndarray, current: np.ndarray) -> np.ndarray:
        return sample_points(self.field, points)


class IdentityPredictor(PointPredictor):
    """Keeps the interpolated logit, turning refinement into plain upsampling."""

    def predict(self, points: np.ndarray, current: np.ndarray) -> np.ndarray:
        return np.array(current, dtype=np.float64, copy=True)


@dataclass(frozen=True)
class SubdivisionConfig:
    """Rendering schedule: ``subdivision_k`` squared points are re-predicted
    per doubling step while the grid grows from ``start_side`` to
    ``target_side`` (which must be ``start_side * 2**m``)."""

    subdivision_k: int = 28
    target_side: int = 224
    start_side: int = 7

    def __post_init__(self) -> None:
        if self.subdivision_k < 1:
            raise ValueError("subdivision_k must be >= 1")
        if self.start_side < 1:
            raise ValueError("start_side must be >= 1")
        side = self.start_side
        while side < self.target_side:
            side *= 2
        if side != self.target_side:
            raise ValueError(
                f"target_side {self.target_side} is not start_side {self.start_side} "
                "times a power of two"
            )

    @property
    def num_steps(self) -> int:
        return int(round(math.log2(self.target_side / self.start_side)))


@dataclass(frozen=True)
class TrainSampleConfig:
    """Biased point sampling used at training time.

    ``n_points`` is the raw number of points returned (not a grid side).
    ``oversample_k * n_points`` uniform candidates are drawn, the
    ``floor(importance_beta * n_points)`` most uncertain are kept, and the
    remainder is filled with fresh uniform points.
    """

    n_points: int
    oversample_k: int = 3
    importance_beta: float = 0.75
    rng_seed: int = 0

    def __post_init__(self) -> None:
        if self.n_points < 1:
            raise ValueError("n_points must be >= 1")
        if self.oversample_k < 1:
            raise ValueError("oversample_k must be >= 1")
        if not 0.0 <= self.importance_beta <= 1.0:
            raise ValueError("importance_beta must lie in [0, 1]")


def uncertainty(logit):
    """Uncertainty of a logit: ``-|logit|``, maximal at logit 0 (p = 0.5)."""
    return -np.abs(logit)


def select_most_uncertain(field: ScoreField, n: int) -> np.ndarray:
    """Row-major flat indices of the ``n`` most uncertain pixels.

    Ties are broken toward the lowest index, so the selection is
    deterministic.
    """
    size = field.logits.size
    if n > size:
        raise ValueError(f"cannot select {n} points from {size} pixels")
    if n < 0:
        raise ValueError("n must be non-negative")
    order = np.argsort(np.abs(field.logits.ravel()), kind="stable")
    return order[:n]


def upsample_x2(field: ScoreField) -> ScoreField:
    """Bilinear align-corners upsample to double width and height."""
    return resample(field, 2 * field.height, 2 * field.width)


def plain_upsample(field: ScoreField, target_side: int) -> ScoreField:
    """No-refinement baseline: the chain of x2 upsamples a render would take.

    This is exactly ``subdivision_render`` with an :class:`IdentityPredictor`
    (or a zero point budget) and is the reference the rendering gain is
    measured against.
    """
    if field.width != field.height:
        raise ValueError("plain_upsample expects a square field")
    side = field.height
    out = field
    while side < target_side:
        out = upsample_x2(out)
        side *= 2
    if side != target_side:
        raise ValueError(f"target_side {target_side} unreachable from side {field.height}")
    return out


def subdivision_step(
    field: ScoreField, predictor: PointPredictor, n_points: int
) -> ScoreField:
    """One refinement step: upsample x2, re-predict the most uncertain pixels.

    The ``n_points`` pixels of the upsampled grid with logits closest to zero
    are queried on the predictor at their normalized center coordinates and
    overwritten with its output; every other logit keeps its interpolated
    value.
    """
    up = upsample_x2(field)
    if n_points == 0:
        return up
    idx = select_most_uncertain(up, n_points)
    h2, w2 = up.height, up.width
    rows, cols = np.divmod(idx, w2)
    points = np.stack([cols / (w2 - 1), rows / (h2 - 1)], axis=1)
    current = up.logits.ravel()[idx]
    refined = np.asarray(predictor.predict(points, current), dtype=np.float64)
    if refined.shape != (idx.size,):
        raise ValueError(f"predictor returned shape {refined.shape}, expected ({idx.size},)")
    if not np.isfinite(refined).all():
        raise ValueError("predictor returned non-finite logits")
    logits = up.logits.copy()
    logits[rows, cols] = refined
    return ScoreField(logits)


def subdivision_render(
    coarse: ScoreField, predictor: PointPredictor, cfg: SubdivisionConfig
) -> ScoreField:
    """Render a coarse square field up to ``cfg.target_side``.

    Applies :func:`subdivision_step` once per doubling with a per-step budget
    of ``cfg.subdivision_k ** 2`` points, clamped to the step's pixel count.
    With ``target_side == start_side`` the coarse field is returned
    unchanged.
    """
    if coarse.width != cfg.start_side or coarse.height != cfg.start_side:
        raise ValueError(
            f"coarse field is {coarse.width}x{coarse.height}, expected "
            f"{cfg.start_side}x{cfg.start_side}"
        )
    budget = cfg.subdivision_k ** 2
    field = coarse
    for _ in range(cfg.num_steps):
        step_pixels = 4 * field.width * field.height
        field = subdivision_step(field, predictor, min(budget, step_pixels))
    return field


def biased_point_sample(field: ScoreField, cfg: TrainSampleConfig) -> np.ndarray:
    """Draw ``cfg.n_points`` unit-square points biased toward uncertain logits.

    Oversamples ``oversample_k * n_points`` uniform candidates, keeps the
    ``floor(importance_beta * n_points)`` with bilinear-sampled logits
    closest to zero, then tops up with fresh uniform points. Deterministic
    for a fixed ``rng_seed``.
    """
    rng = np.random.default_rng(cfg.rng_seed)
    candidates = rng.random((cfg.oversample_k * cfg.n_points, 2))
    n_importance = int(math.floor(cfg.importance_beta * cfg.n_points))
    chosen = []
    if n_importance > 0:
        logits = sample_points(field, candidates)
        order = np.argsort(np.abs(logits), kind="stable")
        chosen.append(candidates[order[:n_importance]])
    n_uniform = cfg.n_points - n_importance
    if n_uniform > 0:
        chosen.append(rng.random((n_uniform, 2)))
    return np.concatenate(chosen, axis=0)


def flip_fuse(field: ScoreField, field_from_flipped_input: ScoreField) -> ScoreField:
    """Fuse a prediction with one computed on the horizontally flipped input.

    The second field is mirrored back onto the original orientation and the
    two are averaged logit-wise.
    """
    if (field.width, field.height) != (
        field_from_flipped_input.width,
        field_from_flipped_input.height,
    ):
        raise ValueError("fields must share dimensions")
    mirrored = field_from_flipped_input.logits[:, ::-1]
    return ScoreField(0.5 * (field.logits + mirrored))
