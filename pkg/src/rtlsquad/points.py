"""Exploration-points feedback law and the budget arithmetic around it.

A rating r in 1..5 scales the current points by (alpha - beta*r); the result is
blended with the previous value by the smoothing factor eta and clamped.
Higher ratings therefore shrink the next budget (keep refining), lower ratings
grow it (try something more radical).
"""

from __future__ import annotations

import math

from pydantic import BaseModel, model_validator

from rtlsquad.errors import InvalidRating
from rtlsquad.model import ExplorationPlan, ExplorationPoints, PointsStep


class PointsConfig(BaseModel):
    alpha: float = 2.375
    beta: float = 0.375
    eta: float = 0.4
    p0: float = 6.0
    p_min: float = 1.0
    p_max: float = 16.0

    @model_validator(mode="after")
    def _check(self) -> PointsConfig:
        if self.alpha - 5 * self.beta <= 0:
            raise ValueError("alpha - 5*beta must stay positive")
        if not 0.0 <= self.eta <= 1.0:
            raise ValueError("eta must lie in [0, 1]")
        if self.p0 <= 0 or self.p_min < 0:
            raise ValueError("p0 must be > 0 and p_min >= 0")
        if not self.p_min <= self.p0 <= self.p_max:
            raise ValueError("need p_min <= p0 <= p_max")
        return self


DEFAULT_POINTS = PointsConfig()


def update_points(p: float, r: int, cfg: PointsConfig = DEFAULT_POINTS) -> tuple[float, float]:
    """Return ``(p_hat, p_next)`` for rating ``r`` given current points ``p``."""
    if isinstance(r, bool) or int(r) != r or not 1 <= r <= 5:
        raise InvalidRating(f"rating must be an integer in [1, 5], got {r!r}")
    if p < 0:
        raise ValueError("points must be non-negative")
    p_hat = (cfg.alpha - cfg.beta * r) * p
    blended = cfg.eta * p_hat + (1.0 - cfg.eta) * p
    return p_hat, min(max(blended, cfg.p_min), cfg.p_max)


def apply_rating(points: ExplorationPoints, k: int, r: int, cfg: PointsConfig = DEFAULT_POINTS) -> PointsStep:
    p = points.current
    p_hat, p_next = update_points(p, r, cfg)
    step = PointsStep(k=k, r=r, p=p, p_hat=p_hat, p_next=p_next)
    points.history.append(step)
    points.current = p_next
    return step


def budget(p: float) -> int:
    if p < 0:
        raise ValueError("points must be non-negative")
    return math.floor(p)


def affordable(plan: ExplorationPlan, p: float) -> bool:
    return plan.total_cost <= budget(p)
