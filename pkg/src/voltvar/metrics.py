"""Evaluation metrics: voltage deviations, losses, swing and frontier points."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np


@dataclass(frozen=True)
class CaseMetrics:
    """Worst deviations (pu) and losses for one solved case."""

    max_dev_above: float
    max_dev_below: float
    loss_w: float
    loss_rel: float

    def __post_init__(self) -> None:
        for name in ("max_dev_above", "max_dev_below", "loss_w", "loss_rel"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")


def case_metrics(state, base_loss: float) -> CaseMetrics:
    """Summarize a solved state (AC or LinDistFlow).

    Deviations are taken over the non-slack nodes.  ``base_loss`` [W] is the
    loss of the uncontrolled solve of the same realization and case.
    """
    if not base_loss > 0:
        raise ValueError(f"base_loss must be positive, got {base_loss}")
    v = np.asarray(state.v_mag)[1:]
    above = float(max(np.max(v - 1.0), 0.0)) if v.size else 0.0
    below = float(max(np.max(1.0 - v), 0.0)) if v.size else 0.0
    loss = state.loss_w
    return CaseMetrics(above, below, loss, loss / base_loss)


def swing(under: CaseMetrics, over: CaseMetrics) -> float:
    """Voltage swing between the overgenerated peak and the undergenerated dip."""
    return over.max_dev_above + under.max_dev_below


@dataclass(frozen=True)
class FrontierPoint:
    scheme: str
    k: float | None
    limit_scale: float
    swing_pu: float
    avg_rel_loss: float
    n_realizations: int

    def __post_init__(self) -> None:
        if self.swing_pu < 0:
            raise ValueError("swing_pu must be non-negative")


def frontier_point(pairs: Sequence[tuple[CaseMetrics, CaseMetrics]], scheme: str = "",
                   k: float | None = None, limit_scale: float = 1.0) -> FrontierPoint:
    """Average swing and relative loss over realizations.

    Args:
        pairs: ``(under, over)`` metrics, one pair per realization.
    """
    pairs = list(pairs)
    if not pairs:
        raise ValueError("frontier_point needs at least one realization")
    swings = [swing(u, o) for u, o in pairs]
    losses = [(u.loss_rel + o.loss_rel) / 2 for u, o in pairs]
    return FrontierPoint(scheme, k, limit_scale, float(np.mean(swings)),
                         float(np.mean(losses)), len(pairs))


def below_curve(point: FrontierPoint, curve: Iterable[FrontierPoint]) -> bool:
    """True if ``point`` has strictly lower swing than ``curve`` at equal-or-higher loss.

    The curve's swing is interpolated linearly in average relative loss.  A
    point to the left of the whole curve is compared against the curve's
    lowest-loss end; a point to the right of it never qualifies.
    """
    pts = sorted(curve, key=lambda p: p.avg_rel_loss)
    if not pts:
        return False
    xs = np.array([p.avg_rel_loss for p in pts])
    ys = np.array([p.swing_pu for p in pts])
    x = point.avg_rel_loss
    if x > xs[-1]:
        return False
    ref = ys[0] if x <= xs[0] else float(np.interp(x, xs, ys))
    return point.swing_pu < ref
