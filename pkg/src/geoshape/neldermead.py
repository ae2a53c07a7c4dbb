"""Bounded Nelder-Mead with restarts and a full evaluation history.

The simplex lives in coordinates normalized to the unit box; every trial
point is clipped back into the box before evaluation, so no evaluated
parameter ever violates the bounds.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

ALPHA, GAMMA, RHO, SIGMA = 1.0, 2.0, 0.5, 0.5


@dataclass
class NelderMeadResult:
    best_x: np.ndarray
    best_value: float
    best_record: dict
    history: list
    iterations: int
    restarts: int


def minimize_bounded(
    fun: Callable,
    x0,
    bounds: Sequence[tuple],
    budget: int,
    seed: int = 0,
    initial_step: float = 0.1,
    xtol: float = 1e-7,
    ftol: float = 1e-14,
    max_restarts: int = 3,
) -> NelderMeadResult:
    """Minimize ``fun`` over a box.

    ``fun(x)`` returns ``(objective, cost, residual)``; only the objective
    drives the search, the rest is recorded. ``budget`` is the number of
    iterations, where building a simplex counts as one iteration.
    """
    lo = np.array([b[0] for b in bounds], dtype=float)
    hi = np.array([b[1] for b in bounds], dtype=float)
    span = hi - lo
    k = lo.size
    rng = np.random.default_rng(seed)
    history: list = []
    it = 0

    def to_x(z):
        return lo + np.clip(z, 0.0, 1.0) * span

    def evaluate(z):
        z = np.clip(z, 0.0, 1.0)
        obj, cost, res = fun(to_x(z))
        history.append({"iter": it, "params": to_x(z).tolist(), "objective": float(obj),
                        "cost": float(cost), "residual": float(res)})
        return z, float(obj)

    def build(center):
        signs = rng.choice([-1.0, 1.0], size=k)
        pts = [center.copy()]
        for i in range(k):
            z = center.copy()
            step = signs[i] * initial_step
            if not 0.0 <= z[i] + step <= 1.0:
                step = -step
            z[i] += step
            pts.append(z)
        out = [evaluate(z) for z in pts]
        return [p for p, _ in out], [f for _, f in out]

    simplex, values = build(np.clip((np.asarray(x0, dtype=float) - lo) / span, 0.0, 1.0))
    restarts = 0
    last_restart_best = min(values)
    it = 1
    while it < budget:
        order = np.argsort(values, kind="stable")
        simplex = [simplex[i] for i in order]
        values = [values[i] for i in order]
        size = max(float(np.max(np.abs(z - simplex[0]))) for z in simplex[1:]) if k else 0.0
        if size <= xtol:
            if restarts >= max_restarts or (restarts and values[0] >= last_restart_best - ftol):
                break
            last_restart_best = values[0]
            restarts += 1
            simplex, values = build(simplex[0])
            it += 1
            continue
        centroid = np.mean(simplex[:-1], axis=0)
        zr, fr = evaluate(centroid + ALPHA * (centroid - simplex[-1]))
        if values[0] <= fr < values[-2]:
            simplex[-1], values[-1] = zr, fr
        elif fr < values[0]:
            ze, fe = evaluate(centroid + GAMMA * (zr - centroid))
            simplex[-1], values[-1] = (ze, fe) if fe < fr else (zr, fr)
        else:
            if fr < values[-1]:
                zc, fc = evaluate(centroid + RHO * (zr - centroid))
                accept = fc <= fr
            else:
                zc, fc = evaluate(centroid + RHO * (simplex[-1] - centroid))
                accept = fc < values[-1]
            if accept:
                simplex[-1], values[-1] = zc, fc
            else:
                for i in range(1, k + 1):
                    simplex[i], values[i] = evaluate(simplex[0] + SIGMA * (simplex[i] - simplex[0]))
        it += 1
    best = int(np.argmin([h["objective"] for h in history]))
    rec = history[best]
    return NelderMeadResult(np.array(rec["params"]), rec["objective"], rec, history, it, restarts)
