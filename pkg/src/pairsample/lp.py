"""Packing LPs of the form max 1'x s.t. Ax <= 1, x >= 0, with duals.

Two backends share one interface: HiGHS through scipy (default) and a small
dense simplex kept for self-containment and cross-checking.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Protocol

import numpy as np
from scipy.optimize import linprog


@dataclass
class LpSolution:
    x: np.ndarray  # primal, one entry per column
    z: np.ndarray  # dual, one entry per row
    objective: float


class LpError(RuntimeError):
    pass


class LpBackend(Protocol):
    def solve(self, a: np.ndarray) -> LpSolution: ...


class HighsBackend:
    def solve(self, a: np.ndarray) -> LpSolution:
        rows, cols = a.shape
        if cols == 0:
            return LpSolution(np.zeros(0), np.zeros(rows), 0.0)
        res = linprog(-np.ones(cols), A_ub=a, b_ub=np.ones(rows), bounds=(0, None), method="highs")
        if res.status != 0:
            raise LpError(f"HiGHS failed: {res.message}")
        z = np.maximum(-np.asarray(res.ineqlin.marginals, dtype=float), 0.0)
        return LpSolution(np.maximum(res.x, 0.0), z, -float(res.fun))


class DenseSimplex:
    """Tableau simplex with Bland's rule; the slack basis is feasible since b = 1."""

    def __init__(self, tol: float = 1e-9, max_pivots: int = 100000):
        self.tol = tol
        self.max_pivots = max_pivots

    def solve(self, a: np.ndarray) -> LpSolution:
        rows, cols = a.shape
        if cols == 0:
            return LpSolution(np.zeros(0), np.zeros(rows), 0.0)
        tol = self.tol
        t = np.zeros((rows + 1, cols + rows + 1))
        t[:rows, :cols] = a
        t[:rows, cols:cols + rows] = np.eye(rows)
        t[:rows, -1] = 1.0
        t[rows, :cols] = -1.0  # reduced costs of the maximisation
        basis = list(range(cols, cols + rows))
        for _ in range(self.max_pivots):
            entering = next((j for j in range(cols + rows) if t[rows, j] < -tol), -1)
            if entering < 0:
                break
            col = t[:rows, entering]
            best, leave = None, -1
            for i in range(rows):
                if col[i] > tol:
                    ratio = t[i, -1] / col[i]
                    if best is None or ratio < best - tol or (abs(ratio - best) <= tol and basis[i] < basis[leave]):
                        best, leave = ratio, i
            if leave < 0:
                raise LpError("unbounded packing LP (a column meets no row)")
            t[leave] /= t[leave, entering]
            for i in range(rows + 1):
                if i != leave and t[i, entering] != 0.0:
                    t[i] -= t[i, entering] * t[leave]
            basis[leave] = entering
        else:
            raise LpError("pivot limit reached")
        x = np.zeros(cols + rows)
        for i, j in enumerate(basis):
            x[j] = t[i, -1]
        z = np.maximum(t[rows, cols:cols + rows], 0.0)
        return LpSolution(np.maximum(x[:cols], 0.0), z, float(t[rows, -1]))


def default_backend() -> LpBackend:
    return HighsBackend()
