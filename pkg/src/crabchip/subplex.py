"""Subplex: Nelder-Mead simplex searches cycled over low-dimensional subspaces.

Follows Rowan's scheme: coordinates are sorted by how much they moved in the
previous cycle, grouped into subspaces of 2-5 coordinates, and each subspace
is searched with a Nelder-Mead simplex until that simplex has shrunk by a
fixed factor. The step vector is then rescaled and reoriented from the net
progress of the cycle.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

# Nelder-Mead coefficients
REFLECT = 1.0
EXPAND = 2.0
CONTRACT = 0.5
SHRINK = 0.5
# Subplex coefficients
PSI = 0.25
OMEGA = 0.1


@dataclass
class MinimizeResult:
    x: np.ndarray
    fun: float
    n_evals: int
    history: list[tuple[int, float]] = field(default_factory=list)
    converged: bool = False
    n_restarts: int = 0
    reason: str = ""

    def running_min(self) -> np.ndarray:
        return np.minimum.accumulate([f for _, f in self.history])


class _Budget(Exception):
    pass


class _Counter:
    """Wraps the objective: counts calls, tracks best point, enforces the budget."""

    def __init__(self, fun, max_evals, f_target):
        self.fun = fun
        self.max_evals = max_evals
        self.f_target = f_target
        self.n = 0
        self.best_x = None
        self.best_f = np.inf
        self.history: list[tuple[int, float]] = []

    def __call__(self, x):
        if self.n >= self.max_evals:
            raise _Budget("max_evals")
        if self.f_target is not None and self.best_f <= self.f_target:
            raise _Budget("f_target")
        f = float(self.fun(np.array(x, dtype=float)))
        if not np.isfinite(f):
            f = np.inf
        self.n += 1
        self.history.append((self.n, f))
        if f < self.best_f:
            self.best_f = f
            self.best_x = np.array(x, dtype=float)
        return f


def partition_subspaces(order_values, nsmin: int, nsmax: int) -> list[np.ndarray]:
    """Group coordinate indices into subspaces, largest recent movers first."""
    n = len(order_values)
    idx = np.argsort(-np.abs(np.asarray(order_values)), kind="stable")
    vals = np.abs(np.asarray(order_values))[idx]
    subspaces = []
    start = 0
    while start < n:
        remaining = n - start
        best_k = None
        best_goodness = -np.inf
        for k in range(nsmin, min(nsmax, remaining) + 1):
            rest = remaining - k
            if rest != 0 and rest < nsmin:
                continue
            head = vals[start:start + k].sum() / k
            tail = vals[start + k:].sum() / rest if rest else 0.0
            goodness = head - tail
            if goodness > best_goodness:
                best_goodness = goodness
                best_k = k
        if best_k is None:
            best_k = remaining
        subspaces.append(idx[start:start + best_k])
        start += best_k
    return subspaces


def _simplex_size(simplex):
    return np.max(np.linalg.norm(simplex[1:] - simplex[0], axis=1))


def _nelder_mead(fsub, x0, f0, steps, size_tol):
    """Minimize ``fsub`` on a subspace; stop once the simplex shrank to ``size_tol``."""
    m = len(x0)
    simplex = np.empty((m + 1, m))
    simplex[0] = x0
    for j in range(m):
        simplex[j + 1] = x0
        simplex[j + 1, j] += steps[j]
    fvals = np.array([f0] + [fsub(v) for v in simplex[1:]])
    initial_size = _simplex_size(simplex)
    stop_size = max(size_tol[0] * initial_size, size_tol[1])

    while True:
        order = np.argsort(fvals, kind="stable")
        simplex = simplex[order]
        fvals = fvals[order]
        if _simplex_size(simplex) <= stop_size:
            return simplex[0], fvals[0]
        centroid = simplex[:-1].mean(axis=0)
        worst = simplex[-1]
        xr = centroid + REFLECT * (centroid - worst)
        fr = fsub(xr)
        if fr < fvals[0]:
            xe = centroid + EXPAND * (xr - centroid)
            fe = fsub(xe)
            if fe < fr:
                simplex[-1], fvals[-1] = xe, fe
            else:
                simplex[-1], fvals[-1] = xr, fr
            continue
        if fr < fvals[-2]:
            simplex[-1], fvals[-1] = xr, fr
            continue
        if fr < fvals[-1]:
            xc = centroid + CONTRACT * (xr - centroid)
            fc = fsub(xc)
            if fc <= fr:
                simplex[-1], fvals[-1] = xc, fc
                continue
        else:
            xc = centroid - CONTRACT * (centroid - worst)
            fc = fsub(xc)
            if fc < fvals[-1]:
                simplex[-1], fvals[-1] = xc, fc
                continue
        for j in range(1, m + 1):
            simplex[j] = simplex[0] + SHRINK * (simplex[j] - simplex[0])
            fvals[j] = fsub(simplex[j])


def subplex_minimize(
    fun: Callable[[np.ndarray], float],
    x0,
    max_evals: int = 3000,
    simplex_scale=0.01,
    subspace_size: tuple[int, int] = (2, 5),
    restarts: int = 0,
    rng_seed: int = 0,
    xtol: float = 1e-8,
    collapse_tol: float = 1e-12,
    f_target: float | None = None,
) -> MinimizeResult:
    """Minimize ``fun`` from ``x0`` with at most ``max_evals`` evaluations.

    ``simplex_scale`` is a scalar or per-coordinate initial step. After the
    subplex iteration converges, up to ``restarts`` fresh searches are
    started from the best point with a step drawn from ``rng_seed``.
    Deterministic for fixed arguments.
    """
    if max_evals < 1:
        raise ValueError("max_evals must be >= 1")
    x = np.array(x0, dtype=float)
    if x.ndim != 1 or not np.all(np.isfinite(x)):
        raise ValueError("x0 must be a finite 1-D vector")
    n = x.size
    rng = np.random.default_rng(rng_seed)
    base_step = np.broadcast_to(np.asarray(simplex_scale, dtype=float), (n,)).copy()
    if np.any(base_step == 0):
        raise ValueError("simplex_scale entries must be non-zero")
    nsmin = min(subspace_size[0], n)
    nsmax = min(subspace_size[1], n)

    counter = _Counter(fun, max_evals, f_target)
    converged = False
    reason = ""
    n_restarts = 0
    try:
        fx = counter(x)
        step = base_step.copy()
        order_values = step.copy()
        while True:
            x_prev = x.copy()
            subspaces = partition_subspaces(order_values, nsmin, nsmax)
            for sub in subspaces:
                def fsub(y, sub=sub):
                    z = x.copy()
                    z[sub] = y
                    return counter(z)
                scale = max(1.0, float(np.max(np.abs(x[sub]))))
                y, fy = _nelder_mead(fsub, x[sub].copy(), fx, step[sub], (PSI, collapse_tol * scale))
                if fy <= fx:
                    x[sub] = y
                    fx = fy
            dx = x - x_prev
            tol_metric = np.max(
                np.maximum(np.abs(dx), np.abs(step) * PSI) / np.maximum(np.abs(x), 1.0)
            )
            if tol_metric <= xtol:
                if n_restarts >= restarts:
                    converged = True
                    reason = "xtol"
                    break
                n_restarts += 1
                x = counter.best_x.copy()
                fx = counter.best_f
                step = base_step * rng.uniform(0.5, 1.0, n) * rng.choice([-1.0, 1.0], n)
                order_values = step.copy()
                continue
            if len(subspaces) > 1:
                ratio = np.sum(np.abs(dx)) / np.sum(np.abs(step))
                stepscale = min(max(ratio, OMEGA), 1.0 / OMEGA)
            else:
                stepscale = PSI
            magnitude = np.abs(step) * stepscale
            step = np.where(dx > 0, magnitude, np.where(dx < 0, -magnitude, -np.sign(step) * magnitude))
            order_values = dx.copy()
    except _Budget as stop:
        reason = str(stop)
        converged = reason == "f_target"
    return MinimizeResult(
        x=counter.best_x.copy(),
        fun=counter.best_f,
        n_evals=counter.n,
        history=counter.history,
        converged=converged,
        n_restarts=n_restarts,
        reason=reason,
    )
