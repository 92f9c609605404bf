"""Second-kind canonical coordinates for identity-started group SDE solutions.

With ``Gamma_t = exp(d^1 xi_1) ... exp(d^l xi_l)`` and right-invariant
generators, ``dX = M(d) o dd`` where column ``i`` of ``M(d)`` is
``Ad_{exp(d^1 xi_1)} ... Ad_{exp(d^{i-1} xi_{i-1})} xi_i`` in basis coordinates.
The coordinate SDE ``dd = M(d)^-1 o dX`` is integrated with the same
Stratonovich-Heun scheme as :mod:`stochlie.sde`.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import IO

import numpy as np

from .group import GroupTrajectory, MatrixLieGroup, Side, _defects, expm
from .noise import DrivingPath, TimeGrid, format_float, stratonovich_integral

#: Condition number of M(d) beyond which the chart is abandoned.
COND_LIMIT = 1e8


@dataclass(frozen=True)
class WeiNormanState:
    d: np.ndarray
    valid: bool
    singular_index: int | None


@dataclass(frozen=True, eq=False)
class WeiNormanSolution:
    """Coordinates ``d`` at every node; rows after ``singular_index`` are NaN."""

    grid: TimeGrid
    d: np.ndarray  # (K+1, l)
    singular_index: int | None = None
    ordering: tuple[int, ...] | None = None

    @property
    def valid(self) -> np.ndarray:
        ok = np.ones(len(self.d), dtype=bool)
        if self.singular_index is not None:
            ok[self.singular_index:] = False
        return ok

    def node(self, k: int) -> WeiNormanState:
        return WeiNormanState(self.d[k], bool(self.valid[k]), self.singular_index)

    def __len__(self):
        return len(self.d)

    def __getitem__(self, k: int) -> WeiNormanState:
        return self.node(k)

    def write_csv(self, fh: IO[str]) -> None:
        l = self.d.shape[1]
        fh.write(",".join(["t"] + [f"d{i}" for i in range(l)] + ["valid"]) + "\n")
        for t, row, ok in zip(self.grid.nodes, self.d, self.valid):
            fh.write(",".join([format_float(t)] + [format_float(v) for v in row] + [str(int(ok))]) + "\n")


def wn_matrix(G: MatrixLieGroup, d) -> np.ndarray:
    """``M(d)``; ``M(0)`` is the identity and the empty product for column 0 is the identity."""
    d = np.asarray(d, dtype=float)
    if d.shape != (G.l,):
        raise ValueError(f"expected {G.l} coordinates, got shape {d.shape}")
    if not np.all(np.isfinite(d)):
        raise ValueError("coordinates must be finite")
    M = np.empty((G.l, G.l))
    P = np.eye(G.d)
    P_inv = np.eye(G.d)
    for i, xi in enumerate(G.basis):
        M[:, i] = G.coords(P @ xi @ P_inv)
        P = P @ expm(d[i] * xi)
        P_inv = expm(-d[i] * xi) @ P_inv
    return M


def reconstruct(G: MatrixLieGroup, d: np.ndarray) -> np.ndarray:
    """``prod_i expm(d^i xi_i)`` for each row of ``d``."""
    d = np.atleast_2d(d)
    out = np.broadcast_to(np.eye(G.d), (len(d), G.d, G.d)).copy()
    for i, xi in enumerate(G.basis):
        out = out @ expm(d[:, i, None, None] * xi)
    return out


def _solve(M: np.ndarray, dx: np.ndarray, cond_limit: float):
    # det M(0) = 1; a sign change means a step jumped across the singular set
    if not np.all(np.isfinite(M)) or np.linalg.det(M) <= 0 or np.linalg.cond(M) > cond_limit:
        return None
    return np.linalg.solve(M, dx)


def integrate_wei_norman(G: MatrixLieGroup, path: DrivingPath,
                         cond_limit: float = COND_LIMIT) -> tuple[WeiNormanSolution, GroupTrajectory]:
    """Heun integration of the coordinate SDE plus the reconstructed group path.

    If ``M(d)`` becomes ill conditioned at node ``k`` the solution is truncated
    there: ``singular_index = k`` and later rows are NaN.
    """
    if path.dim != G.l:
        raise ValueError(f"{G.name} needs a {G.l}-dimensional driving path, got {path.dim}")
    K = path.grid.steps
    dX = path.increments
    d = np.full((K + 1, G.l), np.nan)
    d[0] = 0.0
    singular = None
    cur = d[0]
    for k in range(K):
        v0 = _solve(wn_matrix(G, cur), dX[k], cond_limit)
        if v0 is None:
            singular = k
            break
        pred = cur + v0
        v1 = _solve(wn_matrix(G, pred), dX[k], cond_limit) if np.all(np.isfinite(pred)) else None
        if v1 is None:
            singular = k
            break
        cur = cur + 0.5 * (v0 + v1)
        d[k + 1] = cur
    sol = WeiNormanSolution(path.grid, d, singular, tuple(range(G.l)))
    elements = np.full((K + 1, G.d, G.d), np.nan)
    last = K + 1 if singular is None else singular + 1
    elements[:last] = reconstruct(G, d[:last])
    traj = GroupTrajectory(path.grid, elements, _defects(G, elements), Side.LEFT_ACTION_RIGHT_INVARIANT,
                           G.membership_tol)
    return sol, traj


def affine_closed_form(path: DrivingPath) -> WeiNormanSolution:
    """``d^1 = X^1``, ``d^0 = exp(X^1) * int_0^t exp(-X^1) o dX^0`` by trapezoid quadrature."""
    if path.dim != 2:
        raise ValueError("the affine closed form needs a path (X^0, X^1)")
    x1 = path.component(1)
    inner = stratonovich_integral(np.exp(-x1), path, 0)
    d = np.column_stack([np.exp(x1) * inner, x1])
    return WeiNormanSolution(path.grid, d, None, (0, 1))
