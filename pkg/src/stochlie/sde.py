"""Stratonovich-Heun integration of ``dz = sum_j S_j(X, z) o dX^j`` with
``S_j(X, z) = sum_i b_j^i(X) Y_i(z)``."""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property
from numbers import Real
from typing import IO, Callable, Sequence

import numpy as np

from ._parallel import map_ordered
from .fields import PolyVectorField
from .noise import DrivingPath, TimeGrid, format_float, sample_brownian, with_time_component
from .polynomial import Polynomial, graded_lex_key

#: States with norm above this (or non-finite) stop the integration.
EXPLOSION_NORM = 1e12


@dataclass(frozen=True, eq=False)
class StratonovichSystem:
    """Fields ``Y_1..Y_r`` on R^n and an ``r x l`` table of noise coefficients.

    ``coeffs[i][j]`` is the polynomial ``b_j^i`` in the driving variables
    ``x in R^l`` multiplying ``Y_i`` against ``dX^j``; plain numbers are
    promoted to constants.
    """

    fields: tuple[PolyVectorField, ...]
    coeffs: tuple[tuple[Polynomial, ...], ...]

    def __init__(self, fields: Sequence[PolyVectorField], coeffs):
        fields = tuple(fields)
        if not fields:
            raise ValueError("need at least one field")
        n = fields[0].dim
        if any(Y.dim != n for Y in fields):
            raise ValueError("all fields must share one dimension")
        rows = [list(row) for row in (coeffs.tolist() if isinstance(coeffs, np.ndarray) else coeffs)]
        if len(rows) != len(fields):
            raise ValueError(f"coeffs needs {len(fields)} rows (one per field), got {len(rows)}")
        l = len(rows[0])
        if l < 1 or any(len(row) != l for row in rows):
            raise ValueError("coeffs must be a rectangular r x l table with l >= 1")
        table = []
        for row in rows:
            out = []
            for b in row:
                if isinstance(b, Real):
                    b = Polynomial.constant(l, float(b))
                if not isinstance(b, Polynomial) or b.nvars != l:
                    raise ValueError(f"coefficients must be numbers or polynomials in {l} variables")
                out.append(b)
            table.append(tuple(out))
        object.__setattr__(self, "fields", fields)
        object.__setattr__(self, "coeffs", tuple(table))
        const = all(b.is_constant() for row in table for b in row)
        object.__setattr__(
            self, "_const_b",
            np.array([[b((0.0,) * l) for b in row] for row in table]) if const else None,
        )

    @property
    def n(self) -> int:
        return self.fields[0].dim

    @property
    def l(self) -> int:
        return len(self.coeffs[0])

    @property
    def r(self) -> int:
        return len(self.fields)

    def coefficient_matrix(self, x) -> np.ndarray:
        if self._const_b is not None:
            return self._const_b
        return np.array([[b(x) for b in row] for row in self.coeffs])

    @cached_property
    def _field_table(self):
        monos = sorted({e for Y in self.fields for _, _, e in Y.terms}, key=graded_lex_key)
        index = {e: t for t, e in enumerate(monos)}
        C = np.zeros((len(monos), self.n, self.r))
        for i, Y in enumerate(self.fields):
            for k, c, e in Y.terms:
                C[index[e], k, i] = c
        return np.array(monos, dtype=np.int64).reshape(-1, self.n), C

    def field_values(self, z) -> np.ndarray:
        """``n x r`` matrix with columns ``Y_i(z)``."""
        exps, C = self._field_table
        mono = np.prod(np.asarray(z, dtype=float) ** exps, axis=-1)
        return np.tensordot(mono, C, axes=1)

    def operator(self, x, z) -> np.ndarray:
        """The ``n x l`` matrix ``S(x, z)`` whose column ``j`` is ``S_j(x, z)``."""
        return self.field_values(z) @ self.coefficient_matrix(x)

    def component_field(self, j: int, x) -> PolyVectorField:
        """``S_j(x, .)`` as a single polynomial field."""
        B = self.coefficient_matrix(x)
        out = PolyVectorField.zero(self.n)
        for i, Y in enumerate(self.fields):
            out = out + float(B[i, j]) * Y
        return out


def linear_system(A_list, B_list=None) -> StratonovichSystem:
    """``dz = sum_k (A_k z - B_k) o dX^k`` with constant matrices and vectors."""
    A_list = [np.atleast_2d(np.asarray(A, dtype=float)) for A in A_list]
    n = A_list[0].shape[0]
    if B_list is None:
        B_list = [np.zeros(n)] * len(A_list)
    if len(B_list) != len(A_list):
        raise ValueError("need one inhomogeneity per matrix")
    fields = [PolyVectorField.linear(A, -np.asarray(B, dtype=float)) for A, B in zip(A_list, B_list)]
    l = len(fields)
    return StratonovichSystem(fields, np.eye(l))


def homogeneous_part(sys: StratonovichSystem) -> StratonovichSystem:
    """Drop the constant (state independent) terms of every field."""
    fields = []
    for Y in sys.fields:
        fields.append(PolyVectorField.from_terms(Y.dim, [(k, c, e) for k, c, e in Y.terms if sum(e) > 0]))
    return StratonovichSystem(fields, sys.coeffs)


@dataclass(frozen=True, eq=False)
class Trajectory:
    grid: TimeGrid
    states: np.ndarray
    exit_index: int | None = None
    defect: float | None = None

    @property
    def terminal(self) -> np.ndarray:
        return self.states[-1]

    def write_csv(self, fh: IO[str]) -> None:
        write_trajectory_csv(self, fh)


def write_trajectory_csv(traj: Trajectory, fh: IO[str]) -> None:
    n = traj.states.shape[1]
    fh.write(",".join(["t"] + [f"g{i}" for i in range(n)] + ["exit"]) + "\n")
    for k, (t, row) in enumerate(zip(traj.grid.nodes, traj.states)):
        flag = int(traj.exit_index is not None and k >= traj.exit_index)
        fh.write(",".join([format_float(t)] + [format_float(v) for v in row] + [str(flag)]) + "\n")


def _blown_up(z: np.ndarray) -> bool:
    return not np.all(np.isfinite(z)) or float(np.linalg.norm(z)) > EXPLOSION_NORM


def integrate_heun(sys: StratonovichSystem, path: DrivingPath, z0) -> Trajectory:
    """Stratonovich-Heun (trapezoid predictor-corrector) scheme.

    If the state explodes or turns non-finite at node ``k``, ``exit_index`` is
    set to ``k`` and the remaining rows are NaN.
    """
    z0 = np.asarray(z0, dtype=float)
    if z0.shape != (sys.n,):
        raise ValueError(f"initial condition must have shape ({sys.n},), got {z0.shape}")
    if path.dim != sys.l:
        raise ValueError(f"system expects a {sys.l}-dimensional path, got {path.dim}")
    X = path.values
    dX = path.increments
    K = path.grid.steps
    states = np.full((K + 1, sys.n), np.nan)
    states[0] = z0
    z = z0
    S0 = sys.operator(X[0], z)
    for k in range(K):
        predictor = z + S0 @ dX[k]
        S1 = sys.operator(X[k + 1], predictor)
        z = z + 0.5 * (S0 + S1) @ dX[k]
        if _blown_up(z):
            return Trajectory(path.grid, states, exit_index=k + 1)
        states[k + 1] = z
        if k + 1 < K:
            S0 = sys.operator(X[k + 1], z)
    return Trajectory(path.grid, states)


def brownian_with_time(l: int) -> Callable[[TimeGrid, int, int], DrivingPath]:
    """Path factory: component 0 is time, components 1..l-1 Brownian."""
    def factory(grid: TimeGrid, seed: int, path_index: int) -> DrivingPath:
        return with_time_component(sample_brownian(grid, l - 1, seed, path_index))
    return factory


def strong_errors(sys: StratonovichSystem, oracle: Callable[[DrivingPath], np.ndarray], resolutions: Sequence[int],
                  n_paths: int, seed: int, z0, t_end: float = 1.0, path_factory=None,
                  threads: int = 1) -> np.ndarray:
    """Mean terminal error ``|Heun - oracle|`` per resolution (paths re-sampled per resolution)."""
    if path_factory is None:
        path_factory = brownian_with_time(sys.l)
    out = []
    for K in resolutions:
        grid = TimeGrid(t_end, int(K))

        def one(p, grid=grid):
            path = path_factory(grid, seed, p)
            traj = integrate_heun(sys, path, z0)
            return float(np.linalg.norm(traj.terminal - np.asarray(oracle(path), dtype=float)))

        errs = map_ordered(one, range(n_paths), threads)
        out.append(math.fsum(errs) / n_paths)
    return np.array(out)


def fit_slope(h, err) -> float:
    """Least-squares slope of ``log err`` against ``log h``."""
    h, err = np.asarray(h, dtype=float), np.asarray(err, dtype=float)
    if h.size < 2:
        raise ValueError("need at least two points for a slope")
    if np.any(~np.isfinite(err)) or np.any(err <= 0.0):
        raise ValueError("slope undefined: errors must be positive and finite")
    return float(np.polyfit(np.log(h), np.log(err), 1)[0])


def strong_error_slope(sys: StratonovichSystem, oracle, resolutions: Sequence[int], n_paths: int, seed: int,
                       z0, t_end: float = 1.0, path_factory=None, threads: int = 1) -> float:
    """Empirical strong order: slope of log(mean terminal error) vs log(h)."""
    if len(resolutions) < 2:
        raise ValueError("need at least two resolutions")
    errs = strong_errors(sys, oracle, resolutions, n_paths, seed, z0, t_end, path_factory, threads)
    return fit_slope([t_end / K for K in resolutions], errs)
