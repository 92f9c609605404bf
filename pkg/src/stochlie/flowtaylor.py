"""Truncated logarithm of a stochastic flow in iterated Stratonovich integrals.

For fields ``Y_0..Y_r`` (``Y_0`` against time) the flow is approximated by
``exp(zeta^N)(z)`` with

    zeta^N = sum_{|J| <= N} beta_J B^J,
    beta_J = sum_{sigma in S_n} (-1)^e(sigma) / (n^2 C(n-1, e(sigma))) Y_{sigma(J)},

where ``e(sigma)`` counts descents of ``sigma``, ``sigma(J) = (j_sigma(1), ...,
j_sigma(n))`` and ``Y_J = [Y_j1, [Y_j2, ..., [Y_j(n-1), Y_jn]]]``.
"""

from __future__ import annotations

import itertools
import math
import warnings
from dataclasses import dataclass, field
from fractions import Fraction
from typing import IO, Mapping, Sequence

import numpy as np

from ._parallel import map_ordered
from .fields import PolyVectorField, bracket, evaluate
from .noise import (IteratedIntegralTable, MultiIndex, TimeGrid, degree, format_float, iterated_integral,
                    sample_brownian, with_time_component)
from .sde import StratonovichSystem, fit_slope, integrate_heun

DEFAULT_SIZE_CAP = 5
DEFAULT_MAX_R = 4
DEFAULT_ODE_STEPS = 64


def enumerate_multiindices(r: int, N: int) -> list[MultiIndex]:
    """All ``J`` over ``{0..r}`` with ``|J| <= N``, ordered by degree then lexicographically."""
    if r < 1 or N < 1:
        raise ValueError("r and N must be at least 1")
    found = []
    for size in range(1, N + 1):
        for J in itertools.product(range(r + 1), repeat=size):
            if degree(J) <= N:
                found.append(J)
    found.sort(key=lambda J: (degree(J), J))
    return [MultiIndex(J) for J in found]


def descents(sigma: Sequence[int]) -> int:
    return sum(1 for a, b in zip(sigma, sigma[1:]) if a > b)


def permutation_coefficient(n: int, e: int) -> Fraction:
    return Fraction((-1) ** e, n * n * math.comb(n - 1, e))


def word_coefficients(J: Sequence[int]) -> dict[tuple[int, ...], Fraction]:
    """Exact coefficients of the nested brackets ``Y_w`` making up ``beta_J``, keyed by word ``w``."""
    J = tuple(J)
    n = len(J)
    out: dict[tuple[int, ...], Fraction] = {}
    for sigma in itertools.permutations(range(n)):
        word = tuple(J[s] for s in sigma)
        out[word] = out.get(word, Fraction(0)) + permutation_coefficient(n, descents(sigma))
    return {w: c for w, c in out.items() if c != 0}


@dataclass(frozen=True, eq=False)
class BracketCoefficient:
    J: MultiIndex
    field: PolyVectorField


@dataclass(eq=False)
class BracketCalculus:
    """Nested brackets of a fixed field family, memoised by word."""

    fields: Sequence[PolyVectorField]
    size_cap: int = DEFAULT_SIZE_CAP
    _nested: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        self.fields = tuple(self.fields)
        if not self.fields:
            raise ValueError("need at least the drift field Y_0")
        n = self.fields[0].dim
        if any(Y.dim != n for Y in self.fields):
            raise ValueError("all fields must share one dimension")
        if len(self.fields) - 1 > DEFAULT_MAX_R:
            warnings.warn(f"r = {len(self.fields) - 1} > {DEFAULT_MAX_R}: bracket tables grow quickly",
                          stacklevel=2)

    @property
    def dim(self) -> int:
        return self.fields[0].dim

    def nested(self, word: tuple[int, ...]) -> PolyVectorField:
        hit = self._nested.get(word)
        if hit is None:
            if len(word) == 1:
                hit = self.fields[word[0]]
            else:
                hit = bracket(self.fields[word[0]], self.nested(word[1:]))
            self._nested[word] = hit
        return hit

    def beta(self, J) -> BracketCoefficient:
        J = J if isinstance(J, MultiIndex) else MultiIndex(J)
        if J.size > self.size_cap:
            raise ValueError(f"multi-index size {J.size} exceeds the cap {self.size_cap} "
                             f"(cost grows like size!)")
        if max(J) >= len(self.fields):
            raise IndexError(f"multi-index {J.entries} references a field beyond Y_{len(self.fields) - 1}")
        out = PolyVectorField.zero(self.dim)
        for word, c in word_coefficients(J.entries).items():
            out = out + float(c) * self.nested(word)
        return BracketCoefficient(J, out)


def beta(J, fields: Sequence[PolyVectorField], size_cap: int = DEFAULT_SIZE_CAP) -> BracketCoefficient:
    return BracketCalculus(fields, size_cap).beta(J)


@dataclass(frozen=True, eq=False)
class TruncatedLogFlow:
    N: int
    terms: list[tuple[MultiIndex, float, PolyVectorField]]
    field: PolyVectorField


def assemble_log_field(calc: BracketCalculus, integrals: Mapping, N: int) -> TruncatedLogFlow:
    """``zeta^N`` from integral values ``integrals[J]`` (keyed by tuple or MultiIndex)."""
    r = len(calc.fields) - 1
    total = PolyVectorField.zero(calc.dim)
    terms = []
    for J in enumerate_multiindices(max(r, 1), N):
        if max(J) > r:
            continue
        b = calc.beta(J).field
        if b.is_zero():
            continue
        value = integrals[J] if J in integrals else integrals[J.entries]
        terms.append((J, float(value), b))
        total = total + float(value) * b
    return TruncatedLogFlow(N, terms, total)


def truncated_log_flow(fields, table: IteratedIntegralTable, N: int, t_node: int,
                       calc: BracketCalculus | None = None) -> TruncatedLogFlow:
    calc = calc or BracketCalculus(fields)

    class _Lookup(dict):
        def __missing__(self, key):
            return float(iterated_integral(table, key)[t_node])

    return assemble_log_field(calc, _Lookup(), N)


def flow_exp(V: PolyVectorField, z, ode_steps: int = DEFAULT_ODE_STEPS) -> np.ndarray:
    """Time-1 flow of ``V`` from ``z`` by ``ode_steps`` classical Runge-Kutta steps."""
    if ode_steps < 1:
        raise ValueError("ode_steps must be at least 1")
    y = np.array(z, dtype=float)
    h = 1.0 / ode_steps
    for _ in range(ode_steps):
        k1 = evaluate(V, y)
        k2 = evaluate(V, y + 0.5 * h * k1)
        k3 = evaluate(V, y + 0.5 * h * k2)
        k4 = evaluate(V, y + h * k3)
        y = y + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
        if not np.all(np.isfinite(y)):
            raise FloatingPointError("flow left the finite range")
    return y


def taylor_flow(fields: Sequence[PolyVectorField], table: IteratedIntegralTable, N: int, z, t_node: int,
                ode_steps: int = DEFAULT_ODE_STEPS, calc: BracketCalculus | None = None) -> np.ndarray:
    """``exp(zeta^N_t)(z)`` at node ``t_node``; path component ``j`` drives ``Y_j`` (0 is time)."""
    if N < 1:
        raise ValueError("N must be at least 1")
    log_flow = truncated_log_flow(fields, table, N, t_node, calc)
    return flow_exp(log_flow.field, z, ode_steps)


@dataclass(frozen=True, eq=False)
class RemainderStudy:
    N: int
    t_list: np.ndarray
    mean_err: np.ndarray
    slope: float
    floor: bool

    def write_csv(self, fh: IO[str]) -> None:
        fh.write("t,N,mean_err,slope\n")
        for t, e in zip(self.t_list, self.mean_err):
            fh.write(f"{format_float(t)},{self.N},{format_float(e)},{format_float(self.slope)}\n")


#: Mean errors below this are treated as the integrator floor (exact truncation).
FLOOR = 1e-10


def remainder_slope(fields: Sequence[PolyVectorField], z, N: int, t_list: Sequence[float], n_paths: int,
                    seed: int, steps: int = 32, refine: int = 8, threads: int = 1) -> RemainderStudy:
    """Slope of ``log mean |exp(zeta^N_t)(z) - Gamma_t^z|`` against ``log t``.

    For each horizon ``t`` the paths are sampled on ``steps * refine`` nodes;
    the reference ``Gamma_t^z`` is the Heun solution on that fine path and the
    iterated integrals are taken on the same fine path.
    """
    if len(t_list) < 2:
        raise ValueError("need at least two horizons")
    fields = tuple(fields)
    r = len(fields) - 1
    system = StratonovichSystem(fields, np.eye(r + 1))
    calc = BracketCalculus(fields)
    z = np.asarray(z, dtype=float)
    # warm the bracket cache once so worker threads only read it
    for J in enumerate_multiindices(max(r, 1), N):
        if max(J) <= r:
            calc.beta(J)

    means = []
    for ti, t in enumerate(t_list):
        grid = TimeGrid(float(t), steps * refine)

        def one(p, grid=grid, ti=ti):
            path = with_time_component(sample_brownian(grid, r, seed, ti * n_paths + p))
            ref = integrate_heun(system, path, z)
            if ref.exit_index is not None:
                return float("nan")
            table = IteratedIntegralTable(path)
            approx = taylor_flow(fields, table, N, z, grid.steps, calc=calc)
            return float(np.linalg.norm(approx - ref.terminal))

        errs = np.array(map_ordered(one, range(n_paths), threads))
        errs = errs[np.isfinite(errs)]
        means.append(math.fsum(errs) / len(errs))
    means = np.array(means)
    t_arr = np.asarray(t_list, dtype=float)
    if np.max(means) < FLOOR:
        return RemainderStudy(N, t_arr, means, float("nan"), True)
    return RemainderStudy(N, t_arr, means, fit_slope(t_arr, means), False)
