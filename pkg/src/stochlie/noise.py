"""Time grids, seeded driving paths and pathwise Stratonovich integrals.

All quadrature uses the trapezoid (midpoint-value) rule so that identities
such as ``B^(i,j) + B^(j,i) = B^i B^j`` hold exactly on the grid.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import IO, Iterable, Sequence

import numpy as np


class InvalidGridError(ValueError):
    pass


class Role(str, enum.Enum):
    TIME = "time"
    BROWNIAN = "brownian"
    CUSTOM = "custom"


@dataclass(frozen=True)
class TimeGrid:
    """Uniform grid ``t_k = k * t_end / steps`` for ``k = 0..steps``."""

    t_end: float
    steps: int

    def __post_init__(self):
        if int(self.steps) != self.steps or self.steps < 1:
            raise InvalidGridError(f"steps must be a positive integer, got {self.steps!r}")
        if not (math.isfinite(self.t_end) and self.t_end > 0):
            raise InvalidGridError(f"t_end must be positive and finite, got {self.t_end!r}")

    @property
    def h(self) -> float:
        return self.t_end / self.steps

    @property
    def nodes(self) -> np.ndarray:
        # k*h rather than linspace so that t_k is reproduced identically everywhere
        return np.arange(self.steps + 1, dtype=float) * self.h


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class DrivingPath:
    """An R^l valued driving signal sampled on a :class:`TimeGrid`.

    ``values`` has shape ``(steps + 1, l)`` and starts at the origin.
    """

    grid: TimeGrid
    values: np.ndarray
    roles: tuple[Role, ...]
    seed: int | None = None
    path_index: int | None = None

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.ndim == 1:
            values = values[:, None]
        if values.ndim != 2 or values.shape[0] != self.grid.steps + 1:
            raise ValueError(
                f"values must have shape ({self.grid.steps + 1}, l), got {values.shape}"
            )
        if len(self.roles) != values.shape[1]:
            raise ValueError("one role per component is required")
        if values.shape[1] and np.any(values[0] != 0.0):
            raise ValueError("a driving path must start at the origin")
        object.__setattr__(self, "values", _frozen(values))
        object.__setattr__(self, "roles", tuple(Role(r) for r in self.roles))

    @property
    def dim(self) -> int:
        return self.values.shape[1]

    @property
    def times(self) -> np.ndarray:
        return self.grid.nodes

    @property
    def increments(self) -> np.ndarray:
        return np.diff(self.values, axis=0)

    def component(self, index: int) -> np.ndarray:
        if not 0 <= index < self.dim:
            raise IndexError(f"component {index} out of range for a {self.dim}-dimensional path")
        return self.values[:, index]

    def select(self, indices: Sequence[int]) -> DrivingPath:
        idx = list(indices)
        return DrivingPath(self.grid, self.values[:, idx], tuple(self.roles[i] for i in idx),
                           self.seed, self.path_index)

    def mix(self, weights, roles: Sequence[Role] | None = None) -> DrivingPath:
        """New path whose components are the linear combinations ``weights @ X``."""
        w = np.atleast_2d(np.asarray(weights, dtype=float))
        if w.shape[1] != self.dim:
            raise ValueError(f"weights need {self.dim} columns, got {w.shape[1]}")
        if roles is None:
            roles = [Role.CUSTOM] * w.shape[0]
        return DrivingPath(self.grid, self.values @ w.T, tuple(roles), self.seed, self.path_index)

    def coarsen(self, factor: int) -> DrivingPath:
        """Keep every ``factor``-th node; coarse increments are sums of fine ones."""
        if factor < 1 or self.grid.steps % factor:
            raise InvalidGridError(f"cannot coarsen {self.grid.steps} steps by {factor}")
        grid = TimeGrid(self.grid.t_end, self.grid.steps // factor)
        return DrivingPath(grid, self.values[::factor], self.roles, self.seed, self.path_index)


def zero_path(grid: TimeGrid, dims: int) -> DrivingPath:
    return DrivingPath(grid, np.zeros((grid.steps + 1, dims)), (Role.CUSTOM,) * dims)


def stack_paths(*paths: DrivingPath) -> DrivingPath:
    grid = paths[0].grid
    if any(p.grid != grid for p in paths):
        raise ValueError("paths must share a grid")
    values = np.hstack([p.values for p in paths])
    roles = tuple(r for p in paths for r in p.roles)
    return DrivingPath(grid, values, roles, paths[0].seed, paths[0].path_index)


def _generator(seed: int, path_index: int) -> np.random.Generator:
    # Philox is counter based: the stream is fixed by (seed, path_index) alone,
    # so worker scheduling cannot change what a given path sees.
    if seed < 0 or path_index < 0:
        raise ValueError("seed and path_index must be non-negative")
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([seed, path_index])))


def sample_brownian(grid: TimeGrid, dims: int, seed: int, path_index: int = 0) -> DrivingPath:
    """Sample a ``dims``-dimensional standard Brownian motion on ``grid``."""
    if not isinstance(grid, TimeGrid):
        grid = TimeGrid(*grid)
    if dims < 0:
        raise ValueError("dims must be non-negative")
    rng = _generator(seed, path_index)
    dB = rng.standard_normal((grid.steps, dims)) * math.sqrt(grid.h)
    values = np.zeros((grid.steps + 1, dims))
    np.cumsum(dB, axis=0, out=values[1:])
    return DrivingPath(grid, values, (Role.BROWNIAN,) * dims, seed, path_index)


def with_time_component(path: DrivingPath) -> DrivingPath:
    """Prepend ``B^0 = t`` as component 0."""
    values = np.hstack([path.grid.nodes[:, None], path.values])
    return DrivingPath(path.grid, values, (Role.TIME,) + path.roles, path.seed, path.path_index)


def time_path(grid: TimeGrid) -> DrivingPath:
    return with_time_component(zero_path(grid, 0))


def stratonovich_integral(integrand, path: DrivingPath, component: int) -> np.ndarray:
    """Cumulative trapezoid sum of ``integrand`` against one path component."""
    f = np.asarray(integrand, dtype=float)
    x = path.component(component)
    if f.shape != x.shape:
        raise ValueError(f"integrand must have shape {x.shape}, got {f.shape}")
    out = np.zeros_like(x)
    np.cumsum(0.5 * (f[:-1] + f[1:]) * np.diff(x), out=out[1:])
    return out


@dataclass(frozen=True)
class MultiIndex:
    entries: tuple[int, ...]

    def __init__(self, entries: Iterable[int]):
        entries = tuple(int(j) for j in entries)
        if not entries:
            raise ValueError("a multi-index has at least one entry")
        if any(j < 0 for j in entries):
            raise ValueError("multi-index entries are non-negative")
        object.__setattr__(self, "entries", entries)

    def __len__(self):
        return len(self.entries)

    def __iter__(self):
        return iter(self.entries)

    def __getitem__(self, i):
        return self.entries[i]

    def __repr__(self):
        return f"MultiIndex{self.entries}"

    @property
    def size(self) -> int:
        return len(self.entries)

    @property
    def degree(self) -> int:
        return degree(self)


def degree(J) -> int:
    """Size of ``J`` plus the number of zero entries (time counts twice)."""
    entries = tuple(J)
    return len(entries) + sum(1 for j in entries if j == 0)


@dataclass(eq=False)
class IteratedIntegralTable:
    """Memoised iterated Stratonovich integrals ``B^J`` along one path.

    Not thread safe; use one table per worker.
    """

    path: DrivingPath
    cache: dict[tuple[int, ...], np.ndarray] = field(default_factory=dict)

    def __call__(self, J) -> np.ndarray:
        return iterated_integral(self, J)


def iterated_integral(table: IteratedIntegralTable, J) -> np.ndarray:
    key = tuple(J.entries if isinstance(J, MultiIndex) else MultiIndex(J).entries)
    hit = table.cache.get(key)
    if hit is not None:
        return hit
    if any(j >= table.path.dim for j in key):
        raise IndexError(f"multi-index {key} references a component beyond {table.path.dim - 1}")
    if len(key) == 1:
        out = np.array(table.path.component(key[0]))
    else:
        inner = iterated_integral(table, key[:-1])
        out = stratonovich_integral(inner, table.path, key[-1])
    out.setflags(write=False)
    table.cache[key] = out
    return out


def format_float(x: float) -> str:
    return format(float(x), ".17g")


def write_path_csv(path: DrivingPath, fh: IO[str]) -> None:
    header = ["t"] + [f"x{i}" for i in range(path.dim)]
    fh.write(",".join(header) + "\n")
    for t, row in zip(path.times, path.values):
        fh.write(",".join(format_float(v) for v in (t, *row)) + "\n")
