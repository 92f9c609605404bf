"""Polynomial vector fields on R^n and the algebraic checks built on them.

Bracket convention: ``[Y1, Y2] = DY2 . Y1 - DY1 . Y2``, i.e. the commutator of
the fields viewed as derivations, ``[Y1, Y2] f = Y1(Y2 f) - Y2(Y1 f)``.
Right-invariant generators of a matrix group then satisfy
``[xi^G, eta^G] = -([xi, eta])^G`` with ``[xi, eta] = xi eta - eta xi``.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from functools import cached_property
from numbers import Real
from typing import IO, Iterable, Sequence

import numpy as np

from .polynomial import STRUCTURAL_TOL, Polynomial, graded_lex_key


@dataclass(frozen=True, eq=False)
class PolyVectorField:
    """``Y = sum_k P_k(x) d/dx_k`` with polynomial components ``P_k``."""

    components: tuple[Polynomial, ...]

    def __init__(self, components: Sequence[Polynomial]):
        components = tuple(components)
        if not components:
            raise ValueError("a vector field needs at least one component")
        n = len(components)
        for p in components:
            if p.nvars != n:
                raise ValueError(f"component polynomials must be in {n} variables")
        object.__setattr__(self, "components", components)

    # -- constructors ----------------------------------------------------

    @classmethod
    def from_terms(cls, dim: int, terms: Iterable[tuple[int, float, Sequence[int]]]) -> PolyVectorField:
        """Build from ``(component, coefficient, exponents)`` triples."""
        per_comp: list[list] = [[] for _ in range(dim)]
        for comp, coef, exps in terms:
            if not 0 <= comp < dim:
                raise ValueError(f"component {comp} out of range for dimension {dim}")
            per_comp[comp].append((tuple(exps), coef))
        return cls([Polynomial(dim, t) for t in per_comp])

    @classmethod
    def zero(cls, dim: int) -> PolyVectorField:
        return cls([Polynomial.zero(dim)] * dim)

    @classmethod
    def partial(cls, dim: int, i: int) -> PolyVectorField:
        """The coordinate field d/dx_i."""
        comps = [Polynomial.zero(dim)] * dim
        comps[i] = Polynomial.constant(dim, 1.0)
        return cls(comps)

    @classmethod
    def linear(cls, matrix, offset=None) -> PolyVectorField:
        """The affine field ``z -> A z + offset``."""
        A = np.atleast_2d(np.asarray(matrix, dtype=float))
        n = A.shape[0]
        if A.shape != (n, n):
            raise ValueError("linear fields need a square matrix")
        b = np.zeros(n) if offset is None else np.asarray(offset, dtype=float)
        comps = []
        for k in range(n):
            p = Polynomial.constant(n, b[k])
            for j in range(n):
                p = p + A[k, j] * Polynomial.variable(n, j)
            comps.append(p)
        return cls(comps)

    # -- basic protocol --------------------------------------------------

    @property
    def dim(self) -> int:
        return len(self.components)

    @property
    def terms(self) -> list[tuple[int, float, tuple[int, ...]]]:
        """Canonical ``(component, coefficient, exponents)`` list."""
        return [(k, c, e) for k, p in enumerate(self.components) for e, c in p.terms.items()]

    def _check_dim(self, other: PolyVectorField):
        if other.dim != self.dim:
            raise ValueError(f"dimension mismatch: {self.dim} vs {other.dim}")

    def __add__(self, other: PolyVectorField) -> PolyVectorField:
        if not isinstance(other, PolyVectorField):
            return NotImplemented
        self._check_dim(other)
        return PolyVectorField([a + b for a, b in zip(self.components, other.components)])

    def __sub__(self, other: PolyVectorField) -> PolyVectorField:
        if not isinstance(other, PolyVectorField):
            return NotImplemented
        self._check_dim(other)
        return PolyVectorField([a - b for a, b in zip(self.components, other.components)])

    def __neg__(self) -> PolyVectorField:
        return PolyVectorField([-p for p in self.components])

    def __mul__(self, scalar) -> PolyVectorField:
        if not isinstance(scalar, Real):
            return NotImplemented
        return PolyVectorField([p * float(scalar) for p in self.components])

    __rmul__ = __mul__

    def is_zero(self, tol: float = STRUCTURAL_TOL) -> bool:
        return all(p.is_zero(tol) for p in self.components)

    def almost_equal(self, other: PolyVectorField, tol: float = STRUCTURAL_TOL) -> bool:
        return other.dim == self.dim and (self - other).is_zero(tol)

    def __eq__(self, other):
        if not isinstance(other, PolyVectorField):
            return NotImplemented
        return self.almost_equal(other)

    def __hash__(self):
        raise TypeError("PolyVectorField equality is tolerance based and not hashable")

    def __repr__(self):
        return f"PolyVectorField({self.to_string()})"

    def to_string(self) -> str:
        parts = [f"d/dx{k + 1}: {p.to_string()}" for k, p in enumerate(self.components) if p.terms]
        return ", ".join(parts) if parts else f"0 (dim {self.dim})"

    @property
    def degree(self) -> int:
        return max(p.degree for p in self.components)

    # -- evaluation ------------------------------------------------------

    @cached_property
    def _compiled(self):
        terms = self.terms
        n = self.dim
        exps = np.array([e for _, _, e in terms], dtype=np.int64).reshape(-1, n)
        cmat = np.zeros((len(terms), n))
        for row, (k, c, _) in enumerate(terms):
            cmat[row, k] = c
        return exps, cmat

    def __call__(self, z) -> np.ndarray:
        return evaluate(self, z)

    def jacobian(self) -> list[list[Polynomial]]:
        return [[p.derivative(i) for i in range(self.dim)] for p in self.components]


def evaluate(Y: PolyVectorField, z) -> np.ndarray:
    """Evaluate ``Y`` at a point, or at a stack of points of shape ``(..., n)``."""
    z = np.asarray(z, dtype=float)
    if z.shape[-1:] != (Y.dim,):
        raise ValueError(f"expected points in R^{Y.dim}, got shape {z.shape}")
    exps, cmat = Y._compiled
    mono = np.prod(z[..., None, :] ** exps, axis=-1)
    return mono @ cmat


def bracket(Y1: PolyVectorField, Y2: PolyVectorField) -> PolyVectorField:
    """Exact Jacobi-Lie bracket ``DY2 . Y1 - DY1 . Y2``."""
    Y1._check_dim(Y2)
    n = Y1.dim
    out = []
    for k in range(n):
        acc = Polynomial.zero(n)
        for i in range(n):
            if Y1.components[i].terms:
                acc = acc + Y1.components[i] * Y2.components[k].derivative(i)
            if Y2.components[i].terms:
                acc = acc - Y2.components[i] * Y1.components[k].derivative(i)
        out.append(acc)
    return PolyVectorField(out)


def diagonal_extend(Y: PolyVectorField, copies: int) -> PolyVectorField:
    """The field acting as ``Y`` on each of ``copies`` blocks of R^(n*copies)."""
    if copies < 1:
        raise ValueError("copies must be at least 1")
    n = Y.dim
    total = n * copies
    comps = []
    for block in range(copies):
        comps.extend(p.embed(total, block * n) for p in Y.components)
    return PolyVectorField(comps)


@dataclass(frozen=True, eq=False)
class DiagonalExtension:
    base: PolyVectorField
    copies: int

    @cached_property
    def field(self) -> PolyVectorField:
        return diagonal_extend(self.base, self.copies)

    def __call__(self, q) -> np.ndarray:
        """Evaluate at ``(q_0, ..., q_m)`` given as one flat vector or an array of blocks."""
        q = np.asarray(q, dtype=float).reshape(self.copies, self.base.dim)
        return evaluate(self.base, q).reshape(-1)


# -- involutivity ---------------------------------------------------------


@dataclass(frozen=True)
class InvolutivityReport:
    involutive: bool
    max_residual: float
    witness: tuple[int, int, tuple[float, ...]] | None = None

    def __bool__(self):
        return self.involutive


def check_involutive(fields: Sequence[PolyVectorField], sample_points, rank_tol: float = 1e-9) -> InvolutivityReport:
    """Pointwise Frobenius test on the given sample points.

    At each point every pairwise bracket must lie in the span of the generator
    values, with least-squares residual at most ``rank_tol * scale``.  The first
    failing ``(i, j, point)`` is returned as witness.
    """
    fields = list(fields)
    if not fields:
        raise ValueError("need at least one generator")
    n = fields[0].dim
    for Y in fields:
        fields[0]._check_dim(Y)
    points = np.atleast_2d(np.asarray(sample_points, dtype=float))
    if points.shape[0] == 0:
        raise ValueError("need at least one sample point")
    if points.shape[1] != n:
        raise ValueError(f"sample points must lie in R^{n}")

    pairs = list(itertools.combinations(range(len(fields)), 2))
    brackets = {p: bracket(fields[p[0]], fields[p[1]]) for p in pairs}
    worst = 0.0
    for z in points:
        G = np.column_stack([evaluate(Y, z) for Y in fields])
        gscale = float(np.max(np.linalg.norm(G, axis=0), initial=0.0))
        for (i, j) in pairs:
            v = evaluate(brackets[(i, j)], z)
            c, *_ = np.linalg.lstsq(G, v, rcond=None)
            res = float(np.linalg.norm(G @ c - v))
            scale = max(1.0, gscale, float(np.linalg.norm(v)))
            worst = max(worst, res / scale)
            if res > rank_tol * scale:
                return InvolutivityReport(False, worst, (i, j, tuple(map(float, z))))
    return InvolutivityReport(True, worst)


def sample_points(dim: int, count: int = 16, low: float = -2.0, high: float = 2.0, seed: int = 0) -> np.ndarray:
    """Scrambled Sobol points in ``[low, high]^dim``."""
    from scipy.stats import qmc

    pts = qmc.Sobol(d=dim, scramble=True, seed=seed).random(count)
    return low + (high - low) * pts


# -- Lie closure ----------------------------------------------------------


@dataclass(frozen=True, eq=False)
class ClosureReport:
    generators: list[PolyVectorField]
    closed: bool
    basis: list[PolyVectorField]
    structure_constants: np.ndarray | None
    dimension: int
    cap_hit: bool

    def bracket_coefficients(self, i: int, j: int) -> np.ndarray:
        """Coordinates of ``[basis_i, basis_j]`` in the basis."""
        if self.structure_constants is None:
            raise ValueError("no structure constants available")
        return self.structure_constants[i, j]


def _coefficient_matrix(fields: Sequence[PolyVectorField]) -> np.ndarray:
    keys = sorted({(k, e) for Y in fields for k, _, e in Y.terms}, key=lambda ke: (ke[0], graded_lex_key(ke[1])))
    index = {key: col for col, key in enumerate(keys)}
    M = np.zeros((len(fields), len(keys)))
    for row, Y in enumerate(fields):
        for k, c, e in Y.terms:
            M[row, index[(k, e)]] = c
    return M


def _rank(M: np.ndarray, dep_tol: float) -> int:
    if M.size == 0:
        return 0
    s = np.linalg.svd(M, compute_uv=False)
    if s[0] == 0.0:
        return 0
    return int(np.sum(s > dep_tol * s[0]))


def lie_closure(generators: Sequence[PolyVectorField], dim_cap: int = 32, dep_tol: float = 1e-9) -> ClosureReport:
    """Grow a basis of the Lie algebra generated by ``generators``.

    Brackets are taken round by round (pairs ``i < j`` with at least one element
    new in the previous round); independent results are appended in generation
    order.  Stops with ``cap_hit`` once the dimension exceeds ``dim_cap``.
    """
    generators = list(generators)
    if dim_cap < len(generators):
        raise ValueError("dim_cap must be at least the number of generators")
    basis: list[PolyVectorField] = []

    def try_append(Y: PolyVectorField) -> bool:
        if Y.is_zero():
            return False
        before = len(basis)
        if _rank(_coefficient_matrix(basis + [Y]), dep_tol) > before:
            basis.append(Y)
            return True
        return False

    for Y in generators:
        if basis:
            basis[0]._check_dim(Y)
        try_append(Y)

    frontier_start = 0
    cap_hit = False
    while not cap_hit:
        n_before = len(basis)
        for j in range(frontier_start, n_before):
            for i in range(j):
                if try_append(bracket(basis[i], basis[j])) and len(basis) > dim_cap:
                    cap_hit = True
                    break
            if cap_hit:
                break
        if len(basis) == n_before:
            break
        frontier_start = n_before

    if cap_hit:
        return ClosureReport(generators, False, basis, None, len(basis), True)

    c = _structure_constants(basis, dep_tol)
    return ClosureReport(generators, True, basis, c, len(basis), False)


def _structure_constants(basis: list[PolyVectorField], dep_tol: float) -> np.ndarray | None:
    d = len(basis)
    c = np.zeros((d, d, d))
    if d == 0:
        return c
    for i in range(d):
        for j in range(i + 1, d):
            br = bracket(basis[i], basis[j])
            M = _coefficient_matrix(basis + [br])
            A, v = M[:-1].T, M[-1]
            coef, *_ = np.linalg.lstsq(A, v, rcond=None)
            scale = max(1.0, float(np.linalg.norm(v)))
            if np.linalg.norm(A @ coef - v) > max(dep_tol, 1e-9) * scale:
                return None
            coef[np.abs(coef) < 1e-13] = 0.0
            c[i, j] = coef
            c[j, i] = -coef + 0.0
    return c


# -- text format ----------------------------------------------------------


def write_field_text(Y: PolyVectorField, fh: IO[str]) -> None:
    """One term per line: ``component exponent_vector coefficient`` (0-based component)."""
    fh.write(f"# dim {Y.dim}\n")
    for k, c, e in Y.terms:
        fh.write(f"{k} {','.join(str(x) for x in e)} {format(c, '.17g')}\n")


def read_field_text(fh: IO[str] | str) -> PolyVectorField:
    text = fh if isinstance(fh, str) else fh.read()
    dim = None
    terms = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line:
            continue
        if line.startswith("#"):
            parts = line[1:].split()
            if len(parts) == 2 and parts[0] == "dim":
                dim = int(parts[1])
            continue
        try:
            comp, exps, coef = line.split()
            e = tuple(int(x) for x in exps.split(","))
            terms.append((int(comp), float(coef), e))
        except ValueError as exc:
            raise ValueError(f"line {lineno}: expected 'component exponents coefficient': {raw!r}") from exc
        if dim is None:
            dim = len(e)
        elif len(e) != dim:
            raise ValueError(f"line {lineno}: exponent vector has {len(e)} entries, expected {dim}")
    if dim is None:
        raise ValueError("cannot infer the dimension of an empty field without a '# dim n' header")
    return PolyVectorField.from_terms(dim, terms)
