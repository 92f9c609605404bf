"""Sparse multivariate polynomials with float coefficients."""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from numbers import Real
from typing import Iterable, Mapping

import numpy as np

#: Per-term tolerance for structural comparison after canonical merging.
STRUCTURAL_TOL = 1e-12


def graded_lex_key(exps: tuple[int, ...]) -> tuple:
    return (sum(exps), exps)


@dataclass(frozen=True, eq=False)
class Polynomial:
    """Polynomial in ``nvars`` variables, stored as ``{exponents: coefficient}``.

    Terms are merged on construction and exact zeros dropped; iteration is in
    graded-lex order so two equal polynomials print identically.
    """

    nvars: int
    terms: Mapping[tuple[int, ...], float]

    def __init__(self, nvars: int, terms: Mapping | Iterable = ()):
        if nvars < 0:
            raise ValueError("nvars must be non-negative")
        merged: dict[tuple[int, ...], float] = {}
        items = terms.items() if isinstance(terms, Mapping) else terms
        for exps, coef in items:
            exps = tuple(int(e) for e in exps)
            if len(exps) != nvars:
                raise ValueError(f"exponent vector {exps} does not have {nvars} entries")
            if any(e < 0 for e in exps):
                raise ValueError(f"negative exponent in {exps}")
            merged[exps] = merged.get(exps, 0.0) + float(coef)
        canon = {e: merged[e] for e in sorted(merged, key=graded_lex_key) if merged[e] != 0.0}
        object.__setattr__(self, "nvars", int(nvars))
        object.__setattr__(self, "terms", canon)

    @classmethod
    def constant(cls, nvars: int, c: float) -> Polynomial:
        return cls(nvars, {(0,) * nvars: c})

    @classmethod
    def variable(cls, nvars: int, i: int) -> Polynomial:
        exps = [0] * nvars
        exps[i] = 1
        return cls(nvars, {tuple(exps): 1.0})

    @classmethod
    def zero(cls, nvars: int) -> Polynomial:
        return cls(nvars, {})

    # -- algebra ---------------------------------------------------------

    def _coerce(self, other) -> Polynomial:
        if isinstance(other, Polynomial):
            if other.nvars != self.nvars:
                raise ValueError(f"variable count mismatch: {self.nvars} vs {other.nvars}")
            return other
        if isinstance(other, Real):
            return Polynomial.constant(self.nvars, float(other))
        return NotImplemented

    def __add__(self, other):
        other = self._coerce(other)
        if other is NotImplemented:
            return other
        return Polynomial(self.nvars, list(self.terms.items()) + list(other.terms.items()))

    __radd__ = __add__

    def __neg__(self):
        return Polynomial(self.nvars, {e: -c for e, c in self.terms.items()})

    def __sub__(self, other):
        other = self._coerce(other)
        if other is NotImplemented:
            return other
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        if isinstance(other, Real):
            return Polynomial(self.nvars, {e: c * float(other) for e, c in self.terms.items()})
        other = self._coerce(other)
        if other is NotImplemented:
            return other
        out = []
        for e1, c1 in self.terms.items():
            for e2, c2 in other.terms.items():
                out.append((tuple(a + b for a, b in zip(e1, e2)), c1 * c2))
        return Polynomial(self.nvars, out)

    __rmul__ = __mul__

    def derivative(self, i: int) -> Polynomial:
        out = []
        for e, c in self.terms.items():
            if e[i]:
                d = list(e)
                d[i] -= 1
                out.append((tuple(d), c * e[i]))
        return Polynomial(self.nvars, out)

    def embed(self, nvars: int, offset: int) -> Polynomial:
        """Re-index into ``nvars`` variables, shifting variable ``i`` to ``offset + i``."""
        if offset < 0 or offset + self.nvars > nvars:
            raise ValueError("embedding does not fit")
        pad_left, pad_right = (0,) * offset, (0,) * (nvars - offset - self.nvars)
        return Polynomial(nvars, {pad_left + e + pad_right: c for e, c in self.terms.items()})

    # -- inspection ------------------------------------------------------

    @property
    def degree(self) -> int:
        return max((sum(e) for e in self.terms), default=-1)

    def is_zero(self, tol: float = STRUCTURAL_TOL) -> bool:
        return all(abs(c) <= tol for c in self.terms.values())

    def almost_equal(self, other: Polynomial, tol: float = STRUCTURAL_TOL) -> bool:
        return (self - other).is_zero(tol)

    def __eq__(self, other):
        if isinstance(other, Real):
            other = Polynomial.constant(self.nvars, float(other))
        if not isinstance(other, Polynomial) or other.nvars != self.nvars:
            return NotImplemented
        return self.almost_equal(other)

    def __hash__(self):
        raise TypeError("Polynomial equality is tolerance based and not hashable")

    def is_constant(self) -> bool:
        return all(sum(e) == 0 for e in self.terms)

    @cached_property
    def _compiled(self):
        if not self.terms:
            return np.zeros((0, self.nvars), dtype=np.int64), np.zeros(0)
        exps = np.array(list(self.terms.keys()), dtype=np.int64).reshape(-1, self.nvars)
        return exps, np.array(list(self.terms.values()))

    def __call__(self, x) -> np.ndarray | float:
        x = np.asarray(x, dtype=float)
        if x.shape[-1:] != (self.nvars,):
            raise ValueError(f"expected points with {self.nvars} coordinates, got shape {x.shape}")
        exps, coefs = self._compiled
        mono = np.prod(x[..., None, :] ** exps, axis=-1)
        out = mono @ coefs
        return float(out) if out.ndim == 0 else out

    def __repr__(self):
        return f"Polynomial({self.nvars}, {self.terms})"

    def to_string(self, names: list[str] | None = None) -> str:
        if names is None:
            names = [f"x{i + 1}" for i in range(self.nvars)]
        if not self.terms:
            return "0"
        parts = []
        for e, c in self.terms.items():
            factors = []
            for name, k in zip(names, e):
                if k == 1:
                    factors.append(name)
                elif k > 1:
                    factors.append(f"{name}^{k}")
            mag = abs(c)
            coef = format(mag, ".17g")
            if not factors:
                body = coef
            elif mag == 1.0:
                body = "*".join(factors)
            else:
                body = "*".join([coef] + factors)
            sign = "-" if c < 0 else "+"
            parts.append((sign, body))
        first_sign, first = parts[0]
        text = ("-" if first_sign == "-" else "") + first
        for sign, body in parts[1:]:
            text += f" {sign} {body}"
        return text
