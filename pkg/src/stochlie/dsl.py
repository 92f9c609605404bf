"""A small text language for polynomial vector fields and their noise coefficients.

    # comments run to the end of the line
    field Y1 dim 2: 1=x1^2*x2; 2=-1;
    field Y2 dim 2: d/dx1: x2, d/dx2: -x1
    coeff Y1 noise 2: 1=1; 2=0.5*x2;

Components are 1-based integers or ``d/dx<k>``; ``=`` and ``:`` both separate a
component from its polynomial and ``;`` or ``,`` separate assignments.  State
variables are ``x1..xn`` (``x, y, z`` are accepted when n <= 3).  ``coeff``
lines give ``b_j`` of a field as polynomials in the driving variables
``x1..xl``.  Without any ``coeff`` line field ``i`` is driven by noise ``i``.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field

from .fields import PolyVectorField
from .polynomial import Polynomial, graded_lex_key

MAX_EXPONENT = 64
MAX_DIM = 64
_ALIASES = ("x", "y", "z")

_TOKEN = re.compile(r"""
    (?P<ws>[ \t\r]+|\#[^\n]*)
  | (?P<nl>\n)
  | (?P<number>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)
  | (?P<comp>d/d[A-Za-z_][A-Za-z0-9_]*)
  | (?P<ident>[A-Za-z_][A-Za-z0-9_]*)
  | (?P<punct>[:;,=+\-*^])
""", re.VERBOSE)


class DslError(ValueError):
    def __init__(self, message: str, line: int, column: int):
        super().__init__(f"line {line}, column {column}: {message}")
        self.message = message
        self.line = line
        self.column = column


@dataclass(frozen=True)
class _Tok:
    kind: str
    text: str
    line: int
    col: int


def _tokenize(text: str) -> list[_Tok]:
    toks = []
    line, line_start, pos = 1, 0, 0
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if m is None:
            raise DslError(f"unexpected character {text[pos]!r}", line, pos - line_start + 1)
        kind = m.lastgroup
        if kind == "nl":
            line, line_start = line + 1, m.end()
        elif kind != "ws":
            toks.append(_Tok(kind, m.group(), line, m.start() - line_start + 1))
        pos = m.end()
    toks.append(_Tok("eof", "", line, pos - line_start + 1))
    return toks


@dataclass
class FieldDslDocument:
    """Parsed DSL text: named fields in file order plus optional coefficient rows."""

    text: str
    fields: dict[str, PolyVectorField] = field(default_factory=dict)
    coeffs: dict[str, dict[int, Polynomial]] = field(default_factory=dict)
    noise_dim: int | None = None

    @property
    def names(self) -> list[str]:
        return list(self.fields)

    @property
    def dim(self) -> int:
        dims = {Y.dim for Y in self.fields.values()}
        if len(dims) != 1:
            raise ValueError(f"fields have mixed dimensions {sorted(dims)}")
        return dims.pop()

    def field_list(self) -> list[PolyVectorField]:
        return list(self.fields.values())

    def coefficient_table(self) -> list[list[Polynomial]]:
        """``r x l`` table; identity when no ``coeff`` statement was given."""
        r = len(self.fields)
        if self.noise_dim is None:
            return [[Polynomial.constant(r, float(i == j)) for j in range(r)] for i in range(r)]
        l = self.noise_dim
        return [[self.coeffs.get(name, {}).get(j, Polynomial.zero(l)) for j in range(l)]
                for name in self.fields]

    def system(self):
        from .sde import StratonovichSystem
        return StratonovichSystem(self.field_list(), self.coefficient_table())

    def to_text(self) -> str:
        lines = []
        for name, Y in self.fields.items():
            parts = [f"{k + 1}={format_polynomial(p)}" for k, p in enumerate(Y.components) if p.terms] or ["1=0"]
            lines.append(f"field {name} dim {Y.dim}: " + "".join(p + "; " for p in parts).rstrip())
        for name, row in self.coeffs.items():
            parts = [f"{j + 1}={format_polynomial(p)}" for j, p in sorted(row.items()) if p.terms] or ["1=0"]
            lines.append(f"coeff {name} noise {self.noise_dim}: " + "".join(p + "; " for p in parts).rstrip())
        return "\n".join(lines) + "\n"


def _format_coef(c: float) -> str:
    if c.is_integer() and abs(c) < 1e15:
        return str(int(c))
    return repr(c)


def format_polynomial(p: Polynomial) -> str:
    """Canonical DSL spelling, highest degree first; ``0`` for the zero polynomial."""
    if not p.terms:
        return "0"
    out = []
    for exps in sorted(p.terms, key=graded_lex_key, reverse=True):
        c = p.terms[exps]
        mono = "*".join(f"x{i + 1}" + (f"^{e}" if e > 1 else "") for i, e in enumerate(exps) if e)
        mag = abs(c)
        if mono and mag == 1.0:
            body = mono
        elif mono:
            body = f"{_format_coef(mag)}*{mono}"
        else:
            body = _format_coef(mag)
        if not out:
            out.append(("-" if c < 0 else "") + body)
        else:
            out.append((" - " if c < 0 else " + ") + body)
    return "".join(out)


class _Parser:
    def __init__(self, text: str):
        self.toks = _tokenize(text)
        self.i = 0
        self.doc = FieldDslDocument(text)
        self.coeff_names: dict[str, _Tok] = {}

    @property
    def tok(self) -> _Tok:
        return self.toks[self.i]

    def error(self, message: str, tok: _Tok | None = None):
        tok = tok or self.tok
        found = "end of input" if tok.kind == "eof" else repr(tok.text)
        raise DslError(f"{message}, found {found}", tok.line, tok.col)

    def take(self) -> _Tok:
        tok = self.tok
        self.i += 1
        return tok

    def expect(self, kind: str, text: str | None = None, what: str | None = None) -> _Tok:
        tok = self.tok
        if tok.kind != kind or (text is not None and tok.text != text):
            self.error(f"expected {what or text or kind}")
        return self.take()

    def accept(self, text: str) -> bool:
        if self.tok.kind == "punct" and self.tok.text == text:
            self.i += 1
            return True
        return False

    def integer(self, what: str, limit: int) -> int:
        tok = self.tok
        if tok.kind != "number" or not tok.text.isdigit():
            self.error(f"expected {what}")
        value = int(tok.text)
        if value > limit:
            raise DslError(f"{what} {value} exceeds the limit {limit}", tok.line, tok.col)
        self.take()
        return value

    def parse(self) -> FieldDslDocument:
        while self.tok.kind != "eof":
            head = self.tok
            if head.kind == "ident" and head.text == "field":
                self.field_statement()
            elif head.kind == "ident" and head.text == "coeff":
                self.coeff_statement()
            else:
                self.error("expected 'field' or 'coeff'")
        if not self.doc.fields:
            self.error("expected at least one 'field' statement")
        for name, tok in self.coeff_names.items():
            if name not in self.doc.fields:
                raise DslError(f"coefficients given for unknown field {name!r}", tok.line, tok.col)
        return self.doc

    def header(self, keyword: str, size_word: str) -> tuple[_Tok, int]:
        self.take()
        name = self.expect("ident", what="a name")
        self.expect("ident", size_word)
        size = self.integer(f"{size_word} size", MAX_DIM)
        if size < 1:
            self.error(f"{size_word} size must be positive", self.toks[self.i - 1])
        self.expect("punct", ":")
        return name, size

    def assignments(self, n: int, nvars: int, comp_word: str) -> dict[int, tuple[Polynomial, _Tok]]:
        out: dict[int, tuple[Polynomial, _Tok]] = {}
        while True:
            comp_tok = self.tok
            comp = self.component(n, nvars, comp_word)
            if not (self.accept("=") or self.accept(":")):
                self.error("expected '=' or ':'")
            poly = self.polynomial(nvars)
            if comp in out:
                raise DslError(f"{comp_word} {comp + 1} assigned twice", comp_tok.line, comp_tok.col)
            out[comp] = (poly, comp_tok)
            if not (self.accept(";") or self.accept(",")):
                break
            if self.tok.kind == "eof" or (self.tok.kind == "ident" and self.tok.text in ("field", "coeff")):
                break
        if not (self.tok.kind == "eof" or (self.tok.kind == "ident" and self.tok.text in ("field", "coeff"))):
            self.error("expected ';' or ','")
        return out

    def component(self, n: int, nvars: int, comp_word: str) -> int:
        tok = self.tok
        if tok.kind == "comp":
            idx = self.variable_index(tok.text[3:], nvars, tok)
            self.take()
            return idx
        value = self.integer(f"{comp_word} index", MAX_DIM)
        if not 1 <= value <= n:
            raise DslError(f"{comp_word} index {value} outside 1..{n}", tok.line, tok.col)
        return value - 1

    def variable_index(self, name: str, nvars: int, tok: _Tok) -> int:
        m = re.fullmatch(r"x([1-9]\d*)", name)
        if m:
            idx = int(m.group(1)) - 1
        elif name in _ALIASES and nvars <= 3:
            idx = _ALIASES.index(name)
        else:
            raise DslError(f"unknown variable {name!r}", tok.line, tok.col)
        if idx >= nvars:
            raise DslError(f"variable {name!r} outside x1..x{nvars}", tok.line, tok.col)
        return idx

    def polynomial(self, nvars: int) -> Polynomial:
        sign = 1.0
        if self.accept("-"):
            sign = -1.0
        else:
            self.accept("+")
        total = self.term(nvars) * sign
        while self.tok.kind == "punct" and self.tok.text in "+-":
            sign = -1.0 if self.take().text == "-" else 1.0
            total = total + self.term(nvars) * sign
        return total

    def term(self, nvars: int) -> Polynomial:
        coef = 1.0
        exps = [0] * nvars
        while True:
            tok = self.tok
            if tok.kind == "number":
                coef *= float(tok.text)
                self.take()
            elif tok.kind == "ident":
                idx = self.variable_index(tok.text, nvars, tok)
                self.take()
                power = self.integer("exponent", MAX_EXPONENT) if self.accept("^") else 1
                exps[idx] += power
                if exps[idx] > MAX_EXPONENT:
                    raise DslError(f"exponent {exps[idx]} exceeds the limit {MAX_EXPONENT}", tok.line, tok.col)
            else:
                self.error("expected a number or a variable")
            if not self.accept("*"):
                return Polynomial(nvars, [(tuple(exps), coef)])

    def field_statement(self):
        name, n = self.header("field", "dim")
        if name.text in self.doc.fields:
            raise DslError(f"duplicate field name {name.text!r}", name.line, name.col)
        if self.doc.fields and n != self.doc.dim:
            raise DslError(f"dim {n} disagrees with earlier fields of dim {self.doc.dim}", name.line, name.col)
        comps = self.assignments(n, n, "component")
        polys = [comps[k][0] if k in comps else Polynomial.zero(n) for k in range(n)]
        self.doc.fields[name.text] = PolyVectorField(polys)

    def coeff_statement(self):
        name, l = self.header("coeff", "noise")
        if name.text in self.doc.coeffs:
            raise DslError(f"duplicate coefficients for {name.text!r}", name.line, name.col)
        if self.doc.noise_dim is not None and self.doc.noise_dim != l:
            raise DslError(f"noise size {l} disagrees with earlier {self.doc.noise_dim}", name.line, name.col)
        self.doc.noise_dim = l
        self.coeff_names[name.text] = name
        row = self.assignments(l, l, "noise")
        self.doc.coeffs[name.text] = {j: p for j, (p, _) in row.items()}


def parse_field_dsl(text: str) -> FieldDslDocument:
    """Parse DSL text; raises :class:`DslError` with a line and column on bad input."""
    if isinstance(text, bytes):
        text = text.decode("utf-8")
    return _Parser(text).parse()
