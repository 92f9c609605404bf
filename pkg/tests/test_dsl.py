import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from stochlie.dsl import MAX_EXPONENT, DslError, format_polynomial, parse_field_dsl
from stochlie.fields import PolyVectorField
from stochlie.polynomial import Polynomial


def test_constant_field():
    doc = parse_field_dsl("field Y1 dim 1: 1=1;")
    assert doc.names == ["Y1"] and doc.dim == 1
    assert doc.fields["Y1"] == PolyVectorField.partial(1, 0)


def test_two_component_field():
    doc = parse_field_dsl("field Y2 dim 2: 1=x1^2*x2; 2=-1;")
    assert doc.fields["Y2"] == PolyVectorField.from_terms(2, [(0, 1.0, (2, 1)), (1, -1.0, (0, 0))])


def test_missing_exponent_points_at_semicolon():
    text = "field Bad dim 1: 1=x1^;"
    with pytest.raises(DslError) as info:
        parse_field_dsl(text)
    err = info.value
    assert (err.line, err.column) == (1, text.index(";") + 1)
    assert "exponent" in str(err)


def test_derivative_components_and_aliases():
    a = parse_field_dsl("field V dim 3: d/dx3 = 2*x*y - z^2, d/dx1: 0.5;")
    b = parse_field_dsl("field V dim 3: 3=2*x1*x2 - x3^2; 1=0.5;")
    assert a.fields["V"] == b.fields["V"]


def test_comments_and_blank_lines():
    doc = parse_field_dsl("# generators\n\nfield A dim 1: 1=1;  # d/dx\nfield B dim 1: 1=x1;\n")
    assert doc.field_list() == [PolyVectorField.partial(1, 0), PolyVectorField.linear([[1.0]])]


def test_error_on_second_line():
    with pytest.raises(DslError) as info:
        parse_field_dsl("field A dim 1: 1=1;\nfield B dim 1: 2=x1;")
    assert info.value.line == 2


@pytest.mark.parametrize("text,fragment", [
    ("field A dim 1: 1=1;\nfield A dim 1: 1=x1;", "duplicate"),
    (f"field A dim 1: 1=x1^{MAX_EXPONENT + 1};", "exponent"),
    ("field A dim 1: 1=x2;", "x2"),
    ("field A dim 2: 1=1;\nfield B dim 1: 1=1;", "dim"),
    ("field A dim 1: 1=1; 1=x1;", "component"),
    ("field B dim 1: 1=1;\ncoeff A noise 1: 1=1;", "unknown field 'A'"),
    ("field A dim 1 1=1;", ":"),
    ("field A dim 1: 1=1.2.3;", "expected"),
    ("", "field"),
])
def test_rejections(text, fragment):
    with pytest.raises(DslError, match=fragment):
        parse_field_dsl(text)


def test_coefficients_build_the_system():
    doc = parse_field_dsl("field Y dim 1: 1=x1;\nfield C dim 1: 1=1;\n"
                          "coeff Y noise 2: 1=1; 2=x2;\ncoeff C noise 2: 1=0.5;")
    sys = doc.system()
    assert sys.r == 2 and sys.l == 2
    B = sys.coefficient_matrix(np.array([0.0, 3.0]))
    assert B.tolist() == [[1.0, 3.0], [0.5, 0.0]]


def test_identity_coefficients_by_default():
    doc = parse_field_dsl("field A dim 2: 1=1;\nfield B dim 2: 2=x1;")
    assert doc.system().coefficient_matrix(np.zeros(2)).tolist() == [[1.0, 0.0], [0.0, 1.0]]


def test_zero_field_round_trips():
    doc = parse_field_dsl("field Z dim 2: 1=0;")
    assert doc.fields["Z"].is_zero()
    assert parse_field_dsl(doc.to_text()).fields == doc.fields


def test_canonical_text():
    doc = parse_field_dsl("field Y dim 2: d/dx2 = y + 3*x^2 - 0;   1 = 2.5;")
    assert doc.to_text() == "field Y dim 2: 1=2.5; 2=3*x1^2 + x2;\n"


def test_format_polynomial():
    x, y = Polynomial.variable(2, 0), Polynomial.variable(2, 1)
    assert format_polynomial(Polynomial(2, [])) == "0"
    assert format_polynomial(x * x * y - 1.0 * y) == "x1^2*x2 - x2"


@st.composite
def documents(draw):
    n = draw(st.integers(1, 3))
    lines = []
    for k in range(draw(st.integers(1, 3))):
        parts = []
        for comp in draw(st.sets(st.integers(1, n), min_size=1)):
            monos = []
            for _ in range(draw(st.integers(1, 3))):
                c = draw(st.one_of(st.integers(-9, 9).map(str), st.floats(-5, 5, allow_nan=False).map(repr)))
                vars_ = [f"x{i + 1}^{draw(st.integers(1, 3))}" for i in range(n) if draw(st.booleans())]
                monos.append("*".join([c] + vars_))
            parts.append(f"{comp}=" + "+".join(m if not m.startswith("-") else f"0{m}" for m in monos))
        lines.append(f"field F{k} dim {n}: " + "; ".join(parts) + ";")
    return "\n".join(lines)


@settings(max_examples=60, deadline=None)
@given(documents())
def test_round_trip_idempotent(text):
    first = parse_field_dsl(text)
    canonical = first.to_text()
    second = parse_field_dsl(canonical)
    assert second.to_text() == canonical
    assert second.fields == first.fields
