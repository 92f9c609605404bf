import io
import itertools
import math
from fractions import Fraction

import numpy as np
import pytest
from scipy.linalg import expm

from stochlie.experiments import HEISENBERG_START, heisenberg_fields, heisenberg_solution
from stochlie.fields import PolyVectorField, bracket
from stochlie.flowtaylor import (BracketCalculus, assemble_log_field, beta, descents, enumerate_multiindices,
                                 flow_exp, permutation_coefficient, remainder_slope, taylor_flow,
                                 truncated_log_flow)
from stochlie.noise import IteratedIntegralTable, TimeGrid, iterated_integral, sample_brownian, with_time_component

dx = PolyVectorField.partial(1, 0)
xdx = PolyVectorField.linear([[1.0]])


def heisenberg_path(seed, p, steps=256, t_end=1.0):
    return with_time_component(sample_brownian(TimeGrid(t_end, steps), 2, seed, p))


def entries(r, N):
    return [J.entries for J in enumerate_multiindices(r, N)]


# -- enumeration ----------------------------------------------------------------

def test_enumerate_examples():
    assert entries(1, 1) == [(1,)]
    assert entries(1, 2) == [(1,), (0,), (1, 1)]
    assert entries(2, 2) == [(1,), (2,), (0,), (1, 1), (1, 2), (2, 1), (2, 2)]


def test_enumerate_degree_bound():
    for J in enumerate_multiindices(2, 4):
        assert J.degree <= 4
    assert len(set(entries(2, 4))) == len(entries(2, 4))


def test_enumerate_rejects_bad_arguments():
    with pytest.raises(ValueError):
        enumerate_multiindices(0, 2)
    with pytest.raises(ValueError):
        enumerate_multiindices(1, 0)


# -- bracket coefficients ------------------------------------------------------

def test_descents():
    assert descents((0, 1, 2)) == 0
    assert descents((2, 1, 0)) == 2
    assert descents((1, 0, 2)) == 1


def test_single_index_coefficient_is_one():
    assert permutation_coefficient(1, 0) == 1


def test_coefficient_values():
    assert permutation_coefficient(2, 1) == Fraction(-1, 4)
    assert permutation_coefficient(3, 1) == Fraction(-1, 18)
    total = sum(abs(permutation_coefficient(4, e)) * n for e, n in enumerate((1, 11, 11, 1)))
    assert total == sum(Fraction(n, 16 * math.comb(3, e)) for e, n in enumerate((1, 11, 11, 1)))


def test_beta_single():
    fields = [PolyVectorField.zero(1), dx, xdx]
    assert beta((2,), fields).field == xdx
    assert beta((1,), fields).field == dx


def test_beta_pair_is_half_bracket():
    fields = [PolyVectorField.zero(1), dx, xdx]
    assert beta((1, 2), fields).field == 0.5 * bracket(dx, xdx)


def test_beta_repeated_index_vanishes():
    assert beta((1, 1), [PolyVectorField.zero(1), xdx]).field.is_zero()


def test_beta_level_two_antisymmetric():
    calc = BracketCalculus(heisenberg_fields())
    for i, j in itertools.product(range(3), repeat=2):
        assert (calc.beta((i, j)).field + calc.beta((j, i)).field).is_zero()


def test_beta_size_cap():
    with pytest.raises(ValueError, match="cap"):
        beta((1,) * 6, [PolyVectorField.zero(1), dx])
    assert beta((1,) * 6, [PolyVectorField.zero(1), dx], size_cap=6).field.is_zero()


def test_beta_index_beyond_fields():
    with pytest.raises(IndexError):
        beta((3,), [PolyVectorField.zero(1), dx])


def test_many_fields_warn():
    with pytest.warns(UserWarning):
        BracketCalculus([PolyVectorField.zero(1)] + [dx] * 5)


# -- flow map ----------------------------------------------------------------------

def test_flow_exp_zero_field():
    z = np.array([0.3, -1.0])
    assert np.array_equal(flow_exp(PolyVectorField.zero(2), z), z)


def test_flow_exp_constant_field():
    V = PolyVectorField.from_terms(2, [(0, 1.5, (0, 0)), (1, -0.25, (0, 0))])
    assert np.max(np.abs(flow_exp(V, [1.0, 2.0]) - [2.5, 1.75])) <= 1e-14


def test_flow_exp_exponential():
    # RK4 multiplies by the degree-4 Taylor polynomial of e^h each step
    h = 1 / 64
    amp = (1 + h + h ** 2 / 2 + h ** 3 / 6 + h ** 4 / 24) ** 64
    got = flow_exp(xdx, [1.0], 64)[0]
    assert abs(got - amp) <= 1e-13
    assert abs(got - math.e) <= math.e * h ** 4 / 120 * 1.01
    assert abs(flow_exp(xdx, [1.0], 256)[0] - math.e) <= 1e-10


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_flow_exp_blowup():
    with pytest.raises(FloatingPointError):
        flow_exp(PolyVectorField.from_terms(1, [(0, 1.0, (2,))]), [10.0], 4)
    with pytest.raises(ValueError):
        flow_exp(xdx, [1.0], 0)


# -- truncated flow ---------------------------------------------------------------

def test_heisenberg_exact_at_level_two():
    fields = heisenberg_fields()
    calc = BracketCalculus(fields)
    for p in range(4):
        path = heisenberg_path(3, p)
        approx = taylor_flow(fields, IteratedIntegralTable(path), 2, HEISENBERG_START, path.grid.steps, calc=calc)
        assert np.max(np.abs(approx - heisenberg_solution(path, HEISENBERG_START))) <= 1e-10


def test_heisenberg_level_one_misses_the_area():
    fields = heisenberg_fields()
    path = heisenberg_path(3, 0)
    table = IteratedIntegralTable(path)
    approx = taylor_flow(fields, table, 1, HEISENBERG_START, path.grid.steps)
    exact = heisenberg_solution(path, HEISENBERG_START)
    b1, b2 = path.component(1)[-1], path.component(2)[-1]
    missing = iterated_integral(table, (1, 2))[-1] - b1 * b2 / 2
    assert abs(approx[0] - exact[0]) <= 1e-12
    assert abs((exact[1] - approx[1]) - missing) <= 1e-10
    assert abs(missing) > 1e-3


def test_truncation_terms():
    path = heisenberg_path(3, 0, steps=16)
    flow = truncated_log_flow(heisenberg_fields(), IteratedIntegralTable(path), 2, 16)
    assert [J.entries for J, _, _ in flow.terms] == [(1,), (2,), (1, 2), (2, 1)]


def test_fixed_point():
    # every field vanishes at the origin
    fields = [PolyVectorField.linear([[0.5, 0.0], [1.0, -1.0]]), PolyVectorField.linear([[0.0, 1.0], [-1.0, 0.0]]),
              PolyVectorField.from_terms(2, [(0, 1.0, (2, 0)), (1, 1.0, (1, 1))])]
    path = heisenberg_path(5, 0, steps=64)
    table = IteratedIntegralTable(path)
    for N in (1, 2, 3):
        assert np.array_equal(taylor_flow(fields, table, N, [0.0, 0.0], 64), [0.0, 0.0])


def test_commuting_gbm():
    # the drift index (0) has degree 2, so N=1 drops it and N=2 is the first exact truncation
    mu, sigma = 0.1, 0.2
    fields = [(mu - sigma ** 2 / 2) * xdx, sigma * xdx]
    path = with_time_component(sample_brownian(TimeGrid(1.0, 256), 1, 4))
    table = IteratedIntegralTable(path)
    b = path.component(1)[-1]
    got = taylor_flow(fields, table, 2, [1.0], 256)
    assert abs(got[0] - math.exp((mu - sigma ** 2 / 2) + sigma * b)) <= 1e-8
    level_one = taylor_flow(fields, table, 1, [1.0], 256)
    assert level_one.tobytes() == flow_exp(sigma * b * xdx, [1.0]).tobytes()


def test_nilpotent_signature_oracle():
    # strictly upper-triangular linear fields on R^4: brackets of four or more vanish, so
    # level 3 of the exact signature of a piecewise-linear path reproduces the flow exactly
    rng = np.random.default_rng(0)
    A = [np.triu(rng.integers(-2, 3, (4, 4)).astype(float), 1) for _ in range(2)]
    fields = [PolyVectorField.zero(4)] + [PolyVectorField.linear(a) for a in A]
    segments = rng.normal(size=(5, 2)) * 0.4
    words = [w for size in (1, 2, 3) for w in itertools.product((1, 2), repeat=size)]

    def segment_signature(v):
        return {w: math.prod(v[j - 1] for j in w) / math.factorial(len(w)) for w in words}

    def chen(a, b):
        return {w: a[w] + b[w] + sum(a[w[:c]] * b[w[c:]] for c in range(1, len(w))) for w in words}

    sig = segment_signature(segments[0])
    for v in segments[1:]:
        sig = chen(sig, segment_signature(v))
    z = np.array([0.3, -1.0, 0.5, 2.0])
    exact = z
    for v in segments:
        exact = expm(v[0] * A[0] + v[1] * A[1]) @ exact
    calc = BracketCalculus(fields)
    assert np.max(np.abs(flow_exp(assemble_log_field(calc, sig, 3).field, z) - exact)) <= 1e-10
    assert np.max(np.abs(flow_exp(assemble_log_field(calc, sig, 2).field, z) - exact)) > 1e-4


def test_taylor_flow_rejects_level_zero():
    path = heisenberg_path(1, 0, steps=4)
    with pytest.raises(ValueError):
        taylor_flow(heisenberg_fields(), IteratedIntegralTable(path), 0, HEISENBERG_START, 4)


def test_taylor_flow_deterministic():
    fields = heisenberg_fields()
    a = taylor_flow(fields, IteratedIntegralTable(heisenberg_path(9, 2)), 2, HEISENBERG_START, 256)
    b = taylor_flow(fields, IteratedIntegralTable(heisenberg_path(9, 2)), 2, HEISENBERG_START, 256)
    assert a.tobytes() == b.tobytes()


# -- remainder scaling -------------------------------------------------------------

T_LIST = [2.0 ** -k for k in (6, 5, 4, 3, 2)]


def test_heisenberg_level_two_hits_floor():
    study = remainder_slope(heisenberg_fields(), HEISENBERG_START, 2, T_LIST, 4, 1)
    assert study.floor and math.isnan(study.slope)


def test_sl2_slope_grows_with_order():
    fields = [PolyVectorField.zero(1), dx, PolyVectorField.from_terms(1, [(0, 1.0, (2,))])]
    s2 = remainder_slope(fields, [0.5], 2, T_LIST, 16, 1)
    s3 = remainder_slope(fields, [0.5], 3, T_LIST, 16, 1)
    assert s2.slope >= 1.5 - 0.3
    assert s3.slope >= 2.0 - 0.3
    assert s3.slope > s2.slope


def test_remainder_needs_two_horizons():
    with pytest.raises(ValueError):
        remainder_slope(heisenberg_fields(), HEISENBERG_START, 1, [0.5], 4, 1)


def test_remainder_csv_and_threads():
    a = remainder_slope(heisenberg_fields(), HEISENBERG_START, 1, T_LIST[:2], 4, 1, steps=8, threads=1)
    b = remainder_slope(heisenberg_fields(), HEISENBERG_START, 1, T_LIST[:2], 4, 1, steps=8, threads=4)
    assert a.mean_err.tobytes() == b.mean_err.tobytes()
    buf = io.StringIO()
    a.write_csv(buf)
    lines = buf.getvalue().splitlines()
    assert lines[0] == "t,N,mean_err,slope"
    assert lines[1].startswith("0.015625,1,")
