import csv

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from carleman.bicharflow import (FlowError, HamiltonSymbol, classify_tangency, flow_brackets,
                                 integrate)
from carleman.fieldlang import ScalarField
from carleman.symbolcalc import PrincipalSymbol
from oracles import b2_oracle

LAP = PrincipalSymbol.laplacian(2)
VAR = PrincipalSymbol.from_strings([["1 + 0.3*x2^2", "0.1*x1"], ["0.1*x1", "2 + sin(x1)"]])


def test_free_rays_are_straight_lines():
    tr = integrate(LAP, [0.1, 0.2], [0.6, -0.8], s_max=1.0, step=0.01, symmetric=False)
    # x' = 2 xi, xi' = 0
    np.testing.assert_allclose(tr.x[-1], [0.1 + 1.2, 0.2 - 1.6], atol=1e-13)
    np.testing.assert_allclose(tr.xi[-1], [0.6, -0.8], atol=1e-15)


def test_symmetric_trajectory_contains_origin():
    tr = integrate(VAR, [0.0, 0.0], [1.0, 0.5], s_max=0.2, step=0.01)
    assert tr.s[tr.i0] == 0.0
    np.testing.assert_array_equal(tr.x[tr.i0], [0.0, 0.0])
    assert np.all(np.diff(tr.s) > 0)


def test_expression_symbol_matches_principal_symbol():
    H = HamiltonSymbol("(1 + 0.3*x2^2)*xi1^2 + 0.2*x1*xi1*xi2 + (2 + sin(x1))*xi2^2", 2)
    a = integrate(VAR, [0.1, -0.3], [0.7, 0.2], s_max=0.5, step=1e-3)
    b = integrate(H, [0.1, -0.3], [0.7, 0.2], s_max=0.5, step=1e-3)
    np.testing.assert_allclose(a.x, b.x, atol=1e-12)
    np.testing.assert_allclose(a.xi, b.xi, atol=1e-12)


def test_flow_is_reversible():
    a = integrate(VAR, [0.1, -0.3], [0.7, 0.2], s_max=0.5, step=1e-3, symmetric=False)
    b = integrate(VAR, a.x[-1], a.xi[-1], s_max=-0.5, step=1e-3, symmetric=False)
    np.testing.assert_allclose(b.x[0], [0.1, -0.3], atol=1e-10)


def test_box_exit_raises():
    with pytest.raises(FlowError):
        integrate(LAP, [0.0, 0.0], [1.0, 0.0], s_max=1.0, step=0.01, box=([-0.5, -0.5], [0.5, 0.5]))


def test_tangency_kinds():
    line = integrate(LAP, [0.0, 0.0], [0.5, 0.0], s_max=0.1, step=1e-3)
    assert classify_tangency(line, ScalarField.parse("x2 - x1^2", dim=2)).kind == "concave-tangent"
    assert classify_tangency(line, ScalarField.parse("x2 + x1^2", dim=2)).kind == "convex-tangent"
    assert classify_tangency(line, ScalarField.parse("x1", dim=2)).kind == "transversal"
    assert classify_tangency(line, ScalarField.parse("x2 - x1^3", dim=2)).kind == "higher-order"


def test_csv_export(tmp_path):
    tr = integrate(LAP, [0.0, 0.0], [1.0, 0.0], s_max=0.01, step=1e-3)
    path = tmp_path / "t.csv"
    tr.to_csv(path)
    rows = list(csv.reader(open(path)))
    assert rows[0] == ["s", "x0", "x1", "xi0", "xi1", "p"]
    assert len(rows) == len(tr.s) + 1


pts = st.lists(st.floats(-0.5, 0.5), min_size=2, max_size=2)
covs = st.lists(st.floats(-1.0, 1.0), min_size=2, max_size=2).filter(lambda v: abs(v[0]) + abs(v[1]) > 0.1)


@settings(max_examples=25, deadline=None)
@given(pts, covs)
def test_flow_brackets_match_iterated_poisson_bracket(x, xi):
    psi = ScalarField.parse("x1 + 0.5*x1*x2 - x2^2", dim=2)
    b1, b2 = flow_brackets(VAR, psi, x, xi)
    assert b2 == pytest.approx(b2_oracle(VAR, psi, np.array(x), np.array(xi)), rel=1e-6, abs=1e-6)
    H = HamiltonSymbol("(1 + 0.3*x2^2)*xi1^2 + 0.2*x1*xi1*xi2 + (2 + sin(x1))*xi2^2", 2)
    c1, c2 = flow_brackets(H, psi, x, xi)
    assert (c1, c2) == pytest.approx((b1, b2), rel=1e-12, abs=1e-12)


@settings(max_examples=15, deadline=None)
@given(pts, covs)
def test_symbol_conserved_along_flow(x, xi):
    tr = integrate(VAR, x, xi, s_max=0.5, step=1e-3)
    assert tr.conservation_error <= 1e-9 * max(1.0, abs(tr.p[tr.i0]))
