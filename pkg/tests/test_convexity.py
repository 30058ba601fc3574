import json
import math

import numpy as np
import pytest

from carleman.convexity import (Hypersurface, SurfaceError, check_function_pseudoconvex,
                                check_noncharacteristic, check_surface_pseudoconvex,
                                convexification_identity_residual, convexify_geometric,
                                sphere_lattice)
from carleman.fieldlang import ScalarField
from carleman.symbolcalc import PrincipalSymbol

MINK = PrincipalSymbol.minkowski(2)
N = 2 ** 11


def surf(src, x0=(0.0, 1.0, 0.0)):
    return Hypersurface(ScalarField.parse(src, names=MINK.names), x0)


@pytest.mark.parametrize("k", [2, 3, 4, 5, 6])
def test_sphere_lattice_unit_and_deterministic(k):
    a = sphere_lattice(500, k)
    assert a.shape == (500, k)
    np.testing.assert_allclose(np.linalg.norm(a, axis=1), 1.0, atol=1e-14)
    np.testing.assert_array_equal(a, sphere_lattice(500, k))
    # quasi-uniform: the mean is close to the origin
    assert np.linalg.norm(a.mean(axis=0)) < 0.05


def test_hypersurface_validation():
    with pytest.raises(SurfaceError):
        surf("x1^2 + x2^2 - 2")
    with pytest.raises(SurfaceError):
        surf("x2^2", (0.0, 0.0, 0.0))


def test_noncharacteristic():
    assert check_noncharacteristic(MINK, surf("x1 - 1")).verdict == "pass"
    rep = check_noncharacteristic(MINK, surf("x1 - 1 - t"))
    assert rep.verdict == "fail"
    assert rep.witness["tau"] == 0.0


@pytest.mark.parametrize("gamma", [0.5, 2.0])
def test_hyperboloid_margin_by_hand(gamma):
    # at (0, 1, 0) the feasible set is xi1 = 0, xi_t^2 = xi2^2 = 1/2 and
    # {p, {p, psi}} = 8 (|xi_x|^2 - gamma^2 xi_t^2) = 4 (1 - gamma^2)
    rep = check_surface_pseudoconvex(MINK, surf(f"x1^2 + x2^2 - {gamma**2}*t^2 - 1"), n_samples=N)
    assert rep.verdict == ("pass" if gamma < 1 else "fail")
    assert rep.constants["margins_by_delta"]["0.0001"] == pytest.approx(4 * (1 - gamma ** 2), rel=1e-3)


def test_orientation_flip_changes_verdict():
    S = surf("x1^2 + x2^2 - 0.25*t^2 - 1")
    assert check_surface_pseudoconvex(MINK, S, n_samples=N).verdict == "pass"
    assert check_surface_pseudoconvex(MINK, S.flipped(), n_samples=N).verdict == "fail"


def test_xit0_mode_is_vacuous_for_static_surface():
    # time-independent surface: with xi_t = 0 the characteristic set is {0}
    S = surf("1 - x1^2 - x2^2")
    assert check_surface_pseudoconvex(MINK, S, n_samples=N).verdict == "fail"
    rep = check_surface_pseudoconvex(MINK, S, mode="xit0", n_samples=N)
    assert rep.verdict in ("vacuous", "pass")


def test_report_serialization_fields():
    rep = check_surface_pseudoconvex(MINK, surf("x1^2 + x2^2 - 4*t^2 - 1"), n_samples=N)
    d = json.loads(rep.to_json())
    assert set(d) == {"verdict", "margin", "witness", "constants"}
    assert "details" in rep.to_dict(detailed=True)
    w = d["witness"]
    assert len(w["x"]) == 3 and len(w["xi"]) == 3


def test_function_check_deterministic():
    phi = ScalarField.parse("x1^2 + x2^2 - 1", names=MINK.names)
    a = check_function_pseudoconvex(MINK, phi, [0.0, 1.0, 0.0], n_samples=N)
    b = check_function_pseudoconvex(MINK, phi, [0.0, 1.0, 0.0], n_samples=N)
    assert a.verdict == "pass"
    assert a.margin == b.margin


def test_identity_residual_variable_coefficients():
    p = PrincipalSymbol.wave([["1 + 0.2*x1*x2", "0"], ["0", "1 + 0.1*t"]], 2)
    S = Hypersurface(ScalarField.parse("x1 + 0.3*x2^2 - 0.1*t^2 - 0.5", names=p.names),
                     [0.0, 0.5, 0.0])
    for lam in (0.5, 3.0, 20.0):
        assert convexification_identity_residual(p, S, lam) <= 1e-8


def test_convexify_geometric_shift():
    phi = ScalarField.parse("x1^2 + x2^2 - 1", names=MINK.names)
    field, eps, R0, rep = convexify_geometric(MINK, phi, [0.0, 1.0, 0.0], n_samples=N)
    assert rep.verdict == "pass"
    assert 0 < eps <= 1 and math.isinf(R0)
