import math

import numpy as np
import pytest

from crestfield import supremand as sp
from crestfield.boundary import Affine, Quadratic
from crestfield.eigen import (BELOW_INFIMUM, OK, EigenProblem, alpha_inverse, alpha_inverse_array,
                              lambda_star, lambda_star_conformal, lambda_star_jet, resolve_lambda,
                              validate_subsolution)
from crestfield.errors import NoBracket, NotMonotone
from crestfield.grid import Grid


def _scaled_identity(c):
    return Affine(np.zeros(2), c * np.eye(2))


def test_alpha_examples():
    assert alpha_inverse(sp.trace_plus("0"), [0.0, 0.0], [0.0, 0.0], 6.0) == pytest.approx(3.0, abs=1e-12)
    a = alpha_inverse(sp.trace_plus("sin(x1)"), [math.pi / 2, 0.0], [0.0, 0.0], 6.0)
    assert a == pytest.approx(2.5, abs=1e-12)
    assert alpha_inverse(sp.eikonal(), [0.0, 0.0], [0.0, 0.0], 4.0) == pytest.approx(8.0, abs=1e-10)


def test_alpha_array_statuses():
    spec = sp.eikonal()
    x = np.zeros((3, 2))
    alpha, status = alpha_inverse_array(spec, x, x, 2.0)
    assert np.all(status == OK)
    np.testing.assert_allclose(alpha, 2.0, atol=1e-12)
    # the half-line ray starts at h = 0, so negative levels are unreachable
    alpha, status = alpha_inverse_array(spec, x, x, -1.0)
    assert np.all(status == BELOW_INFIMUM) and np.all(np.isnan(alpha))


def test_alpha_no_bracket():
    spec = sp.from_expression(h="1 - exp(-t)", n=1, N=1)
    with pytest.raises(NoBracket):
        alpha_inverse(spec, [0.0], [0.0], 2.0)


def test_alpha_not_monotone():
    spec = sp.from_expression(h="sin(t)", n=1, N=1)
    with pytest.raises(NotMonotone):
        alpha_inverse(spec, [0.0], [0.0], 5.0)


def test_alpha_is_increasing_in_lambda():
    spec = sp.trace_plus("cos(x1) + u2")
    rng = np.random.default_rng(11)
    x = rng.uniform(-1, 1, size=(200, 2))
    u = rng.normal(size=(200, 2))
    lo, s1 = alpha_inverse_array(spec, x, u, 5.0)
    hi, s2 = alpha_inverse_array(spec, x, u, 5.5)
    assert np.all(s1 == OK) and np.all(s2 == OK)
    assert np.all(hi > lo)


def test_lambda_star_jet_parabola():
    g = Grid.unit(1, 1024)
    phi = Quadratic([0.0], [[0.0]], [[[2.0]]])
    assert abs(lambda_star_jet(phi, sp.eikonal(), g) - 2.0) <= 2.0 / g.size


@pytest.mark.parametrize("c", [0.0, 0.5, 1.0])
@pytest.mark.parametrize("alpha0", [0.5, 1.0])
def test_lambda_star_conformal_trace(c, alpha0):
    g = Grid.unit(2, 17)
    ls = lambda_star_conformal(_scaled_identity(c), sp.trace_plus("0"), g, alpha0)
    assert ls == max(4 * c * c, 2 * alpha0)


def test_lambda_star_trace_plus_sin():
    # x1 = pi/2 is a node, where the cloud arm reaches 2 * 1 + 1
    g = Grid(((0.0, math.pi), (0.0, 1.0)), (65, 65))
    prob = EigenProblem(sp.trace_plus("sin(x1)"), Affine.zero(2, 2), g)
    assert lambda_star(prob) == pytest.approx(3.0, abs=1e-12)


def test_resolve_lambda_auto_and_floor():
    g = Grid.unit(1, 64)
    lam, info = resolve_lambda(EigenProblem(sp.eikonal(), Affine.zero(1), g), conformal=False)
    assert lam == 1.0 and info["floor_applied"]
    phi = Affine([0.0], [[3.0]])
    lam, info = resolve_lambda(EigenProblem(sp.eikonal(), phi, g), conformal=False)
    assert lam == pytest.approx(3.3) and info["rule"] == "auto"
    lam, info = resolve_lambda(EigenProblem(sp.eikonal(), phi, g, lam=7.0))
    assert lam == 7.0 and info["rule"] == "explicit"


@pytest.mark.parametrize("c,passes,margin", [(1.0, True, 2.0), (2.0, False, -1.0)])
def test_subsolution_gate(c, passes, margin):
    g = Grid.unit(2, 17)
    prob = EigenProblem(sp.trace_plus("0"), _scaled_identity(c), g, lam=6.0)
    rep = validate_subsolution(prob)
    assert rep.pass_211 is passes
    assert rep.worst_margin == pytest.approx(margin, abs=1e-9)
    np.testing.assert_allclose(rep.alpha, 3.0, atol=1e-12)
    np.testing.assert_allclose(rep.lambda_n, c * c, atol=1e-9)


def test_subsolution_alpha0_bound():
    g = Grid.unit(2, 9)
    prob = EigenProblem(sp.trace_plus("0"), Affine.zero(2, 2), g, lam=2.0, alpha0=1.0)
    rep = validate_subsolution(prob)
    assert rep.pass_211 and not rep.pass_212  # alpha = 1 is not above alpha0 = 1
    assert validate_subsolution(EigenProblem(sp.trace_plus("0"), Affine.zero(2, 2), g,
                                             lam=2.0, alpha0=0.5)).passed


def test_problem_validation():
    g = Grid.unit(2, 9)
    with pytest.raises(ValueError):
        EigenProblem(sp.eikonal(), Affine.zero(1), g)
    with pytest.raises(ValueError):
        EigenProblem(sp.eikonal(), Affine.zero(2), g, lam=-1.0)
