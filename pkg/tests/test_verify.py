import numpy as np
import pytest

from crestfield import supremand as sp
from crestfield.boundary import Affine
from crestfield.construct import sawtooth_1d
from crestfield.errors import DegenerateEnergy
from crestfield.grid import Field, Grid, finite_difference_jet
from crestfield.verify import (ExclusionPolicy, check_pde_residual, classify_theorem1,
                               deviation_measure, fold_mask, jensen_lower_bound_check)

EIK = sp.eikonal()
G = Grid.unit(1, 1024)


def test_tent_classifies_true():
    rep = classify_theorem1(sawtooth_1d(0.0, 0.0, 1.0, 1, G), EIK)
    assert rep.is_minimiser and rep.is_solution and rep.verdict_consistent
    assert rep.fold_fraction <= 3 / G.size
    assert rep.lambda_hat == pytest.approx(1.0, abs=1e-9)
    assert rep.crest_nodal >= 1.0


@pytest.mark.parametrize("func", [lambda x: x ** 2, lambda x: np.sin(np.pi * x)])
def test_smooth_non_solutions_classify_false(func):
    rep = classify_theorem1(Field(G, func(G.axis(0))), EIK)
    assert not rep.is_minimiser and not rep.is_solution and rep.verdict_consistent


def test_parabola_deviation():
    jf = finite_difference_jet(Field(G, G.axis(0) ** 2))
    dev = deviation_measure(jf, EIK, [0.2, 0.5])
    assert abs(dev[0.2] - 0.9) <= 2 / G.size
    assert abs(dev[0.5] - 0.75) <= 2 / G.size


def test_fold_mask_finds_kink_only():
    u = sawtooth_1d(0.0, 0.0, 1.0, 1, G)
    mask = fold_mask(u, 1.0)
    assert 1 <= mask.sum() <= 2
    idx = np.flatnonzero(mask)
    assert np.all(np.abs(G.axis(0)[idx] - 0.5) <= G.spacing[0])
    wide = fold_mask(u, 1.0, ExclusionPolicy(band_width=5))
    assert wide.sum() > mask.sum() and np.all(wide[mask])


def test_smooth_curvature_is_not_a_fold():
    assert not fold_mask(Field(G, G.axis(0) ** 2), 2.0).any()


def test_policy_validation():
    with pytest.raises(ValueError):
        ExclusionPolicy(fold_detection_threshold=0.0)
    with pytest.raises(ValueError):
        ExclusionPolicy(band_width=0)


def test_residual_stats():
    u = sawtooth_1d(0.0, 0.0, 2.5, 5, G)
    res = check_pde_residual(u, EIK, 2.5)
    assert res.status == "ok" and res.sup <= 1e-9
    assert res.checked + res.fold_count == G.size - 2  # folds sit inside
    off = check_pde_residual(u, EIK, 2.0)
    assert off.sup == pytest.approx(0.5, abs=1e-9)


def test_degenerate_classification():
    with pytest.raises(DegenerateEnergy):
        classify_theorem1(Field(G, np.zeros(G.size)), EIK)


def test_tolerance_overrides():
    u = Field(G, G.axis(0) ** 2)
    rep = classify_theorem1(u, EIK, tolerances={"tolCrest": 1.0, "tolConst": 1.0})
    assert rep.is_minimiser and rep.is_solution
    assert rep.to_dict()["tolCrest"] == 1.0


def test_report_keys():
    d = classify_theorem1(sawtooth_1d(0.0, 0.0, 1.0, 2, G), EIK).to_dict()
    for key in ("crest", "lambdaHat", "foldFraction", "deviationMeasure", "isMinimiser",
                "isSolution", "verdictConsistent", "assumptions"):
        assert key in d


def test_jensen_bound_1d():
    phi = Affine([0.0], [[0.3]])
    rng = np.random.default_rng(8)
    u = phi.sample(G).values[:, 0] + np.r_[0.0, rng.normal(scale=0.01, size=G.size - 2), 0.0]
    rep = jensen_lower_bound_check(Field(G, u), EIK, phi)
    assert rep.passed and not rep.advisory
    assert rep.identity_error <= 1e-12 and rep.e_inf >= 0.3


def test_jensen_is_advisory_in_2d():
    g = Grid.unit(2, 17)
    phi = Affine([0.0], [[0.3, 0.1]])
    rep = jensen_lower_bound_check(phi.sample(g), EIK, phi)
    assert rep.advisory and rep.passed


def test_affine_field_has_no_folds():
    u = Affine([0.1], [[-1.5]]).sample(G)
    res = check_pde_residual(u, EIK, 1.5)
    assert res.sup <= 1e-12 and res.fold_fraction == 0.0
    rep = classify_theorem1(u, EIK)
    assert rep.crest == pytest.approx(1.0, abs=1e-12) and rep.is_minimiser and rep.is_solution


@pytest.mark.parametrize("m", [1, 2, 5])
def test_solution_deviation_within_fold_budget(m):
    lam = 2.5
    rep = classify_theorem1(sawtooth_1d(0.0, 0.0, lam, m, G), EIK, deltas=(0.05 * lam, 0.1, 1.0))
    assert abs(rep.lambda_hat - lam) <= 1e-9
    assert all(v <= rep.fold_fraction for v in rep.deviation.values())


@pytest.mark.parametrize("s", [0.25, 3.0])
def test_verdicts_scale_invariant(s):
    g = Grid.unit(2, 65)
    x, y = g.coordinates()[..., 0], g.coordinates()[..., 1]
    for u in (np.minimum(x, y), x ** 2):
        a = classify_theorem1(Field(g, u), EIK)
        b = classify_theorem1(Field(g, s * u), EIK)
        assert (a.is_minimiser, a.is_solution) == (b.is_minimiser, b.is_solution)


def test_jensen_equality_at_datum():
    phi = Affine([0.0], [[0.3]])
    rep = jensen_lower_bound_check(phi.sample(G), EIK, phi)
    assert rep.e_inf == pytest.approx(0.3, abs=1e-12) and rep.margin == pytest.approx(0.0, abs=1e-12)
