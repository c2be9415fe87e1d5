"""Acceptance suite. Each test records one PASS/FAIL line, listed at the end of the run."""

import json
import math
import time
from pathlib import Path

import numpy as np
import pytest

from crestfield import supremand as sp
from crestfield.boundary import Affine, Quadratic
from crestfield.cli import main
from crestfield.construct import (SolveRequest, conformal_solution, mcshane_solution,
                                  refine_inclusion, sawtooth_1d)
from crestfield.eigen import (OK, EigenProblem, alpha_inverse_array, lambda_star_conformal,
                              lambda_star_jet, validate_subsolution)
from crestfield.energy import crest_factor, energy_inf, energy_p
from crestfield.errors import StalledProgress
from crestfield.grid import Field, Grid, finite_difference_jet
from crestfield.supremand import H_field, h_ray
from crestfield.verify import classify_theorem1, deviation_measure, jensen_lower_bound_check

EIK = sp.eikonal()
M1 = 1024
M2 = 129
PROBLEMS = Path(__file__).resolve().parent.parent / "problems"


# 1. crest >= 1 and E_p <= E_inf on random fields

def test_holder_bound(acceptance):
    rng = np.random.default_rng(2024)
    t0 = time.perf_counter()
    worst_crest, worst_gap = np.inf, -np.inf
    for i in range(1000):
        if i % 2:
            m = int(rng.integers(8, 257))
            g = Grid.unit(2, m)
        else:
            g = Grid.unit(1, int(rng.integers(16, 4097)))
        u = rng.normal(size=g.shape) * rng.lognormal()
        if i % 4 >= 2:  # near-affine fields put the crest close to 1
            u = u * 1e-6 + g.coordinates() @ rng.normal(size=g.dim)
        jf = finite_difference_jet(Field(g, u))
        einf, _ = energy_inf(jf, EIK)
        for p in (1.0, 2.0, 8.0):
            worst_crest = min(worst_crest, crest_factor(jf, EIK, p))
            worst_gap = max(worst_gap, energy_p(jf, EIK, p) - einf)
    elapsed = time.perf_counter() - t0
    ok = worst_crest >= 1 - 1e-12 and worst_gap <= 0.0 and elapsed < 10.0
    acceptance.check("1 crest >= 1, E_p <= E_inf", ok,
                     f"min crest {worst_crest:.15f}, max E_p - E_inf {worst_gap:.3g}, {elapsed:.2f}s")


# 2. closed-form energies of x^2

def test_parabola_energies(acceptance):
    g = Grid.unit(1, M1)
    jf = finite_difference_jet(Field(g, g.axis(0) ** 2))
    errs = {p: abs(energy_p(jf, EIK, p) - 2.0 / (p + 1) ** (1 / p)) for p in (1.0, 2.0, 4.0)}
    crest = crest_factor(jf, EIK, 2.0)
    ok = max(errs.values()) <= 2.0 / M1 and abs(crest - math.sqrt(3)) <= 0.01 * math.sqrt(3)
    acceptance.check("2 E_p of x^2", ok, f"max |E_p - oracle| {max(errs.values()):.3g}, crest {crest:.6f}")


# 3. constructed solutions classify as minimiser and solution

def _constructions():
    cases = []
    for lam in (1.0, 2.5):
        for m in (1, 2, 5):
            cases.append((f"sawtooth-m{m}-lam{lam}", 1, lam, ("SAWTOOTH", m)))
        for dim in (1, 2):
            for mode in ("MIN", "MAX"):
                cases.append((f"mcshane-{mode}-{dim}d-lam{lam}", dim, lam, (mode, None)))
    return cases


CASES = _constructions()
_ELAPSED = {}


def _construct(dim, lam, how):
    if how[0] == "SAWTOOTH":
        return sawtooth_1d(0.0, 0.0, lam, how[1], Grid.unit(1, M1))
    g = Grid.unit(dim, M1 if dim == 1 else M2)
    return mcshane_solution(EigenProblem(EIK, Affine.zero(dim), g, lam=lam), how[0])


@pytest.mark.parametrize("name,dim,lam,how", CASES, ids=[c[0] for c in CASES])
def test_forward_equivalence(acceptance, name, dim, lam, how):
    t0 = time.perf_counter()
    fld = _construct(dim, lam, how)
    rep = classify_theorem1(fld, EIK)
    _ELAPSED[name] = time.perf_counter() - t0
    M = fld.grid.size
    fold_cap = 3.0 / M if dim == 1 else 5.0 / math.sqrt(M)
    ok = (rep.is_minimiser and rep.is_solution and rep.crest <= 1 + 20 * rep.fold_fraction
          and rep.fold_fraction <= fold_cap)
    acceptance.check(f"3 {name}", ok,
                     f"minimiser {rep.is_minimiser}, solution {rep.is_solution}, crest {rep.crest:.12f}, "
                     f"folds {rep.fold_fraction * M:.0f}/{M} nodes (cap {fold_cap * M:.1f})")


def test_forward_equivalence_runtime(acceptance):
    for name, dim, lam, how in CASES:
        if name not in _ELAPSED:
            t0 = time.perf_counter()
            classify_theorem1(_construct(dim, lam, how), EIK)
            _ELAPSED[name] = time.perf_counter() - t0
    total = sum(_ELAPSED.values())
    acceptance.check("3 runtime", total < 30.0, f"{total:.2f}s for {len(CASES)} constructions")


# 4. smooth non-solutions classify false

def test_backward_equivalence(acceptance):
    g = Grid.unit(1, M1)
    x = g.axis(0)
    verdicts = {}
    for label, u in (("x^2", x ** 2), ("sin(pi x)", np.sin(np.pi * x))):
        rep = classify_theorem1(Field(g, u), EIK)
        verdicts[label] = (rep.is_minimiser, rep.is_solution, rep.verdict_consistent)
    dev = deviation_measure(finite_difference_jet(Field(g, x ** 2)), EIK, [0.2])[0.2]
    ok = all(v == (False, False, True) for v in verdicts.values()) and abs(dev - 0.9) <= 2.0 / M1
    acceptance.check("4 x^2 and sin(pi x) both false", ok, f"verdicts {verdicts}, deviation(0.2) {dev:.6f}")


# 5. identity-ray inverse against closed forms

def test_alpha_inverse(acceptance):
    rng = np.random.default_rng(5)
    m = 1000
    x = rng.uniform(-3, 3, size=(m, 2))
    X = rng.normal(size=(m, 2))
    lam = rng.uniform(1.5, 20.0, size=m)
    trace_sin = sp.trace_plus("sin(x1)")
    t0 = time.perf_counter()
    a1, s1 = alpha_inverse_array(trace_sin, x, X, lam)
    a2, s2 = alpha_inverse_array(EIK, x, X, lam)
    elapsed = time.perf_counter() - t0
    closed1 = (lam - np.sin(x[:, 0])) / 2.0
    closed2 = lam ** 2 / 2.0
    resid = max(np.max(np.abs(h_ray(trace_sin, x, X, a1) - lam)), np.max(np.abs(h_ray(EIK, x, X, a2) - lam)))
    err = max(np.max(np.abs(a1 - closed1)), np.max(np.abs(a2 - closed2)))
    ok = np.all(s1 == OK) and np.all(s2 == OK) and resid <= 1e-9 and err <= 1e-10 and elapsed < 1.0
    acceptance.check("5 alpha inverse", ok, f"max residual {resid:.3g}, max closed-form error {err:.3g}, "
                     f"{elapsed * 1e3:.0f} ms")


# 6. critical eigenvalue formulas

def test_lambda_star(acceptance):
    g1 = Grid.unit(1, M1)
    ls = lambda_star_jet(Quadratic([0.0], [[0.0]], [[[2.0]]]), EIK, g1)
    g2 = Grid.unit(2, 33)
    mismatches = []
    for c in (0.0, 0.5, 1.0):
        for a0 in (0.5, 1.0):
            got = lambda_star_conformal(Affine(np.zeros(2), c * np.eye(2)), sp.trace_plus("0"), g2, a0)
            if got != max(4 * c * c, 2 * a0):
                mismatches.append((c, a0, got))
    ok = abs(ls - 2.0) <= 2.0 / M1 and not mismatches
    acceptance.check("6 Lambda_* formulas", ok, f"jet form {ls:.9f}, conformal mismatches {mismatches}")


# 7. subsolution gate

def test_subsolution_gate(acceptance):
    g = Grid.unit(2, 17)
    results = {}
    for c in (1.0, 2.0):
        prob = EigenProblem(sp.trace_plus("0"), Affine(np.zeros(2), c * np.eye(2)), g, lam=6.0)
        rep = validate_subsolution(prob)
        # affine data on a dyadic grid: both are exact at every node
        alpha = float(np.ravel(rep.alpha)[0]) if np.ptp(rep.alpha) == 0 else float("nan")
        lam_n = float(np.ravel(rep.lambda_n)[0]) if np.ptp(rep.lambda_n) == 0 else float("nan")
        results[c] = (rep.pass_211, alpha, lam_n, rep.pass_211 == (alpha > lam_n))
    ok = (results[1.0][:3] == (True, 3.0, 1.0) and results[2.0][:3] == (False, 3.0, 4.0)
          and all(r[3] for r in results.values()))
    acceptance.check("7 subsolution gate", ok, f"(pass, alpha, lambda_n, matches hand margin) {results}")


# 8. refinement convergence

def _refine(request):
    try:
        return refine_inclusion(request)
    except StalledProgress as err:
        return err.report


def _interior_fraction_below(fld, level):
    absH = H_field(EIK, finite_difference_jet(fld))
    inside = ~fld.grid.boundary_mask()
    return float(np.mean(absH[inside] < level))


@pytest.mark.parametrize("dim,M,cap", [(1, M1, 200), (2, M2, 2000)], ids=["1d", "2d"])
def test_refinement_eikonal(acceptance, dim, M, cap):
    prob = EigenProblem(EIK, Affine.zero(dim), Grid.unit(dim, M), lam=1.0)
    runs = []
    for _ in range(2):
        t0 = time.perf_counter()
        rep = _refine(SolveRequest(prob, max_iters=cap, seed=7))
        runs.append((rep, time.perf_counter() - t0))
    rep, elapsed = runs[0]
    frac = _interior_fraction_below(rep.field, 0.95)
    same = np.array_equal(rep.field.values, runs[1][0].field.values)
    ok = frac < 0.05 and rep.iterations <= cap and elapsed < 60.0 and same
    acceptance.check(f"8 refinement eikonal {dim}D", ok,
                     f"fraction {{|Du| < 0.95}} {frac:.4f} after {rep.iterations} iterations, "
                     f"{elapsed:.2f}s, deterministic {same}")


def test_refinement_conformal(acceptance):
    g = Grid.unit(2, M2)
    prob = EigenProblem(sp.trace_plus("0"), Affine.zero(2, 2), g, lam=2.0, alpha0=0.5)
    runs = []
    for _ in range(2):
        t0 = time.perf_counter()
        try:
            rep = conformal_solution(prob, SolveRequest(prob, "CONFORMAL", max_iters=50, seed=0))
        except StalledProgress as err:
            rep = err.report
        runs.append((rep, time.perf_counter() - t0))
    rep, elapsed = runs[0]
    trace = rep.trace[:51]
    decreasing = len(trace) == 51 and all(b < a for a, b in zip(trace, trace[1:]))
    same = np.array_equal(rep.field.values, runs[1][0].field.values)
    ok = decreasing and elapsed < 60.0 and same
    acceptance.check("8 refinement conformal 2D", ok,
                     f"{len(trace) - 1} strictly decreasing steps, {trace[0]:.4f} -> {trace[-1]:.4f}, "
                     f"{elapsed:.2f}s, deterministic {same}")


# 9. mean-slope lower bound

def test_mean_slope_bound(acceptance):
    g = Grid.unit(1, M1)
    phi = Affine([0.0], [[0.3]])
    base = phi.sample(g).values[:, 0]
    rng = np.random.default_rng(9)
    worst_einf, worst_err, all_pass = np.inf, 0.0, True
    for _ in range(100):
        bump = np.cumsum(rng.normal(size=M1)) * (rng.lognormal(-3) * g.spacing[0])
        bump -= np.linspace(bump[0], bump[-1], M1)  # zero at both ends
        rep = jensen_lower_bound_check(Field(g, base + bump), EIK, phi)
        worst_einf = min(worst_einf, rep.e_inf)
        worst_err = max(worst_err, rep.identity_error)
        all_pass &= rep.passed
    ok = all_pass and worst_einf >= 0.3 and worst_err <= 1e-12
    acceptance.check("9 mean-slope bound", ok, f"min E_inf {worst_einf:.6f}, max identity error {worst_err:.3g}")


# 10. determinism of the solve command

def test_solve_determinism(acceptance, tmp_path):
    prob = str(PROBLEMS / "refine_2d.json")
    bodies = []
    for d in ("a", "b"):
        main(["solve", "--problem", prob, "--out", str(tmp_path / d), "--seed", "7"])
        bodies.append((tmp_path / d / "field.csv").read_bytes())
    reports = [json.loads((tmp_path / d / "solve.json").read_text())["body"] for d in ("a", "b")]
    ok = bodies[0] == bodies[1] and reports[0] == reports[1]
    acceptance.check("10 byte-identical solve output", ok, f"{len(bodies[0])} bytes")
