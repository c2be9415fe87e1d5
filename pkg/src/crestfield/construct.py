"""Explicit and iterative constructions of solutions of |H(Du)| = lambda, u = phi on the boundary.

* :func:`sawtooth_1d`: up/down teeth with slopes +/- lambda in 1D.
* :func:`mcshane_solution`: min/max cone envelopes over boundary nodes.
* :func:`refine_inclusion`: seeded multiscale greedy bump superposition, either
  pushing |H| up to lambda (scalar fields) or pushing Du^T Du towards alpha I
  (two-component fields in 2D).
* :func:`conformal_solution`: Du^T Du = alpha(x, u) I via the two above.
"""

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import expr as ex
from . import kernels
from .eigen import (OK, alpha_inverse, alpha_inverse_array, lambda_star_conformal,
                    resolve_lambda, validate_subsolution)
from .errors import Infeasible, StalledProgress
from .grid import Field, finite_difference_jet, gram_entries
from .supremand import H_field, H_values

METHODS = ("SAWTOOTH", "MCSHANE_MIN", "MCSHANE_MAX", "REFINE", "CONFORMAL")

COMPAT_RTOL = 1e-12
DEVIATION_REL = 0.05
OVERSHOOT_REL = 1e-3
MIN_CELL = 4
GRAM_INITIAL_CELL = 16
PASSES_PER_SCALE = 2


# ---------------------------------------------------------------------------
# 1D sawtooth


def sawtooth_1d(phi_a, phi_b, lam, m, grid):
    """Continuous sawtooth with slopes in {+lam, -lam}, ``m`` up-down teeth, u(a)=phi_a, u(b)=phi_b.

    When |phi_b - phi_a| = lam (b - a) only the affine solution exists and ``m`` is ignored.
    """
    if grid.dim != 1:
        raise ValueError("sawtooth_1d needs a 1D grid")
    m = int(m)
    if m < 1:
        raise ValueError("m must be >= 1")
    if not lam > 0.0:
        raise ValueError("lambda must be positive")
    (a, b), = grid.bounds
    L = b - a
    delta = float(phi_b) - float(phi_a)
    x = grid.axis(0)
    if abs(delta) > lam * L * (1.0 + COMPAT_RTOL):
        raise Infeasible(f"|phi(b) - phi(a)| = {abs(delta)} exceeds lambda * L = {lam * L}: "
                         "no function with |u'| = lambda connects the data")
    if abs(delta) >= lam * L * (1.0 - COMPAT_RTOL):
        u = phi_a + delta * (x - a) / L
    else:
        up = 0.5 * (L + delta / lam) / m
        period = L / m
        k = np.arange(m)
        starts = a + k * period
        start_vals = phi_a + k * (delta / m)
        xs = np.empty(2 * m + 1)
        ys = np.empty(2 * m + 1)
        xs[0:-1:2], ys[0:-1:2] = starts, start_vals
        xs[1::2], ys[1::2] = starts + up, start_vals + lam * up
        xs[-1], ys[-1] = b, phi_b
        u = np.interp(x, xs, ys)
    u[0], u[-1] = phi_a, phi_b
    return Field(grid, u)


def sawtooth_breakpoints(phi_a, phi_b, lam, m, bounds):
    """Kink abscissae of the sawtooth (empty for the affine case)."""
    a, b = bounds
    L = b - a
    delta = phi_b - phi_a
    if abs(delta) >= lam * L * (1.0 - COMPAT_RTOL):
        return np.array([])
    up = 0.5 * (L + delta / lam) / m
    starts = a + np.arange(m) * (L / m)
    return np.sort(np.concatenate([starts[1:], starts + up]))


def eikonal_speed(spec, lam, n):
    """The gradient norm r with |H| = lam on {|Du| = r}, when H depends on |Du| only."""
    if spec.kind == "catalog":
        cid = spec.catalog_id
        if cid == "EIKONAL":
            return float(lam)
        if cid == "EIKONAL2_SHIFT":
            v = lam + spec.coefficients[0]
            if v <= 0.0:
                raise Infeasible(f"|Du|^2 = {v} has no solution")
            return float(np.sqrt(v))
        if cid == "TRACE_PLUS" and not ex.variables(spec.g_ast):
            v = lam - float(ex.evaluate(spec.g_ast, {}))
            if v <= 0.0:
                raise Infeasible(f"|Du|^2 = {v} has no solution")
            return float(np.sqrt(v))
        if cid == "AFFINE_DIR" and n == 1:
            c = abs(float(spec.direction[0, 0]))
            if c == 0.0:
                raise Infeasible("AFFINE_DIR with zero coefficient has |H| = 0")
            return float(lam) / c
    if spec.is_conformal and n == 1 and spec.top_order_only:
        return float(np.sqrt(alpha_inverse(spec, [0.0], [0.0], lam)))
    raise ValueError(f"{spec.label} is not a function of |Du| alone")


# ---------------------------------------------------------------------------
# McShane envelopes


def boundary_lipschitz(points, values):
    """Largest difference quotient of ``values`` over pairs of ``points``."""
    best = 0.0
    for i in range(len(points) - 1):
        d = np.linalg.norm(points[i + 1:] - points[i], axis=-1)
        q = np.abs(values[i + 1:] - values[i]) / d
        if q.size:
            best = max(best, float(q.max()))
    return best


def mcshane_solution(problem, mode, lam=None):
    """MIN: u = min_y phi(y) + r|x - y|; MAX: u = max_y phi(y) - r|x - y|, over boundary nodes y.

    ``r`` is the gradient norm with |H| = lambda (lambda itself for the eikonal).
    """
    mode = mode.upper().replace("MCSHANE_", "")
    if mode not in ("MIN", "MAX"):
        raise ValueError("mode must be MIN or MAX")
    if problem.N != 1 or problem.order != 1:
        raise ValueError("McShane envelopes need a scalar first-order problem")
    if lam is None:
        lam, _ = resolve_lambda(problem, conformal=False)
    grid = problem.grid
    speed = eikonal_speed(problem.spec, lam, grid.dim)
    phi = problem.phi_field().values[..., 0]
    bmask = grid.boundary_mask()
    pts = grid.points()
    bpts = pts[bmask.ravel()]
    bvals = phi[bmask]
    lip = boundary_lipschitz(bpts, bvals)
    if lip > speed * (1.0 + COMPAT_RTOL):
        raise Infeasible(f"boundary data has Lipschitz constant {lip} > {speed}")
    sign = 1.0 if mode == "MIN" else -1.0
    u = kernels.envelope(pts, bpts, bvals, float(speed), sign).reshape(grid.shape)
    u[bmask] = phi[bmask]
    return Field(grid, u)


# ---------------------------------------------------------------------------
# refinement


@dataclass
class SolveRequest:
    problem: object
    method: str = "REFINE"
    m: int = 1
    seed: int = 0
    max_iters: int = 2000
    target_deviation_fraction: float = 0.05
    lipschitz_budget: float = float("inf")
    epsilon: Optional[float] = None
    tol: Optional[float] = None
    initial_cell: Optional[int] = None

    def __post_init__(self):
        self.method = self.method.upper()
        if self.method not in METHODS:
            raise ValueError(f"unknown method {self.method!r}")
        if self.m < 1:
            raise ValueError("m must be >= 1")
        if not 0.0 < self.target_deviation_fraction < 1.0:
            raise ValueError("targetDeviationFraction must lie in (0, 1)")
        if self.max_iters < 0:
            raise ValueError("maxIters must be >= 0")


@dataclass
class SolutionReport:
    field: Field
    lambda_used: float
    method: str
    status: str
    lambda_info: dict = field(default_factory=dict)
    residual: dict = field(default_factory=dict)
    trace: list = field(default_factory=list)
    trace_kind: str = ""
    alpha_summary: Optional[dict] = None
    h_check: Optional[dict] = None

    @property
    def iterations(self):
        return max(len(self.trace) - 1, 0)

    def to_dict(self):
        out = {
            "method": self.method,
            "status": self.status,
            "lambda": self.lambda_used,
            "lambda_choice": self.lambda_info,
            "residual": self.residual,
            "iterations": self.iterations,
        }
        if self.trace:
            out["trace"] = {"kind": self.trace_kind, "fraction": list(self.trace)}
        if self.alpha_summary is not None:
            out["alpha"] = self.alpha_summary
        if self.h_check is not None:
            out["h_check"] = self.h_check
        return out


def _grad_local(u, h):
    """FD gradient of ``u (*shape, N)`` on a slab, shape ``(*shape, N, n)``."""
    n = u.ndim - 1
    du = np.empty(u.shape + (n,))
    for d in range(n):
        du[..., d] = kernels.diff1(u, h[d], axis=d)
    return du


def _gram_residual(du, alpha):
    S = gram_entries(du)
    return np.sqrt((S[0] - alpha) ** 2 + 2.0 * S[1] ** 2 + (S[2] - alpha) ** 2)


def _tri_wave(k, W, m, h):
    """Triangle wave with slope +/- 1 and m teeth over W intervals, 0 at k = 0 and k = W."""
    s = k * (m / W)
    frac = s - np.floor(s)
    return (W / m) * h * (0.5 - np.abs(frac - 0.5))


def _edge_distance(k, W, h):
    return h * np.minimum(k, W - k).astype(float)


class _Refiner:
    def __init__(self, request, lam, gram_mode):
        p = request.problem
        self.req = request
        self.spec = p.spec
        self.grid = p.grid
        self.lam = lam
        self.gram = gram_mode
        self.eps = DEVIATION_REL * lam if request.epsilon is None else float(request.epsilon)
        self.tol = OVERSHOOT_REL * lam if request.tol is None else float(request.tol)
        self.budget = float(request.lipschitz_budget)
        self.rng = np.random.default_rng(request.seed)
        self.h = self.grid.spacing
        self.x = self.grid.coordinates()
        phi = p.phi_field()
        self.phi_values = phi.values
        self.u = np.array(phi.values)
        self.bmask = self.grid.boundary_mask()
        self.alpha = None
        if gram_mode:
            self.alpha_varies = self.spec.h_depends_on_u
            self.alpha = self._alpha_at(self.x, self.u)
        self.interior = ~self.bmask
        jf = finite_difference_jet(phi, 1)
        self.absH = H_field(self.spec, jf)
        self.dev = self._deviating(self.absH, jf.du, self.alpha) & self.interior
        self.count = int(self.dev.sum())

    def _alpha_at(self, x, u):
        shape = x.shape[:-1]
        a, st = alpha_inverse_array(self.spec, x.reshape(-1, x.shape[-1]),
                                    u.reshape(-1, u.shape[-1]), self.lam)
        if np.any(st != OK):
            raise Infeasible("alpha(x, u) is undefined at some nodes of the current field")
        return a.reshape(shape)

    def _deviating(self, absH, du, alpha):
        if self.gram:
            return _gram_residual(du, alpha) > DEVIATION_REL * alpha
        return absH < self.lam - self.eps

    @property
    def fraction(self):
        """Deviating share of the interior nodes."""
        return self.count / max(int(self.interior.sum()), 1)

    # cells ------------------------------------------------------------------

    def _cells(self, width):
        per_axis = []
        for d, M in enumerate(self.grid.shape):
            W = M - 1
            if width >= W:
                per_axis.append([(0, W)])
                continue
            off = int(self.rng.integers(0, width))
            cuts = sorted({0, W, *range(off, W, width)})
            spans = []
            for lo, hi in zip(cuts, cuts[1:]):
                if hi - lo < 2 and spans:
                    spans[-1] = (spans[-1][0], hi)
                else:
                    spans.append((lo, hi))
            per_axis.append(spans)
        if self.grid.dim == 1:
            cells = [(s,) for s in per_axis[0]]
        else:
            cells = [(s, t) for s in per_axis[0] for t in per_axis[1]]
        order = self.rng.permutation(len(cells))
        return [cells[i] for i in order]

    # candidates -------------------------------------------------------------

    def _profiles(self, cell):
        ks = [np.arange(hi - lo + 1) for lo, hi in cell]
        Ws = [hi - lo for lo, hi in cell]
        dist = [_edge_distance(k, W, self.h[d]) for d, (k, W) in enumerate(zip(ks, Ws))]
        if not self.gram:
            pyr = dist[0] if self.grid.dim == 1 else np.minimum(dist[0][:, None], dist[1][None, :])
            slope = self._slope(cell)
            for frac in np.arange(8, 0, -1) / 8.0:
                for sign in (1.0, -1.0):
                    yield (sign * slope * frac * pyr)[..., None]
            return
        sl = tuple(slice(lo, hi + 1) for lo, hi in cell)
        root = float(np.sqrt(np.mean(self.alpha[sl])))
        min_w = min(Ws)
        m = 1
        while Ws[0] / m >= MIN_CELL and Ws[1] / m >= MIN_CELL or m == 1:
            t1 = _tri_wave(ks[0], Ws[0], m, self.h[0])
            t2 = _tri_wave(ks[1], Ws[1], m, self.h[1])
            b1 = root * np.minimum(t1[:, None], dist[1][None, :])
            b2 = root * np.minimum(dist[0][:, None], t2[None, :])
            for s1 in (1.0, -1.0):
                for s2 in (1.0, -1.0):
                    yield np.stack([s1 * b1, s2 * b2], axis=-1)
            m *= 2
            if min_w / m < 2:
                break

    def _slope(self, cell):
        n = self.grid.dim
        try:
            return eikonal_speed(self.spec, self.lam, n)
        except (ValueError, Infeasible):
            pass
        centre = tuple((lo + hi) // 2 for lo, hi in cell)
        x = self.x[centre][None]
        u = self.u[centre][None]

        def H_at(r):
            du = np.zeros((1, 1, n))
            du[0, 0, 0] = r
            return abs(float(H_values(self.spec, x, u, du)[0]))

        lo, hi = 0.0, 1.0
        while H_at(hi) < self.lam and hi < 1e12:
            lo, hi = hi, hi * 4.0
        if not H_at(hi) >= self.lam:
            return self.lam
        for _ in range(200):
            mid = 0.5 * (lo + hi)
            if not lo < mid < hi:
                break
            if H_at(mid) < self.lam:
                lo = mid
            else:
                hi = mid
        return hi

    # evaluation -------------------------------------------------------------

    def _windows(self, cell):
        region, slab = [], []
        for (lo, hi), M in zip(cell, self.grid.shape):
            r0, r1 = max(lo - 1, 0), min(hi + 1, M - 1)
            s0, s1 = max(r0 - 1, 0), min(r1 + 1, M - 1)
            region.append((r0, r1))
            slab.append((s0, s1))
        return region, slab

    def _evaluate(self, u_slab, slab, region):
        sl_slab = tuple(slice(a, b + 1) for a, b in slab)
        inner = tuple(slice(r0 - s0, r1 - s0 + 1) for (r0, r1), (s0, _) in zip(region, slab))
        du = _grad_local(u_slab, self.h)[inner]
        x = self.x[sl_slab][inner]
        u = u_slab[inner]
        absH = np.abs(H_values(self.spec, x, u, du))
        alpha = None
        if self.gram:
            alpha = self._alpha_at(x, u) if self.alpha_varies else \
                self.alpha[tuple(slice(a, b + 1) for a, b in region)]
        return absH, du, alpha

    def try_cell(self, cell):
        region, slab = self._windows(cell)
        sl_region = tuple(slice(a, b + 1) for a, b in region)
        old_dev = int(self.dev[sl_region].sum())
        if old_dev == 0:
            return False
        sl_slab = tuple(slice(a, b + 1) for a, b in slab)
        base = self.u[sl_slab]
        inner_cell = tuple(slice(lo - s0, hi - s0 + 1) for (lo, hi), (s0, _) in zip(cell, slab))
        best = None
        for bump in self._profiles(cell):
            cand = base.copy()
            cand[inner_cell] += bump
            absH, du, alpha = self._evaluate(cand, slab, region)
            inside = self.interior[sl_region]
            if not np.all(np.isfinite(absH)) or absH[inside].max(initial=0.0) > self.lam + self.tol:
                continue
            if np.isfinite(self.budget):
                if np.sqrt(np.sum(du * du, axis=(-2, -1)))[inside].max(initial=0.0) > self.budget:
                    continue
            dev = self._deviating(absH, du, alpha) & inside
            n_dev = int(dev.sum())
            if n_dev >= old_dev:
                continue
            if self.gram:
                tie = float(np.mean(_gram_residual(du, alpha)[inside]))
            else:
                tie = -float(absH[inside].min(initial=np.inf))
            key = (n_dev, tie)
            if best is None or key < best[0]:
                best = (key, cand, absH, dev, alpha)
        if best is None:
            return False
        _, cand, absH, dev, alpha = best
        self.u[sl_slab] = cand
        self.absH[sl_region] = absH
        self.count += int(dev.sum()) - old_dev
        self.dev[sl_region] = dev
        if self.gram and self.alpha_varies:
            self.alpha[sl_region] = alpha
        if not np.array_equal(self.u[self.bmask], self.phi_values[self.bmask]):
            raise AssertionError("refinement modified a boundary node")
        return True

    def run(self):
        req = self.req
        trace = [self.fraction]
        iters = 0
        if self.req.initial_cell is not None:
            width = int(self.req.initial_cell)
        elif self.gram:
            width = GRAM_INITIAL_CELL
        else:
            width = max(self.grid.shape) - 1
        width = max(width, MIN_CELL)
        passes = 0
        while self.fraction > req.target_deviation_fraction and iters < req.max_iters:
            progress = False
            for cell in self._cells(width):
                if self.try_cell(cell):
                    iters += 1
                    progress = True
                    trace.append(self.fraction)
                    if self.fraction <= req.target_deviation_fraction or iters >= req.max_iters:
                        break
            passes += 1
            if progress and passes < PASSES_PER_SCALE:
                continue
            if not progress and width <= MIN_CELL:
                return trace, "stalled"
            width = max(width // 2, MIN_CELL)
            passes = 0
        status = "converged" if self.fraction <= req.target_deviation_fraction else "max_iters"
        return trace, status


def refine_inclusion(request, lam=None, gram=None):
    """Greedy multiscale refinement from u0 = phi.

    Scalar problems push |H| towards lambda with pyramid bumps; ``gram=True``
    (n = N = 2, conformal) pushes Du^T Du towards alpha(x, u) I with laminate
    bumps. Every accepted bump strictly shrinks the deviation set, and the
    trace lists its node fraction after each accepted bump. Raises
    :class:`StalledProgress` (carrying the report) when no bump helps at the
    finest cell size.
    """
    from .verify import ExclusionPolicy, check_pde_residual

    p = request.problem
    if p.order != 1:
        raise ValueError("refinement supports first-order problems only")
    if gram is None:
        gram = p.N == 2
    if gram and not (p.spec.is_conformal and p.n == 2 and p.N == 2):
        raise ValueError("gram refinement needs a conformal supremand with n = N = 2")
    if not gram and p.N != 1:
        raise ValueError("scalar refinement needs N = 1")
    info = None
    if lam is None:
        lam, info = resolve_lambda(p, conformal=gram)
    jf0 = p.phi_jets()
    interior = ~p.grid.boundary_mask()
    h0 = H_field(p.spec, jf0)
    if interior.any() and not h0[interior].max() < lam:
        raise Infeasible(f"lambda = {lam} is not above max |H(D phi)| = {h0[interior].max()} inside the domain")
    ref = _Refiner(request, lam, gram)
    trace, status = ref.run()
    fld = Field(p.grid, ref.u)
    residual = check_pde_residual(fld, p.spec, lam, ExclusionPolicy()).to_dict()
    report = SolutionReport(fld, lam, request.method, status, info or {"rule": "explicit", "lambda": lam},
                            residual, trace, "gram_residual" if gram else "deviation")
    if status == "stalled":
        raise StalledProgress(
            f"no bump reduces the deviation set at the finest cell size (fraction {trace[-1]:.4g})", report)
    return report


# ---------------------------------------------------------------------------


def _h_check(fld, spec, lam):
    absH = H_field(spec, finite_difference_jet(fld, 1))
    dev = np.abs(absH - lam)[~fld.grid.boundary_mask()]
    return {"sup_abs_H_minus_lambda": float(dev.max()),
            "mean_abs_H_minus_lambda": float(dev.mean()),
            "median_abs_H_minus_lambda": float(np.median(dev)),
            "fraction_within_1e-9": float(np.mean(dev <= 1e-9 * (1.0 + lam)))}


def conformal_solution(problem, request=None):
    """Solve Du^T Du = alpha(x, u) I, then report |H - lambda| node statistics.

    n = 1: sawtooth with slope sqrt(alpha) (alpha must not depend on x or u);
    n = 2: gram refinement. Raises :class:`Infeasible` when lambda <= Lambda_*
    or the subsolution gate fails.
    """
    from .verify import ExclusionPolicy, check_pde_residual

    spec = problem.spec
    if not spec.is_conformal:
        raise ValueError(f"{spec.label} is not conformal")
    if problem.N != problem.n:
        raise ValueError("conformal solve needs N == n")
    lam, info = resolve_lambda(problem, conformal=True)
    ls = lambda_star_conformal(problem.phi, spec, problem.grid, problem.alpha0)
    if not lam > ls:
        raise Infeasible(f"lambda = {lam} is not above Lambda_* = {ls}")
    gate = validate_subsolution(problem.with_lambda(lam))
    if not gate.passed:
        raise Infeasible("boundary datum is not a strict subsolution: " + str(gate.to_dict()["witnesses"]))
    alpha_summary = {"min": float(np.min(gate.alpha)), "max": float(np.max(gate.alpha)),
                     "mean": float(np.mean(gate.alpha))}
    if problem.n == 1:
        if not spec.top_order_only:
            raise ValueError("1D conformal solve needs alpha independent of (x, u)")
        slope = float(np.sqrt(alpha_inverse(spec, [0.0], [0.0], lam)))
        (a, b), = problem.grid.bounds
        va, vb = problem.phi.values(np.array([[a], [b]]))[:, 0]
        m = 1 if request is None else request.m
        fld = sawtooth_1d(va, vb, slope, m, problem.grid)
        residual = check_pde_residual(fld, spec, lam, ExclusionPolicy()).to_dict()
        report = SolutionReport(fld, lam, "CONFORMAL", "exact", info, residual)
    else:
        if request is None:
            request = SolveRequest(problem, "CONFORMAL")
        try:
            report = refine_inclusion(request, lam=lam, gram=True)
        except StalledProgress as err:
            _annotate(err.report, info, alpha_summary, spec, lam)
            raise
        _annotate(report, info, alpha_summary, spec, lam)
        return report
    report.alpha_summary = alpha_summary
    report.h_check = _h_check(report.field, spec, lam)
    return report


def _annotate(report, info, alpha_summary, spec, lam):
    report.lambda_info = info
    report.method = "CONFORMAL"
    report.alpha_summary = alpha_summary
    report.h_check = _h_check(report.field, spec, lam)


def solve(request):
    """Dispatch a :class:`SolveRequest` and return a :class:`SolutionReport`."""
    from .verify import ExclusionPolicy, check_pde_residual

    p = request.problem
    method = request.method
    if method == "REFINE":
        return refine_inclusion(request)
    if method == "CONFORMAL":
        return conformal_solution(p, request)
    lam, info = resolve_lambda(p, conformal=False)
    if method == "SAWTOOTH":
        if p.n != 1 or p.N != 1:
            raise ValueError("SAWTOOTH needs a scalar 1D problem")
        (a, b), = p.grid.bounds
        va, vb = p.phi.values(np.array([[a], [b]]))[:, 0]
        fld = sawtooth_1d(va, vb, eikonal_speed(p.spec, lam, 1), request.m, p.grid)
    else:
        fld = mcshane_solution(p, method, lam)
    residual = check_pde_residual(fld, p.spec, lam, ExclusionPolicy()).to_dict()
    return SolutionReport(fld, lam, method, "exact", info, residual)
