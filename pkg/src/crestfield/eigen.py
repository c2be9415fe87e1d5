"""Critical eigenvalues, the identity-ray inverse alpha and the subsolution gate."""

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .energy import sup_value
from .errors import CrestfieldError, NoBracket, NotMonotone
from .grid import eigenvalues_sym2, finite_difference_jet, gram_entries
from .supremand import H_field, SampleCloud, h_ray

AUTO_FACTOR = 1.1
AUTO_FLOOR = 1.0

BRACKET_GROWTH = 4.0
T_MAX = 1e12
MAX_BISECTIONS = 200

# per-element status codes of alpha_inverse_array
OK, NO_BRACKET, NOT_MONOTONE, BELOW_INFIMUM = 0, 1, 2, 3


@dataclass(frozen=True, eq=False)
class EigenProblem:
    """|H(D^[k]u)| = lam in the grid interior, u = phi on the boundary.

    ``lam=None`` means "auto" (see :func:`resolve_lambda`).
    """

    spec: object
    phi: object
    grid: object
    order: int = 1
    lam: Optional[float] = None
    alpha0: float = 1.0

    def __post_init__(self):
        n, _ = self.phi.dims
        if n != self.grid.dim:
            raise ValueError(f"boundary datum is defined on R^{n}, grid is {self.grid.dim}-D")
        if self.order not in (1, 2):
            raise ValueError("order must be 1 or 2")
        if self.lam is not None and not (np.isfinite(self.lam) and self.lam >= 0.0):
            raise ValueError(f"lambda must be a finite nonnegative number, got {self.lam}")
        if not self.alpha0 > 0.0:
            raise ValueError("alpha0 must be positive")

    @property
    def n(self):
        return self.grid.dim

    @property
    def N(self):
        return self.phi.dims[1]

    def phi_field(self):
        return self.phi.sample(self.grid)

    def phi_jets(self):
        return finite_difference_jet(self.phi_field(), self.order)

    def with_lambda(self, lam):
        return EigenProblem(self.spec, self.phi, self.grid, self.order, float(lam), self.alpha0)


def default_sample_cloud(grid, phi_field, m=1000, seed=0):
    """Grid nodes paired with phi, plus ``m`` random (node, X) pairs from the phi-range box +/- 1."""
    rng = np.random.default_rng(seed)
    pts = grid.points()
    vals = phi_field.flat()
    lo = vals.min(axis=0) - 1.0
    hi = vals.max(axis=0) + 1.0
    pick = rng.integers(0, pts.shape[0], size=m)
    X = rng.uniform(lo, hi, size=(m, vals.shape[1]))
    return SampleCloud(np.vstack([pts, pts[pick]]), np.vstack([vals, X]))


def lambda_star_jet(phi, spec, grid, k=1):
    """Lambda_* = E_inf(phi): the nodal max of |H| over the jet field of phi."""
    jf = finite_difference_jet(phi.sample(grid), k)
    return sup_value(H_field(spec, jf))[0]


def _identity_norm_sq(jf):
    """Squared L^inf norm of the Frobenius norm of the gradient, over nodes."""
    fro2 = np.sum(jf.du * jf.du, axis=(-2, -1))
    return float(np.max(fro2))


def lambda_star_conformal(phi, spec, grid, alpha0, cloud=None):
    """max{ max_nodes h(x, phi, |Dphi|_inf^2 I), max_cloud h(x, X, alpha0 I) }."""
    if not spec.is_conformal:
        raise ValueError(f"{spec.label} is not conformal")
    if not alpha0 > 0.0:
        raise ValueError("alpha0 must be positive")
    arm1, arm2 = lambda_star_arms(phi, spec, grid, alpha0, cloud)
    return max(arm1, arm2)


def lambda_star_arms(phi, spec, grid, alpha0, cloud=None):
    phi_f = phi.sample(grid)
    jf = finite_difference_jet(phi_f, 1)
    norm2 = _identity_norm_sq(jf)
    x = grid.points()
    u = phi_f.flat()
    arm1 = float(np.max(h_ray(spec, x, u, np.full(x.shape[0], norm2))))
    if cloud is None:
        cloud = default_sample_cloud(grid, phi_f)
    arm2 = float(np.max(h_ray(spec, cloud.x, cloud.u, np.full(len(cloud), float(alpha0)))))
    return arm1, arm2


def _use_conformal(problem, conformal):
    if conformal is None:
        return problem.spec.is_conformal and problem.N == problem.n and problem.order == 1
    return bool(conformal)


def lambda_star(problem, conformal=None, cloud=None):
    """Lambda_* for a problem: the two-arm formula for conformal solves, E_inf(phi) otherwise."""
    if _use_conformal(problem, conformal):
        return lambda_star_conformal(problem.phi, problem.spec, problem.grid, problem.alpha0, cloud)
    return lambda_star_jet(problem.phi, problem.spec, problem.grid, problem.order)


def resolve_lambda(problem, conformal=None):
    """(lambda, provenance). Auto rule: max(1.1 * Lambda_*, 1.0)."""
    if problem.lam is not None:
        return float(problem.lam), {"rule": "explicit", "lambda": float(problem.lam)}
    conformal = _use_conformal(problem, conformal)
    ls = lambda_star(problem, conformal)
    lam = max(AUTO_FACTOR * ls, AUTO_FLOOR)
    return lam, {
        "rule": "auto",
        "lambda_star": ls,
        "formula": "two-arm conformal" if conformal else "sup |H(D phi)|",
        "factor": AUTO_FACTOR,
        "floor": AUTO_FLOOR,
        "floor_applied": lam == AUTO_FLOOR and AUTO_FACTOR * ls < AUTO_FLOOR,
        "lambda": lam,
    }


# ---------------------------------------------------------------------------
# alpha = h(x, X, (.) I)^{-1}(lambda)


def alpha_inverse_array(spec, x, u, lam, max_iter=MAX_BISECTIONS):
    """Vectorised identity-ray inverse. Returns ``(alpha, status)``.

    Brackets from [0, 1] (or [-1, 1] when the ray is defined for negative t),
    growing by a factor 4 up to |t| = 1e12, then bisects until the bracket has
    no representable midpoint or ``max_iter`` steps. ``status`` holds
    :data:`OK`, :data:`NO_BRACKET`, :data:`NOT_MONOTONE` or :data:`BELOW_INFIMUM`.
    """
    if not spec.is_conformal:
        raise ValueError(f"{spec.label} is not conformal")
    x = np.atleast_2d(np.asarray(x, dtype=float))
    u = np.atleast_2d(np.asarray(u, dtype=float))
    m = x.shape[0]
    lam = np.broadcast_to(np.asarray(lam, dtype=float), (m,)).copy()

    def f(t, sel):
        with np.errstate(all="ignore"):
            return h_ray(spec, x[sel], u[sel], t)

    allsel = np.ones(m, dtype=bool)
    status = np.zeros(m, dtype=np.int8)
    full = np.isfinite(f(np.full(m, -1.0), allsel))
    lo = np.where(full, -1.0, 0.0)
    hi = np.ones(m)
    flo = f(lo, allsel)
    fhi = f(hi, allsel)
    status[~(fhi > flo)] = NOT_MONOTONE

    # grow upward
    while True:
        sel = (status == OK) & (fhi < lam)
        if not sel.any():
            break
        new = hi[sel] * BRACKET_GROWTH
        fnew = f(new, sel)
        idx = np.flatnonzero(sel)
        # a rounded-flat ray has stalled below lam, which is a bracket failure
        status[idx[~(fnew >= fhi[sel])]] = NOT_MONOTONE
        status[idx[new > T_MAX]] = NO_BRACKET
        lo[sel], flo[sel] = hi[sel], fhi[sel]
        hi[sel], fhi[sel] = new, fnew

    # grow downward (rays on all of R) or give up at t = 0
    while True:
        sel = (status == OK) & (flo > lam)
        if not sel.any():
            break
        idx = np.flatnonzero(sel)
        half = ~full[sel]
        status[idx[half]] = BELOW_INFIMUM
        sel = (status == OK) & (flo > lam)
        if not sel.any():
            break
        new = lo[sel] * BRACKET_GROWTH
        fnew = f(new, sel)
        idx = np.flatnonzero(sel)
        status[idx[~(fnew < flo[sel])]] = NOT_MONOTONE
        status[idx[new < -T_MAX]] = NO_BRACKET
        hi[sel], fhi[sel] = lo[sel], flo[sel]
        lo[sel], flo[sel] = new, fnew

    active = status == OK
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        sel = active & (mid > lo) & (mid < hi)
        if not sel.any():
            break
        fm = f(mid[sel], sel)
        idx = np.flatnonzero(sel)
        broken = ~((fm >= flo[sel]) & (fm <= fhi[sel]))
        if broken.any():
            status[idx[broken]] = NOT_MONOTONE
            active[idx[broken]] = False
        up = (fm < lam[sel]) & ~broken
        down = (fm >= lam[sel]) & ~broken
        lo[idx[up]], flo[idx[up]] = mid[sel][up], fm[up]
        hi[idx[down]], fhi[idx[down]] = mid[sel][down], fm[down]

    pick_hi = np.abs(fhi - lam) <= np.abs(flo - lam)
    alpha = np.where(pick_hi, hi, lo)
    alpha[status != OK] = np.nan
    return alpha, status


def alpha_inverse(spec, x, X, lam):
    """alpha(x, X) = h(x, X, (.) I)^{-1}(lam) at one point.

    Raises :class:`NoBracket` when coercivity fails numerically (no upper
    bracket below t = 1e12, or lam below the half-line ray's value at t = 0)
    and :class:`NotMonotone` when the sampled ray decreases.
    """
    x = np.atleast_1d(np.asarray(x, dtype=float))
    X = np.atleast_1d(np.asarray(X, dtype=float))
    alpha, status = alpha_inverse_array(spec, x[None], X[None], float(lam))
    code = int(status[0])
    if code == NOT_MONOTONE:
        raise NotMonotone(f"identity ray of {spec.label} is not increasing at x={x.tolist()}")
    if code == NO_BRACKET:
        raise NoBracket(f"h(x, X, tI) stays below {lam} for t <= {T_MAX:g}: coercivity fails")
    if code == BELOW_INFIMUM:
        raise NoBracket(f"{lam} is below the ray value h(x, X, 0)")
    a = float(alpha[0])
    resid = abs(float(h_ray(spec, x[None], X[None], np.array([a]))[0]) - lam)
    if resid > 1e-10 * (1.0 + abs(lam)):
        raise CrestfieldError(f"identity-ray inverse did not converge (residual {resid:g}); h may be discontinuous")
    return a


# ---------------------------------------------------------------------------


@dataclass
class SubsolutionReport:
    lam: float
    lambda_star: float
    alpha: np.ndarray
    lambda_n: np.ndarray
    margin: np.ndarray
    pass_211: bool
    pass_212: bool
    pass_213: bool
    alpha_cloud_min: float
    alpha_cloud_max: float
    alpha0: float
    witnesses: dict = field(default_factory=dict)

    @property
    def passed(self):
        return self.pass_211 and self.pass_212 and self.pass_213

    @property
    def subcritical(self):
        return not self.lam > self.lambda_star

    @property
    def worst_margin(self):
        return float(np.nanmin(self.margin))

    def to_dict(self):
        return {
            "lambda": self.lam,
            "lambda_star": self.lambda_star,
            "subcritical": self.subcritical,
            "strict_subsolution": {"pass": self.pass_211, "worst_margin": self.worst_margin},
            "alpha_lower_bound": {"pass": self.pass_212, "inf_alpha": self.alpha_cloud_min,
                                  "alpha0": self.alpha0, "sampled": True},
            "alpha_upper_bound": {"pass": self.pass_213, "sup_alpha": self.alpha_cloud_max,
                                  "sampled": True},
            "alpha_nodes": {"min": float(np.nanmin(self.alpha)), "max": float(np.nanmax(self.alpha))},
            "witnesses": self.witnesses,
            "pass": self.passed,
        }


def validate_subsolution(problem, cloud=None, exclude=None):
    """Check alpha(x, phi) > lambda_n(Dphi^T Dphi) per node, and the sampled alpha bounds.

    ``exclude`` is an optional node mask skipped by the per-node check.
    """
    spec = problem.spec
    if not spec.is_conformal:
        raise ValueError(f"{spec.label} is not conformal")
    if problem.N != problem.n:
        raise ValueError("subsolution gate needs N == n")
    lam, _ = resolve_lambda(problem, conformal=True)
    grid = problem.grid
    phi_f = problem.phi_field()
    jf = finite_difference_jet(phi_f, 1)
    if cloud is None:
        cloud = default_sample_cloud(grid, phi_f)
    x = grid.points()
    u = phi_f.flat()
    alpha, status = alpha_inverse_array(spec, x, u, lam)
    S = gram_entries(jf.du.reshape((-1,) + jf.du.shape[-2:]))
    lam_n = S[0] if len(S) == 1 else eigenvalues_sym2(*S)[1]
    margin = alpha - lam_n
    check = np.ones(x.shape[0], dtype=bool) if exclude is None else ~np.ravel(exclude)
    bad = check & ~(margin > 0.0)
    witnesses = {}
    if check.any():
        worst = int(np.flatnonzero(check)[np.nanargmin(np.where(np.isnan(margin[check]), -np.inf, margin[check]))])
        witnesses["strict_subsolution"] = {
            "node": worst, "x": x[worst].tolist(), "alpha": float(alpha[worst]),
            "lambda_n": float(lam_n[worst]), "margin": float(margin[worst]),
            "status": int(status[worst])}
    pass_211 = not bad.any()

    a_c, st_c = alpha_inverse_array(spec, cloud.x, cloud.u, lam)
    ok_c = st_c == OK
    a_min = float(np.min(a_c[ok_c])) if ok_c.any() else float("nan")
    a_max = float(np.max(a_c[ok_c])) if ok_c.all() else float("inf")
    pass_212 = bool(ok_c.any() and a_min > problem.alpha0 and not np.any(st_c == BELOW_INFIMUM))
    pass_213 = bool(ok_c.all() and np.isfinite(a_max))
    if ok_c.any():
        i = int(np.flatnonzero(ok_c)[np.argmin(a_c[ok_c])])
        witnesses["alpha_lower_bound"] = {"x": cloud.x[i].tolist(), "X": cloud.u[i].tolist(),
                                          "alpha": float(a_c[i])}
    if not ok_c.all():
        i = int(np.flatnonzero(~ok_c)[0])
        witnesses["alpha_upper_bound"] = {"x": cloud.x[i].tolist(), "X": cloud.u[i].tolist(),
                                          "status": int(st_c[i])}
    ls = lambda_star_conformal(problem.phi, spec, grid, problem.alpha0, cloud)
    return SubsolutionReport(lam, ls, alpha.reshape(grid.shape), np.asarray(lam_n).reshape(grid.shape),
                             margin.reshape(grid.shape), pass_211, pass_212, pass_213, a_min, a_max,
                             float(problem.alpha0), witnesses)
