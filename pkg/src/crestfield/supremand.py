"""Supremands H(x, X, top) and their conformal forms h(x, X, S), S = Du^T Du.

Specs come from a small catalog or from parsed expressions (see
:mod:`crestfield.expr` for the variable names). Evaluation is vectorised over
node arrays; the scalar :func:`eval_H` / :func:`eval_h` entry points run the
same code on a single node.
"""

import os
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import expr as ex
from .errors import NonFiniteSupremand
from .grid import Jet, SymMat, gram_entries

_DEBUG = os.environ.get("CRESTFIELD_DEBUG", "") not in ("", "0")

CATALOG_IDS = ("EIKONAL", "EIKONAL2_SHIFT", "TRACE_PLUS", "AFFINE_DIR")

_LOWER_VARS = {"x1", "x2", "u1", "u2"}
_GRAD_VARS = {f"g{a}{i}" for a in (1, 2) for i in (1, 2)}
_HESS_VARS = {f"h{a}{i}{j}" for a in (1, 2) for i in (1, 2) for j in (1, 2)}
_GRAM_VARS = {"s11", "s12", "s22", "t"}


@dataclass(frozen=True, eq=False)
class SupremandSpec:
    kind: str
    catalog_id: Optional[str] = None
    coefficients: tuple = ()
    H_ast: object = None
    h_ast: object = None
    g_ast: object = None
    direction: Optional[np.ndarray] = None
    is_conformal: bool = False
    top_order_only: bool = False
    claimed_convex_top: bool = False
    order: int = 1
    dims: Optional[tuple] = None
    source: dict = field(default_factory=dict)

    @property
    def label(self):
        if self.kind == "catalog":
            args = ", ".join(repr(c) for c in self.coefficients)
            return f"{self.catalog_id}({args})" if args else self.catalog_id
        return f"expr({self.source.get('H') or self.source.get('h')})"

    @property
    def h_depends_on_u(self):
        """Whether h(x, X, S) reads the zeroth-order slot X = u."""
        if not self.is_conformal:
            return True
        if self.kind == "catalog":
            return self.g_ast is not None and bool(ex.variables(self.g_ast) & {"u1", "u2"})
        return bool(ex.variables(self.h_ast) & {"u1", "u2"})


# ---------------------------------------------------------------------------
# catalog


def eikonal():
    """H = |Du| (Frobenius), h(S) = sqrt(trace S)."""
    return SupremandSpec("catalog", "EIKONAL", is_conformal=True, top_order_only=True,
                         claimed_convex_top=True, source={"catalog": "EIKONAL"})


def eikonal2_shift(a):
    """H = |Du|^2 - a, h(S) = trace S - a."""
    a = float(a)
    return SupremandSpec("catalog", "EIKONAL2_SHIFT", coefficients=(a,), is_conformal=True,
                         top_order_only=True, claimed_convex_top=a <= 0.0,
                         source={"catalog": "EIKONAL2_SHIFT", "coefficients": [a]})


def trace_plus(g="0"):
    """h(x, X, S) = trace S + g(x, X) with ``g`` an expression in x1, x2, u1, u2."""
    g_text = str(g)
    g_ast = ex.parse_expr(g_text)
    extra = ex.variables(g_ast) - _LOWER_VARS
    if extra:
        raise ValueError(f"TRACE_PLUS lower-order term may only use x/u variables, got {sorted(extra)}")
    return SupremandSpec("catalog", "TRACE_PLUS", coefficients=(g_text,), g_ast=g_ast,
                         is_conformal=True, top_order_only=not ex.variables(g_ast),
                         claimed_convex_top=False,
                         source={"catalog": "TRACE_PLUS", "coefficients": [g_text]})


def affine_dir(c):
    """H = c : Du for a fixed ``(N, n)`` coefficient matrix ``c``."""
    c = np.atleast_2d(np.asarray(c, dtype=float))
    c.setflags(write=False)
    return SupremandSpec("catalog", "AFFINE_DIR", coefficients=tuple(c.ravel()), direction=c,
                         is_conformal=False, top_order_only=True, claimed_convex_top=True,
                         source={"catalog": "AFFINE_DIR", "coefficients": c.tolist()})


def from_catalog(name, coefficients=None):
    name = name.upper()
    coefficients = [] if coefficients is None else coefficients
    if name == "EIKONAL":
        return eikonal()
    if name == "EIKONAL2_SHIFT":
        return eikonal2_shift(coefficients[0] if coefficients else 0.0)
    if name == "TRACE_PLUS":
        return trace_plus(coefficients[0] if coefficients else "0")
    if name == "AFFINE_DIR":
        return affine_dir(coefficients)
    raise ValueError(f"unknown catalog supremand {name!r}; known: {', '.join(CATALOG_IDS)}")


def from_expression(H=None, h=None, *, n, N, claimed_convex_top=False, check_seed=12345):
    """Spec from expression text. ``h`` (in x, u, s11, s12, s22, t) makes it conformal.

    When both are given they must agree, H = h(Du^T Du), on random jets.
    """
    if H is None and h is None:
        raise ValueError("need an expression for H or for h")
    H_ast = ex.parse_expr(H) if H is not None else None
    h_ast = ex.parse_expr(h) if h is not None else None
    if h_ast is not None:
        bad = ex.variables(h_ast) - _LOWER_VARS - _GRAM_VARS
        if bad:
            raise ValueError(f"h may only use x, u, s and t variables, got {sorted(bad)}")
    if H_ast is not None and ex.variables(H_ast) & _GRAM_VARS:
        raise ValueError("H must be written in g (gradient) variables; use h for Gram entries")
    used = ex.variables(H_ast) if H_ast is not None else ex.variables(h_ast)
    order = 2 if used & _HESS_VARS else 1
    if h_ast is not None:
        top_only = not (ex.variables(h_ast) & _LOWER_VARS)
    else:
        top_only = not (used & (_LOWER_VARS | (_GRAD_VARS if order == 2 else set())))
    spec = SupremandSpec(
        "expression", H_ast=H_ast, h_ast=h_ast, is_conformal=h_ast is not None,
        top_order_only=top_only, claimed_convex_top=bool(claimed_convex_top), order=order,
        dims=(int(n), int(N)), source={"H": H, "h": h},
    )
    if H_ast is not None and h_ast is not None:
        rng = np.random.default_rng(check_seed)
        x = rng.uniform(-1.0, 1.0, size=(64, n))
        u = rng.normal(size=(64, N))
        du = rng.normal(size=(64, N, n))
        direct = _H_direct(spec, x, u, du, None)
        via_h = h_values(spec, x, u, gram_entries(du))
        if not np.allclose(direct, via_h, rtol=1e-10, atol=1e-10, equal_nan=True):
            i = int(np.argmax(np.abs(direct - via_h)))
            raise ValueError(f"H and h(Du^T Du) disagree on a random jet: {direct[i]} vs {via_h[i]}")
    return spec


def catalog_expression(spec, n, N):
    """The catalog entry written in the expression language, as ``(H_text, h_text)``."""
    grads = [f"g{a}{i}" for a in range(1, N + 1) for i in range(1, n + 1)]
    sq = " + ".join(f"{g}^2" for g in grads)
    tr = "s11 + s22" if n == 2 else "s11"
    cid = spec.catalog_id
    if cid == "EIKONAL":
        return f"sqrt({sq})", f"sqrt({tr})"
    if cid == "EIKONAL2_SHIFT":
        a = repr(spec.coefficients[0])
        return f"{sq} - {a}", f"{tr} - {a}"
    if cid == "TRACE_PLUS":
        g = spec.coefficients[0]
        return f"{sq} + ({g})", f"{tr} + ({g})"
    if cid == "AFFINE_DIR":
        c = spec.direction
        terms = [f"({float(c[a, i])!r})*g{a + 1}{i + 1}" for a in range(N) for i in range(n)]
        return " + ".join(terms), None
    raise ValueError(f"{spec.label} is not a catalog spec")


# ---------------------------------------------------------------------------
# vectorised evaluation


def _lower_env(x, u):
    env = {}
    for i in range(x.shape[-1]):
        env[f"x{i + 1}"] = x[..., i]
    for a in range(u.shape[-1]):
        env[f"u{a + 1}"] = u[..., a]
    return env


def _gram_env(S, n):
    env = {"s11": S[0]}
    if n == 2:
        env["s12"], env["s22"] = S[1], S[2]
        env["t"] = 0.5 * (S[0] + S[2])
    else:
        env["t"] = S[0]
    return env


def _trace(S):
    return S[0] if len(S) == 1 else S[0] + S[2]


def _H_direct(spec, x, u, du, d2u):
    if spec.kind == "catalog":
        cid = spec.catalog_id
        if cid == "AFFINE_DIR":
            c = spec.direction
            if c.shape != du.shape[-2:]:
                raise ValueError(f"AFFINE_DIR coefficient shape {c.shape} != gradient shape {du.shape[-2:]}")
            return np.sum(du * c, axis=(-2, -1))
        sq = np.sum(du * du, axis=(-2, -1))
        if cid == "EIKONAL":
            return np.sqrt(sq)
        if cid == "EIKONAL2_SHIFT":
            return sq - spec.coefficients[0]
        g = ex.evaluate(spec.g_ast, _lower_env(x, u))
        return sq + g
    if spec.H_ast is None:
        return h_values(spec, x, u, gram_entries(du))
    env = _lower_env(x, u)
    n = du.shape[-1]
    for a in range(du.shape[-2]):
        for i in range(n):
            env[f"g{a + 1}{i + 1}"] = du[..., a, i]
    if d2u is not None:
        for a in range(d2u.shape[-3]):
            for i in range(n):
                for j in range(n):
                    env[f"h{a + 1}{i + 1}{j + 1}"] = d2u[..., a, i, j]
    try:
        return ex.evaluate(spec.H_ast, env)
    except KeyError as err:
        raise ValueError(f"{spec.label}: {err.args[0]} for n={n}, N={du.shape[-2]}") from None


def H_values(spec, x, u, du, d2u=None):
    """H over arrays: ``x (..., n)``, ``u (..., N)``, ``du (..., N, n)``, ``d2u (..., N, n, n)``."""
    order = 1 if d2u is None else 2
    if spec.order != order and not (spec.kind == "catalog" and order == 2):
        raise ValueError(f"{spec.label} needs an order-{spec.order} jet, got order {order}")
    x, u, du = (np.asarray(a, dtype=float) for a in (x, u, du))
    out = np.asarray(_H_direct(spec, x, u, du, d2u), dtype=float)
    out = np.array(np.broadcast_to(out, du.shape[:-2]), dtype=float)
    if _DEBUG and spec.is_conformal:
        via_h = h_values(spec, x, u, gram_entries(du))
        assert np.allclose(out, via_h, rtol=1e-10, atol=1e-10, equal_nan=True), "H != h o gram"
    return out


def h_values(spec, x, u, S):
    """h over arrays; ``S`` is the tuple of upper-triangle entries of the Gram matrix."""
    if not spec.is_conformal:
        raise ValueError(f"{spec.label} has no conformal form h")
    x = np.asarray(x, dtype=float)
    u = np.asarray(u, dtype=float)
    S = tuple(np.asarray(s, dtype=float) for s in S)
    n = 1 if len(S) == 1 else 2
    if spec.kind == "catalog":
        tr = _trace(S)
        cid = spec.catalog_id
        if cid == "EIKONAL":
            with np.errstate(invalid="ignore"):
                out = np.sqrt(tr)
        elif cid == "EIKONAL2_SHIFT":
            out = tr - spec.coefficients[0]
        else:
            out = tr + ex.evaluate(spec.g_ast, _lower_env(x, u))
    else:
        env = _lower_env(x, u)
        env.update(_gram_env(S, n))
        out = ex.evaluate(spec.h_ast, env)
    shape = np.broadcast_shapes(S[0].shape, x.shape[:-1], u.shape[:-1])
    return np.array(np.broadcast_to(np.asarray(out, dtype=float), shape), dtype=float)


def h_ray(spec, x, u, t):
    """t -> h(x, X, t I_n), vectorised over ``x``, ``u`` and ``t``."""
    x = np.asarray(x, dtype=float)
    t = np.asarray(t, dtype=float)
    n = x.shape[-1]
    S = (t,) if n == 1 else (t, np.zeros_like(t), t)
    return h_values(spec, x, u, S)


def H_field(spec, jf, absolute=True):
    """|H| (or H) at every node of a :class:`JetField`, shape ``grid.shape``.

    Raises :class:`NonFiniteSupremand` naming the first bad node.
    """
    out = H_values(spec, jf.x, jf.u, jf.du, jf.d2u)
    bad = ~np.isfinite(out)
    if bad.any():
        idx = int(np.flatnonzero(bad.ravel())[0])
        pos = jf.x.reshape(-1, jf.grid.dim)[idx]
        raise NonFiniteSupremand(f"non-finite H ({out.ravel()[idx]}) at x={pos.tolist()}", node=idx)
    return np.abs(out) if absolute else out


def eval_H(spec, jet):
    """H at one jet."""
    if not isinstance(jet, Jet):
        raise TypeError("eval_H expects a Jet")
    if jet.order != spec.order and spec.kind != "catalog":
        raise ValueError(f"{spec.label} needs an order-{spec.order} jet, got order {jet.order}")
    d2u = None if jet.d2u is None else jet.d2u[None]
    if spec.kind == "catalog":
        d2u = None
    val = float(H_values(spec, jet.x[None], jet.u[None], jet.du[None], d2u)[0])
    if not np.isfinite(val):
        raise NonFiniteSupremand(f"non-finite H ({val}) at x={jet.x.tolist()}")
    return val


def eval_h(spec, x, X, S):
    """h(x, X, S) at one point; ``S`` is a :class:`SymMat`."""
    if not spec.is_conformal:
        raise ValueError(f"{spec.label} is not conformal")
    if not isinstance(S, SymMat):
        S = SymMat.from_matrix(S)
    x = np.atleast_1d(np.asarray(x, dtype=float))
    X = np.atleast_1d(np.asarray(X, dtype=float))
    entries = tuple(np.array([v]) for v in S.upper)
    val = float(h_values(spec, x[None], X[None], entries)[0])
    if not np.isfinite(val):
        raise NonFiniteSupremand(f"non-finite h ({val}) at x={x.tolist()}")
    return val


# ---------------------------------------------------------------------------
# sampled structural hypotheses


@dataclass(frozen=True)
class SampleCloud:
    """Finite sample of lower-order arguments (x, X): ``x (m, n)``, ``u (m, N)``."""

    x: np.ndarray
    u: np.ndarray

    def __post_init__(self):
        x = np.atleast_2d(np.asarray(self.x, dtype=float))
        u = np.atleast_2d(np.asarray(self.u, dtype=float))
        if x.shape[0] != u.shape[0]:
            raise ValueError("cloud x and u must have the same number of samples")
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "u", u)

    def __len__(self):
        return self.x.shape[0]


@dataclass
class HypothesisCheck:
    name: str
    status: str  # "pass" | "fail" | "n/a"
    detail: str = ""
    witness: Optional[dict] = None
    sampled: bool = True

    @property
    def passed(self):
        return self.status == "pass"


@dataclass
class HypothesisReport:
    checks: dict
    ray_domain: str = "all"
    advisory: dict = field(default_factory=dict)

    def __getitem__(self, key):
        return self.checks[key]

    def to_dict(self):
        return {
            "ray_domain": self.ray_domain,
            "checks": {k: {"status": c.status, "detail": c.detail, "witness": c.witness,
                           "sampled": c.sampled} for k, c in self.checks.items()},
            "advisory": self.advisory,
        }


def default_t_grid():
    pos = np.geomspace(1e-3, 1e8, 72)
    return np.concatenate([-pos[::-1][-24:], [0.0], pos])


def validate_hypotheses(spec, cloud, t_grid=None, *, alpha0=1.0, levels=(1e3,), lam=1.0,
                        n_rays=64, ray_radius=1e6, seed=0):
    """Sample the structural hypotheses on ``h`` / ``H`` over a finite cloud.

    Checks: ``monotone`` (t -> h(x, X, tI) strictly increasing on the t grid),
    ``alpha0_bound`` (max of h(., ., alpha0 I) finite), ``coercive`` (min over
    the cloud of h(., ., tI) exceeds every level for some t), ``sublevel_bounded``
    ({|H(x, X, .)| <= lam} left along every probed ray). Rank-one convexity of
    |H| is probed as advisory only. Failures are report content, never raised.
    """
    t_grid = np.sort(np.asarray(default_t_grid() if t_grid is None else t_grid, dtype=float))
    rng = np.random.default_rng(seed)
    n = cloud.x.shape[1]
    N = cloud.u.shape[1]
    checks = {}
    ray_domain = "all"

    if spec.is_conformal:
        vals = h_ray(spec, cloud.x[:, None, :], cloud.u[:, None, :], t_grid[None, :])
        finite_cols = np.all(np.isfinite(vals), axis=0)
        if not finite_cols.all():
            # rays only defined on a half-line, e.g. sqrt(trace S)
            ray_domain = "nonnegative"
            keep = t_grid >= 0.0
            t_use, vals = t_grid[keep], vals[:, keep]
        else:
            t_use = t_grid
        steps = np.diff(vals, axis=1)
        if np.all(np.isfinite(vals)) and np.all(steps > 0.0):
            detail = "strictly increasing along the identity ray"
            if ray_domain == "nonnegative":
                detail += " on [0, inf) only; half-line regime with h >= 0 applies"
                if np.any(vals < 0.0):
                    checks["monotone"] = HypothesisCheck(
                        "monotone", "fail", "half-line regime requires h >= 0",
                        {"min_h": float(np.min(vals))})
            checks.setdefault("monotone", HypothesisCheck("monotone", "pass", detail))
        else:
            bad = np.argwhere(~(steps > 0.0))[0] if vals.shape[1] > 1 else (0, 0)
            i, j = int(bad[0]), int(bad[1])
            checks["monotone"] = HypothesisCheck(
                "monotone", "fail", "identity ray not strictly increasing",
                {"x": cloud.x[i].tolist(), "X": cloud.u[i].tolist(),
                 "t": [float(t_use[j]), float(t_use[j + 1])],
                 "h": [float(vals[i, j]), float(vals[i, j + 1])]})

        a0 = h_ray(spec, cloud.x, cloud.u, np.full(len(cloud), float(alpha0)))
        top = float(np.max(a0)) if np.all(np.isfinite(a0)) else float("inf")
        checks["alpha0_bound"] = HypothesisCheck(
            "alpha0_bound", "pass" if np.isfinite(top) else "fail",
            f"max over cloud of h(x, X, {alpha0} I) = {top}", {"alpha0": float(alpha0), "max": top})

        mins = np.min(vals, axis=0)
        reached = {}
        ok = True
        for level in levels:
            hit = np.flatnonzero(mins > level)
            if hit.size:
                reached[str(level)] = float(t_use[hit[0]])
            else:
                ok = False
        checks["coercive"] = HypothesisCheck(
            "coercive", "pass" if ok else "fail",
            f"min over cloud of h(tI) at t={t_use[-1]:g} is {mins[-1]:g}",
            {"t_reaching_level": reached, "levels": [float(v) for v in levels]})
    else:
        for name in ("monotone", "alpha0_bound", "coercive"):
            checks[name] = HypothesisCheck(name, "n/a", "spec has no conformal form")

    if spec.order == 1:
        dirs = _probe_directions(spec, N, n, n_rays, rng)
        radii = np.geomspace(1e-3, ray_radius, 80)
        sub = min(len(cloud), 16)
        witness = None
        for i in range(sub):
            du = radii[:, None, None, None] * dirs[None, :, :, :]
            x = np.broadcast_to(cloud.x[i], du.shape[:2] + (n,))
            u = np.broadcast_to(cloud.u[i], du.shape[:2] + (N,))
            with np.errstate(all="ignore"):
                vals = np.abs(H_values(spec, x, u, du))
            escaped = np.any(vals > lam, axis=0)
            if not escaped.all():
                j = int(np.flatnonzero(~escaped)[0])
                witness = {"x": cloud.x[i].tolist(), "X": cloud.u[i].tolist(),
                           "direction": dirs[j].tolist(), "radius": float(ray_radius)}
                break
        checks["sublevel_bounded"] = HypothesisCheck(
            "sublevel_bounded", "fail" if witness else "pass",
            f"{{|H| <= {lam}}} probed along {dirs.shape[0]} rays", witness)
    else:
        checks["sublevel_bounded"] = HypothesisCheck("sublevel_bounded", "n/a", "order-2 spec")

    advisory = {"rank_one_convexity": _rank_one_probe(spec, cloud, rng)} if spec.order == 1 else {}
    return HypothesisReport(checks, ray_domain, advisory)


def _probe_directions(spec, N, n, n_rays, rng):
    dim = N * n
    basis = np.eye(dim)
    dirs = [basis[i] for i in range(dim)] + [-basis[i] for i in range(dim)]
    for i in range(dim):
        for j in range(i + 1, dim):
            for s in (1.0, -1.0):
                v = basis[i] + s * basis[j]
                dirs.append(v / np.linalg.norm(v))
    if spec.kind == "catalog" and spec.catalog_id == "AFFINE_DIR":
        c = spec.direction.ravel()
        if dim > 1 and np.any(c):
            # null space of v -> c . v
            _, _, vt = np.linalg.svd(c[None, :])
            dirs.extend(vt[1:])
    rand = rng.normal(size=(n_rays, dim))
    rand /= np.linalg.norm(rand, axis=1, keepdims=True)
    dirs.extend(rand)
    return np.array(dirs).reshape(-1, N, n)


def _rank_one_probe(spec, cloud, rng, n_lines=256):
    """Midpoint convexity of |H| along random rank-one lines (necessary, never sufficient)."""
    N, n = cloud.u.shape[1], cloud.x.shape[1]
    idx = rng.integers(0, len(cloud), size=n_lines)
    A = rng.normal(size=(n_lines, N, n))
    a = rng.normal(size=(n_lines, N))
    b = rng.normal(size=(n_lines, n))
    D = a[:, :, None] * b[:, None, :]
    x, u = cloud.x[idx], cloud.u[idx]
    with np.errstate(all="ignore"):
        mid = np.abs(H_values(spec, x, u, A))
        lo = np.abs(H_values(spec, x, u, A - D))
        hi = np.abs(H_values(spec, x, u, A + D))
    gap = mid - 0.5 * (lo + hi)
    scale = 1.0 + np.abs(mid)
    worst = int(np.argmax(gap / scale))
    ok = bool(np.all(gap <= 1e-9 * scale))
    return {
        "status": "pass" if ok else "fail",
        "note": "sampled necessary condition only; quasiconvexity is not certified",
        "lines": int(n_lines),
        "worst_gap": float(gap[worst]),
    }
