"""Residual checks, fold exclusion and the crest-factor / constancy classification."""

from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .boundary import Affine
from .energy import is_degenerate, power_mean
from .errors import DegenerateEnergy
from .grid import finite_difference_jet
from .supremand import H_field, H_values

TOL_CONST = 1e-3
CREST_FOLD_FACTOR = 20.0
CREST_FLOOR = 1e-10
ROUNDOFF_FACTOR = 64.0
SPIKE_WINDOW = 5

ASSUMPTIONS = (
    "the Dirichlet eigenvalue problem is assumed solvable for every lambda >= Lambda_* > 0; "
    "the classifier cannot certify this",
)


@dataclass(frozen=True)
class ExclusionPolicy:
    """Fold exclusion.

    A node is a fold node when a pure second difference jumps away from the
    running median of its axis neighbours by more than
    ``fold_detection_threshold * lambda / h``. ``band_width`` is the width in
    nodes of the excluded band centred on each detection.
    """

    fold_detection_threshold: float = TOL_CONST
    band_width: int = 1

    def __post_init__(self):
        if not self.fold_detection_threshold > 0.0:
            raise ValueError("foldDetectionThreshold must be positive")
        if int(self.band_width) < 1:
            raise ValueError("bandWidth must be >= 1")


def _running_median(a, axis, width=SPIKE_WINDOW):
    """Centred running median; the first and last nodes reuse the nearest full window."""
    a = np.moveaxis(a, axis, -1)
    r = width // 2
    med = np.median(np.lib.stride_tricks.sliding_window_view(a, width, axis=-1), axis=-1)
    out = np.concatenate([np.repeat(med[..., :1], r, axis=-1), med,
                          np.repeat(med[..., -1:], r, axis=-1)], axis=-1)
    return np.moveaxis(out, -1, axis)


def fold_mask(fld, lam, policy=None):
    """Boolean node mask of detected folds, dilated to ``policy.band_width``."""
    policy = policy or ExclusionPolicy()
    grid = fld.grid
    vals = fld.values
    scale = float(np.max(np.abs(vals))) if vals.size else 0.0
    mask = np.zeros(grid.shape, dtype=bool)
    for d, h in enumerate(grid.spacing):
        d2 = kernels.diff2(vals, h, axis=d)
        spike = np.abs(d2 - _running_median(d2, d)).max(axis=-1)
        noise = ROUNDOFF_FACTOR * np.finfo(float).eps * scale / (h * h)
        mask |= spike > max(policy.fold_detection_threshold * abs(lam) / h, noise)
    r = (int(policy.band_width) - 1) // 2
    if r > 0 and mask.any():
        grown = mask.copy()
        for d in range(grid.dim):
            for s in range(1, r + 1):
                grown |= _shift(mask, s, d) | _shift(mask, -s, d)
            mask = grown.copy()
    return mask


def _shift(mask, s, axis):
    out = np.zeros_like(mask)
    src = [slice(None)] * mask.ndim
    dst = [slice(None)] * mask.ndim
    if s > 0:
        src[axis], dst[axis] = slice(None, -s), slice(s, None)
    else:
        src[axis], dst[axis] = slice(-s, None), slice(None, s)
    out[tuple(dst)] = mask[tuple(src)]
    return out


@dataclass
class ResidualStats:
    sup: float
    mean: float
    fold_fraction: float
    fold_count: int
    checked: int
    status: str
    excluded: np.ndarray = field(repr=False, default=None)

    def to_dict(self):
        return {"sup": self.sup, "mean": self.mean, "foldFraction": self.fold_fraction,
                "foldCount": self.fold_count, "checkedNodes": self.checked, "status": self.status}


def check_pde_residual(fld, spec, lam, policy=None):
    """| |H| - lam | over interior nodes outside fold bands."""
    jf = finite_difference_jet(fld, spec.order)
    absH = H_field(spec, jf)
    folds = fold_mask(fld, lam, policy)
    keep = ~folds & ~fld.grid.boundary_mask()
    r = np.abs(absH - lam)[keep]
    frac = float(folds.sum()) / fld.grid.size
    if r.size == 0:
        return ResidualStats(float("nan"), float("nan"), frac, int(folds.sum()), 0, "empty", folds)
    return ResidualStats(float(r.max()), float(r.mean()), frac, int(folds.sum()), int(r.size), "ok", folds)


def deviation_measure(jf, spec, deltas, exclude=None):
    """delta -> node fraction of {|H| < E_inf - delta}; E_inf is taken off ``exclude``."""
    absH = H_field(spec, jf)
    keep = np.ones(absH.shape, bool) if exclude is None else ~np.asarray(exclude, bool)
    if not keep.any():
        keep = np.ones(absH.shape, bool)
    einf = float(absH[keep].max())
    return {float(d): float(np.mean(absH < einf - d)) for d in deltas}


@dataclass
class VerificationReport:
    crest: float
    crest_nodal: float
    lambda_hat: float
    residual_sup_off_folds: float
    fold_fraction: float
    deviation: dict
    is_minimiser: bool
    is_solution: bool
    p: float
    tol_crest: float
    tol_const: float
    spread: float
    assumptions: tuple = ASSUMPTIONS

    @property
    def verdict_consistent(self):
        return self.is_minimiser == self.is_solution

    def to_dict(self):
        return {
            "p": self.p,
            "crest": self.crest,
            "crestNodal": self.crest_nodal,
            "lambdaHat": self.lambda_hat,
            "residualSupOffFolds": self.residual_sup_off_folds,
            "foldFraction": self.fold_fraction,
            "deviationMeasure": {repr(k): v for k, v in sorted(self.deviation.items())},
            "spread": self.spread,
            "tolCrest": self.tol_crest,
            "tolConst": self.tol_const,
            "isMinimiser": self.is_minimiser,
            "isSolution": self.is_solution,
            "verdictConsistent": self.verdict_consistent,
            "assumptions": list(self.assumptions),
        }


def classify_theorem1(fld, spec, p=2.0, tolerances=None, policy=None, deltas=(0.1, 0.2)):
    """Minimiser test (crest <= 1 + tolCrest) against solution test (|H| constant off folds).

    Both tests use interior nodes outside the fold bands; ``crest_nodal`` is
    the plain all-node ratio for reference.

    ``tolerances`` may hold ``tolCrest`` and ``tolConst``; tolCrest defaults
    to 20 * foldFraction. The fold threshold uses the mean of |H| as lambda.
    """
    tolerances = dict(tolerances or {})
    jf = finite_difference_jet(fld, spec.order)
    absH = H_field(spec, jf)
    einf = float(absH.max())
    e1 = float(np.mean(absH))
    if is_degenerate(power_mean(absH, 1.0), einf):
        raise DegenerateEnergy("E_1(u) = 0: classification needs E_1(u) != 0")
    folds = fold_mask(fld, e1, policy)
    keep = ~folds & ~fld.grid.boundary_mask()
    if not keep.any():
        keep = ~fld.grid.boundary_mask()
    kept = absH[keep]
    lam_hat = float(kept.max())
    crest = lam_hat / power_mean(kept, p)
    crest_nodal = einf / power_mean(absH, p)
    fold_fraction = float(folds.sum()) / fld.grid.size
    tol_crest = float(tolerances.get("tolCrest", max(CREST_FOLD_FACTOR * fold_fraction, CREST_FLOOR)))
    tol_const = float(tolerances.get("tolConst", TOL_CONST))
    spread = float(kept.max() - kept.min())
    resid = float(np.abs(kept - lam_hat).max())
    return VerificationReport(
        crest=crest, crest_nodal=crest_nodal, lambda_hat=lam_hat, residual_sup_off_folds=resid,
        fold_fraction=fold_fraction, deviation=deviation_measure(jf, spec, deltas, folds),
        is_minimiser=bool(crest <= 1.0 + tol_crest), is_solution=bool(spread <= tol_const * lam_hat),
        p=float(p), tol_crest=tol_crest, tol_const=tol_const, spread=spread)


@dataclass
class JensenReport:
    e_inf: float
    mean_gradient: list
    datum_gradient: list
    identity_error: float
    bound: float
    lambda_star: float
    margin: float
    passed: bool
    advisory: bool
    notes: list

    def to_dict(self):
        return dict(self.__dict__)


def _cell_gradients(fld):
    """Forward-difference gradients per grid cell, shape ``(cells, N, n)``, with cell centres."""
    grid = fld.grid
    u = fld.values
    h = grid.spacing
    x = grid.coordinates()
    if grid.dim == 1:
        g = (u[1:] - u[:-1]) / h[0]
        return g[:, :, None], 0.5 * (x[1:] + x[:-1]), 0.5 * (u[1:] + u[:-1])
    gx = 0.5 * ((u[1:, 1:] - u[:-1, 1:]) + (u[1:, :-1] - u[:-1, :-1])) / h[0]
    gy = 0.5 * ((u[1:, 1:] - u[1:, :-1]) + (u[:-1, 1:] - u[:-1, :-1])) / h[1]
    xc = 0.25 * (x[1:, 1:] + x[:-1, 1:] + x[1:, :-1] + x[:-1, :-1])
    uc = 0.25 * (u[1:, 1:] + u[:-1, 1:] + u[1:, :-1] + u[:-1, :-1])
    g = np.stack([gx, gy], axis=-1)
    m = g.shape[0] * g.shape[1]
    return g.reshape(m, u.shape[-1], 2), xc.reshape(m, 2), uc.reshape(m, -1)


def jensen_lower_bound_check(fld, spec, phi, tol=1e-12):
    """E_inf(u) >= |H(mean Du)| = |H(D phi)| for admissible u and affine phi.

    The mean forward-difference gradient telescopes to the boundary data, so
    in 1D it equals D phi to rounding. In 2D the result is advisory.
    """
    notes = []
    if not (spec.top_order_only and spec.claimed_convex_top):
        notes.append(f"{spec.label} is not a top-order convex supremand")
    if not isinstance(phi, Affine):
        notes.append("boundary datum is not affine")
    bmask = fld.grid.boundary_mask()
    phi_vals = phi.sample(fld.grid).values
    if not np.allclose(fld.values[bmask], phi_vals[bmask], rtol=0.0, atol=1e-12):
        notes.append("field does not match phi on the boundary")
    if fld.grid.dim != 1:
        notes.append("mean-gradient identity is exact only in 1D; result is advisory")
    g, xc, uc = _cell_gradients(fld)
    Hc = np.abs(H_values(spec, xc, uc, g))
    e_inf = float(Hc.max())
    mean_g = g.mean(axis=0)
    dphi = phi.gradient if isinstance(phi, Affine) else mean_g
    err = float(np.max(np.abs(mean_g - dphi)))
    x0 = xc[:1]
    u0 = uc[:1]
    bound = float(abs(H_values(spec, x0, u0, mean_g[None])[0]))
    ls = float(abs(H_values(spec, x0, u0, np.asarray(dphi)[None])[0]))
    scale = 1.0 + float(np.max(np.abs(dphi)))
    passed = bool(e_inf + tol * (1.0 + e_inf) >= bound and err <= tol * scale)
    return JensenReport(e_inf, mean_g.tolist(), np.asarray(dphi).tolist(), err, bound, ls,
                        e_inf - ls, passed, bool(notes), notes)
