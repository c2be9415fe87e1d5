"""Grids, fields, finite-difference jets and 2x2 symmetric spectral helpers."""

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import kernels
from .errors import StencilError

MIN_NODES = 8


@dataclass(frozen=True)
class Grid:
    """Uniform node-centred grid on a box in R^1 or R^2.

    Nodes are stored row-major: axis 0 is ``x1``, flat index ``i * M2 + j``.
    """

    bounds: tuple
    resolution: tuple

    def __post_init__(self):
        bounds = tuple((float(a), float(b)) for a, b in self.bounds)
        resolution = tuple(int(m) for m in self.resolution)
        object.__setattr__(self, "bounds", bounds)
        object.__setattr__(self, "resolution", resolution)
        if len(bounds) not in (1, 2):
            raise ValueError(f"grid dimension must be 1 or 2, got {len(bounds)}")
        if len(resolution) != len(bounds):
            raise ValueError("bounds and resolution must have the same length")
        for (a, b), m in zip(bounds, resolution):
            if not (np.isfinite(a) and np.isfinite(b) and b > a):
                raise ValueError(f"invalid interval [{a}, {b}]")
            if m < MIN_NODES:
                raise ValueError(f"need at least {MIN_NODES} nodes per axis, got {m}")

    @classmethod
    def unit(cls, dim, m):
        return cls(((0.0, 1.0),) * dim, (m,) * dim)

    @property
    def dim(self):
        return len(self.bounds)

    @property
    def shape(self):
        return self.resolution

    @property
    def size(self):
        return int(np.prod(self.resolution))

    @property
    def spacing(self):
        return tuple((b - a) / (m - 1) for (a, b), m in zip(self.bounds, self.resolution))

    @property
    def volume(self):
        return float(np.prod([b - a for a, b in self.bounds]))

    def axis(self, d):
        (a, _), m = self.bounds[d], self.resolution[d]
        return a + np.arange(m) * self.spacing[d]

    def coordinates(self):
        """Node coordinates, shape ``(*shape, dim)``."""
        axes = [self.axis(d) for d in range(self.dim)]
        mesh = np.meshgrid(*axes, indexing="ij")
        return np.stack(mesh, axis=-1)

    def points(self):
        """Node coordinates as a flat ``(size, dim)`` array in row-major order."""
        return self.coordinates().reshape(-1, self.dim)

    def boundary_mask(self):
        mask = np.zeros(self.shape, dtype=bool)
        for d in range(self.dim):
            idx = [slice(None)] * self.dim
            idx[d] = 0
            mask[tuple(idx)] = True
            idx[d] = -1
            mask[tuple(idx)] = True
        return mask

    def unravel(self, flat_index):
        return tuple(int(i) for i in np.unravel_index(int(flat_index), self.shape))


@dataclass(frozen=True, eq=False)
class Field:
    """N-component nodal values on a grid, ``values.shape == (*grid.shape, N)``."""

    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        if values.shape == self.grid.shape:
            values = values[..., None]
        if values.shape[:-1] != self.grid.shape or values.shape[-1] not in (1, 2):
            raise ValueError(
                f"field shape {values.shape} does not fit grid {self.grid.shape} with N in (1, 2)")
        if not np.all(np.isfinite(values)):
            raise ValueError("field values must be finite")
        values = values.copy()
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    @property
    def components(self):
        return self.values.shape[-1]

    def flat(self):
        return self.values.reshape(-1, self.components)

    @classmethod
    def from_function(cls, grid, func):
        """Sample ``func(coords)`` where ``coords`` has shape ``(*shape, dim)``."""
        return cls(grid, func(grid.coordinates()))


@dataclass(frozen=True, eq=False)
class Jet:
    """Jet of a map at one point: ``u``, ``Du`` and, for order 2, ``D^2 u``."""

    x: np.ndarray
    u: np.ndarray
    du: np.ndarray
    d2u: Optional[np.ndarray] = None

    def __post_init__(self):
        for name in ("x", "u", "du"):
            object.__setattr__(self, name, np.atleast_1d(np.asarray(getattr(self, name), dtype=float)))
        du = self.du.reshape(self.u.shape[0], self.x.shape[0])
        object.__setattr__(self, "du", du)
        if self.d2u is not None:
            d2u = np.asarray(self.d2u, dtype=float).reshape(du.shape + (du.shape[1],))
            sym = np.swapaxes(d2u, -1, -2)
            scale = max(1.0, float(np.max(np.abs(d2u))))
            if np.max(np.abs(d2u - sym)) > 1e-12 * scale:
                raise ValueError("second-order jet must be symmetric in its spatial indices")
            object.__setattr__(self, "d2u", d2u)

    @property
    def order(self):
        return 1 if self.d2u is None else 2

    @property
    def top(self):
        return self.du if self.d2u is None else self.d2u


@dataclass(frozen=True, eq=False)
class JetField:
    """Discrete ``D^[k]u``: per-node arrays of position, value and derivatives."""

    grid: Grid
    order: int
    x: np.ndarray
    u: np.ndarray
    du: np.ndarray
    d2u: Optional[np.ndarray] = None
    boundary: np.ndarray = field(default=None)

    def __post_init__(self):
        if self.boundary is None:
            object.__setattr__(self, "boundary", self.grid.boundary_mask())

    @property
    def components(self):
        return self.u.shape[-1]

    def jet(self, index):
        """The jet at a node given by flat index or index tuple."""
        if np.isscalar(index) or isinstance(index, (int, np.integer)):
            index = self.grid.unravel(index)
        index = tuple(index)
        d2u = None if self.d2u is None else self.d2u[index]
        return Jet(self.x[index], self.u[index], self.du[index], d2u)

    def flat(self):
        """Arrays with the grid axes collapsed to one node axis."""
        m = self.grid.size
        out = {
            "x": self.x.reshape(m, -1),
            "u": self.u.reshape(m, -1),
            "du": self.du.reshape((m,) + self.du.shape[-2:]),
        }
        if self.d2u is not None:
            out["d2u"] = self.d2u.reshape((m,) + self.d2u.shape[-3:])
        return out


def finite_difference_jet(field, k=1):
    """Finite-difference jet of order ``k`` in {1, 2}.

    Centred second-order differences inside, one-sided second-order ones on the
    boundary. Mixed second derivatives average ``D_i D_j`` and ``D_j D_i``.
    """
    if k not in (1, 2):
        raise StencilError(f"unsupported jet order k={k}; expected 1 or 2")
    grid = field.grid
    need = 3 if k == 1 else 4
    if min(grid.resolution) < need:
        raise StencilError(f"grid too small for order-{k} stencil")
    h = grid.spacing
    n = grid.dim
    vals = field.values
    N = vals.shape[-1]
    du = np.empty(grid.shape + (N, n))
    for d in range(n):
        du[..., :, d] = kernels.diff1(vals, h[d], axis=d)
    d2u = None
    if k == 2:
        d2u = np.empty(grid.shape + (N, n, n))
        for d in range(n):
            d2u[..., :, d, d] = kernels.diff2(vals, h[d], axis=d)
        for d in range(n):
            for e in range(d + 1, n):
                de = kernels.diff1(du[..., :, d], h[e], axis=e)
                ed = kernels.diff1(du[..., :, e], h[d], axis=d)
                mixed = 0.5 * (de + ed)
                d2u[..., :, d, e] = mixed
                d2u[..., :, e, d] = mixed
    x = grid.coordinates()
    return JetField(grid, k, x, vals, du, d2u)


@dataclass(frozen=True)
class SymMat:
    """Real symmetric n x n matrix, n <= 2, stored by its upper triangle."""

    n: int
    upper: tuple

    def __post_init__(self):
        upper = tuple(float(v) for v in self.upper)
        if (self.n, len(upper)) not in ((1, 1), (2, 3)):
            raise ValueError("SymMat supports n=1 (1 entry) or n=2 (3 entries)")
        object.__setattr__(self, "upper", upper)

    @classmethod
    def from_matrix(cls, a, atol=0.0):
        a = np.atleast_2d(np.asarray(a, dtype=float))
        if a.shape == (1, 1):
            return cls(1, (a[0, 0],))
        if a.shape != (2, 2):
            raise ValueError(f"expected 1x1 or 2x2 matrix, got {a.shape}")
        if abs(a[0, 1] - a[1, 0]) > atol:
            raise ValueError("matrix is not symmetric")
        return cls(2, (a[0, 0], a[0, 1], a[1, 1]))

    @classmethod
    def scalar(cls, n, t):
        return cls(1, (t,)) if n == 1 else cls(2, (t, 0.0, t))

    def as_array(self):
        if self.n == 1:
            return np.array([[self.upper[0]]])
        a, b, c = self.upper
        return np.array([[a, b], [b, c]])

    @property
    def trace(self):
        return self.upper[0] if self.n == 1 else self.upper[0] + self.upper[2]

    @property
    def det(self):
        if self.n == 1:
            return self.upper[0]
        a, b, c = self.upper
        return a * c - b * b


def eigenvalues_sym2(a, b, c):
    """Ascending eigenvalues of [[a, b], [b, c]], elementwise over arrays.

    The larger-magnitude root comes from mean +/- radius without cancellation,
    the other from det / root. Diagonal entries are returned exactly.
    """
    a, b, c = np.broadcast_arrays(*(np.asarray(v, dtype=float) for v in (a, b, c)))
    mean = 0.5 * (a + c)
    radius = np.hypot(0.5 * (a - c), b)
    big = np.where(mean >= 0.0, mean + radius, mean - radius)
    det = a * c - b * b
    with np.errstate(divide="ignore", invalid="ignore"):
        small = np.where(big != 0.0, det / big, 0.0)
    lo = np.minimum(big, small)
    hi = np.maximum(big, small)
    diag = b == 0.0
    lo = np.where(diag, np.minimum(a, c), lo)
    hi = np.where(diag, np.maximum(a, c), hi)
    return lo, hi


def eigenvalues_sym(s):
    """Eigenvalues of a :class:`SymMat` (or 1x1/2x2 symmetric array), ascending."""
    if not isinstance(s, SymMat):
        s = SymMat.from_matrix(s)
    if s.n == 1:
        return (s.upper[0],)
    lo, hi = eigenvalues_sym2(*s.upper)
    return (float(lo), float(hi))


def gram(du):
    """``Du^T Du`` for a square gradient matrix, as a :class:`SymMat`."""
    du = np.atleast_2d(np.asarray(du, dtype=float))
    rows, cols = du.shape
    if rows != cols:
        raise ValueError(f"gram requires N == n, got N={rows}, n={cols}")
    if cols == 1:
        return SymMat(1, (du[0, 0] * du[0, 0],))
    s11, s12, s22 = gram_entries(du)
    return SymMat(2, (float(s11), float(s12), float(s22)))


def gram_entries(du):
    """Upper-triangle entries of ``Du^T Du`` over trailing ``(N, n)`` axes.

    Returns ``(s11,)`` for n = 1 and ``(s11, s12, s22)`` for n = 2.
    """
    du = np.asarray(du, dtype=float)
    n = du.shape[-1]
    col = [du[..., :, i] for i in range(n)]
    s11 = np.sum(col[0] * col[0], axis=-1)
    if n == 1:
        return (s11,)
    s12 = np.sum(col[0] * col[1], axis=-1)
    s22 = np.sum(col[1] * col[1], axis=-1)
    return (s11, s12, s22)
