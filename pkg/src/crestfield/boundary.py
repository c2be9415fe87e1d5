"""Boundary data phi: affine, quadratic and piecewise-affine maps.

Each datum is piecewise C^1 by construction. ``sample`` returns the nodal
:class:`~crestfield.grid.Field`; derivatives used downstream are taken from its
finite-difference jet so that Lambda_* and energies share one code path.
"""

from dataclasses import dataclass

import numpy as np

from .grid import Field


def _as_matrix(a, rows=None):
    a = np.asarray(a, dtype=float)
    if a.ndim == 1:
        a = a[None, :] if rows in (None, 1) else a.reshape(rows, -1)
    return a


@dataclass(frozen=True, eq=False)
class Affine:
    """phi(x) = offset + gradient @ x, gradient of shape (N, n)."""

    offset: np.ndarray
    gradient: np.ndarray

    def __post_init__(self):
        g = _as_matrix(self.gradient)
        off = np.atleast_1d(np.asarray(self.offset, dtype=float))
        if off.shape != (g.shape[0],):
            raise ValueError(f"offset has {off.shape} entries for {g.shape[0]} components")
        object.__setattr__(self, "gradient", g)
        object.__setattr__(self, "offset", off)

    @classmethod
    def zero(cls, n, N=1):
        return cls(np.zeros(N), np.zeros((N, n)))

    @property
    def dims(self):
        return self.gradient.shape[1], self.gradient.shape[0]

    def values(self, x):
        x = np.asarray(x, dtype=float)
        return self.offset + np.einsum("ai,...i->...a", self.gradient, x)

    def to_dict(self):
        return {"catalog": "affine",
                "coefficients": {"offset": self.offset.tolist(), "gradient": self.gradient.tolist()}}

    def sample(self, grid):
        return Field(grid, self.values(grid.coordinates()))


@dataclass(frozen=True, eq=False)
class Quadratic:
    """phi_a(x) = offset_a + gradient_a . x + 1/2 x^T hessian_a x."""

    offset: np.ndarray
    gradient: np.ndarray
    hessian: np.ndarray

    def __post_init__(self):
        g = _as_matrix(self.gradient)
        N, n = g.shape
        q = np.asarray(self.hessian, dtype=float).reshape(N, n, n)
        if not np.allclose(q, np.swapaxes(q, -1, -2)):
            raise ValueError("hessian must be symmetric")
        object.__setattr__(self, "gradient", g)
        object.__setattr__(self, "hessian", q)
        object.__setattr__(self, "offset", np.atleast_1d(np.asarray(self.offset, dtype=float)))

    @property
    def dims(self):
        return self.gradient.shape[1], self.gradient.shape[0]

    def values(self, x):
        x = np.asarray(x, dtype=float)
        lin = np.einsum("ai,...i->...a", self.gradient, x)
        quad = 0.5 * np.einsum("...i,aij,...j->...a", x, self.hessian, x)
        return self.offset + lin + quad

    def to_dict(self):
        return {"catalog": "quadratic",
                "coefficients": {"offset": self.offset.tolist(), "gradient": self.gradient.tolist(),
                                 "hessian": self.hessian.tolist()}}

    def sample(self, grid):
        return Field(grid, self.values(grid.coordinates()))


@dataclass(frozen=True, eq=False)
class PiecewiseAffine:
    """Scalar max (or min) of finitely many affine pieces."""

    pieces: tuple
    mode: str = "max"

    def __post_init__(self):
        pieces = tuple(p if isinstance(p, Affine) else Affine(**p) for p in self.pieces)
        if not pieces:
            raise ValueError("need at least one affine piece")
        if any(p.dims != pieces[0].dims or p.dims[1] != 1 for p in pieces):
            raise ValueError("pieces must be scalar and share the same dimension")
        if self.mode not in ("max", "min"):
            raise ValueError("mode must be 'max' or 'min'")
        object.__setattr__(self, "pieces", pieces)

    @property
    def dims(self):
        return self.pieces[0].dims

    def values(self, x):
        stack = np.stack([p.values(x) for p in self.pieces], axis=0)
        return stack.max(axis=0) if self.mode == "max" else stack.min(axis=0)

    def to_dict(self):
        return {"catalog": "piecewise_affine",
                "coefficients": {"mode": self.mode,
                                 "pieces": [p.to_dict()["coefficients"] for p in self.pieces]}}

    def sample(self, grid):
        return Field(grid, self.values(grid.coordinates()))


def from_dict(data, n):
    """Build a datum from ``{"catalog": ..., "coefficients": {...}}``."""
    kind = data["catalog"]
    c = data.get("coefficients", {})
    if kind == "zero":
        return Affine.zero(n, int(c.get("components", 1)))
    if kind == "affine":
        return Affine(c["offset"], c["gradient"])
    if kind == "quadratic":
        return Quadratic(c["offset"], c["gradient"], c["hessian"])
    if kind == "piecewise_affine":
        return PiecewiseAffine(tuple(Affine(p["offset"], p["gradient"]) for p in c["pieces"]),
                               c.get("mode", "max"))
    raise ValueError(f"unknown boundary catalog {kind!r}")
