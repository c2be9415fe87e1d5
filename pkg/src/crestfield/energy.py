"""Rescaled L^p energies, the supremal energy and the crest factor on grids.

Quadrature is the plain node mean, so E_p is the discrete power mean of |H| and
E_p <= E_inf holds exactly (up to rounding) rather than asymptotically.
"""

from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .errors import DegenerateEnergy
from .supremand import H_field

ZERO_E1_RTOL = 1e-14


def power_mean(values, p):
    """``(mean |v|^p)^(1/p)`` with a fixed pairwise reduction order.

    Values are scaled by their max before powering so large ``p`` cannot overflow.
    """
    v = np.ravel(np.asarray(values, dtype=float))
    if not p >= 1.0 or not np.isfinite(p):
        raise ValueError(f"p must be a finite real >= 1, got {p}")
    if v.size == 0:
        raise ValueError("empty value set")
    top = float(np.max(np.abs(v)))
    if top == 0.0:
        return 0.0
    s = kernels.power_sum(v, p, top)
    return top * (s / v.size) ** (1.0 / p)


def sup_value(values):
    """Max of |v| and the lowest flat index attaining it."""
    a = np.abs(np.ravel(np.asarray(values, dtype=float)))
    i = int(np.argmax(a))
    return float(a[i]), i


def is_degenerate(e1, einf):
    return e1 < ZERO_E1_RTOL * (1.0 + einf)


def energy_p(jf, spec, p):
    """Discrete rescaled L^p norm of H(D^[k]u): ``((1/M) sum |H|^p)^(1/p)``."""
    return power_mean(H_field(spec, jf), p)


def energy_inf(jf, spec):
    """(max |H|, flat index of the first node attaining it)."""
    return sup_value(H_field(spec, jf))


def crest_from_values(values, p):
    """E_inf / E_p for a node array of |H|; raises :class:`DegenerateEnergy` if E_1 = 0."""
    einf, _ = sup_value(values)
    e1 = power_mean(values, 1.0)
    if is_degenerate(e1, einf):
        raise DegenerateEnergy(
            "E_1(u) = 0: the crest factor is only defined on fields with E_1(u) != 0")
    return einf / power_mean(values, p)


def crest_factor(jf, spec, p):
    """C_{inf,p}(u) = E_inf(u) / E_p(u)."""
    return crest_from_values(H_field(spec, jf), p)


@dataclass
class EnergyReport:
    p_list: list
    ep: list
    einf: float
    crest: list
    argmax_node: int
    e1_is_zero: bool
    argmax_x: list = field(default_factory=list)

    def to_dict(self):
        return {
            "p": [float(p) for p in self.p_list],
            "E_p": [float(e) for e in self.ep],
            "E_inf": float(self.einf),
            "crest": [None if c is None else float(c) for c in self.crest],
            "argmax_node": int(self.argmax_node),
            "argmax_x": [float(v) for v in self.argmax_x],
            "E1_is_zero": bool(self.e1_is_zero),
        }

    def rows(self):
        return list(zip(self.p_list, self.ep, self.crest))


def sweep_values(values, p_list):
    """:class:`EnergyReport` for an array of |H| values over ascending ``p_list``."""
    p_list = [float(p) for p in p_list]
    if any(b <= a for a, b in zip(p_list, p_list[1:])):
        raise ValueError(f"p list must be strictly ascending, got {p_list}")
    einf, arg = sup_value(values)
    e1 = power_mean(values, 1.0)
    zero = is_degenerate(e1, einf)
    ep = [power_mean(values, p) for p in p_list]
    crest = [None if zero else einf / e for e in ep]
    return EnergyReport(p_list, ep, einf, crest, arg, zero)


def p_sweep(jf, spec, p_list):
    """Energies and crest factors for every exponent in ``p_list``."""
    report = sweep_values(H_field(spec, jf), p_list)
    report.argmax_x = jf.x.reshape(-1, jf.grid.dim)[report.argmax_node].tolist()
    return report
