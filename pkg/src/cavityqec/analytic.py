"""Closed-form single-qubit model of the correction protocol.

The channel plus the two pi/2 pulses is equivalent to rotating the
transferred qubit by the random angle phi; measuring and flipping on the
"wrong" outcome then gives, per phase,

    F_nofb(phi) = |cos(phi/2)|
    F_fb(phi)   = sqrt(cos^4(phi/2) + sin^4(phi/2))

and, approximating the flat-phase average of the fidelity by the square
root of the averaged success probability,

    F_nofb_ave(phi_max) = sqrt(1/2 + sin(phi_max) / (2 phi_max))
    F_fb_ave(phi_max)   = sqrt(3/4 + sin(2 phi_max) / (8 phi_max))

Both averaged forms tend to 1 as phi_max -> 0 (removable singularity,
handled by a series below 1e-6) and to sqrt(1/2) resp. sqrt(3)/2 as
phi_max -> infinity.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate

_SERIES_CUTOFF = 1e-6


def f_nofb(phi: float) -> float:
    """Single-shot fidelity without feedback."""
    return abs(math.cos(phi / 2.0))


def f_fb(phi: float) -> float:
    """Single-shot fidelity with measure-and-flip feedback."""
    c2 = math.cos(phi / 2.0) ** 2
    s2 = math.sin(phi / 2.0) ** 2
    return math.sqrt(c2 * c2 + s2 * s2)


def f_nofb_ave(phi_max: float) -> float:
    """sqrt(1/2 + sin(phi_max)/(2 phi_max)), series-expanded near zero."""
    if phi_max < 0:
        raise ValueError("phi_max must be nonnegative")
    if phi_max < _SERIES_CUTOFF:
        x2 = phi_max * phi_max
        return math.sqrt(1.0 - x2 / 12.0 + x2 * x2 / 240.0)
    return math.sqrt(0.5 + math.sin(phi_max) / (2.0 * phi_max))


def f_fb_ave(phi_max: float) -> float:
    """sqrt(3/4 + sin(2 phi_max)/(8 phi_max)), series-expanded near zero."""
    if phi_max < 0:
        raise ValueError("phi_max must be nonnegative")
    if phi_max < _SERIES_CUTOFF:
        x2 = phi_max * phi_max
        return math.sqrt(1.0 - x2 / 6.0 + x2 * x2 / 30.0)
    return math.sqrt(0.75 + math.sin(2.0 * phi_max) / (8.0 * phi_max))


@dataclass(frozen=True)
class ModelPoint:
    phi_max: float
    f_nofb_ave: float
    f_fb_ave: float


def model_grid(phi_values) -> list[ModelPoint]:
    return [ModelPoint(float(p), f_nofb_ave(float(p)), f_fb_ave(float(p)))
            for p in phi_values]


@dataclass(frozen=True)
class ConsistencyRow:
    """Gap between the closed forms and true flat-phase fidelity averages."""

    phi_max: float
    closed_nofb: float
    true_nofb: float
    gap_nofb: float
    closed_fb: float
    true_fb: float
    gap_fb: float


def model_consistency_check(phi_grid=None) -> list[ConsistencyRow]:
    """Quadrature of the true averages (1/X) int F(phi) dphi against the
    closed root-of-averaged-probability forms.

    The closed forms average the success probability before taking the
    square root, so by concavity they upper-bound the true fidelity
    averages: every gap is nonnegative and vanishes as phi_max -> 0.
    """
    if phi_grid is None:
        phi_grid = np.linspace(0.25, 4 * math.pi, 16)
    rows = []
    for x in phi_grid:
        x = float(x)
        t_nofb = integrate.quad(f_nofb, 0.0, x, limit=200)[0] / x
        t_fb = integrate.quad(f_fb, 0.0, x, limit=200)[0] / x
        c_nofb, c_fb = f_nofb_ave(x), f_fb_ave(x)
        rows.append(ConsistencyRow(x, c_nofb, t_nofb, c_nofb - t_nofb,
                                   c_fb, t_fb, c_fb - t_fb))
    return rows
