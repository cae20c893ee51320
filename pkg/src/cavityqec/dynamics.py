"""Unitary primitives of the protocol.

Three gate families act on the composite space:

* resonant atom-cavity exchange pulses (``JCPulse``), rotating each
  invariant two-dimensional block {|e, 0>, |g, 1>} of one atom and one
  cavity by the accumulated Rabi angle,
* classical two-level rotations in the Ramsey zones (``RamseyPulse``),
* diagonal phase kicks from the quadratic level shifts of a static
  electric field (``StarkKick``).

Sign conventions.  A JC pulse of angle theta maps

    |e, 0>  ->  cos(theta/2) |e, 0> + sin(theta/2) |g, 1>
    |g, 1>  -> -sin(theta/2) |e, 0> + cos(theta/2) |g, 1>

and is the identity on |i>, on |g, 0> and on |e, 1> (the latter blocked
by the single-photon truncation).  A Ramsey pulse of area A about the
equatorial axis at angle ``axis_phase`` applies
exp(-i (A/2) (cos X + sin Y)) on the named two-level transition and is
the identity on the spectator level.
"""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate

from .hilbert import (
    DIM,
    LEVEL_E,
    LEVEL_G,
    LEVEL_I,
    LinearOperator,
    PureState,
    _DIGITS,
    embed_atom_op,
    embed_pair,
)

INSTANTANEOUS = "instantaneous"
ENVELOPE = "envelope"

_TRANSITIONS = {"ig": (LEVEL_I, LEVEL_G), "ge": (LEVEL_G, LEVEL_E)}


@dataclass(frozen=True)
class JCPulse:
    """Resonant exchange pulse between one atom and one cavity mode.

    ``rabi_angle`` is the accumulated angle theta = integral of the
    (possibly time-dependent) coupling; the protocol only ever emits
    theta = pi or 2*pi.  ``duration`` (seconds) applies in envelope mode,
    where the coupling follows the Gaussian spatial profile of the mode.
    """

    atom: int
    cavity: int
    rabi_angle: float
    detuning: float = 0.0
    mode: str = INSTANTANEOUS
    duration: float | None = None

    def __post_init__(self):
        if self.atom not in (1, 2, 3, 4):
            raise ValueError(f"atom must be 1..4, got {self.atom}")
        if self.cavity not in (1, 2):
            raise ValueError(f"cavity must be 1 or 2, got {self.cavity}")
        if self.detuning != 0.0:
            raise ValueError("only resonant pulses (detuning 0) are supported")
        if self.mode not in (INSTANTANEOUS, ENVELOPE):
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.mode == ENVELOPE and (self.duration is None or self.duration <= 0):
            raise ValueError("envelope mode requires a positive duration")


@dataclass(frozen=True)
class RamseyPulse:
    """Classical microwave rotation on one two-level atomic transition."""

    atom: int
    transition: str          # "ig" or "ge"
    area: float              # radians
    axis_phase: float = 0.0  # equatorial rotation-axis angle

    def __post_init__(self):
        if self.atom not in (1, 2, 3, 4):
            raise ValueError(f"atom must be 1..4, got {self.atom}")
        if self.transition not in _TRANSITIONS:
            raise ValueError(f"transition must be 'ig' or 'ge', got {self.transition!r}")


@dataclass(frozen=True)
class StarkKick:
    """Diagonal phase kick: level k of each listed atom gains exp(-i phi beta_k).

    With the normalized coefficients of :func:`normalized_level_shifts` the
    e-g coherence of a kicked atom acquires exactly exp(-i phi).
    """

    atoms: tuple[int, ...]
    phi: float
    beta_i: float
    beta_g: float
    beta_e: float

    def __post_init__(self):
        if not self.atoms:
            raise ValueError("kick must address at least one atom")
        if any(a not in (1, 2, 3, 4) for a in self.atoms):
            raise ValueError(f"atom indices must be 1..4, got {self.atoms}")


# ---------------------------------------------------------------------------
# JC pulses
# ---------------------------------------------------------------------------

@functools.lru_cache(maxsize=None)
def jc_unitary(atom: int, cavity: int, rabi_angle: float) -> LinearOperator:
    """Block-rotation unitary of a resonant JC pulse (cached)."""
    # local basis on (atom, cavity): index = level*2 + photons
    u = np.eye(6, dtype=np.complex128)
    c, s = np.cos(rabi_angle / 2), np.sin(rabi_angle / 2)
    e0, g1 = LEVEL_E * 2 + 0, LEVEL_G * 2 + 1
    u[e0, e0] = c
    u[g1, e0] = s
    u[e0, g1] = -s
    u[g1, g1] = c
    return LinearOperator(embed_pair(atom - 1, cavity + 3, u), unitary=True)


def jc_generator(atom: int, cavity: int) -> LinearOperator:
    """Antisymmetric generator G with dpsi/dt = (Omega(t)/2) G psi."""
    g = np.zeros((6, 6), dtype=np.complex128)
    e0, g1 = LEVEL_E * 2 + 0, LEVEL_G * 2 + 1
    g[g1, e0] = 1.0
    g[e0, g1] = -1.0
    return LinearOperator(embed_pair(atom - 1, cavity + 3, g))


def gaussian_coupling(t: float, omega0: float, v: float, w0: float) -> float:
    """Coupling Omega(t) = (Omega0/2) exp(-v^2 t^2 / w0^2) of a crossing atom."""
    return 0.5 * omega0 * np.exp(-(v * t / w0) ** 2)


def rabi_angle_from_envelope(t_int: float, omega0: float, v: float, w0: float) -> float:
    """Accumulated Rabi angle (Omega0/2) * integral_{-inf}^{t_int} of the
    Gaussian envelope, evaluated by adaptive quadrature (1e-10 relative).

    The integration runs in the dimensionless variable u = v t / w0 so the
    quadrature sees a unit-width bump regardless of the physical scales.
    """
    if v <= 0 or w0 <= 0:
        raise ValueError("velocity and waist must be positive")
    upper = v * t_int / w0 if math.isfinite(t_int) else t_int
    val, _ = integrate.quad(lambda u: np.exp(-u * u), -np.inf, upper,
                            epsabs=1e-14, epsrel=1e-12)
    return 0.5 * omega0 * (w0 / v) * val


def envelope_window_angle(duration: float, omega0: float, v: float, w0: float) -> float:
    """Angle accumulated over a finite window [-duration/2, duration/2]."""
    from scipy.special import erf

    tau = w0 / v
    return 0.5 * omega0 * tau * np.sqrt(np.pi) * float(erf(duration / (2 * tau)))


def omega0_for_angle(rabi_angle: float, duration: float, v: float, w0: float) -> float:
    """Peak coupling making a windowed Gaussian passage accumulate the angle."""
    ref = envelope_window_angle(duration, 1.0, v, w0)
    if ref <= 0:
        raise ValueError("window accumulates no coupling")
    return rabi_angle / ref


def jc_apply(psi: PureState, pulse: JCPulse, v: float = 500.0,
             w0: float = 6e-3, steps: int | None = None) -> PureState:
    """Apply a JC pulse to a state.

    Envelope mode integrates the time-dependent coupling with fixed-step
    RK4 (step <= duration/2000), with the peak coupling calibrated so that
    the windowed passage accumulates exactly ``pulse.rabi_angle``.
    """
    if pulse.mode == INSTANTANEOUS:
        return jc_unitary(pulse.atom, pulse.cavity, pulse.rabi_angle) @ psi
    gen = jc_generator(pulse.atom, pulse.cavity).matrix
    omega0 = omega0_for_angle(pulse.rabi_angle, pulse.duration, v, w0)
    n = max(steps or 0, 2000)
    dt = pulse.duration / n
    a = psi.amplitudes.copy()
    t = -pulse.duration / 2

    def deriv(tt, vec):
        return gaussian_coupling(tt, omega0, v, w0) * 0.5 * (gen @ vec)

    for _ in range(n):
        k1 = deriv(t, a)
        k2 = deriv(t + dt / 2, a + dt / 2 * k1)
        k3 = deriv(t + dt / 2, a + dt / 2 * k2)
        k4 = deriv(t + dt, a + dt * k3)
        a += dt / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        t += dt
    return PureState(a, copy=False)


# ---------------------------------------------------------------------------
# Ramsey pulses
# ---------------------------------------------------------------------------

def ramsey_local(transition: str, area: float, axis_phase: float) -> np.ndarray:
    """3x3 matrix of the two-level rotation, identity on the spectator."""
    lo, hi = _TRANSITIONS[transition]
    m = np.eye(3, dtype=np.complex128)
    c, s = np.cos(area / 2), np.sin(area / 2)
    m[lo, lo] = c
    m[hi, hi] = c
    m[lo, hi] = -1j * np.exp(-1j * axis_phase) * s
    m[hi, lo] = -1j * np.exp(1j * axis_phase) * s
    return m


@functools.lru_cache(maxsize=None)
def ramsey_unitary(atom: int, transition: str, area: float,
                   axis_phase: float) -> LinearOperator:
    op = embed_atom_op(atom, ramsey_local(transition, area, axis_phase))
    return LinearOperator(op.matrix, unitary=True)


def ramsey_apply(psi: PureState, pulse: RamseyPulse) -> PureState:
    return ramsey_unitary(pulse.atom, pulse.transition, pulse.area,
                          pulse.axis_phase) @ psi


def ramsey_inverse(pulse: RamseyPulse) -> RamseyPulse:
    """Inverse rotation: same area about the opposite equatorial axis."""
    return RamseyPulse(pulse.atom, pulse.transition, pulse.area,
                       pulse.axis_phase + np.pi)


# ---------------------------------------------------------------------------
# Quadratic Stark shifts
# ---------------------------------------------------------------------------

def stark_coefficients(n: int) -> float:
    """Quadratic Stark coefficient of circular level n (atomic units per
    field-intensity unit): -(1/8) [7 n^2 + (21/2) n + 7/2] n^4."""
    if n not in (49, 50, 51):
        raise ValueError(f"protocol uses only n in {{49, 50, 51}}, got {n}")
    return -0.125 * (7 * n * n + 10.5 * n + 3.5) * n ** 4


def stark_shift_parabolic(n: int, n1: int, m: int) -> float:
    """General quadratic shift coefficient in parabolic quantum numbers.

    Reduces to :func:`stark_coefficients` for circular states
    (n1 = 0, |m| = n - 1).
    """
    am = abs(m)
    bracket = (7 * n * n - 6 * (am + n1) ** 2 + 6 * n1 * (am - 1)
               + 6 * n * (am + 1) - 1.5 * am + 8)
    return -0.125 * bracket * n ** 4


def normalized_level_shifts() -> tuple[float, float, float]:
    """Shift coefficients (beta_i, beta_g, beta_e) scaled so beta_e - beta_g = 1.

    With this normalization the random-field phase phi acts directly as the
    rotation angle of the stored qubit, and the ancilla transition sees the
    reduced angle phi * (beta_g - beta_i) ~ 0.9053 phi.
    """
    a_i, a_g, a_e = (stark_coefficients(n) for n in (49, 50, 51))
    scale = a_e - a_g
    return (a_i / scale, a_g / scale, a_e / scale)


def ancilla_shift_ratio() -> float:
    """Ratio (beta_g - beta_i) of the ancilla to the qubit phase, ~0.9053."""
    b_i, b_g, _ = normalized_level_shifts()
    return b_g - b_i


def stark_phase_exponent(atoms: tuple[int, ...],
                         betas: tuple[float, float, float]) -> np.ndarray:
    """Per-basis-state exponent b with kick action amps *= exp(-i phi b)."""
    beta_arr = np.asarray(betas, dtype=np.float64)
    expo = np.zeros(DIM)
    for a in atoms:
        expo += beta_arr[_DIGITS[a - 1]]
    return expo


def stark_kick_apply(psi: PureState, kick: StarkKick) -> PureState:
    expo = stark_phase_exponent(tuple(kick.atoms),
                                (kick.beta_i, kick.beta_g, kick.beta_e))
    return PureState(psi.amplitudes * np.exp(-1j * kick.phi * expo), copy=False)
