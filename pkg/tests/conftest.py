"""Shared test helpers.

The ``eq*`` builders construct every intermediate state of the protocol
directly from hand-placed amplitudes (independent of the gate code), so
the protocol tests compare pulse-sequence output against fixed oracles.
State comparisons factor out one global phase by aligning the largest
amplitude of the expected state.
"""

import math

import numpy as np
import pytest

from cavityqec.hilbert import LEVEL_E, LEVEL_G, LEVEL_I, PureState, product_state

SQ2 = math.sqrt(2.0)


def ket(level: int) -> np.ndarray:
    v = np.zeros(3, dtype=complex)
    v[level] = 1.0
    return v


def photon(n: int) -> np.ndarray:
    v = np.zeros(2, dtype=complex)
    v[n] = 1.0
    return v


KI, KG, KE = ket(LEVEL_I), ket(LEVEL_G), ket(LEVEL_E)
PLUS = (KI + KG) / SQ2          # ancilla |+> on (i, g)
MINUS = (KI - KG) / SQ2
PLUS1 = (KG + KE) / SQ2         # qubit-atom |+> on (g, e)
MINUS1 = (KG - KE) / SQ2


def ab(alpha_sq: float) -> tuple[float, float]:
    return math.sqrt(alpha_sq), math.sqrt(1.0 - alpha_sq)


def eq11(alpha_sq: float) -> PureState:
    """Loaded qubit: alpha |e,0> + beta |g,1> on (A1, C1)."""
    a, b = ab(alpha_sq)
    v = a * product_state([KE, KI, KI, KG, photon(0), photon(0)]).amplitudes \
        + b * product_state([KG, KI, KI, KG, photon(1), photon(0)]).amplitudes
    return PureState(v)


def eq12(alpha_sq: float) -> PureState:
    """After the ancilla pi/2 pulses: both ancillas in |+>."""
    a, b = ab(alpha_sq)
    v = a * product_state([KE, PLUS, PLUS, KG, photon(0), photon(0)]).amplitudes \
        + b * product_state([KG, PLUS, PLUS, KG, photon(1), photon(0)]).amplitudes
    return PureState(v)


def eq14(alpha_sq: float) -> PureState:
    """Encoded block: alpha |e,+,+,0> + beta |g,-,-,1>."""
    a, b = ab(alpha_sq)
    v = a * product_state([KE, PLUS, PLUS, KG, photon(0), photon(0)]).amplitudes \
        + b * product_state([KG, MINUS, MINUS, KG, photon(1), photon(0)]).amplitudes
    return PureState(v)


def eq15(alpha_sq: float) -> PureState:
    """After A1's pi pulse with C2: qubit on the two cavities."""
    a, b = ab(alpha_sq)
    v = a * product_state([KG, PLUS, PLUS, KG, photon(0), photon(1)]).amplitudes \
        + b * product_state([KG, MINUS, MINUS, KG, photon(1), photon(0)]).amplitudes
    return PureState(v)


def eq16(alpha_sq: float) -> PureState:
    """Ancillas decoupled: (alpha |0,1> + beta |1,0>) |-,->."""
    a, b = ab(alpha_sq)
    v = a * product_state([KG, MINUS, MINUS, KG, photon(0), photon(1)]).amplitudes \
        + b * product_state([KG, MINUS, MINUS, KG, photon(1), photon(0)]).amplitudes
    return PureState(v)


def eq17(alpha_sq: float) -> PureState:
    """Qubit reloaded onto A4: (-alpha |0,e> + beta |1,g>) |-,-,0>."""
    a, b = ab(alpha_sq)
    v = -a * product_state([KG, MINUS, MINUS, KE, photon(0), photon(0)]).amplitudes \
        + b * product_state([KG, MINUS, MINUS, KG, photon(1), photon(0)]).amplitudes
    return PureState(v)


def eq18(alpha_sq: float) -> PureState:
    """No-error final state after the phase fix (ancillas still |-,->)."""
    a, b = ab(alpha_sq)
    v = a * product_state([KG, MINUS, MINUS, KE, photon(0), photon(0)]).amplitudes \
        + b * product_state([KG, MINUS, MINUS, KG, photon(1), photon(0)]).amplitudes
    return PureState(v)


def eq20(alpha_sq: float) -> PureState:
    """All three atoms in the +/- encoding inside the noisy zone."""
    a, b = ab(alpha_sq)
    v = a * product_state([PLUS1, PLUS, PLUS, KG, photon(0), photon(0)]).amplitudes \
        + b * product_state([MINUS1, MINUS, MINUS, KG, photon(1), photon(0)]).amplitudes
    return PureState(v)


def eq21(alpha_sq: float) -> PureState:
    """Encoded block with the qubit atom flipped (g <-> e)."""
    a, b = ab(alpha_sq)
    v = a * product_state([KG, PLUS, PLUS, KG, photon(0), photon(0)]).amplitudes \
        + b * product_state([KE, MINUS, MINUS, KG, photon(1), photon(0)]).amplitudes
    return PureState(v)


def eq22(alpha_sq: float) -> PureState:
    """Decoded flipped branch: (alpha |0,g> - beta |1,e>) |+,+,0>."""
    a, b = ab(alpha_sq)
    v = a * product_state([KG, PLUS, PLUS, KG, photon(0), photon(0)]).amplitudes \
        - b * product_state([KG, PLUS, PLUS, KE, photon(1), photon(0)]).amplitudes
    return PureState(v)


def eq23(alpha_sq: float) -> PureState:
    """Corrected final state, ancillas collapsed to |+,+>."""
    a, b = ab(alpha_sq)
    v = a * product_state([KG, PLUS, PLUS, KE, photon(0), photon(0)]).amplitudes \
        + b * product_state([KG, PLUS, PLUS, KG, photon(1), photon(0)]).amplitudes
    return PureState(v)


def phase_align(got: PureState, want: PureState) -> np.ndarray:
    """Amplitudes of ``got`` rotated so its largest-|want| component matches."""
    w = want.amplitudes
    k = int(np.argmax(np.abs(w)))
    g = got.amplitudes
    if abs(g[k]) < 1e-14:
        return g
    return g * (w[k] / g[k]) * (abs(g[k]) / abs(w[k]))


def assert_states_close(got: PureState, want: PureState, tol: float = 1e-10):
    """Amplitude-by-amplitude match after factoring out one global phase."""
    aligned = phase_align(got, want)
    err = float(np.max(np.abs(aligned - want.amplitudes)))
    assert err < tol, f"state mismatch: max amplitude error {err:.3e}"


@pytest.fixture
def rng():
    return np.random.default_rng(123)
