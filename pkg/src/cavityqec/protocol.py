"""The four-step error-correction script.

1.  *Preparation.*  A1 enters C1 in |e> and a resonant pulse of angle
    theta = 2 arccos|alpha| leaves the qubit alpha |e,0> + beta |g,1>
    stored jointly in the atom and the cavity.
2.  *Encoding.*  A pi/2 pulse in R1 puts each ancilla (A2, A3) into
    |+> = (|i> + |g>)/sqrt(2); a full 2pi vacuum Rabi cycle in C1 then
    imprints the conditional sign |1, g> -> -|1, g>, entangling the
    ancillas with the stored qubit.
3.  *Noisy channel.*  In R2 a pi/2 pulse moves the qubit into its own
    +/- basis, a random quadratic-Stark phase kicks all three encoded
    atoms, and the inverse pi/2 pulse returns the qubit basis.  Level
    phase shifts thus become bit-flip errors in the +/- encoding.
4.  *Decoding and correction.*  In C2, a pi pulse transfers the qubit
    from A1 to the cavity, 2pi cycles decouple the ancillas, and a pi
    pulse loads the qubit onto A4.  Measuring the ancillas in the +/-
    basis yields the syndrome; (+,+) triggers a feedback pi flip on A4,
    and an unconditional 2pi pulse fixes the deterministic sign left by
    the pulse sequence.

Pulse-axis conventions are fixed so every intermediate state of the
sequence is reproduced with real amplitudes and the documented signs;
see the axis constants below.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Iterable, Sequence

import numpy as np
from numpy.polynomial.legendre import leggauss

from . import dynamics, trajectory
from .dynamics import ENVELOPE, INSTANTANEOUS, JCPulse, RamseyPulse, StarkKick
from .hilbert import (
    LEVEL_E,
    LEVEL_G,
    LEVEL_I,
    PureState,
    basis_state,
    embed_atom_op,
    reduced_density,
)
from .trajectory import (
    CorrectionEvent,
    DecayEvent,
    EnsembleStats,
    GateEvent,
    MeasureEvent,
    NoiseConfig,
    NoiseKickEvent,
    Schedule,
)

# Ramsey-axis choices that reproduce the protocol's stated mappings:
# ancilla preparation sends |i> -> (|i>+|g>)/sqrt2, the channel sandwich
# sends |e> -> (|g>+|e>)/sqrt2 and |g> -> (|g>-|e>)/sqrt2.
AXIS_ANCILLA_PREP = math.pi / 2
AXIS_QUBIT_SANDWICH = -math.pi / 2
AXIS_FEEDBACK = 0.0

_SQRT2 = math.sqrt(2.0)
_BETAS = dynamics.normalized_level_shifts()


@dataclass(frozen=True)
class Syndrome:
    """Measured (A2, A3) outcomes in the (|i> +/- |g>)/sqrt2 basis."""

    a2: str
    a3: str

    def __post_init__(self):
        if self.a2 not in "+-" or self.a3 not in "+-":
            raise ValueError(f"outcomes must be '+' or '-', got {self}")

    @property
    def key(self) -> str:
        return trajectory.SYNDROME_KEYS[(self.a2, self.a3)]

    def as_tuple(self) -> tuple[str, str]:
        return (self.a2, self.a3)


NO_ERROR = Syndrome("-", "-")
QUBIT_FLIP = Syndrome("+", "+")


@dataclass(frozen=True)
class TimingConfig:
    """Event timetable (microseconds).

    Atom k enters the apparatus at (k-1) * stagger; its five zones
    (R1, C1, R2, C2, R3) sit at entry + (j + 0.5) * zone_step, and it is
    detected at entry + measure_offset.  The default reproduces the
    15 cm / 500 m/s geometry: 300 us between successive atoms at each
    zone and a 1.2 ms total for four atoms.  ``window`` is the gate
    duration used by envelope mode.
    """

    stagger_us: float = 300.0
    zone_step_us: float = 60.0
    window_us: float = 20.0
    measure_offset_us: float = 330.0

    def __post_init__(self):
        if min(self.stagger_us, self.zone_step_us, self.window_us,
               self.measure_offset_us) <= 0:
            raise ValueError("all timing parameters must be positive")

    def entry(self, atom: int) -> float:
        return (atom - 1) * self.stagger_us * 1e-6

    def zone(self, atom: int, zone_index: int) -> float:
        """Seconds at which ``atom`` crosses zone 0..4 (R1,C1,R2,C2,R3)."""
        return self.entry(atom) + (zone_index + 0.5) * self.zone_step_us * 1e-6

    def measure_time(self, atom: int) -> float:
        return self.entry(atom) + self.measure_offset_us * 1e-6

    @property
    def total(self) -> float:
        return 4 * self.stagger_us * 1e-6

    @classmethod
    def compressed(cls) -> "TimingConfig":
        """Short-exposure timetable: decay acts only on the scale of the
        interaction windows, matching the regime where decay competes with
        ~20 us interaction times rather than with the full transit."""
        return cls(stagger_us=20.0, zone_step_us=4.0, window_us=3.0,
                   measure_offset_us=22.0)


# zone indices
_R1, _C1, _R2, _C2, _R3 = range(5)


@dataclass(frozen=True)
class ProtocolConfig:
    """Full run description: initial qubit, noise, timing and execution."""

    alpha: complex = math.sqrt(0.7)
    beta: complex = math.sqrt(0.3)
    phi_max: float = 0.0
    correction_enabled: bool = True
    t_cav: float = 0.100          # seconds
    t_atom: float = 0.030         # seconds
    shared_phi: bool = True
    gate_mode: str = INSTANTANEOUS
    timing: TimingConfig = field(default_factory=TimingConfig)
    beta_i: float = _BETAS[0]
    beta_g: float = _BETAS[1]
    beta_e: float = _BETAS[2]
    v_mps: float = 500.0
    w0_m: float = 6e-3
    n_traj: int = 1000
    master_seed: int = 2024
    workers: int = 1

    def __post_init__(self):
        nrm = abs(self.alpha) ** 2 + abs(self.beta) ** 2
        if abs(nrm - 1.0) > 1e-12:
            raise ValueError(f"|alpha|^2 + |beta|^2 = {nrm}, must be 1")
        if self.phi_max < 0:
            raise ValueError("phi_max must be nonnegative")
        if self.gate_mode not in (INSTANTANEOUS, ENVELOPE):
            raise ValueError(f"unknown gate mode {self.gate_mode!r}")

    def noise(self) -> NoiseConfig:
        return NoiseConfig(phi_max=self.phi_max, t_cav=self.t_cav,
                           t_atom=self.t_atom, shared_phi=self.shared_phi,
                           beta_i=self.beta_i, beta_g=self.beta_g,
                           beta_e=self.beta_e)

    @classmethod
    def from_alpha_sq(cls, alpha_sq: float, **kw) -> "ProtocolConfig":
        if not 0.0 <= alpha_sq <= 1.0:
            raise ValueError(f"alpha_sq must lie in [0, 1], got {alpha_sq}")
        return cls(alpha=math.sqrt(alpha_sq), beta=math.sqrt(1.0 - alpha_sq),
                   **kw)


def initial_state() -> PureState:
    """A1 in |e>, ancillas in |i>, A4 in |g>, both cavities in vacuum."""
    return basis_state(LEVEL_E, LEVEL_I, LEVEL_I, LEVEL_G, 0, 0)


# ---------------------------------------------------------------------------
# Gate sequences (shared by the state transformers and the schedule builder)
# ---------------------------------------------------------------------------

def _phase_imprint(alpha: complex, beta: complex) -> StarkKick | None:
    """Deterministic level phases on A1 realizing complex (alpha, beta)."""
    pa, pb = np.angle(alpha), np.angle(beta)
    if pa == 0.0 and pb == 0.0:
        return None
    # e carries arg(alpha), g carries arg(beta); i unused on A1
    return StarkKick(atoms=(1,), phi=1.0, beta_i=0.0, beta_g=-pb, beta_e=-pa)


def gates_prepare(alpha: complex, beta: complex) -> list:
    theta = 2.0 * math.acos(min(1.0, abs(alpha)))
    gates = [JCPulse(atom=1, cavity=1, rabi_angle=theta)]
    imprint = _phase_imprint(alpha, beta)
    if imprint is not None:
        gates.append(imprint)
    return gates


def gates_encode() -> list:
    return [
        RamseyPulse(2, "ig", math.pi / 2, AXIS_ANCILLA_PREP),
        RamseyPulse(3, "ig", math.pi / 2, AXIS_ANCILLA_PREP),
        JCPulse(atom=2, cavity=1, rabi_angle=2 * math.pi),
        JCPulse(atom=3, cavity=1, rabi_angle=2 * math.pi),
    ]


def channel_sandwich() -> tuple[RamseyPulse, RamseyPulse]:
    fwd = RamseyPulse(1, "ge", math.pi / 2, AXIS_QUBIT_SANDWICH)
    return fwd, dynamics.ramsey_inverse(fwd)


def gates_decode() -> list:
    return [
        JCPulse(atom=1, cavity=2, rabi_angle=math.pi),
        JCPulse(atom=2, cavity=2, rabi_angle=2 * math.pi),
        JCPulse(atom=3, cavity=2, rabi_angle=2 * math.pi),
        JCPulse(atom=4, cavity=2, rabi_angle=math.pi),
    ]


def _apply_gates(psi: PureState, gates: Iterable) -> PureState:
    for g in gates:
        if isinstance(g, JCPulse):
            psi = dynamics.jc_apply(psi, g)
        elif isinstance(g, RamseyPulse):
            psi = dynamics.ramsey_apply(psi, g)
        elif isinstance(g, StarkKick):
            psi = dynamics.stark_kick_apply(psi, g)
        else:
            raise TypeError(f"unknown gate {g!r}")
    return psi


# ---------------------------------------------------------------------------
# Decay-free step transformers
# ---------------------------------------------------------------------------

def prepare_qubit(cfg: ProtocolConfig) -> PureState:
    """State of the loaded qubit, alpha |e,0> + beta |g,1> on (A1, C1)."""
    return _apply_gates(initial_state(), gates_prepare(cfg.alpha, cfg.beta))


def encode(psi: PureState) -> PureState:
    """Entangle the ancillas: alpha |e,+,+,0> + beta |g,-,-,1>."""
    return _apply_gates(psi, gates_encode())


def noisy_channel(psi: PureState, phi: float,
                  betas: tuple[float, float, float] | None = None) -> PureState:
    """pi/2 sandwich on A1 around a Stark kick of phase ``phi`` on A1-A3."""
    if phi < 0:
        raise ValueError("phi must be nonnegative")
    b = betas if betas is not None else _BETAS
    fwd, inv = channel_sandwich()
    kick = StarkKick(atoms=(1, 2, 3), phi=phi,
                     beta_i=b[0], beta_g=b[1], beta_e=b[2])
    return _apply_gates(psi, [fwd, kick, inv])


def decode(psi: PureState) -> PureState:
    """Transfer the qubit to (C1, A4) and decouple the ancillas."""
    return _apply_gates(psi, gates_decode())


def inject_flip(psi: PureState, atom: int) -> PureState:
    """Deterministic bit flip in the atom's +/- encoding (test hook).

    For the ancillas (A2, A3) the +/- basis lives on (i, g), so the flip
    is the level-phase operator diag(1, -1, 1); at the post-encode point
    A1 carries the qubit on (g, e), where the +/- flip is the g <-> e
    exchange.
    """
    if atom == 1:
        m = np.zeros((3, 3), dtype=np.complex128)
        m[LEVEL_I, LEVEL_I] = 1.0
        m[LEVEL_G, LEVEL_E] = 1.0
        m[LEVEL_E, LEVEL_G] = 1.0
    elif atom in (2, 3):
        m = np.diag([1.0, -1.0, 1.0]).astype(np.complex128)
    else:
        raise ValueError("flips are injected on A1, A2 or A3 only")
    return embed_atom_op(atom, m) @ psi


# ---------------------------------------------------------------------------
# Measurement, correction, fidelity
# ---------------------------------------------------------------------------

def _pm_projector(atom: int, sign: str):
    v = np.zeros(3, dtype=np.complex128)
    v[LEVEL_I] = 1 / _SQRT2
    v[LEVEL_G] = (1 if sign == "+" else -1) / _SQRT2
    return embed_atom_op(atom, np.outer(v, v.conj()))


def syndrome_branches(psi: PureState) -> list[tuple[Syndrome, float, PureState]]:
    """All four measurement branches with their Born probabilities.

    Deterministic companion of :func:`measure_syndrome`; probabilities sum
    to the squared norm of the input.
    """
    out = []
    for s2 in "+-":
        p2 = _pm_projector(2, s2) @ psi
        for s3 in "+-":
            br = _pm_projector(3, s3) @ p2
            p = br.norm ** 2
            state = br.normalized() if p > 1e-14 else br
            out.append((Syndrome(s2, s3), p, state))
    return out


def measure_syndrome(psi: PureState, rng) -> tuple[Syndrome, PureState]:
    """Projective +/- measurement of A2 then A3, sampled by the Born rule."""
    outcomes = []
    for atom in (2, 3):
        p_plus = (_pm_projector(atom, "+") @ psi).norm ** 2
        p_minus = (_pm_projector(atom, "-") @ psi).norm ** 2
        pick = "+" if rng.random() * (p_plus + p_minus) < p_plus else "-"
        psi = (_pm_projector(atom, pick) @ psi).normalized()
        outcomes.append(pick)
    return Syndrome(*outcomes), psi


def correct(psi: PureState, syndrome: Syndrome,
            correction_enabled: bool = True) -> PureState:
    """Feedback stage in R3.

    The 2pi phase pulse on A4 (i <-> g) is unconditional: it removes the
    deterministic relative sign left by the pulse sequence and is applied
    in the uncorrected variant too.  Only the feedback pi flip on (g, e)
    is withheld when correction is disabled, and it fires only on the
    (+,+) syndrome.
    """
    if correction_enabled and syndrome == QUBIT_FLIP:
        psi = dynamics.ramsey_apply(
            psi, RamseyPulse(4, "ge", math.pi, AXIS_FEEDBACK))
    return dynamics.ramsey_apply(psi, RamseyPulse(4, "ig", 2 * math.pi, 0.0))


def target_state(alpha: complex, beta: complex) -> np.ndarray:
    """Recovered-qubit target alpha |0_C1, e_A4> + beta |1_C1, g_A4> as a
    6-vector on (C1, A4) with index n1 * 3 + a4."""
    t = np.zeros(6, dtype=np.complex128)
    t[0 * 3 + LEVEL_E] = alpha
    t[1 * 3 + LEVEL_G] = beta
    return t


def overlap_with_target(psi: PureState, alpha: complex, beta: complex) -> float:
    """<t| rho^(C1,A4) |t> of one final state."""
    rho = reduced_density(psi, ("C1", "A4"))
    t = target_state(alpha, beta)
    return float(np.real(t.conj() @ rho @ t))


def fidelity(final_states: Sequence[PureState], alpha: complex,
             beta: complex) -> float:
    """Ensemble fidelity F = sqrt(mean_j <t| rho_j |t>) on (C1, A4)."""
    states = list(final_states)
    if not states:
        raise ValueError("fidelity of an empty ensemble is undefined")
    return math.sqrt(
        sum(overlap_with_target(s, alpha, beta) for s in states) / len(states))


# ---------------------------------------------------------------------------
# Schedule construction and ensemble execution
# ---------------------------------------------------------------------------

def _timed_gates(cfg: ProtocolConfig) -> list[tuple[float, object]]:
    tm = cfg.timing
    fwd, inv = channel_sandwich()
    half_window = 0.5 * tm.window_us * 1e-6
    timed: list[tuple[float, object]] = []
    for g in gates_prepare(cfg.alpha, cfg.beta):
        timed.append((tm.zone(1, _C1), g))
    prep_pulses, cavity_cycles = gates_encode()[:2], gates_encode()[2:]
    timed.append((tm.zone(2, _R1), prep_pulses[0]))
    timed.append((tm.zone(3, _R1), prep_pulses[1]))
    timed.append((tm.zone(2, _C1), cavity_cycles[0]))
    timed.append((tm.zone(3, _C1), cavity_cycles[1]))
    # noisy channel: sandwich pulses at A1's R2 crossing, one shared-phase
    # kick event per encoded atom at its own R2 crossing
    timed.append((tm.zone(1, _R2), fwd))
    for atom in (1, 2, 3):
        timed.append((tm.zone(atom, _R2), NoiseKickEvent(tm.zone(atom, _R2),
                                                         (atom,))))
    timed.append((tm.zone(1, _R2), inv))
    d1, d2, d3, d4 = gates_decode()
    timed.append((tm.zone(1, _C2), d1))
    timed.append((tm.zone(2, _C2), d2))
    timed.append((tm.zone(3, _C2), d3))
    timed.append((tm.zone(4, _C2), d4))
    timed.append((tm.measure_time(2), MeasureEvent(tm.measure_time(2), 2)))
    timed.append((tm.measure_time(3), MeasureEvent(tm.measure_time(3), 3)))
    timed.append((tm.zone(4, _R3),
                  CorrectionEvent(tm.zone(4, _R3), cfg.correction_enabled)))
    timed.sort(key=lambda tg: tg[0])
    # keep the sandwich ordering at A1's R2 crossing: fwd, kick(A1), inv
    if cfg.gate_mode == ENVELOPE:
        for i, (t, g) in enumerate(timed):
            if isinstance(g, JCPulse):
                timed[i] = (t, replace(g, mode=ENVELOPE,
                                       duration=2 * half_window))
    return timed


def build_schedule(cfg: ProtocolConfig) -> Schedule:
    """Timed event list with explicit decay stretches filling every gap."""
    timed = _timed_gates(cfg)
    events: list = []
    clock = 0.0
    half_window = 0.5 * cfg.timing.window_us * 1e-6
    for t, g in timed:
        lead = t - clock
        if isinstance(g, JCPulse) and g.mode == ENVELOPE:
            lead -= half_window
        if lead < -1e-12:
            raise ValueError("gate windows overlap; widen the timetable")
        if lead > 1e-15:
            events.append(DecayEvent(lead))
            clock += lead
        if isinstance(g, (NoiseKickEvent, MeasureEvent, CorrectionEvent)):
            events.append(g)
        else:
            events.append(GateEvent(t, g))
        if isinstance(g, JCPulse) and g.mode == ENVELOPE:
            clock += 2 * half_window
    total = max(cfg.timing.total, clock)
    if total - clock > 1e-15:
        events.append(DecayEvent(total - clock))
    return Schedule(initial_state=initial_state(), events=tuple(events),
                    total_duration=total, beam_velocity=cfg.v_mps,
                    beam_waist=cfg.w0_m)


def run_protocol(cfg: ProtocolConfig) -> tuple[EnsembleStats, EnsembleStats]:
    """Paired corrected/uncorrected ensembles.

    Both variants are evaluated on every trajectory from identical seeds
    and identical phase draws (they share the entire history through the
    syndrome measurement), so the returned pair is directly comparable
    point by point.
    """
    stats = run_paired_ensemble(cfg)
    return stats, replace(
        stats,
        fidelity_corrected=stats.fidelity_uncorrected,
        stderr_corrected=stats.stderr_uncorrected,
    )


def run_paired_ensemble(cfg: ProtocolConfig, record_log=None) -> EnsembleStats:
    """One ensemble pass returning both fidelities in a single stats object."""
    sched = build_schedule(cfg)
    return trajectory.run_ensemble(
        sched, cfg.noise(), cfg.n_traj, cfg.master_seed,
        target=target_state(cfg.alpha, cfg.beta),
        workers=cfg.workers, record_log=record_log)


# ---------------------------------------------------------------------------
# Deterministic oracle: exact decay-free average over the phase distribution
# ---------------------------------------------------------------------------

def exact_fidelity_at_phi(cfg: ProtocolConfig, phi: float):
    """Decay-free squared fidelities at a fixed noise phase.

    Enumerates the four measurement branches instead of sampling them:
    returns (f2_corrected, f2_uncorrected, probabilities-by-syndrome-key).
    """
    psi = decode(noisy_channel(encode(prepare_qubit(cfg)), phi,
                               (cfg.beta_i, cfg.beta_g, cfg.beta_e)))
    f2c = f2u = 0.0
    probs = {}
    for syn, p, branch in syndrome_branches(psi):
        probs[syn.key] = p
        if p <= 1e-14:
            continue
        f2c += p * overlap_with_target(correct(branch, syn, True),
                                       cfg.alpha, cfg.beta)
        f2u += p * overlap_with_target(correct(branch, syn, False),
                                       cfg.alpha, cfg.beta)
    return f2c, f2u, probs


def exact_average_fidelity(cfg: ProtocolConfig, phi_max: float,
                           n_quad: int = 160) -> tuple[float, float]:
    """Gauss-Legendre average of the exact single-run overlap over
    phi ~ U[0, phi_max]; the independent check for the Monte Carlo path."""
    if phi_max < 0:
        raise ValueError("phi_max must be nonnegative")
    if phi_max == 0.0:
        f2c, f2u, _ = exact_fidelity_at_phi(cfg, 0.0)
        return math.sqrt(f2c), math.sqrt(f2u)
    x, w = leggauss(n_quad)
    phis = 0.5 * phi_max * (x + 1.0)
    weights = 0.5 * w  # normalized: sum = 1
    f2c = f2u = 0.0
    for p, wt in zip(phis, weights):
        a, b, _ = exact_fidelity_at_phi(cfg, p)
        f2c += wt * a
        f2u += wt * b
    return math.sqrt(f2c), math.sqrt(f2u)
