"""Monte Carlo wave-function engine.

Between gates the protocol Hamiltonian vanishes, so a trajectory evolves
under the effective non-Hermitian Hamiltonian -(i/2) sum_k L_k^dag L_k,
which is diagonal in the computational basis for the lowering-type jump
channels used here (cavity photon loss, atomic ladder decay).  The
no-jump propagator is therefore an exact elementwise exponential; jump
times are located by the norm-threshold method (draw u ~ U(0,1), jump
when the squared norm first crosses u, with the crossing bracketed by a
root find), the jump channel is selected proportionally to its rate times
occupation, and the state is renormalized after each jump.

Reproducibility: a trajectory is a pure function of (schedule, noise,
seed).  Ensembles derive per-trajectory seeds from the master seed and
the trajectory index only, so results are independent of worker count and
scheduling order.
"""

from __future__ import annotations

import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np
import scipy.sparse as sp
from scipy.optimize import brentq

from . import dynamics
from .hilbert import (
    DIM,
    LEVEL_E,
    LEVEL_G,
    LEVEL_I,
    LinearOperator,
    PureState,
    STRIDES,
    _DIGITS,
    _IDX,
    embed_atom_op,
    embed_cavity_op,
    subsystem_index,
)

_SQRT2 = math.sqrt(2.0)

SYNDROME_KEYS = {("-", "-"): "mm", ("+", "-"): "pm",
                 ("-", "+"): "mp", ("+", "+"): "pp"}

_DEFAULT_BETAS = dynamics.normalized_level_shifts()


@dataclass(frozen=True)
class NoiseConfig:
    """Stark-noise and decay parameters.

    Lifetimes are in seconds; ``math.inf`` disables a decay family.
    ``shared_phi`` draws one random phase per trajectory for all kicked
    atoms (a single field pulse); the independent mode draws one phase
    per kick event.
    """

    phi_max: float = 0.0
    t_cav: float = math.inf
    t_atom: float = math.inf
    shared_phi: bool = True
    beta_i: float = _DEFAULT_BETAS[0]
    beta_g: float = _DEFAULT_BETAS[1]
    beta_e: float = _DEFAULT_BETAS[2]

    def __post_init__(self):
        if self.phi_max < 0:
            raise ValueError("phi_max must be nonnegative")
        for name, t in (("t_cav", self.t_cav), ("t_atom", self.t_atom)):
            if not (t > 0):
                raise ValueError(f"{name} must be positive or infinite, got {t}")

    @property
    def betas(self) -> tuple[float, float, float]:
        return (self.beta_i, self.beta_g, self.beta_e)


@dataclass(frozen=True)
class JumpChannel:
    """One dissipation channel: jump operator sqrt(rate) * operator."""

    operator: LinearOperator
    rate: float
    label: str
    occupancy: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.rate < 0:
            raise ValueError("rate must be nonnegative")
        m = self.operator.matrix
        prod = (m.getH() @ m).tocsr()
        occ = np.asarray(prod.diagonal().real)
        off = prod - sp.diags(prod.diagonal())
        if off.nnz and np.max(np.abs(off.data)) > 1e-12:
            raise ValueError("engine requires channels with diagonal L^dag L")
        occ = occ.copy()
        occ.flags.writeable = False
        object.__setattr__(self, "occupancy", occ)


def build_jump_channels(cfg: NoiseConfig) -> list[JumpChannel]:
    """Photon loss for both cavities plus two-step ladder decay
    (e -> g, g -> i) for all four atoms; empty for an ideal apparatus."""
    chans: list[JumpChannel] = []
    lower = np.array([[0, 1], [0, 0]], dtype=np.complex128)
    if math.isfinite(cfg.t_cav):
        for c in (1, 2):
            chans.append(JumpChannel(embed_cavity_op(c, lower),
                                     1.0 / cfg.t_cav, f"C{c}:loss"))
    if math.isfinite(cfg.t_atom):
        eg = np.zeros((3, 3), dtype=np.complex128)
        eg[LEVEL_G, LEVEL_E] = 1.0
        gi = np.zeros((3, 3), dtype=np.complex128)
        gi[LEVEL_I, LEVEL_G] = 1.0
        for a in (1, 2, 3, 4):
            chans.append(JumpChannel(embed_atom_op(a, eg),
                                     1.0 / cfg.t_atom, f"A{a}:e->g"))
            chans.append(JumpChannel(embed_atom_op(a, gi),
                                     1.0 / cfg.t_atom, f"A{a}:g->i"))
    return chans


class _ChannelSet:
    """Precomputed decay data shared by all trajectories of an ensemble."""

    __slots__ = ("channels", "weight", "mats", "rates", "occs", "labels")

    def __init__(self, channels: Sequence[JumpChannel]):
        self.channels = tuple(channels)
        self.weight = np.zeros(DIM)
        for ch in self.channels:
            self.weight += ch.rate * ch.occupancy
        self.mats = [ch.operator.matrix for ch in self.channels]
        self.rates = np.array([ch.rate for ch in self.channels])
        self.occs = [ch.occupancy for ch in self.channels]
        self.labels = [ch.label for ch in self.channels]


def _decay_arr(a: np.ndarray, dt: float, chans: _ChannelSet, rng,
               t_start: float, jumps: list) -> np.ndarray:
    """Norm-threshold MCWF over one field-free interval; returns a
    renormalized array."""
    if not chans.channels or dt <= 0:
        return a
    w = chans.weight
    remaining = dt
    u = rng.random()
    while True:
        p2 = np.abs(a) ** 2
        n_end = float(p2 @ np.exp(-w * remaining))
        if n_end >= u:
            a = a * np.exp(-w * (remaining / 2))
            break
        t_jump = brentq(lambda t: float(p2 @ np.exp(-w * t)) - u,
                        0.0, remaining, xtol=1e-18)
        a = a * np.exp(-w * (t_jump / 2))
        p2j = np.abs(a) ** 2
        weights = np.array([r * float(o @ p2j)
                            for r, o in zip(chans.rates, chans.occs)])
        pick = int(np.searchsorted(np.cumsum(weights),
                                   rng.random() * weights.sum()))
        pick = min(pick, len(chans.mats) - 1)
        a = chans.mats[pick] @ a
        a = a / np.linalg.norm(a)
        jumps.append((t_start + (dt - remaining) + t_jump, chans.labels[pick]))
        remaining -= t_jump
        u = rng.random()
        if remaining <= 0:
            break
    nrm = np.linalg.norm(a)
    return a / nrm if nrm > 0 else a


def decay_interval(psi: PureState, dt: float,
                   channels: Sequence[JumpChannel], rng) -> PureState:
    """Evolve a state through a gate-free interval with quantum jumps."""
    if dt < 0:
        raise ValueError("dt must be nonnegative")
    jumps: list = []
    a = _decay_arr(psi.amplitudes.copy(), dt, _ChannelSet(channels), rng,
                   0.0, jumps)
    return PureState(a, copy=False)


# ---------------------------------------------------------------------------
# Schedules
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class GateEvent:
    time: float
    pulse: object  # JCPulse | RamseyPulse | StarkKick


@dataclass(frozen=True)
class NoiseKickEvent:
    """Stark kick whose phase is drawn per trajectory."""

    time: float
    atoms: tuple[int, ...]


@dataclass(frozen=True)
class DecayEvent:
    duration: float


@dataclass(frozen=True)
class MeasureEvent:
    """Projective measurement of one atom in the (|i> +/- |g>)/sqrt(2) basis."""

    time: float
    atom: int


@dataclass(frozen=True)
class CorrectionEvent:
    """Syndrome-conditioned feedback flip plus the unconditional phase fix."""

    time: float
    enabled: bool = True


@dataclass(frozen=True)
class Schedule:
    """Timed event sequence interpreted by the trajectory engine."""

    initial_state: PureState
    events: tuple
    total_duration: float
    beam_velocity: float = 500.0   # m/s, envelope-mode coupling profile
    beam_waist: float = 6e-3       # m

    def __post_init__(self):
        last = 0.0
        for ev in self.events:
            t = getattr(ev, "time", None)
            if t is None:
                continue
            if t < last - 1e-15:
                raise ValueError("event times must be nondecreasing")
            last = t
        if self.total_duration < last - 1e-15:
            raise ValueError("total_duration shorter than the last event")


@dataclass(frozen=True)
class TrajectoryRecord:
    final_state: PureState
    jumps: tuple
    syndrome: tuple[str, str] | None
    phi_drawn: float
    rng_seed: int
    phis: tuple[float, ...] = ()


@dataclass(frozen=True)
class EnsembleStats:
    """Trajectory-averaged fidelities of the paired corrected/uncorrected run."""

    n_traj: int
    fidelity_corrected: float
    fidelity_uncorrected: float
    stderr_corrected: float
    stderr_uncorrected: float
    syndrome_counts: dict


# --- compiled form ----------------------------------------------------------

_PHASE_FIX_DIAG = None
_FEEDBACK_MAT = None


def _correction_ops():
    """Feedback pi flip (g<->e) and 2pi phase pulse (i,g -> -1) on A4."""
    global _PHASE_FIX_DIAG, _FEEDBACK_MAT
    if _PHASE_FIX_DIAG is None:
        d = np.where(_DIGITS[3] == LEVEL_E, 1.0, -1.0).astype(np.complex128)
        d.flags.writeable = False
        _PHASE_FIX_DIAG = d
        _FEEDBACK_MAT = dynamics.ramsey_unitary(4, "ge", math.pi, 0.0).matrix
    return _FEEDBACK_MAT, _PHASE_FIX_DIAG


def _measure_indices(atom: int):
    k = atom - 1
    idx_i = _IDX[_DIGITS[k] == LEVEL_I]
    return idx_i, idx_i + STRIDES[k], idx_i + 2 * STRIDES[k]


class _Compiled:
    """Schedule lowered to array operations, split at the correction event."""

    __slots__ = ("pre", "tail", "chans", "n_kicks", "initial", "enabled")

    def __init__(self, schedule: Schedule, noise: NoiseConfig):
        self.chans = _ChannelSet(build_jump_channels(noise))
        self.initial = schedule.initial_state.amplitudes
        self.enabled = True
        items = []
        clock = 0.0
        for ev in schedule.events:
            if isinstance(ev, DecayEvent):
                items.append(("decay", ev.duration, clock))
                clock += ev.duration
            elif isinstance(ev, GateEvent):
                items.append(self._compile_gate(ev, schedule))
            elif isinstance(ev, NoiseKickEvent):
                expo = dynamics.stark_phase_exponent(ev.atoms, noise.betas)
                items.append(("noise_kick", expo))
            elif isinstance(ev, MeasureEvent):
                items.append(("measure", ev.atom, *_measure_indices(ev.atom)))
            elif isinstance(ev, CorrectionEvent):
                self.enabled = ev.enabled
                items.append(("correction",) + _correction_ops()
                             + (ev.enabled,))
            else:
                raise ValueError(f"unknown event {ev!r}")
        split = next((i for i, it in enumerate(items) if it[0] == "correction"),
                     len(items) - 1)
        self.pre = items[: split + 1]
        self.tail = items[split + 1:]
        self.n_kicks = sum(1 for it in items if it[0] == "noise_kick")

    @staticmethod
    def _compile_gate(ev: GateEvent, schedule: Schedule):
        p = ev.pulse
        if isinstance(p, dynamics.JCPulse):
            if p.mode == dynamics.ENVELOPE:
                omega0 = dynamics.omega0_for_angle(
                    p.rabi_angle, p.duration, schedule.beam_velocity,
                    schedule.beam_waist)
                gen = dynamics.jc_generator(p.atom, p.cavity).matrix
                return ("jc_envelope", gen, omega0, p.duration,
                        schedule.beam_velocity, schedule.beam_waist,
                        ev.time - p.duration / 2)
            return ("unitary", dynamics.jc_unitary(p.atom, p.cavity,
                                                   p.rabi_angle).matrix)
        if isinstance(p, dynamics.RamseyPulse):
            return ("unitary", dynamics.ramsey_unitary(
                p.atom, p.transition, p.area, p.axis_phase).matrix)
        if isinstance(p, dynamics.StarkKick):
            expo = dynamics.stark_phase_exponent(
                tuple(p.atoms), (p.beta_i, p.beta_g, p.beta_e))
            return ("diag", np.exp(-1j * p.phi * expo))
        raise ValueError(f"unknown pulse {p!r}")


def _measure_arr(a, idx_i, idx_g, idx_e, rng):
    si, sg = a[idx_i], a[idx_g]
    plus = (si + sg) / _SQRT2
    minus = (si - sg) / _SQRT2
    p_plus = float(np.sum(np.abs(plus) ** 2))
    p_minus = float(np.sum(np.abs(minus) ** 2))
    total = p_plus + p_minus
    if rng.random() * total < p_plus:
        outcome, amp, sign = "+", plus, 1.0
    else:
        outcome, amp, sign = "-", minus, -1.0
    a[idx_i] = amp / _SQRT2
    a[idx_g] = sign * amp / _SQRT2
    a[idx_e] = 0.0
    a /= np.linalg.norm(a)
    return outcome


def _jc_envelope_arr(a, item, chans: _ChannelSet, rng, jumps):
    _, gen, omega0, duration, v, w0, t_abs0 = item
    n = 2000
    dt = duration / n
    damped = bool(chans.channels)
    w = chans.weight
    u = rng.random() if damped else 1.0
    t = -duration / 2

    def deriv(tt, vec):
        out = dynamics.gaussian_coupling(tt, omega0, v, w0) * 0.5 * (gen @ vec)
        if damped:
            out = out - 0.5 * w * vec
        return out

    for step in range(n):
        k1 = deriv(t, a)
        k2 = deriv(t + dt / 2, a + dt / 2 * k1)
        k3 = deriv(t + dt / 2, a + dt / 2 * k2)
        k4 = deriv(t + dt, a + dt * k3)
        a = a + dt / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        t += dt
        if damped and float(np.sum(np.abs(a) ** 2)) < u:
            p2 = np.abs(a) ** 2
            weights = np.array([r * float(o @ p2)
                                for r, o in zip(chans.rates, chans.occs)])
            pick = int(np.searchsorted(np.cumsum(weights),
                                       rng.random() * weights.sum()))
            pick = min(pick, len(chans.mats) - 1)
            a = chans.mats[pick] @ a
            a = a / np.linalg.norm(a)
            jumps.append((t_abs0 + (step + 1) * dt, chans.labels[pick]))
            u = rng.random()
    nrm = np.linalg.norm(a)
    return a / nrm if nrm > 0 else a


def _run_items(a, items, chans, rng, jumps, outcomes, phis, branch_states):
    """Advance a through compiled items; at the correction item, store both
    the fed-back and plain branch states in ``branch_states``."""
    kick_i = 0
    for item in items:
        kind = item[0]
        if kind == "decay":
            a = _decay_arr(a, item[1], chans, rng, item[2], jumps)
        elif kind == "unitary":
            a = item[1] @ a
        elif kind == "diag":
            a = item[1] * a
        elif kind == "noise_kick":
            a = np.exp(-1j * phis[min(kick_i, len(phis) - 1)] * item[1]) * a
            kick_i += 1
        elif kind == "measure":
            outcomes[item[1]] = _measure_arr(a, item[2], item[3], item[4], rng)
        elif kind == "jc_envelope":
            a = _jc_envelope_arr(a, item, chans, rng, jumps)
        elif kind == "correction":
            _, feedback, phase_fix, enabled = item
            syn = (outcomes.get(2), outcomes.get(3))
            corr = a.copy()
            if enabled and syn == ("+", "+"):
                corr = feedback @ corr
            branch_states.append(phase_fix * corr)   # corrected branch
            branch_states.append(phase_fix * a)      # uncorrected branch
            return None
    return a


def _clone_rng(rng) -> np.random.Generator:
    bg = np.random.PCG64()
    bg.state = rng.bit_generator.state
    return np.random.Generator(bg)


def _run_single(comp: _Compiled, noise: NoiseConfig, seed: int):
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed)))
    if noise.shared_phi:
        phis = (rng.random() * noise.phi_max,) * max(comp.n_kicks, 1)
    else:
        phis = tuple(rng.random() * noise.phi_max
                     for _ in range(max(comp.n_kicks, 1)))
    jumps: list = []
    outcomes: dict = {}
    branch: list = []
    a = comp.initial.copy()
    out = _run_items(a, comp.pre, comp.chans, rng, jumps, outcomes, phis, branch)
    if branch:
        # the uncorrected variant replays the identical stream past the
        # correction point, so trajectories without feedback are bitwise
        # equal in both variants
        a_corr, a_unc = branch
        rng_u = _clone_rng(rng)
        a_corr = _run_items(a_corr, comp.tail, comp.chans, rng, jumps,
                            outcomes, phis, [])
        a_unc = _run_items(a_unc, comp.tail, comp.chans, rng_u, [],
                           outcomes, phis, [])
    else:
        a_corr = a_unc = out
    syn = (outcomes[2], outcomes[3]) if 2 in outcomes and 3 in outcomes else None
    return a_corr, a_unc, syn, phis, jumps


def run_trajectory(schedule: Schedule, noise: NoiseConfig,
                   seed: int) -> TrajectoryRecord:
    """One stochastic realization; a pure function of its arguments."""
    comp = _Compiled(schedule, noise)
    a_corr, a_unc, syn, phis, jumps = _run_single(comp, noise, int(seed))
    final = a_corr if comp.enabled else a_unc
    return TrajectoryRecord(
        final_state=PureState(final, copy=False),
        jumps=tuple(jumps),
        syndrome=syn,
        phi_drawn=phis[0],
        rng_seed=int(seed),
        phis=phis,
    )


def trajectory_seed(master_seed: int, index: int) -> int:
    """Stable per-trajectory seed, independent of workers and run order."""
    return int(np.random.SeedSequence((int(master_seed), int(index)))
               .generate_state(1, dtype=np.uint64)[0])


def _overlap_keep(a: np.ndarray, target_conj: np.ndarray,
                  axes: tuple[int, ...]) -> float:
    """<t| rho_keep |t> for a pure composite state, via one reshape."""
    rest = [k for k in range(6) if k not in axes]
    dk = target_conj.shape[0]
    m = a.reshape(3, 3, 3, 3, 2, 2).transpose(list(axes) + rest).reshape(dk, -1)
    v = target_conj @ m
    return float(np.sum(np.abs(v) ** 2))


def run_ensemble(schedule: Schedule, noise: NoiseConfig, n_traj: int,
                 master_seed: int, *, target: np.ndarray,
                 keep: tuple = ("C1", "A4"), workers: int = 1,
                 record_log=None) -> EnsembleStats:
    """Run ``n_traj`` paired trajectories and average the squared target
    overlap into F = sqrt(mean <t| rho_j |t>) on the kept subsystems.

    ``keep`` defaults to (C1, A4); ``target`` is a vector on the kept
    factors.  Results are bit-identical for any ``workers``.
    """
    if n_traj < 1:
        raise ValueError("n_traj must be >= 1")
    comp = _Compiled(schedule, noise)
    axes = tuple(subsystem_index(k) for k in keep)
    tconj = np.asarray(target, dtype=np.complex128).conj()

    ov_c = np.empty(n_traj)
    ov_u = np.empty(n_traj)
    syndromes: list = [None] * n_traj
    log_rows: list = [None] * n_traj if record_log is not None else None

    def work(lo: int, hi: int):
        for i in range(lo, hi):
            seed = trajectory_seed(master_seed, i)
            a_corr, a_unc, syn, phis, jumps = _run_single(comp, noise, seed)
            ov_c[i] = _overlap_keep(a_corr, tconj, axes)
            ov_u[i] = _overlap_keep(a_unc, tconj, axes)
            syndromes[i] = syn
            if log_rows is not None:
                log_rows[i] = {
                    "index": i, "seed": seed, "phi": phis[0],
                    "syndrome": SYNDROME_KEYS.get(syn),
                    "jumps": [[t, lab] for t, lab in jumps],
                    "overlap_corrected": ov_c[i],
                    "overlap_uncorrected": ov_u[i],
                }

    if workers <= 1:
        work(0, n_traj)
    else:
        chunk = -(-n_traj // workers)
        bounds = [(lo, min(lo + chunk, n_traj))
                  for lo in range(0, n_traj, chunk)]
        with ThreadPoolExecutor(max_workers=workers) as pool:
            list(pool.map(lambda b: work(*b), bounds))

    if record_log is not None:
        _write_log(record_log, log_rows)

    counts = {k: 0 for k in ("mm", "pm", "mp", "pp")}
    for s in syndromes:
        if s is not None:
            counts[SYNDROME_KEYS[s]] += 1
    f_c, se_c = _sqrt_mean_jackknife(ov_c)
    f_u, se_u = _sqrt_mean_jackknife(ov_u)
    return EnsembleStats(n_traj=n_traj, fidelity_corrected=f_c,
                         fidelity_uncorrected=f_u, stderr_corrected=se_c,
                         stderr_uncorrected=se_u, syndrome_counts=counts)


def _write_log(dest, rows: Iterable[dict]):
    if hasattr(dest, "write"):
        for r in rows:
            dest.write(json.dumps(r) + "\n")
    else:
        with open(dest, "w", encoding="utf-8") as fh:
            for r in rows:
                fh.write(json.dumps(r) + "\n")


def _sqrt_mean_jackknife(vals: np.ndarray) -> tuple[float, float]:
    """sqrt(mean) with a leave-one-out jackknife standard error."""
    n = vals.size
    s = float(vals.sum())
    f = math.sqrt(max(s, 0.0) / n)
    if n < 2:
        return f, 0.0
    loo = np.sqrt(np.clip(s - vals, 0.0, None) / (n - 1))
    return f, float(np.sqrt((n - 1) / n * np.sum((loo - loo.mean()) ** 2)))
