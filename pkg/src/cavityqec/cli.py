"""Batch experiment runner.

Parses a flat key=value config (INI style, section headers optional),
sweeps one parameter over a grid, runs the paired corrected/uncorrected
ensembles per point, and writes a CSV plus an optional SVG plot.  The CSV
is the contract: identical config and master seed produce byte-identical
files for any worker count.  Units in the config: times in milliseconds,
velocities in m/s, lengths in mm, angles in radians.

Flags: --config PATH, --out PATH, --plot PATH, --seed N, --workers N,
--no-correction, --analytic-only.  The environment variable
CAVITYQEC_SEED overrides the config seed; the --seed flag overrides both.
"""

from __future__ import annotations

import argparse
import configparser
import io
import math
import os
import sys
import time
from dataclasses import dataclass, replace

import numpy as np

from . import __version__, analytic, protocol
from .dynamics import ENVELOPE, INSTANTANEOUS
from .protocol import ProtocolConfig, TimingConfig

SEED_ENV_VAR = "CAVITYQEC_SEED"

CSV_HEADER = ("phi_max,t_cav_ms,alpha_sq,n_traj,f_corr,f_corr_se,"
              "f_uncorr,f_uncorr_se,syn_mm,syn_pm,syn_mp,syn_pp,seed")

# config keys, defaults, and parsers (times ms, lengths mm)
_DEFAULTS = {
    "alpha_sq": 0.7,
    "phi_max": 0.0,
    "t_cav_ms": 100.0,
    "t_atom_ms": 30.0,
    "n_traj": 1000,
    "seed": 2024,
    "workers": 1,
    "correction": True,
    "phi_mode": "shared",
    "gate_mode": INSTANTANEOUS,
    "v_mps": 500.0,
    "w0_mm": 6.0,
    "stagger_us": 300.0,
    "zone_step_us": 60.0,
    "window_us": 20.0,
    "measure_offset_us": 330.0,
    "sweep_parameter": "phi_max",
    "sweep_start": None,
    "sweep_stop": None,
    "sweep_count": None,
    "sweep_values": None,
    "traj_log": None,
}

_SWEEPABLE = ("phi_max", "t_cav", "alpha_sq")


class ConfigError(ValueError):
    pass


def _parse_bool(s: str) -> bool:
    v = s.strip().lower()
    if v in ("1", "true", "on", "yes"):
        return True
    if v in ("0", "false", "off", "no"):
        return False
    raise ConfigError(f"expected a boolean, got {s!r}")


def parse_config(text: str) -> dict:
    """Validated run specification with defaults filled in.

    Unknown keys and out-of-domain values are rejected.
    """
    cp = configparser.ConfigParser()
    stripped = text.lstrip()
    if stripped and not stripped.startswith("["):
        text = "[run]\n" + text
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"malformed config: {exc}") from exc
    spec = dict(_DEFAULTS)
    for section in cp.sections():
        for key, raw in cp.items(section):
            if key not in _DEFAULTS:
                raise ConfigError(f"unknown config key {key!r}")
            spec[key] = _coerce(key, raw)
    _validate(spec)
    return spec


def _coerce(key: str, raw: str):
    if key in ("n_traj", "seed", "workers", "sweep_count"):
        try:
            return int(raw)
        except ValueError:
            raise ConfigError(f"{key} must be an integer, got {raw!r}") from None
    if key == "correction":
        return _parse_bool(raw)
    if key in ("phi_mode", "gate_mode", "sweep_parameter", "traj_log"):
        return raw.strip()
    if key == "sweep_values":
        try:
            return tuple(float(v) for v in raw.split(","))
        except ValueError:
            raise ConfigError(f"sweep_values must be comma-separated floats") from None
    try:
        return float(raw)
    except ValueError:
        raise ConfigError(f"{key} must be a number, got {raw!r}") from None


def _validate(spec: dict):
    if not 0.0 <= spec["alpha_sq"] <= 1.0:
        raise ConfigError(f"alpha_sq must lie in [0, 1], got {spec['alpha_sq']}")
    if spec["phi_max"] < 0:
        raise ConfigError("phi_max must be nonnegative")
    for key in ("t_cav_ms", "t_atom_ms"):
        if not (spec[key] > 0):
            raise ConfigError(f"{key} must be positive (use 'inf' to disable)")
    if spec["n_traj"] < 1:
        raise ConfigError("n_traj must be >= 1")
    if spec["workers"] < 1:
        raise ConfigError("workers must be >= 1")
    if spec["phi_mode"] not in ("shared", "independent"):
        raise ConfigError(f"phi_mode must be shared|independent")
    if spec["gate_mode"] not in (INSTANTANEOUS, ENVELOPE):
        raise ConfigError(f"gate_mode must be {INSTANTANEOUS}|{ENVELOPE}")
    if spec["sweep_parameter"] not in _SWEEPABLE:
        raise ConfigError(f"sweep_parameter must be one of {_SWEEPABLE}")
    if spec["sweep_values"] is not None and not spec["sweep_values"]:
        raise ConfigError("sweep grid must be nonempty")
    has_linear = any(spec[k] is not None
                     for k in ("sweep_start", "sweep_stop", "sweep_count"))
    if has_linear and any(spec[k] is None
                          for k in ("sweep_start", "sweep_stop", "sweep_count")):
        raise ConfigError("linear sweeps need sweep_start, sweep_stop and sweep_count")
    if spec["sweep_count"] is not None and spec["sweep_count"] < 1:
        raise ConfigError("sweep_count must be >= 1")


def sweep_grid(spec: dict) -> tuple[float, ...]:
    """Grid of swept values; defaults to 13 points over [0, 4 pi]."""
    if spec["sweep_values"] is not None:
        return tuple(spec["sweep_values"])
    if spec["sweep_start"] is not None:
        return tuple(np.linspace(spec["sweep_start"], spec["sweep_stop"],
                                 spec["sweep_count"]))
    if spec["sweep_parameter"] == "phi_max":
        return tuple(np.linspace(0.0, 4 * math.pi, 13))
    raise ConfigError(f"no grid given for sweep over {spec['sweep_parameter']}")


def build_protocol_config(spec: dict, **overrides) -> ProtocolConfig:
    timing = TimingConfig(stagger_us=spec["stagger_us"],
                          zone_step_us=spec["zone_step_us"],
                          window_us=spec["window_us"],
                          measure_offset_us=spec["measure_offset_us"])
    base = ProtocolConfig.from_alpha_sq(
        spec["alpha_sq"],
        phi_max=spec["phi_max"],
        correction_enabled=spec["correction"],
        t_cav=spec["t_cav_ms"] * 1e-3,
        t_atom=spec["t_atom_ms"] * 1e-3,
        shared_phi=(spec["phi_mode"] == "shared"),
        gate_mode=spec["gate_mode"],
        timing=timing,
        v_mps=spec["v_mps"],
        w0_m=spec["w0_mm"] * 1e-3,
        n_traj=spec["n_traj"],
        master_seed=spec["seed"],
        workers=spec["workers"],
    )
    return replace(base, **overrides) if overrides else base


@dataclass(frozen=True)
class ResultRow:
    """One grid point; self-describing and losslessly serializable."""

    phi_max: float
    t_cav_ms: float
    alpha_sq: float
    n_traj: int
    f_corr: float
    f_corr_se: float
    f_uncorr: float
    f_uncorr_se: float
    syn_mm: int
    syn_pm: int
    syn_mp: int
    syn_pp: int
    seed: int
    wall_time_s: float = 0.0   # informational only, not serialized
    version: str = __version__


def point_seed(master_seed: int, grid_index: int) -> int:
    """Per-grid-point master seed, stable under reordering."""
    return int(np.random.SeedSequence((int(master_seed), 0xC0FFEE, grid_index))
               .generate_state(1, dtype=np.uint64)[0])


def run_sweep(spec: dict) -> list[ResultRow]:
    """Rows in grid order; each point reseeded from the master seed and its
    index so the sweep is reproducible point by point."""
    grid = sweep_grid(spec)
    param = spec["sweep_parameter"]
    rows = []
    for gi, value in enumerate(grid):
        pt = dict(spec)
        if param == "phi_max":
            pt["phi_max"] = float(value)
        elif param == "t_cav":
            pt["t_cav_ms"] = float(value)
        else:
            pt["alpha_sq"] = float(value)
        seed = point_seed(spec["seed"], gi)
        cfg = build_protocol_config(pt, master_seed=seed)
        t0 = time.perf_counter()
        log = pt["traj_log"]
        stats = protocol.run_paired_ensemble(
            cfg, record_log=(f"{log}.{gi:03d}.ndjson" if log else None))
        rows.append(ResultRow(
            phi_max=cfg.phi_max,
            t_cav_ms=pt["t_cav_ms"],
            alpha_sq=pt["alpha_sq"],
            n_traj=cfg.n_traj,
            f_corr=stats.fidelity_corrected,
            f_corr_se=stats.stderr_corrected,
            f_uncorr=stats.fidelity_uncorrected,
            f_uncorr_se=stats.stderr_uncorrected,
            syn_mm=stats.syndrome_counts["mm"],
            syn_pm=stats.syndrome_counts["pm"],
            syn_mp=stats.syndrome_counts["mp"],
            syn_pp=stats.syndrome_counts["pp"],
            seed=seed,
            wall_time_s=time.perf_counter() - t0,
        ))
    return rows


def _fmt(x: float) -> str:
    return format(x, ".17g")


def format_csv(rows: list[ResultRow]) -> str:
    """CSV text: the fixed header line plus one line per row.

    Units are part of the column names (phi_max in radians, t_cav_ms in
    milliseconds); values print with 17 significant digits so reparsing
    reproduces them exactly.
    """
    if not rows:
        raise ValueError("no rows to emit")
    out = io.StringIO()
    out.write(CSV_HEADER + "\n")
    for r in rows:
        fields = [_fmt(r.phi_max), _fmt(r.t_cav_ms), _fmt(r.alpha_sq),
                  str(r.n_traj), _fmt(r.f_corr), _fmt(r.f_corr_se),
                  _fmt(r.f_uncorr), _fmt(r.f_uncorr_se), str(r.syn_mm),
                  str(r.syn_pm), str(r.syn_mp), str(r.syn_pp), str(r.seed)]
        out.write(",".join(fields) + "\n")
    return out.getvalue()


def emit_csv(rows: list[ResultRow], path: str):
    try:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(format_csv(rows))
    except OSError as exc:
        raise OSError(f"cannot write CSV to {path}: {exc}") from exc


def parse_csv(text_or_path: str, from_path: bool = True) -> list[ResultRow]:
    """Inverse of :func:`emit_csv`; numeric fields round-trip exactly."""
    if from_path:
        try:
            with open(text_or_path, encoding="utf-8") as fh:
                text = fh.read()
        except OSError as exc:
            raise OSError(f"cannot read CSV from {text_or_path}: {exc}") from exc
    else:
        text = text_or_path
    lines = [ln for ln in text.splitlines()
             if ln.strip() and not ln.startswith("#")]
    if not lines or lines[0] != CSV_HEADER:
        raise ValueError("unrecognized CSV header")
    rows = []
    for ln in lines[1:]:
        f = ln.split(",")
        rows.append(ResultRow(
            phi_max=float(f[0]), t_cav_ms=float(f[1]), alpha_sq=float(f[2]),
            n_traj=int(f[3]), f_corr=float(f[4]), f_corr_se=float(f[5]),
            f_uncorr=float(f[6]), f_uncorr_se=float(f[7]), syn_mm=int(f[8]),
            syn_pm=int(f[9]), syn_mp=int(f[10]), syn_pp=int(f[11]),
            seed=int(f[12])))
    return rows


def emit_plot(rows: list[ResultRow], path: str, swept: str = "phi_max"):
    """Self-contained SVG with both fidelity curves and error bars; a
    phi_max sweep also overlays the closed-form model curves."""
    if not rows:
        raise ValueError("no rows to plot")
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    x = [getattr(r, "phi_max" if swept == "phi_max" else
                 "t_cav_ms" if swept == "t_cav" else "alpha_sq")
         for r in rows]
    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    ax.errorbar(x, [r.f_corr for r in rows], yerr=[r.f_corr_se for r in rows],
                fmt="o-", capsize=3, label="corrected")
    ax.errorbar(x, [r.f_uncorr for r in rows],
                yerr=[r.f_uncorr_se for r in rows],
                fmt="s--", capsize=3, label="uncorrected")
    if swept == "phi_max" and max(x) > 0:
        grid = np.linspace(1e-9, max(x), 300)
        ax.plot(grid, [analytic.f_fb_ave(g) for g in grid], ":",
                label="model, feedback")
        ax.plot(grid, [analytic.f_nofb_ave(g) for g in grid], "-.",
                label="model, no feedback")
    ax.set_xlabel({"phi_max": "maximum random phase (rad)",
                   "t_cav": "cavity lifetime (ms)",
                   "alpha_sq": "|alpha|^2"}[swept])
    ax.set_ylabel("fidelity")
    ax.legend(loc="best", fontsize=8)
    fig.tight_layout()
    try:
        fig.savefig(path, format="svg")
    except OSError as exc:
        raise OSError(f"cannot write plot to {path}: {exc}") from exc
    finally:
        plt.close(fig)


def analytic_rows(count: int = 65, phi_hi: float = 4 * math.pi) -> str:
    """CSV grid of the closed-form averaged fidelities."""
    out = ["phi_max,f_nofb_ave,f_fb_ave"]
    for p in np.linspace(0.0, phi_hi, count):
        out.append(f"{_fmt(p)},{_fmt(analytic.f_nofb_ave(p))},"
                   f"{_fmt(analytic.f_fb_ave(p))}")
    return "\n".join(out) + "\n"


def _build_argparser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="cavityqec",
        description="Three-qubit cavity-QED error-correction sweep runner")
    ap.add_argument("--config", help="key=value config file")
    ap.add_argument("--out", help="CSV output path")
    ap.add_argument("--plot", help="SVG plot output path")
    ap.add_argument("--seed", type=int, help="master seed override")
    ap.add_argument("--workers", type=int, help="trajectory worker threads")
    ap.add_argument("--no-correction", action="store_true",
                    help="disable the feedback flip in the corrected variant")
    ap.add_argument("--analytic-only", action="store_true",
                    help="emit only the closed-form model grid")
    return ap


def main(argv=None) -> int:
    args = _build_argparser().parse_args(argv)
    try:
        if args.analytic_only:
            text = analytic_rows()
            if args.out:
                with open(args.out, "w", encoding="utf-8") as fh:
                    fh.write(text)
            else:
                sys.stdout.write(text)
            if args.plot:
                rows = [ResultRow(p, math.inf, 0.0, 0, analytic.f_fb_ave(p), 0.0,
                                  analytic.f_nofb_ave(p), 0.0, 0, 0, 0, 0, 0)
                        for p in np.linspace(0.0, 4 * math.pi, 65)]
                emit_plot(rows, args.plot)
            return 0

        text = ""
        if args.config:
            with open(args.config, encoding="utf-8") as fh:
                text = fh.read()
        spec = parse_config(text)
        if args.seed is not None:
            spec["seed"] = args.seed
        elif SEED_ENV_VAR in os.environ:
            spec["seed"] = int(os.environ[SEED_ENV_VAR])
        if args.workers is not None:
            if args.workers < 1:
                raise ConfigError("workers must be >= 1")
            spec["workers"] = args.workers
        if args.no_correction:
            spec["correction"] = False

        rows = run_sweep(spec)
        if args.out:
            emit_csv(rows, args.out)
        else:
            sys.stdout.write(format_csv(rows))
        if args.plot:
            emit_plot(rows, args.plot, swept=spec["sweep_parameter"])
        return 0
    except (ConfigError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
