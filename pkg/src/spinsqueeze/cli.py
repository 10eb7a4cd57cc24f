"""Command-line surface: scenario configs, figure-data CSV emission, unit
conversion, and self-certifying manifests.

Everything inside the package runs dimensionless (chi = 1, time is chi*t);
a physical coupling given in Hz via --chi-hz only adds a t_seconds column
and a unit report in the manifest.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .dicke import DickeState
from .diagnostics import find_optimum, husimi_q, scaling_fit
from .errors import DomainError
from .propagator import driven_doubling_check
from .protocols import (
    FreezePolicy,
    NoiseModel,
    build_modulated_drive,
    build_repeated_pulse,
    reference_runs,
    run_monte_carlo,
    run_protocol,
    t_opt_oat,
    t_opt_tact,
    worker_count,
)

SCENARIOS = ("oat", "tact", "pulses", "drive", "noise", "sweep", "husimi")

DEFAULTS = {
    "n": 1250,
    "nc": 50,
    "eta": 0.001,
    "realizations": 100,
    "omega_over_chi": 2 * np.pi * 2e4,
    "omega0_over_omega": 0.9057,
    "phase": -np.pi / 2,
    "steps_per_period": 64,
    "seed": 42,
    "samples": 600,
    "freeze": False,
    "chi_hz": None,
    "out_dir": ".",
    "config": None,
    "model": "oat",
    "n_list": "100,200,400,800,1600",
    "state": None,
    "grid": "128x256",
    "doubling_check": True,
}

_COMMON_KEYS = ("n", "chi_hz", "seed", "out_dir", "samples")
_SCENARIO_KEYS = {
    "oat": _COMMON_KEYS,
    "tact": _COMMON_KEYS,
    "pulses": _COMMON_KEYS + ("nc", "freeze"),
    "drive": _COMMON_KEYS
    + ("omega_over_chi", "omega0_over_omega", "phase", "steps_per_period", "freeze", "doubling_check"),
    "noise": _COMMON_KEYS + ("nc", "eta", "realizations"),
    "sweep": _COMMON_KEYS + ("n_list", "model"),
    "husimi": ("out_dir", "state", "grid"),
}


@dataclass
class ScenarioConfig:
    scenario: str
    n: int = 1250
    chi_hz: float | None = None
    seed: int = 42
    out_dir: str = "."
    samples: int = 600
    nc: int = 50
    freeze: bool = False
    eta: float = 0.001
    realizations: int = 100
    omega_over_chi: float = 2 * np.pi * 2e4
    omega0_over_omega: float = 0.9057
    phase: float = -np.pi / 2
    steps_per_period: int = 64
    doubling_check: bool = True
    model: str = "oat"
    n_list: str = "100,200,400,800,1600"
    state: str | None = None
    grid: str = "128x256"

    def n_values(self) -> list:
        try:
            vals = [int(x) for x in str(self.n_list).split(",") if x.strip()]
        except ValueError:
            raise DomainError(f"invalid n_list: {self.n_list!r}")
        return vals

    def grid_shape(self) -> tuple:
        try:
            a, b = str(self.grid).lower().split("x")
            return int(a), int(b)
        except ValueError:
            raise DomainError(f"invalid grid: {self.grid!r} (want e.g. 128x256)")


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="spinsqueeze",
        description="Collective-spin squeezing scenarios; emits figure-data CSVs.",
    )
    sub = parser.add_subparsers(dest="scenario", required=True)
    for name in SCENARIOS:
        p = sub.add_parser(name)
        p.add_argument("--config", type=str, default=None, help="flat JSON config file")
        p.add_argument("--out-dir", dest="out_dir", type=str, default=None)
        keys = _SCENARIO_KEYS[name]
        if "n" in keys:
            p.add_argument("--n", type=int, default=None)
            p.add_argument("--chi-hz", dest="chi_hz", type=float, default=None)
            p.add_argument("--seed", type=int, default=None)
            p.add_argument("--samples", type=int, default=None)
        if "nc" in keys:
            p.add_argument("--nc", type=int, default=None)
        if "freeze" in keys:
            p.add_argument(
                "--freeze", dest="freeze", action=argparse.BooleanOptionalAction, default=None
            )
        if "eta" in keys:
            p.add_argument("--eta", type=float, default=None)
            p.add_argument("--realizations", type=int, default=None)
        if name == "drive":
            p.add_argument("--omega-over-chi", dest="omega_over_chi", type=float, default=None)
            p.add_argument(
                "--omega0-over-omega", dest="omega0_over_omega", type=float, default=None
            )
            p.add_argument("--phase", type=float, default=None)
            p.add_argument(
                "--steps-per-period", dest="steps_per_period", type=int, default=None
            )
            p.add_argument(
                "--doubling-check",
                dest="doubling_check",
                action=argparse.BooleanOptionalAction,
                default=None,
            )
        if name == "sweep":
            p.add_argument("--n-list", dest="n_list", type=str, default=None)
            p.add_argument("--model", type=str, choices=("oat", "tact"), default=None)
        if name == "husimi":
            p.add_argument("--state", type=str, default=None)
            p.add_argument("--grid", type=str, default=None)
    return parser


def parse_config(argv) -> ScenarioConfig:
    """Flags override config-file values override defaults; unknown config
    keys are rejected by name."""
    parser = _build_parser()
    ns = parser.parse_args(argv)
    scenario = ns.scenario
    allowed = set(_SCENARIO_KEYS[scenario])
    merged = {k: DEFAULTS[k] for k in allowed if k in DEFAULTS}
    if ns.config:
        try:
            file_vals = json.loads(Path(ns.config).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            parser.error(f"config file {ns.config}: {exc}")
        if not isinstance(file_vals, dict):
            parser.error("config file must hold a flat JSON object")
        for key, val in file_vals.items():
            if key not in allowed:
                parser.error(f"unknown config key for scenario {scenario!r}: {key}")
            merged[key] = val
    for key in allowed:
        flag_val = getattr(ns, key, None)
        if flag_val is not None:
            merged[key] = flag_val
    cfg = ScenarioConfig(scenario=scenario, **merged)
    _validate(parser, cfg)
    return cfg


def _validate(parser, cfg: ScenarioConfig) -> None:
    if cfg.scenario != "husimi" and cfg.n < 2:
        parser.error(f"field n: need at least 2 particles, got {cfg.n}")
    if cfg.chi_hz is not None and not cfg.chi_hz > 0:
        parser.error(f"field chi_hz: must be positive, got {cfg.chi_hz}")
    if cfg.scenario in ("pulses", "noise") and cfg.nc < 1:
        parser.error(f"field nc: must be at least 1, got {cfg.nc}")
    if cfg.scenario == "noise":
        if cfg.eta < 0:
            parser.error(f"field eta: must be nonnegative, got {cfg.eta}")
        if cfg.realizations < 1:
            parser.error(f"field realizations: must be at least 1, got {cfg.realizations}")
    if cfg.scenario == "drive":
        if not cfg.omega_over_chi > 0:
            parser.error(f"field omega_over_chi: must be positive, got {cfg.omega_over_chi}")
        if cfg.omega0_over_omega < 0:
            parser.error(
                f"field omega0_over_omega: must be nonnegative, got {cfg.omega0_over_omega}"
            )
        if cfg.steps_per_period < 16:
            parser.error(f"field steps_per_period: must be >= 16, got {cfg.steps_per_period}")
    if cfg.scenario == "sweep" and len(cfg.n_values()) < 3:
        parser.error("field n_list: need at least 3 N values")
    if cfg.scenario == "husimi":
        if not cfg.state:
            parser.error("field state: husimi needs --state <snapshot.json>")
        t, p = cfg.grid_shape()
        if t < 16 or p < 32:
            parser.error(f"field grid: must be at least 16x32, got {cfg.grid}")
    if cfg.samples < 16:
        parser.error(f"field samples: must be at least 16, got {cfg.samples}")


# ---------------------------------------------------------------------------
# writers

RUN_HEADER = "chi_t,xi2,xi2_db,jx,jy,jz,theta_min"


def _fmt(x) -> str:
    return repr(float(x))


def _seconds_per_chi_t(chi_hz: float) -> float:
    return 1.0 / (2 * np.pi * chi_hz)


def write_run_csv(path, record, chi_hz=None) -> None:
    header = RUN_HEADER + (",t_seconds" if chi_hz else "")
    lines = [header]
    for t, rep in record.samples:
        row = [
            _fmt(t),
            _fmt(rep.xi2),
            _fmt(rep.xi2_db),
            _fmt(rep.mean_spin[0]),
            _fmt(rep.mean_spin[1]),
            _fmt(rep.mean_spin[2]),
            _fmt(rep.theta_min),
        ]
        if chi_hz:
            row.append(_fmt(t * _seconds_per_chi_t(chi_hz)))
        lines.append(",".join(row))
    Path(path).write_text("\n".join(lines) + "\n")
    return Path(path)


def write_mean_csv(path, mc_result, chi_hz=None) -> None:
    """Pointwise ensemble means in the run-CSV schema."""
    header = RUN_HEADER + (",t_seconds" if chi_hz else "")
    times = mc_result.times
    stack = {
        "xi2": mc_result.mean_xi2,
        "jx": np.mean([[r.mean_spin[0] for r in rec.reports()] for rec in mc_result.records], axis=0),
        "jy": np.mean([[r.mean_spin[1] for r in rec.reports()] for rec in mc_result.records], axis=0),
        "jz": np.mean([[r.mean_spin[2] for r in rec.reports()] for rec in mc_result.records], axis=0),
        "theta": np.mean([[r.theta_min for r in rec.reports()] for rec in mc_result.records], axis=0),
    }
    lines = [header]
    for i, t in enumerate(times):
        row = [
            _fmt(t),
            _fmt(stack["xi2"][i]),
            _fmt(10 * np.log10(stack["xi2"][i])),
            _fmt(stack["jx"][i]),
            _fmt(stack["jy"][i]),
            _fmt(stack["jz"][i]),
            _fmt(stack["theta"][i]),
        ]
        if chi_hz:
            row.append(_fmt(t * _seconds_per_chi_t(chi_hz)))
        lines.append(",".join(row))
    Path(path).write_text("\n".join(lines) + "\n")
    return Path(path)


def write_realizations_csv(path, mc_result) -> None:
    lines = ["realization,chi_t,xi2"]
    for i, rec in enumerate(mc_result.records):
        for t, rep in rec.samples:
            lines.append(f"{i},{_fmt(t)},{_fmt(rep.xi2)}")
    Path(path).write_text("\n".join(lines) + "\n")
    return Path(path)


def write_husimi_csv(path, thetas, phis, q) -> None:
    lines = ["theta,phi,q"]
    for i, th in enumerate(thetas):
        for k, ph in enumerate(phis):
            lines.append(f"{_fmt(th)},{_fmt(ph)},{_fmt(q[i, k])}")
    Path(path).write_text("\n".join(lines) + "\n")
    return Path(path)


def _sha256(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _json_default(obj):
    if isinstance(obj, np.floating):
        return float(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(f"not JSON-serializable: {type(obj).__name__}")


def _write_manifest(out_dir, cfg, extra, written) -> Path:
    manifest = {"config": asdict(cfg)}
    manifest.update(extra)
    manifest["artifacts"] = {
        Path(p).name: _sha256(p) for p in sorted(written, key=lambda p: Path(p).name)
    }
    path = Path(out_dir) / "manifest.json"
    path.write_text(
        json.dumps(manifest, indent=2, sort_keys=True, default=_json_default) + "\n"
    )
    return path


def _unit_report(cfg, meta=None) -> dict | None:
    if not cfg.chi_hz:
        return None
    factor = _seconds_per_chi_t(cfg.chi_hz)
    report = {
        "chi_hz": cfg.chi_hz,
        "chi_rad_per_s": 2 * np.pi * cfg.chi_hz,
        "seconds_per_chi_t": factor,
    }
    if meta:
        for key in ("delta_t", "t_c", "t_opt", "freeze_time"):
            if key in meta:
                report[key + "_seconds"] = meta[key] * factor
        if "omega_over_chi" in meta:
            report["omega_hz"] = meta["omega_over_chi"] * cfg.chi_hz
            report["omega0_hz"] = (
                meta["omega_over_chi"] * meta["omega0_over_omega"] * cfg.chi_hz
            )
    return report


# ---------------------------------------------------------------------------
# scenarios

def _emit_limits(out_dir, n, samples, chi_hz, written) -> dict:
    info = {}
    for model in ("oat", "tact"):
        rec = reference_runs(n, 1.0, model, n_samples=samples)
        written.append(write_run_csv(Path(out_dir) / f"{model}_limit.csv", rec, chi_hz))
        opt = find_optimum(rec)
        info[model] = {"chi_t_opt": opt.chi_t, "xi2_min": opt.xi2}
    return info


def _scenario_reference(cfg, out_dir, written) -> dict:
    rec = reference_runs(cfg.n, 1.0, cfg.scenario, n_samples=cfg.samples)
    written.append(write_run_csv(out_dir / f"{cfg.scenario}_run.csv", rec, cfg.chi_hz))
    opt = find_optimum(rec)
    formula = t_opt_oat(cfg.n) if cfg.scenario == "oat" else t_opt_tact(cfg.n)
    return {
        "optimum": {"chi_t": opt.chi_t, "xi2": opt.xi2},
        "analytic_t_opt": formula,
        "convergence": {"method": "exact diagonalization, no integrator error"},
        "unit_report": _unit_report(cfg),
    }


def _scenario_pulses(cfg, out_dir, written) -> dict:
    freeze = FreezePolicy() if cfg.freeze else None
    bundle = build_repeated_pulse(cfg.n, 1.0, cfg.nc, freeze)
    record = run_protocol(bundle.schedule, bundle.initial_state)
    written.append(write_run_csv(out_dir / "pulses_run.csv", record, cfg.chi_hz))
    limits = _emit_limits(out_dir, cfg.n, cfg.samples, cfg.chi_hz, written)
    if cfg.freeze:
        bundle.frozen_state().save(out_dir / "frozen_state.json")
        written.append(out_dir / "frozen_state.json")
    meta = dict(bundle.meta)
    meta.pop("freeze_candidates", None)
    return {
        "protocol": meta,
        "limits": limits,
        "events": record.events,
        "convergence": {
            "method": "pulses and quadratic phases are exact; no integrator error"
        },
        "unit_report": _unit_report(cfg, bundle.meta),
    }


def _scenario_drive(cfg, out_dir, written) -> dict:
    freeze = FreezePolicy(window=1) if cfg.freeze else None
    bundle = build_modulated_drive(
        cfg.n,
        1.0,
        omega_over_chi=cfg.omega_over_chi,
        omega0_over_omega=cfg.omega0_over_omega,
        phase=cfg.phase,
        freeze=freeze,
        steps_per_period=cfg.steps_per_period,
    )
    record = run_protocol(bundle.schedule, bundle.initial_state)
    written.append(write_run_csv(out_dir / "drive_run.csv", record, cfg.chi_hz))
    from .protocols import effective_drive_record

    seg = bundle.schedule.segments[0]
    eff_times = [t for t in record.times() if t <= seg.t1]
    eff = effective_drive_record(cfg.n, 1.0, cfg.omega0_over_omega, eff_times)
    written.append(write_run_csv(out_dir / "drive_effective.csv", eff, cfg.chi_hz))
    limits = _emit_limits(out_dir, cfg.n, cfg.samples, cfg.chi_hz, written)
    if cfg.freeze:
        bundle.frozen_state().save(out_dir / "frozen_state.json")
        written.append(out_dir / "frozen_state.json")
    convergence = {"method": "strang split-step, exact envelope integral"}
    if cfg.doubling_check:
        convergence["doubling"] = driven_doubling_check(
            bundle.initial_state, 1.0, seg.env, seg.t0, seg.t1, cfg.steps_per_period
        )
    meta = dict(bundle.meta)
    meta.pop("freeze_candidates", None)
    return {
        "protocol": meta,
        "limits": limits,
        "events": record.events,
        "convergence": convergence,
        "unit_report": _unit_report(cfg, bundle.meta),
    }


def _scenario_noise(cfg, out_dir, written) -> dict:
    bundle = build_repeated_pulse(cfg.n, 1.0, cfg.nc, None)
    noise = NoiseModel(cfg.eta, seed=cfg.seed)
    mc = run_monte_carlo(
        bundle.schedule, bundle.initial_state, noise, cfg.realizations, threads=worker_count()
    )
    written.append(write_mean_csv(out_dir / "noise_mean.csv", mc, cfg.chi_hz))
    written.append(write_realizations_csv(out_dir / "noise_realizations.csv", mc))
    limits = _emit_limits(out_dir, cfg.n, cfg.samples, cfg.chi_hz, written)
    meta = dict(bundle.meta)
    return {
        "protocol": meta,
        "noise": {"eta": cfg.eta, "realizations": cfg.realizations, "master_seed": cfg.seed},
        "limits": limits,
        "convergence": {
            "method": "pulses and quadratic phases are exact; no integrator error"
        },
        "unit_report": _unit_report(cfg, bundle.meta),
    }


def _scenario_sweep(cfg, out_dir, written) -> dict:
    rows = []
    for n in cfg.n_values():
        rec = reference_runs(n, 1.0, cfg.model, n_samples=cfg.samples)
        opt = find_optimum(rec)
        rows.append((n, opt.chi_t, opt.xi2))
    path = out_dir / f"sweep_{cfg.model}.csv"
    lines = ["N,chi_t_opt,xi2_min"]
    for n, t, v in rows:
        lines.append(f"{n},{_fmt(t)},{_fmt(v)}")
    path.write_text("\n".join(lines) + "\n")
    written.append(path)
    exponent, prefactor, resid = scaling_fit([(n, v) for n, t, v in rows])
    return {
        "scaling_fit": {"exponent": exponent, "prefactor": prefactor, "rms_residual": resid},
        "convergence": {"method": "exact diagonalization, no integrator error"},
        "unit_report": _unit_report(cfg),
    }


def _scenario_husimi(cfg, out_dir, written) -> dict:
    state = DickeState.load(cfg.state)
    t_count, p_count = cfg.grid_shape()
    thetas, phis, q = husimi_q(state, t_count, p_count)
    written.append(write_husimi_csv(out_dir / "husimi.csv", thetas, phis, q))
    dth, dph = np.pi / t_count, 2 * np.pi / p_count
    total = float((q * np.sin(thetas)[:, None]).sum() * dth * dph * (2 * state.j + 1) / (4 * np.pi))
    return {
        "state": {"N": state.n_particles, "j": state.j},
        "grid": {"theta": t_count, "phi": p_count, "rows": t_count * p_count},
        "normalization_check": total,
        "convergence": {"method": "closed-form overlaps, no integrator error"},
    }


_RUNNERS = {
    "oat": _scenario_reference,
    "tact": _scenario_reference,
    "pulses": _scenario_pulses,
    "drive": _scenario_drive,
    "noise": _scenario_noise,
    "sweep": _scenario_sweep,
    "husimi": _scenario_husimi,
}


def run_scenario(cfg: ScenarioConfig) -> int:
    """Execute a scenario and write its artifacts; returns the exit status."""
    try:
        out_dir = Path(cfg.out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        written = []
        extra = _RUNNERS[cfg.scenario](cfg, out_dir, written)
        extra = {k: v for k, v in extra.items() if v is not None}
        _write_manifest(out_dir, cfg, extra, written)
        return 0
    except (OSError, DomainError) as exc:
        print(f"spinsqueeze: {exc}", file=sys.stderr)
        return 1


def main(argv=None) -> None:
    cfg = parse_config(argv if argv is not None else sys.argv[1:])
    sys.exit(run_scenario(cfg))


if __name__ == "__main__":
    main()
