"""Executable squeezing protocols.

build_repeated_pulse lays out the pulse-pair sequence whose average is the
two-axis model at one third the coupling; build_modulated_drive covers the
continuously driven variant. Both can resolve a freeze: a probe run locates
the sampled squeezing minimum, rotation signs are picked to minimize the
post-rotation Jz variance, and the tail becomes plain Jz^2 evolution.
"""

from __future__ import annotations

import os
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .dicke import (
    DickeState,
    RotationSpec,
    apply_spin,
    make_css,
    make_dicke_state,
    rotate_vector,
)
from .diagnostics import OptimumResult, RunRecord, find_optimum, squeezing_report
from .errors import DomainError
from .hamiltonians import DriveEnvelope, alpha0, quadratic_matrix
from .propagator import (
    SpectralPropagator,
    evolve_quadratic_diagonal,
    evolve_schedule,
)
from .schedule import (
    DrivenSegment,
    FreezeMarker,
    FreezePolicy,
    NoiseModel,
    ProtocolSchedule,
    Pulse,
    QuadraticSegment,
)

PAPER_RATIO = 0.9057  # omega0/omega putting the averaged model on the TACT point


def t_opt_oat(n_particles: float) -> float:
    """Asymptotic optimal one-axis time, 6^(1/6) N^(-2/3)."""
    return 6 ** (1 / 6) * n_particles ** (-2 / 3)


def t_opt_tact(n_particles: float) -> float:
    """Asymptotic optimal two-axis time, ln(4N) / (2N)."""
    return np.log(4 * n_particles) / (2 * n_particles)


def t_opt_protocol(n_particles: float) -> float:
    """Both effective protocols run at coupling chi/3, so their optimum sits
    at three times the two-axis value."""
    return 3.0 * t_opt_tact(n_particles)


def _css_x(n_particles: int) -> DickeState:
    return make_css(n_particles / 2, np.pi / 2, 0.0)


# ---------------------------------------------------------------------------
# reference runs

@lru_cache(maxsize=32)
def _tact_propagator(n_particles: int, chi: float) -> SpectralPropagator:
    j = n_particles / 2
    return SpectralPropagator(chi * (quadratic_matrix(j, "z") - quadratic_matrix(j, "y")))


@lru_cache(maxsize=32)
def _pulse_effective_propagator(n_particles: int, chi: float) -> SpectralPropagator:
    j = n_particles / 2
    return SpectralPropagator(chi / 3.0 * (2 * quadratic_matrix(j, "x") + quadratic_matrix(j, "z")))


@lru_cache(maxsize=32)
def _drive_effective_propagator(n_particles: int, chi: float, a0: float) -> SpectralPropagator:
    j = n_particles / 2
    mat = chi * (a0 * quadratic_matrix(j, "z") + (1 - a0) * quadratic_matrix(j, "x"))
    return SpectralPropagator(mat)


def _spectral_record(prop, initial, times, parameters) -> RunRecord:
    record = RunRecord(parameters=parameters)
    for t in times:
        record.add_sample(t, squeezing_report(prop.evolve(initial, t)))
    return record


def reference_runs(
    n_particles: int,
    chi: float = 1.0,
    model: str = "oat",
    n_samples: int = 600,
    span_factor: float = 3.0,
) -> RunRecord:
    """Squeezing time series for the bare one-axis or two-axis model.

    one-axis: x-pointing coherent state under chi*Jz^2 (diagonal phases);
    two-axis: same state under chi*(Jz^2 - Jy^2) via a one-time
    eigendecomposition. Spans [0, span_factor * analytic optimum].
    """
    if model not in ("oat", "tact"):
        raise DomainError(f"model must be 'oat' or 'tact', got {model!r}")
    initial = _css_x(n_particles)
    params = {"model": model, "N": n_particles, "chi": chi}
    if model == "oat":
        times = np.linspace(0.0, span_factor * t_opt_oat(n_particles) / chi, n_samples)
        record = RunRecord(parameters=params)
        for t in times:
            record.add_sample(t, squeezing_report(evolve_quadratic_diagonal(initial, chi, t)))
        return record
    times = np.linspace(0.0, span_factor * t_opt_tact(n_particles) / chi, n_samples)
    return _spectral_record(_tact_propagator(n_particles, chi), initial, times, params)


def effective_pulse_record(n_particles, chi, times) -> RunRecord:
    """xi^2 under the exact averaged pulse generator chi*(2Jx^2 + Jz^2)/3
    from the north-pole state."""
    initial = make_dicke_state(n_particles / 2, n_particles / 2)
    return _spectral_record(
        _pulse_effective_propagator(n_particles, chi),
        initial,
        times,
        {"model": "pulse-effective", "N": n_particles, "chi": chi},
    )


def effective_drive_record(n_particles, chi, omega0_over_omega, times) -> RunRecord:
    """xi^2 under the exact averaged drive generator. The frame rotation of
    the nonzero-phase form cancels in xi^2, so the unrotated mixture from
    the x-pointing state covers every drive phase."""
    a0 = alpha0(omega0_over_omega, 1.0)
    return _spectral_record(
        _drive_effective_propagator(n_particles, chi, a0),
        _css_x(n_particles),
        times,
        {"model": "drive-effective", "N": n_particles, "chi": chi, "alpha0": a0},
    )


@lru_cache(maxsize=32)
def reference_optimum(n_particles: int, chi: float = 1.0) -> OptimumResult:
    """Numeric two-axis optimum (time and value); anchors freeze windows."""
    return find_optimum(reference_runs(n_particles, chi, "tact"))


# ---------------------------------------------------------------------------
# protocol bundles

@dataclass
class ProtocolBundle:
    """A built protocol: timeline, initial state, metadata, and (when a
    freeze is resolved) the prefix ending right after the freeze pulses."""

    schedule: ProtocolSchedule
    initial_state: DickeState
    meta: dict = field(default_factory=dict)
    prefix_schedule: ProtocolSchedule | None = None

    def frozen_state(self, noise: NoiseModel | None = None) -> DickeState:
        if self.prefix_schedule is None:
            raise DomainError("protocol was built without a freeze")
        realized = _realize(self.prefix_schedule, noise)
        state, _ = evolve_schedule(self.initial_state, realized)
        return state


def _jz_stats(vec: np.ndarray, j: float) -> tuple[float, float]:
    vz = apply_spin(j, (0.0, 0.0, 1.0), vec)
    mean = float(np.vdot(vec, vz).real)
    var = float(np.vdot(vz, vz).real) - mean**2
    return mean, var


def _resolve_signs(state: DickeState, rotations) -> tuple[tuple, list]:
    """Try every angle-sign combination of the freeze rotations, keep the
    one minimizing Var(Jz) on the probe state."""
    from itertools import product

    from .dicke import rotate_vector

    best = None
    for signs in product((1.0, -1.0), repeat=len(rotations)):
        vec = state.amplitudes.copy()
        for s, rot in zip(signs, rotations):
            vec = rotate_vector(state.j, vec, rot.scaled(s))
        _, var = _jz_stats(vec, state.j)
        if best is None or var < best[1]:
            best = (signs, var)
    return best


# ---------------------------------------------------------------------------
# repeated-pulse protocol

def _pulse_period_segments(chi: float, delta_t: float) -> list:
    """One period: pulse pair turning Jz^2 into Jx^2 for 2*delta_t, then
    bare Jz^2 for delta_t."""
    return [
        Pulse(RotationSpec((0.0, 1.0, 0.0), np.pi / 2)),
        QuadraticSegment("z", chi, 2 * delta_t),
        Pulse(RotationSpec((0.0, 1.0, 0.0), -np.pi / 2)),
        QuadraticSegment("z", chi, delta_t),
    ]


def build_repeated_pulse(
    n_particles: int,
    chi: float = 1.0,
    n_periods: int = 50,
    freeze: FreezePolicy | None = None,
) -> ProtocolBundle:
    """Pulse-pair protocol from the north-pole state.

    Each period of length t_c = 3*delta_t spends 2*delta_t under Jx^2
    (realized as +-pi/2 y-pulses around a Jz^2 stretch, so pulse noise can
    bite) and delta_t under Jz^2; delta_t is set so n_periods periods reach
    the protocol optimum. Sampling sits mid-section at n*t_c + delta_t and
    n*t_c + 2.5*delta_t. An enabled freeze inserts the pi/4 pulse about -x
    at the probe minimum and hands over to plain Jz^2 evolution.
    """
    if n_periods < 1:
        raise DomainError("n_periods must be at least 1")
    if n_particles < 2:
        raise DomainError("need at least 2 particles")
    j = n_particles / 2
    delta_t = t_opt_protocol(n_particles) / (3 * n_periods) / chi
    t_c = 3 * delta_t
    gate = 2 * chi * delta_t * n_particles
    meta = {
        "protocol": "repeated-pulse",
        "N": n_particles,
        "chi": chi,
        "n_periods": n_periods,
        "delta_t": delta_t,
        "t_c": t_c,
        "t_opt": t_opt_protocol(n_particles) / chi,
        "trotter_gate": gate,
    }
    if gate >= 1.0:
        warnings.warn(
            f"2*chi*delta_t*N = {gate:.3f} is not small; the pulse sequence "
            "will not track the effective two-axis model"
        )
        meta["trotter_gate_ok"] = False
    else:
        meta["trotter_gate_ok"] = True
    initial = make_dicke_state(j, j)

    def mid_samples(n_full: int):
        out = []
        for n in range(n_full):
            out.append(n * t_c + delta_t)
            out.append(n * t_c + 2.5 * delta_t)
        return out

    if freeze is None:
        segments = []
        for _ in range(n_periods):
            segments += _pulse_period_segments(chi, delta_t)
        schedule = ProtocolSchedule(tuple(segments), tuple(mid_samples(n_periods)), meta)
        return ProtocolBundle(schedule, initial, meta)

    window = freeze.window if freeze.window is not None else 2
    if freeze.trigger == "analytic-time":
        center = meta["t_opt"]
        n_star = max(0, int(round((center - delta_t) / t_c)))
    else:
        center = 3 * reference_optimum(n_particles, chi).chi_t
        n_center = max(0, int(round((center - delta_t) / t_c)))
        candidates = [n for n in range(max(0, n_center - window), n_center + window + 1)]
        probe_samples = tuple(n * t_c + delta_t for n in candidates)
        probe_segments = []
        for _ in range(max(candidates) + 1):
            probe_segments += _pulse_period_segments(chi, delta_t)
        probe_schedule = ProtocolSchedule(tuple(probe_segments), probe_samples)
        _, probe_record = evolve_schedule(initial, probe_schedule)
        k = int(np.argmin(probe_record.xi2()))
        n_star = candidates[k]
        meta["freeze_candidates"] = list(zip(probe_samples, probe_record.xi2().tolist()))
    t_star = n_star * t_c + delta_t

    prefix_segments = []
    for _ in range(n_star):
        prefix_segments += _pulse_period_segments(chi, delta_t)
    prefix_segments += [
        Pulse(RotationSpec((0.0, 1.0, 0.0), np.pi / 2)),
        QuadraticSegment("z", chi, delta_t),
    ]
    probe_prefix = ProtocolSchedule(tuple(prefix_segments), ())
    trigger_state, _ = evolve_schedule(initial, probe_prefix)

    freeze_rot = RotationSpec((-1.0, 0.0, 0.0), np.pi / 4)
    if freeze.resolve_signs:
        (sign,), var_z = _resolve_signs(trigger_state, [freeze_rot])
    else:
        sign, var_z = 1.0, float("nan")
    meta.update(
        {
            "freeze_time": t_star,
            "freeze_period_index": n_star,
            "freeze_sign": sign,
            "freeze_var_z": var_z,
        }
    )

    post_time = freeze.post_time_factor * meta["t_opt"]
    pre = mid_samples(n_star) + [t_star]
    post = (t_star + np.linspace(0.0, post_time, freeze.post_samples + 1)[1:]).tolist()
    segments = prefix_segments + [
        FreezeMarker(t_star),
        Pulse(freeze_rot.scaled(sign), label="freeze"),
        QuadraticSegment("z", chi, post_time),
    ]
    schedule = ProtocolSchedule(tuple(segments), tuple(pre + post), meta)
    prefix = ProtocolSchedule(
        tuple(prefix_segments + [FreezeMarker(t_star), Pulse(freeze_rot.scaled(sign), label="freeze")]),
        (),
    )
    return ProtocolBundle(schedule, initial, meta, prefix_schedule=prefix)


# ---------------------------------------------------------------------------
# modulated-drive protocol

def drive_zero_times(env: DriveEnvelope, t_max: float) -> np.ndarray:
    """Instants with Omega(t) = 0 in [0, t_max]."""
    k_min = int(np.ceil((0.0 - (np.pi / 2 - env.phase)) / np.pi - 1e-9))
    k_max = int(np.floor((env.omega * t_max - (np.pi / 2 - env.phase)) / np.pi + 1e-9))
    ks = np.arange(k_min, k_max + 1)
    ts = (np.pi / 2 - env.phase + ks * np.pi) / env.omega
    return ts[(ts >= -1e-15) & (ts <= t_max * (1 + 1e-12))]


def build_modulated_drive(
    n_particles: int,
    chi: float = 1.0,
    omega_over_chi: float = 2 * np.pi * 1e5,
    omega0_over_omega: float = PAPER_RATIO,
    phase: float = -np.pi / 2,
    freeze: FreezePolicy | None = None,
    steps_per_period: int = 64,
    t_end: float | None = None,
    fine_window: tuple | None = None,
) -> ProtocolBundle:
    """Modulated-drive protocol from the drive-phase-matched initial state
    exp(-i (omega0/omega) sin(phase) Jy) |j,j>_x.

    Samples land on every drive zero (where the dynamics touches the
    averaged model) plus an optional dense window at eighth-period spacing
    around the optimum. An enabled freeze turns the drive off at the best
    sampled drive zero, aligns the mean spin with a y-rotation by
    omega0/omega, rotates the squeezed axis onto z with a pi/4 pulse about
    -x (signs probed), then evolves under Jz^2 alone.
    """
    if omega0_over_omega < 0:
        raise DomainError("omega0_over_omega must be nonnegative")
    if n_particles < 2:
        raise DomainError("need at least 2 particles")
    j = n_particles / 2
    omega = omega_over_chi * chi
    env = DriveEnvelope(omega0_over_omega * omega, omega, phase)
    meta = {
        "protocol": "modulated-drive",
        "N": n_particles,
        "chi": chi,
        "omega_over_chi": omega_over_chi,
        "omega0_over_omega": omega0_over_omega,
        "phase": phase,
        "alpha0": alpha0(omega0_over_omega, 1.0),
        "steps_per_period": steps_per_period,
        "t_opt": t_opt_protocol(n_particles) / chi,
    }
    if omega_over_chi < 10 * n_particles:
        warnings.warn(
            f"omega/chi = {omega_over_chi:.3g} is not far above N = {n_particles}; "
            "the high-frequency average will be rough"
        )
        meta["high_frequency_ok"] = False
    else:
        meta["high_frequency_ok"] = True

    tilt = (env.omega0 / env.omega) * np.sin(phase)
    base = _css_x(n_particles)
    if tilt == 0:
        initial = base
    else:
        initial = DickeState(
            j, rotate_vector(j, base.amplitudes, RotationSpec((0.0, 1.0, 0.0), tilt))
        )

    center = 3 * reference_optimum(n_particles, chi).chi_t
    if t_end is None:
        t_end = 1.25 * meta["t_opt"]
    period = env.period

    def window_samples(t_lo, t_hi):
        step = period / 8
        n = int(np.floor((t_hi - t_lo) / step))
        return (t_lo + step * np.arange(n + 1)).tolist()

    if freeze is None:
        zeros = drive_zero_times(env, t_end).tolist()
        if fine_window is None:
            fine_window = (max(0.0, 0.85 * center), min(t_end, 1.1 * center))
        samples = sorted(set(zeros + window_samples(*fine_window)))
        samples = _dedupe_times(samples)
        segments = (DrivenSegment(env, chi, 0.0, t_end, steps_per_period),)
        schedule = ProtocolSchedule(segments, tuple(samples), meta)
        return ProtocolBundle(schedule, initial, meta)

    window = freeze.window if freeze.window is not None else 1
    if freeze.trigger == "analytic-time":
        target = meta["t_opt"]
    else:
        target = center
    zeros_all = drive_zero_times(env, target + (window + 1) * period)
    cand_mask = np.abs(zeros_all - target) <= window * period * (1 + 1e-12)
    candidates = zeros_all[cand_mask]
    if len(candidates) == 0:
        candidates = zeros_all[-2:]
    if freeze.trigger == "analytic-time":
        t_star = float(candidates[np.argmin(np.abs(candidates - target))])
        meta["freeze_candidates"] = [(t_star, None)]
    else:
        probe_schedule = ProtocolSchedule(
            (DrivenSegment(env, chi, 0.0, float(candidates[-1]), steps_per_period),),
            tuple(candidates),
        )
        _, probe_record = evolve_schedule(initial, probe_schedule)
        k = int(np.argmin(probe_record.xi2()))
        t_star = float(candidates[k])
        meta["freeze_candidates"] = list(
            zip(probe_record.times().tolist(), probe_record.xi2().tolist())
        )

    prefix_core = (DrivenSegment(env, chi, 0.0, t_star, steps_per_period),)
    trigger_state, _ = evolve_schedule(initial, ProtocolSchedule(prefix_core, ()))
    rot_align = RotationSpec((0.0, 1.0, 0.0), env.omega0 / env.omega)
    rot_freeze = RotationSpec((-1.0, 0.0, 0.0), np.pi / 4)
    if freeze.resolve_signs:
        signs, var_z = _resolve_signs(trigger_state, [rot_align, rot_freeze])
    else:
        signs, var_z = (1.0, 1.0), float("nan")
    meta.update(
        {
            "freeze_time": t_star,
            "freeze_signs": signs,
            "freeze_var_z": var_z,
            "drive_value_at_freeze": float(
                env.omega0 * np.cos(env.omega * t_star + env.phase)
            ),
        }
    )

    post_time = freeze.post_time_factor * meta["t_opt"]
    zeros_pre = [t for t in drive_zero_times(env, t_star) if t < t_star - 1e-15]
    samples = sorted(set(zeros_pre + [t_star]))
    post = (t_star + np.linspace(0.0, post_time, freeze.post_samples + 1)[1:]).tolist()
    samples = _dedupe_times(samples + post)
    freeze_pulses = [
        Pulse(rot_align.scaled(signs[0]), label="freeze-align"),
        Pulse(rot_freeze.scaled(signs[1]), label="freeze"),
    ]
    segments = (
        prefix_core
        + (FreezeMarker(t_star),)
        + tuple(freeze_pulses)
        + (QuadraticSegment("z", chi, post_time),)
    )
    schedule = ProtocolSchedule(segments, tuple(samples), meta)
    prefix = ProtocolSchedule(prefix_core + (FreezeMarker(t_star),) + tuple(freeze_pulses), ())
    return ProtocolBundle(schedule, initial, meta, prefix_schedule=prefix)


def _dedupe_times(times, rel=1e-12):
    out = []
    for t in sorted(times):
        if not out or t - out[-1] > rel * max(1.0, abs(t)):
            out.append(t)
    return out


# ---------------------------------------------------------------------------
# running protocols

def _noise_factors(schedule: ProtocolSchedule, noise: NoiseModel) -> np.ndarray:
    rng = np.random.default_rng(noise.seed)
    n = len(schedule.pulses())
    if noise.draw_scope == "per-pulse":
        r = rng.uniform(-0.5, 0.5, size=n)
    else:
        r = np.full(n, rng.uniform(-0.5, 0.5))
    return 1.0 + noise.eta * r


def _realize(schedule: ProtocolSchedule, noise: NoiseModel | None) -> ProtocolSchedule:
    if noise is None or noise.eta == 0:
        return schedule
    return schedule.with_pulse_scales(_noise_factors(schedule, noise))


def run_protocol(
    schedule: ProtocolSchedule,
    initial: DickeState,
    noise: NoiseModel | None = None,
    parameters: dict | None = None,
) -> RunRecord:
    """Execute a schedule; with noise, every pulse area (freeze included)
    is scaled by its own 1 + r*eta draw."""
    params = dict(parameters or {})
    params.setdefault("N", initial.n_particles)
    if noise is not None and noise.eta > 0:
        params.setdefault("noise_eta", noise.eta)
        params.setdefault("seed", noise.seed)
        params.setdefault("draw_scope", noise.draw_scope)
    _, record = evolve_schedule(initial, _realize(schedule, noise), params)
    for key in ("freeze_time", "freeze_sign", "freeze_signs"):
        if key in schedule.meta:
            record.add_event("freeze-decision", key=key, value=schedule.meta[key])
    return record


@dataclass
class MonteCarloResult:
    records: list
    times: np.ndarray
    mean_xi2: np.ndarray
    seeds: list


def worker_count(default_cap: int = 4) -> int:
    env = os.environ.get("SPINSQUEEZE_THREADS")
    if env:
        return max(1, int(env))
    return max(1, min(default_cap, os.cpu_count() or 1))


def run_monte_carlo(
    schedule: ProtocolSchedule,
    initial: DickeState,
    noise: NoiseModel,
    realizations: int,
    threads: int | None = None,
) -> MonteCarloResult:
    """Independent noise realizations with seeds derived from the master
    seed; deterministic regardless of thread count."""
    if realizations < 1:
        raise DomainError("realizations must be at least 1")
    children = np.random.SeedSequence(noise.seed).spawn(realizations)
    seeds = [int(c.generate_state(1, np.uint64)[0]) for c in children]
    workers = threads if threads is not None else worker_count()

    def one(i: int) -> RunRecord:
        child = NoiseModel(noise.eta, seed=seeds[i], draw_scope=noise.draw_scope)
        return run_protocol(schedule, initial, child, {"realization": i})

    if workers <= 1 or realizations == 1:
        records = [one(i) for i in range(realizations)]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            records = list(pool.map(one, range(realizations)))
    times = records[0].times()
    mean = np.mean([r.xi2() for r in records], axis=0)
    return MonteCarloResult(records=records, times=times, mean_xi2=mean, seeds=seeds)
