"""Time-evolution engines.

Quadratic generators evolve exactly (diagonal phases, cached axis
eigenbases, or one-time dense eigendecompositions). The driven model uses
second-order split-stepping on a grid aligned to the drive phase, with a
one-period Floquet operator fast path for runs spanning many periods. A
brute-force 2^N tensor-product oracle validates the symmetric-subspace
reduction at small N.
"""

from __future__ import annotations

import threading
from functools import lru_cache

import numpy as np
import scipy.linalg as sla
from scipy.integrate import solve_ivp

from .dicke import (
    DickeState,
    axis_eigensystem,
    m_values,
    rotate_vector,
)
from .diagnostics import RunRecord, squeezing_report
from .errors import DomainError, ResourceError
from .hamiltonians import DriveEnvelope, HamiltonianSpec, drive_integral
from .schedule import (
    DrivenSegment,
    FreezeMarker,
    ProtocolSchedule,
    Pulse,
    QuadraticSegment,
)

RENORM_STEP_TOL = 1e-12
TIME_TOL = 1e-9


# ---------------------------------------------------------------------------
# quadratic generators

def evolve_quadratic_diagonal(state: DickeState, chi: float, duration: float) -> DickeState:
    """chi*Jz^2 evolution: c_m -> exp(-i chi t m^2) c_m."""
    if duration < 0:
        raise DomainError("duration must be nonnegative")
    phases = np.exp(-1j * chi * duration * m_values(state.j) ** 2)
    return DickeState(state.j, phases * state.amplitudes)


def evolve_quadratic_axis(state: DickeState, axis: str, chi: float, duration: float) -> DickeState:
    """chi*J_axis^2 evolution via the cached axis eigenbasis."""
    if duration < 0:
        raise DomainError("duration must be nonnegative")
    if axis == "z":
        return evolve_quadratic_diagonal(state, chi, duration)
    if axis not in ("x", "y"):
        raise DomainError(f"axis must be x/y/z, got {axis!r}")
    vals, vecs = axis_eigensystem(state.j, axis)
    phases = np.exp(-1j * chi * duration * vals**2)
    amps = vecs @ (phases * (vecs.conj().T @ state.amplitudes))
    return DickeState(state.j, amps)


class SpectralPropagator:
    """Exact evolution under a fixed Hermitian matrix via one eigh."""

    def __init__(self, ham: np.ndarray):
        self.vals, self.vecs = sla.eigh(ham)

    def evolve_vec(self, vec: np.ndarray, duration: float) -> np.ndarray:
        phases = np.exp(-1j * duration * self.vals)
        return self.vecs @ (phases * (self.vecs.conj().T @ vec))

    def evolve(self, state: DickeState, duration: float) -> DickeState:
        if duration < 0:
            raise DomainError("duration must be nonnegative")
        return DickeState(state.j, self.evolve_vec(state.amplitudes, duration))


# ---------------------------------------------------------------------------
# driven model: split-step, aligned grid, period operators

def _aligned_grid(t0: float, t1: float, h: float) -> list:
    """Substep boundaries: t0, interior multiples of h, t1."""
    pts = [t0]
    k0 = int(np.ceil(t0 / h - 1e-9))
    k1 = int(np.floor(t1 / h + 1e-9))
    tol = 1e-12 * h
    for k in range(k0, k1 + 1):
        t = k * h
        if t0 + tol < t < t1 - tol:
            pts.append(t)
    pts.append(t1)
    return pts


def _split_steps(j, vec, chi, env, grid):
    """Strang steps over consecutive grid points: half Jz^2 phase, exact
    envelope-integral y-rotation, half Jz^2 phase."""
    m2 = m_values(j) ** 2
    vals, vecs = axis_eigensystem(j, "y")
    vecs_h = vecs.conj().T
    for a, b in zip(grid[:-1], grid[1:]):
        dt = b - a
        half = np.exp(-1j * chi * (dt / 2) * m2)
        angle = drive_integral(env, a, b)
        vec = half * vec
        vec = vecs @ (np.exp(-1j * angle * vals) * (vecs_h @ vec))
        vec = half * vec
    return vec


def evolve_driven(
    state: DickeState,
    chi: float,
    env: DriveEnvelope,
    t0: float,
    t1: float,
    steps_per_period: int = 64,
) -> DickeState:
    """Split-step evolution under chi*Jz^2 + Omega(t)*Jy from t0 to t1.

    The substep grid sits at absolute multiples of T/steps_per_period, so
    piecewise calls compose consistently with a single call.
    """
    if t1 < t0:
        raise DomainError("t1 must be >= t0")
    if steps_per_period < 16:
        raise DomainError("steps_per_period must be at least 16")
    if t1 == t0:
        return state
    if (t1 - t0) < 1e-15 * max(abs(t0), abs(t1)):
        raise DomainError("step underflow: interval too small to resolve")
    h = env.period / steps_per_period
    vec = _split_steps(state.j, state.amplitudes.copy(), chi, env, _aligned_grid(t0, t1, h))
    return DickeState(state.j, vec)


class _PeriodOperators:
    """Dense propagator over the first half drive period.

    The envelope obeys Omega(t + T/2) = -Omega(t), so the second half is the
    first conjugated by Rz(pi); a full period is their product.
    """

    def __init__(self, j: float, chi: float, env: DriveEnvelope, spp: int):
        if spp % 2:
            raise DomainError("period operators need even steps_per_period")
        dim = int(round(2 * j)) + 1
        m2 = m_values(j) ** 2
        vals, vecs = axis_eigensystem(j, "y")
        vecs_h = np.ascontiguousarray(vecs.conj().T)
        h = env.period / spp
        mat = np.eye(dim, dtype=complex)
        half = np.exp(-1j * chi * (h / 2) * m2)
        for k in range(spp // 2):
            a, b = k * h, (k + 1) * h
            angle = drive_integral(env, a, b)
            mat = half[:, None] * mat
            mat = vecs @ (np.exp(-1j * angle * vals)[:, None] * (vecs_h @ mat))
            mat = half[:, None] * mat
        self.u_half = mat
        self.rz_pi = np.exp(-1j * np.pi * m_values(j))
        self.half_time = env.period / 2

    def jump(self, vec: np.ndarray, half_index: int) -> np.ndarray:
        """Advance one half period starting at half_index * T/2."""
        if half_index % 2 == 0:
            return self.u_half @ vec
        return self.rz_pi * (self.u_half @ (self.rz_pi.conj() * vec))


_PERIOD_CACHE: dict = {}
_PERIOD_LOCK = threading.Lock()


def period_operators(j: float, chi: float, env: DriveEnvelope, spp: int) -> _PeriodOperators:
    key = (j, chi, env.omega0, env.omega, env.phase, spp)
    with _PERIOD_LOCK:
        ops = _PERIOD_CACHE.get(key)
    if ops is None:
        ops = _PeriodOperators(j, chi, env, spp)
        with _PERIOD_LOCK:
            _PERIOD_CACHE[key] = ops
    return ops


class DrivenEngine:
    """Stateful walker for one driven stretch, mixing half-period jumps with
    fine split-steps so arbitrary sample times stay cheap."""

    def __init__(self, j: float, chi: float, env: DriveEnvelope, spp: int = 64, use_period_ops=None):
        self.j, self.chi, self.env, self.spp = j, chi, env, spp
        self.h = env.period / spp
        dim = int(round(2 * j)) + 1
        self._ops = None
        self._use_ops = use_period_ops
        self._dim = dim

    def _want_ops(self, span: float) -> bool:
        if self._use_ops is not None:
            return self._use_ops and self.spp % 2 == 0
        periods = span / self.env.period
        return self.spp % 2 == 0 and periods >= max(16, self._dim / 12)

    def prepare(self, span: float) -> None:
        if self._ops is None and self._want_ops(span):
            self._ops = period_operators(self.j, self.chi, self.env, self.spp)

    def advance(self, vec: np.ndarray, t_from: float, t_to: float) -> np.ndarray:
        if t_to < t_from:
            raise DomainError("cannot advance backwards")
        if t_to == t_from:
            return vec
        h2 = self.env.period / 2
        if self._ops is not None:
            a = int(np.ceil(t_from / h2 - 1e-9))
            b = int(np.floor(t_to / h2 + 1e-9))
            if b > a and (b - a) * h2 > 2 * self.h:
                ta, tb = a * h2, b * h2
                if ta > t_from + 1e-12 * h2:
                    vec = _split_steps(self.j, vec, self.chi, self.env,
                                       _aligned_grid(t_from, ta, self.h))
                for k in range(a, b):
                    vec = self._ops.jump(vec, k)
                if t_to > tb + 1e-12 * h2:
                    vec = _split_steps(self.j, vec, self.chi, self.env,
                                       _aligned_grid(tb, t_to, self.h))
                return vec
        return _split_steps(self.j, vec, self.chi, self.env,
                            _aligned_grid(t_from, t_to, self.h))


def driven_doubling_check(
    state: DickeState,
    chi: float,
    env: DriveEnvelope,
    t0: float,
    t1: float,
    steps_per_period: int = 64,
) -> dict:
    """One-shot integrator self-check: terminal fidelity between the run at
    steps_per_period and at twice that."""
    coarse = _engine_run(state, chi, env, t0, t1, steps_per_period)
    fine = _engine_run(state, chi, env, t0, t1, 2 * steps_per_period)
    fid = abs(np.vdot(fine.amplitudes, coarse.amplitudes))
    return {
        "steps_per_period": steps_per_period,
        "doubled": 2 * steps_per_period,
        "terminal_fidelity_gap": max(0.0, float(1.0 - fid)),
    }


def _engine_run(state, chi, env, t0, t1, spp):
    eng = DrivenEngine(state.j, chi, env, spp)
    eng.prepare(t1 - t0)
    return DickeState(state.j, eng.advance(state.amplitudes.copy(), t0, t1))


# ---------------------------------------------------------------------------
# schedule execution

def evolve_schedule(
    state: DickeState,
    schedule: ProtocolSchedule,
    parameters: dict | None = None,
) -> tuple[DickeState, RunRecord]:
    """Apply segments in order, sampling diagnostics at the requested times.

    Boundary convention: a sample time equal to a segment boundary is taken
    before any zero-duration event listed after that boundary. Norm drift
    beyond 1e-12 is renormalized and counted in the record.
    """
    record = RunRecord(parameters=dict(parameters or {}))
    record.parameters.setdefault("schedule_digest", schedule.digest())
    j = state.j
    vec = state.amplitudes.copy()
    t = 0.0
    samples = list(schedule.sample_times)
    si = 0
    renorms = 0

    def maybe_renorm(v):
        nonlocal renorms
        norm = np.linalg.norm(v)
        if abs(norm - 1.0) > RENORM_STEP_TOL:
            v = v / norm
            renorms += 1
        return v

    def emit(time, v):
        record.add_sample(time, squeezing_report(DickeState(j, v)))

    if si < len(samples) and samples[si] <= TIME_TOL * max(1.0, abs(samples[si])):
        emit(samples[si], vec)
        si += 1

    for seg in schedule.segments:
        if isinstance(seg, Pulse):
            rot = seg.rotation.scaled(seg.area_scale)
            vec = maybe_renorm(rotate_vector(j, vec, rot))
            continue
        if isinstance(seg, FreezeMarker):
            record.add_event("freeze", time=t)
            continue
        if isinstance(seg, QuadraticSegment):
            end = t + seg.duration
            if seg.axis == "z":
                m2 = m_values(j) ** 2

                def step(v, dt, _m2=m2, _chi=seg.chi):
                    return np.exp(-1j * _chi * dt * _m2) * v
            else:
                vals, vecs = axis_eigensystem(j, seg.axis)
                vecs_h = vecs.conj().T

                def step(v, dt, _va=vals, _ve=vecs, _vh=vecs_h, _chi=seg.chi):
                    return _ve @ (np.exp(-1j * _chi * dt * _va**2) * (_vh @ v))

            while si < len(samples) and samples[si] <= end + TIME_TOL * max(1.0, end):
                target = min(samples[si], end)
                if target > t:
                    vec = step(vec, target - t)
                    t = target
                emit(samples[si], vec)
                si += 1
            if end > t:
                vec = step(vec, end - t)
            t = end
            vec = maybe_renorm(vec)
            continue
        if isinstance(seg, DrivenSegment):
            if abs(seg.t0 - t) > TIME_TOL * max(1.0, abs(t)):
                raise DomainError(
                    f"driven segment starts at {seg.t0}, schedule time is {t}"
                )
            engine = DrivenEngine(j, seg.chi, seg.env, seg.steps_per_period)
            engine.prepare(seg.duration)
            t = seg.t0
            end = seg.t1
            while si < len(samples) and samples[si] <= end + TIME_TOL * max(1.0, end):
                target = min(max(samples[si], t), end)
                vec = engine.advance(vec, t, target)
                t = target
                emit(samples[si], vec)
                si += 1
            vec = engine.advance(vec, t, end)
            t = end
            vec = maybe_renorm(vec)
            continue
        raise DomainError(f"unknown segment type {type(seg).__name__}")

    while si < len(samples):
        if samples[si] <= t + TIME_TOL * max(1.0, t):
            emit(samples[si], vec)
            si += 1
        else:
            raise DomainError(f"sample time {samples[si]} beyond schedule end {t}")

    if renorms:
        record.add_event("renormalization", count=renorms)
    return DickeState(j, vec), record


# ---------------------------------------------------------------------------
# full-Hilbert oracle

MAX_ORACLE_N = 10


@lru_cache(maxsize=4)
def full_spin_ops(n: int) -> tuple:
    """Collective (Jx, Jy, Jz) as dense 2^n matrices, bit i = 1 meaning down."""
    if n > MAX_ORACLE_N:
        raise ResourceError(f"full-Hilbert oracle limited to N<={MAX_ORACLE_N}")
    sx = np.array([[0, 1], [1, 0]], dtype=complex) / 2
    sy = np.array([[0, -1j], [1j, 0]], dtype=complex) / 2
    sz = np.array([[1, 0], [0, -1]], dtype=complex) / 2
    eye = np.eye(2, dtype=complex)
    totals = [np.zeros((2**n, 2**n), dtype=complex) for _ in range(3)]
    for i in range(n):
        for tot, single in zip(totals, (sx, sy, sz)):
            op = np.array([[1.0 + 0j]])
            for k in range(n):
                op = np.kron(op, single if k == i else eye)
            tot += op
    for tot in totals:
        tot.setflags(write=False)
    return tuple(totals)


@lru_cache(maxsize=4)
def dicke_isometry(n: int) -> np.ndarray:
    """2^n x (n+1) isometry whose column k is the symmetric state with k
    down spins, matching the descending-m Dicke ordering."""
    if n > MAX_ORACLE_N:
        raise ResourceError(f"full-Hilbert oracle limited to N<={MAX_ORACLE_N}")
    iso = np.zeros((2**n, n + 1), dtype=complex)
    counts = np.zeros(n + 1)
    for b in range(2**n):
        k = bin(b).count("1")
        iso[b, k] = 1.0
        counts[k] += 1
    iso /= np.sqrt(counts)[None, :]
    iso.setflags(write=False)
    return iso


def lift_to_full(state: DickeState) -> np.ndarray:
    n = state.n_particles
    if abs(state.j - n / 2) > 1e-9:
        raise DomainError("full-Hilbert oracle needs the maximal-j sector")
    return dicke_isometry(n) @ state.amplitudes


def project_to_dicke(n: int, full_vec: np.ndarray) -> tuple[DickeState, float]:
    """Project back onto the symmetric sector; returns the state and the
    fraction of norm left outside the sector (integrator norm drift does
    not count against it)."""
    amps = dicke_isometry(n).conj().T @ full_vec
    norm = np.linalg.norm(amps)
    full_norm = np.linalg.norm(full_vec)
    deficit = float(abs(full_norm**2 - norm**2) / full_norm**2)
    if deficit > 1e-6:
        raise DomainError(f"evolution left the symmetric sector, deficit {deficit:.2e}")
    return DickeState(n / 2, amps / norm), deficit


def _full_generator(n: int, spec: HamiltonianSpec) -> np.ndarray:
    jx, jy, jz = full_spin_ops(n)
    if spec.form == "oat":
        return spec.chi * (jz @ jz)
    if spec.form == "tact":
        return spec.chi * (jz @ jz - jy @ jy)
    if spec.form == "quadratic":
        op = {"x": jx, "y": jy, "z": jz}[spec.axis]
        return spec.chi * (op @ op)
    if spec.form == "mixture":
        return spec.chi * (spec.alpha0 * jz @ jz + (1 - spec.alpha0) * jx @ jx)
    raise DomainError(f"no static full-space generator for {spec.form!r}")


def _full_driven_evolve(n, vec, chi, env, t0, t1):
    jx, jy, jz = full_spin_ops(n)
    jz2 = (jz @ jz).real
    dim = 2**n

    def rhs(t, y):
        psi = y[:dim] + 1j * y[dim:]
        dpsi = -1j * (chi * (jz2 @ psi) + (env.omega0 * np.cos(env.omega * t + env.phase)) * (jy @ psi))
        return np.concatenate([dpsi.real, dpsi.imag])

    sol = solve_ivp(
        rhs,
        (t0, t1),
        np.concatenate([vec.real, vec.imag]),
        method="DOP853",
        rtol=1e-11,
        atol=1e-13,
        max_step=env.period / 16,
    )
    if not sol.success:
        raise RuntimeError(f"oracle integration failed: {sol.message}")
    return sol.y[:dim, -1] + 1j * sol.y[dim:, -1]


def full_hilbert_oracle(
    state: DickeState,
    generator,
    duration: float | None = None,
) -> tuple[DickeState, float]:
    """Evolve in the full 2^N space and project back to the Dicke basis.

    generator is a HamiltonianSpec (duration required) or a
    ProtocolSchedule. Static forms use dense expm; the driven form uses an
    adaptive high-order integrator, deliberately a different discretization
    from the split-step engine it validates.
    """
    n = state.n_particles
    if n > MAX_ORACLE_N:
        raise ResourceError(f"full-Hilbert oracle limited to N<={MAX_ORACLE_N}")
    vec = lift_to_full(state)
    if isinstance(generator, HamiltonianSpec):
        if generator.form == "driven":
            if duration is None:
                raise DomainError("driven oracle needs a duration")
            vec = _full_driven_evolve(n, vec, generator.chi, generator.drive, 0.0, duration)
        else:
            if duration is None:
                raise DomainError("oracle needs a duration")
            u = sla.expm(-1j * duration * _full_generator(n, generator))
            vec = u @ vec
        return project_to_dicke(n, vec)
    if isinstance(generator, ProtocolSchedule):
        jx, jy, jz = full_spin_ops(n)
        t = 0.0
        for seg in generator.segments:
            if isinstance(seg, Pulse):
                axis_op = sum(a * op for a, op in zip(seg.rotation.axis, (jx, jy, jz)))
                vec = sla.expm(-1j * seg.rotation.angle * seg.area_scale * axis_op) @ vec
            elif isinstance(seg, QuadraticSegment):
                op = {"x": jx, "y": jy, "z": jz}[seg.axis]
                vec = sla.expm(-1j * seg.chi * seg.duration * (op @ op)) @ vec
                t += seg.duration
            elif isinstance(seg, DrivenSegment):
                vec = _full_driven_evolve(n, vec, seg.chi, seg.env, seg.t0, seg.t1)
                t = seg.t1
            elif isinstance(seg, FreezeMarker):
                continue
            else:
                raise DomainError(f"unknown segment type {type(seg).__name__}")
        return project_to_dicke(n, vec)
    raise DomainError("generator must be a HamiltonianSpec or ProtocolSchedule")
