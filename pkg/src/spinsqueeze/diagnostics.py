"""Observables: squeezing parameter and angle, mean spin, Husimi field,
Jz-projection distribution, optimum detection, and scaling fits."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .dicke import DickeState, apply_spin, css_amplitudes, m_values
from .errors import DegenerateDirectionError, DomainError

MEAN_SPIN_FLOOR = 1e-9  # times j; below this the perpendicular plane is undefined
ISOTROPY_EPS = 1e-12


@dataclass(frozen=True)
class SqueezingReport:
    """Squeezing parameter xi^2 = var_min / (N/4) and the geometry behind it.

    theta_min is the angle of the minimal-variance direction in the
    deterministic perpendicular frame (n1, n2), mapped to [0, pi);
    isotropic is set when the perpendicular variance has no direction
    dependence (coherent states).
    """

    xi2: float
    theta_min: float
    mean_spin: tuple
    var_min: float
    var_max: float
    isotropic: bool = False

    @property
    def xi2_db(self) -> float:
        return 10.0 * np.log10(self.xi2)


def mean_spin(state: DickeState) -> np.ndarray:
    """(<Jx>, <Jy>, <Jz>)."""
    amps = state.amplitudes
    out = np.array(
        [
            np.vdot(amps, apply_spin(state.j, c, amps)).real
            for c in ((1.0, 0, 0), (0, 1.0, 0), (0, 0, 1.0))
        ]
    )
    return out


def perpendicular_frame(direction: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Deterministic orthonormal pair perpendicular to a unit direction:
    n1 = normalize(z x n) unless n is within 1e-6 of +-z, then n1 = x."""
    n = np.asarray(direction, dtype=float)
    cross = np.cross([0.0, 0.0, 1.0], n)
    if np.linalg.norm(cross) < 1e-6:
        n1 = np.array([1.0, 0.0, 0.0])
    else:
        n1 = cross / np.linalg.norm(cross)
    n2 = np.cross(n, n1)
    return n1, n2


def squeezing_report(state: DickeState) -> SqueezingReport:
    """Minimal perpendicular variance in closed form.

    With A = <J1^2 - J2^2> and B = <{J1, J2}> the variance along
    cos(t) n1 + sin(t) n2 is [<J1^2+J2^2> + A cos(2t) + B sin(2t)] / 2
    (mean values vanish perpendicular to the mean spin), minimized at
    2t = atan2(-B, -A).
    """
    ms = mean_spin(state)
    length = float(np.linalg.norm(ms))
    if length <= MEAN_SPIN_FLOOR * state.j:
        raise DegenerateDirectionError(
            f"mean spin length {length:.3e} too short to define a direction"
        )
    n = ms / length
    n1, n2 = perpendicular_frame(n)
    amps = state.amplitudes
    v1 = apply_spin(state.j, tuple(n1), amps)
    v2 = apply_spin(state.j, tuple(n2), amps)
    e11 = float(np.vdot(v1, v1).real)
    e22 = float(np.vdot(v2, v2).real)
    e12 = float(np.vdot(v1, v2).real)
    a, b = e11 - e22, 2.0 * e12
    r = float(np.hypot(a, b))
    var_min = (e11 + e22 - r) / 2.0
    var_max = (e11 + e22 + r) / 2.0
    isotropic = r < ISOTROPY_EPS * max(e11 + e22, 1.0)
    if isotropic:
        theta = 0.0
    else:
        theta = 0.5 * np.arctan2(-b, -a)
        if theta < 0:
            theta += np.pi
        if theta >= np.pi:
            theta -= np.pi
    n_particles = 2.0 * state.j
    return SqueezingReport(
        xi2=var_min / (n_particles / 4.0),
        theta_min=float(theta),
        mean_spin=tuple(ms),
        var_min=var_min,
        var_max=var_max,
        isotropic=isotropic,
    )


@dataclass(frozen=True)
class MDistribution:
    m: np.ndarray
    p: np.ndarray
    mean: float
    var: float


def m_distribution(state: DickeState) -> MDistribution:
    """|c_m|^2 over the Jz ladder, with its first two moments."""
    p = np.abs(state.amplitudes) ** 2
    m = m_values(state.j)
    mean = float(p @ m)
    var = float(p @ (m - mean) ** 2)
    return MDistribution(m=m.copy(), p=p, mean=mean, var=var)


def husimi_q(
    state: DickeState, theta_count: int = 128, phi_count: int = 256
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Q(theta, phi) = |<css(theta, phi)|state>|^2 on a cell-centered grid.

    Returns (theta, phi, Q) with Q shaped (theta_count, phi_count); the
    quadrature sum Q * sin(theta) * dtheta * dphi * (2j+1)/(4pi) is 1 up to
    grid error.
    """
    if theta_count < 16 or phi_count < 32:
        raise DomainError("husimi grid must be at least 16 x 32")
    j = state.j
    thetas = (np.arange(theta_count) + 0.5) * (np.pi / theta_count)
    phis = (np.arange(phi_count) + 0.5) * (2 * np.pi / phi_count)
    m = m_values(j)
    # <css|psi> = sum_m conj(c_m) psi_m with c_m = mag_m(theta) e^{-im phi}
    mags = np.stack([np.abs(css_amplitudes(j, t, 0.0)) for t in thetas])
    phase = np.exp(1j * np.outer(m, phis))
    overlaps = (mags * state.amplitudes[None, :]) @ phase
    return thetas, phis, np.abs(overlaps) ** 2


@dataclass
class RunRecord:
    """Time series of squeezing reports plus run provenance.

    parameters echoes what produced the run (N, chi, schedule digest, seed);
    events collects freeze decisions, sign choices, and renormalizations.
    """

    parameters: dict = field(default_factory=dict)
    samples: list = field(default_factory=list)
    events: list = field(default_factory=list)

    def add_sample(self, chi_t: float, report: SqueezingReport) -> None:
        if self.samples and chi_t <= self.samples[-1][0]:
            raise DomainError("sample times must be strictly increasing")
        self.samples.append((float(chi_t), report))

    def add_event(self, kind: str, **data) -> None:
        self.events.append({"kind": kind, **data})

    def times(self) -> np.ndarray:
        return np.array([t for t, _ in self.samples])

    def xi2(self) -> np.ndarray:
        return np.array([r.xi2 for _, r in self.samples])

    def reports(self) -> list:
        return [r for _, r in self.samples]

    def report_at(self, chi_t: float) -> SqueezingReport:
        idx = int(np.argmin(np.abs(self.times() - chi_t)))
        return self.samples[idx][1]


@dataclass(frozen=True)
class OptimumResult:
    chi_t: float
    xi2: float
    at_boundary: bool = False


def find_optimum(record, window=None) -> OptimumResult:
    """Refined minimum of a xi^2 time series.

    Accepts a RunRecord or a (times, values) pair; window restricts the
    search to [t_lo, t_hi]. Around the sampled minimum a parabola through
    the three neighboring points gives the refined vertex; a minimum on the
    window edge is returned as-is with at_boundary set.
    """
    if isinstance(record, RunRecord):
        times, values = record.times(), record.xi2()
    else:
        times, values = (np.asarray(a, dtype=float) for a in record)
    if window is not None:
        lo, hi = window
        mask = (times >= lo) & (times <= hi)
        times, values = times[mask], values[mask]
    if len(times) < 3:
        raise DomainError("need at least 3 samples in the window")
    k = int(np.argmin(values))
    if k == 0 or k == len(times) - 1:
        return OptimumResult(float(times[k]), float(values[k]), at_boundary=True)
    t0, t1, t2 = times[k - 1 : k + 2]
    v0, v1, v2 = values[k - 1 : k + 2]
    denom = (t0 - t1) * (t0 - t2) * (t1 - t2)
    a = (t2 * (v1 - v0) + t1 * (v0 - v2) + t0 * (v2 - v1)) / denom
    b = (t2**2 * (v0 - v1) + t1**2 * (v2 - v0) + t0**2 * (v1 - v2)) / denom
    if a <= 0:  # degenerate curvature, keep the sampled point
        return OptimumResult(float(t1), float(v1))
    tv = -b / (2 * a)
    if not (t0 <= tv <= t2):
        return OptimumResult(float(t1), float(v1))
    c = v1 - (a * t1 * t1 + b * t1)
    return OptimumResult(float(tv), float(a * tv * tv + b * tv + c))


def scaling_fit(points) -> tuple[float, float, float]:
    """Least-squares power law through (N, xi2_min) points.

    Returns (exponent, prefactor, rms residual of log values).
    """
    pts = [(float(n), float(v)) for n, v in points]
    if len({n for n, _ in pts}) < 3:
        raise DomainError("need at least 3 distinct N values")
    logn = np.log([n for n, _ in pts])
    logv = np.log([v for _, v in pts])
    exponent, intercept = np.polyfit(logn, logv, 1)
    resid = logv - (exponent * logn + intercept)
    return float(exponent), float(np.exp(intercept)), float(np.sqrt(np.mean(resid**2)))
