"""Dicke-basis states, collective spin operators, and exact rotations.

Everything lives in the maximal-spin symmetric subspace of N spin-1/2
particles: dimension N+1 instead of 2^N. States are amplitude vectors over
the Jz eigenbasis |j,m> ordered m = j, j-1, ..., -j (index 0 is the north
pole |j,j>).
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
import scipy.linalg as sla

from .errors import DomainError

NORM_TOL = 1e-8
UNIT_AXIS_TOL = 1e-12

BASIS_LABEL = "Jz-descending"


def _check_j(j: float) -> float:
    j = float(j)
    twoj = 2.0 * j
    if not np.isfinite(j) or j <= 0 or abs(twoj - round(twoj)) > 1e-9:
        raise DomainError(f"j must be a positive half-integer, got {j}")
    return j


def dim_for(j: float) -> int:
    return int(round(2 * _check_j(j))) + 1


@lru_cache(maxsize=None)
def m_values(j: float) -> np.ndarray:
    """Eigenvalues of Jz in basis order: j, j-1, ..., -j."""
    j = _check_j(j)
    m = j - np.arange(dim_for(j), dtype=float)
    m.setflags(write=False)
    return m


@lru_cache(maxsize=None)
def ladder_values(j: float) -> np.ndarray:
    """sqrt(j(j+1) - m(m+1)) for the raising transition m -> m+1.

    Entry k couples basis index k+1 (value m) to index k (value m+1),
    matching the descending-m ordering.
    """
    m = m_values(j)[1:]
    lad = np.sqrt(j * (j + 1) - m * (m + 1))
    lad.setflags(write=False)
    return lad


@dataclass(frozen=True)
class DickeState:
    """Pure symmetric collective-spin state.

    amplitudes[k] is the coefficient of |j, m=j-k>. The vector must be
    normalized; instances are immutable and safe to share between threads.
    """

    j: float
    amplitudes: np.ndarray

    def __post_init__(self):
        j = _check_j(self.j)
        amps = np.asarray(self.amplitudes, dtype=complex)
        if amps.ndim != 1 or amps.shape[0] != dim_for(j):
            raise DomainError(
                f"amplitude vector must have length {dim_for(j)} for j={j}"
            )
        norm = float(np.linalg.norm(amps))
        if abs(norm - 1.0) > NORM_TOL:
            raise DomainError(f"state norm {norm} deviates from 1 beyond {NORM_TOL}")
        if abs(norm - 1.0) > 1e-13:  # keep already-normalized vectors bit-stable
            amps = amps / norm
        amps.setflags(write=False)
        object.__setattr__(self, "j", j)
        object.__setattr__(self, "amplitudes", amps)

    @property
    def dim(self) -> int:
        return self.amplitudes.shape[0]

    @property
    def n_particles(self) -> int:
        return int(round(2 * self.j))

    def norm_error(self) -> float:
        return abs(float(np.linalg.norm(self.amplitudes)) - 1.0)

    def to_snapshot_json(self) -> str:
        """Snapshot as JSON text.

        Amplitudes are written with 18 significant decimal digits, which
        round-trips float64 bit-exactly.
        """
        rows = ",".join(
            f"[{c.real:.17e},{c.imag:.17e}]" for c in self.amplitudes
        )
        return (
            f'{{"N": {self.n_particles}, "j": {self.j!r}, '
            f'"basis": "{BASIS_LABEL}", "amplitudes": [{rows}]}}'
        )

    @staticmethod
    def from_snapshot(data: dict) -> "DickeState":
        if data.get("basis") != BASIS_LABEL:
            raise DomainError(f"unsupported basis {data.get('basis')!r}")
        amps = np.array(
            [complex(float(re), float(im)) for re, im in data["amplitudes"]]
        )
        state = DickeState(float(data["j"]), amps)
        if int(data["N"]) != state.n_particles:
            raise DomainError("snapshot N inconsistent with j")
        return state

    def save(self, path) -> None:
        with open(path, "w") as fh:
            fh.write(self.to_snapshot_json())

    @staticmethod
    def load(path) -> "DickeState":
        with open(path) as fh:
            return DickeState.from_snapshot(json.load(fh))


@dataclass(frozen=True)
class SpinOperator:
    """Collective spin component as a banded (tridiagonal) matrix.

    Stores the main diagonal and the first off-diagonals; upper[k] couples
    index k+1 to k, lower[k] couples index k to k+1.
    """

    j: float
    kind: str
    diag: np.ndarray
    upper: np.ndarray
    lower: np.ndarray

    def apply(self, vec: np.ndarray) -> np.ndarray:
        out = self.diag * vec
        out[:-1] += self.upper * vec[1:]
        out[1:] += self.lower * vec[:-1]
        return out

    def dense(self) -> np.ndarray:
        n = len(self.diag)
        mat = np.diag(self.diag)
        mat[np.arange(n - 1), np.arange(1, n)] = self.upper
        mat[np.arange(1, n), np.arange(n - 1)] = self.lower
        return mat


_KINDS = ("jx", "jy", "jz", "jplus", "jminus")


@lru_cache(maxsize=None)
def spin_operator(j: float, kind: str) -> SpinOperator:
    """Jx, Jy, Jz or the ladder operators J+/J- for spin length j."""
    j = _check_j(j)
    kind = kind.lower()
    if kind not in _KINDS:
        raise DomainError(f"kind must be one of {_KINDS}, got {kind!r}")
    n = dim_for(j)
    lad = ladder_values(j)
    zero_d = np.zeros(n, dtype=complex)
    zero_o = np.zeros(n - 1, dtype=complex)
    if kind == "jz":
        op = SpinOperator(j, kind, m_values(j).astype(complex), zero_o, zero_o.copy())
    elif kind == "jplus":
        op = SpinOperator(j, kind, zero_d, lad.astype(complex), zero_o)
    elif kind == "jminus":
        op = SpinOperator(j, kind, zero_d, zero_o, lad.astype(complex))
    elif kind == "jx":
        half = (lad / 2).astype(complex)
        op = SpinOperator(j, kind, zero_d, half, half.copy())
    else:  # jy = (J+ - J-)/(2i)
        op = SpinOperator(j, kind, zero_d, -0.5j * lad, 0.5j * lad)
    for arr in (op.diag, op.upper, op.lower):
        arr.setflags(write=False)
    return op


def apply_spin(j: float, coeffs, vec: np.ndarray) -> np.ndarray:
    """Apply (cx*Jx + cy*Jy + cz*Jz) to a raw amplitude vector.

    Tridiagonal action, O(dim); coefficients may be any reals.
    """
    cx, cy, cz = coeffs
    lad = ladder_values(j)
    out = (cz * m_values(j)) * vec
    a = (cx - 1j * cy) / 2.0  # J+ coefficient
    b = (cx + 1j * cy) / 2.0  # J- coefficient
    if a != 0:
        out[:-1] += a * lad * vec[1:]
    if b != 0:
        out[1:] += b * lad * vec[:-1]
    return out


def expectation(state: DickeState, op: SpinOperator) -> float:
    """<state|op|state>, guaranteed real for the Hermitian kinds."""
    if op.j != state.j:
        raise DomainError(f"operator j={op.j} does not match state j={state.j}")
    val = np.vdot(state.amplitudes, op.apply(state.amplitudes))
    return float(val.real)


def pair_moment(state: DickeState, op_a: SpinOperator, op_b: SpinOperator) -> complex:
    """<A B> evaluated with two banded applications."""
    if op_a.j != state.j or op_b.j != state.j:
        raise DomainError("operator spin length does not match state")
    return complex(np.vdot(state.amplitudes, op_a.apply(op_b.apply(state.amplitudes))))


@dataclass(frozen=True)
class RotationSpec:
    """Rotation exp(-i*angle*(axis . J)) about a unit axis."""

    axis: tuple
    angle: float

    def __post_init__(self):
        axis = tuple(float(a) for a in self.axis)
        if len(axis) != 3:
            raise DomainError("axis must be a 3-vector")
        norm = float(np.linalg.norm(axis))
        if abs(norm - 1.0) > UNIT_AXIS_TOL:
            raise DomainError(f"axis must be unit length, |axis|={norm}")
        if not np.isfinite(self.angle):
            raise DomainError("angle must be finite")
        object.__setattr__(self, "axis", axis)
        object.__setattr__(self, "angle", float(self.angle))

    def scaled(self, factor: float) -> "RotationSpec":
        return RotationSpec(self.axis, self.angle * factor)


@lru_cache(maxsize=None)
def axis_eigensystem(j: float, axis: str):
    """One-time eigendecomposition of Jx or Jy; eigenvalues snapped to the
    exact half-integer ladder so repeated pulses stay exact."""
    op = spin_operator(j, "jx" if axis == "x" else "jy")
    vals, vecs = sla.eigh(op.dense())
    exact = np.round(vals * 2) / 2
    if np.max(np.abs(vals - exact)) > 1e-9 * max(1.0, j):
        raise RuntimeError("axis eigenvalues failed half-integer snap")
    exact.setflags(write=False)
    vecs.setflags(write=False)
    return exact, vecs


def _rotate_vec_axis(j: float, vec: np.ndarray, axis: str, angle: float) -> np.ndarray:
    if angle == 0.0:
        return vec.copy()
    if axis == "z":
        return np.exp(-1j * angle * m_values(j)) * vec
    vals, vecs = axis_eigensystem(j, axis)
    return vecs @ (np.exp(-1j * angle * vals) * (vecs.conj().T @ vec))


def rotate_vector(j: float, vec: np.ndarray, rot: RotationSpec) -> np.ndarray:
    """Rotation applied to a raw amplitude vector (no renormalization)."""
    ax = np.array(rot.axis)
    angle = rot.angle
    for name, unit in (("x", (1, 0, 0)), ("y", (0, 1, 0)), ("z", (0, 0, 1))):
        dot = float(ax @ unit)
        if abs(abs(dot) - 1.0) < UNIT_AXIS_TOL:
            return _rotate_vec_axis(j, vec, name, np.sign(dot) * angle)
    # general axis: conjugate a z-rotation into place, R_n = F Rz(angle) F^-1
    # with F = Rz(phi_n) Ry(theta_n) mapping z onto the axis
    theta_n = float(np.arccos(np.clip(ax[2], -1.0, 1.0)))
    phi_n = float(np.arctan2(ax[1], ax[0]))
    out = _rotate_vec_axis(j, vec, "z", -phi_n)
    out = _rotate_vec_axis(j, out, "y", -theta_n)
    out = _rotate_vec_axis(j, out, "z", angle)
    out = _rotate_vec_axis(j, out, "y", theta_n)
    out = _rotate_vec_axis(j, out, "z", phi_n)
    return out


def rotate(state: DickeState, rot: RotationSpec) -> DickeState:
    """exp(-i*angle*(axis.J)) |state>; exact up to eigensolver precision."""
    return DickeState(state.j, rotate_vector(state.j, state.amplitudes, rot))


def make_dicke_state(j: float, m: float) -> DickeState:
    """Basis state |j,m>."""
    j = _check_j(j)
    if m < -j - 1e-12 or m > j + 1e-12 or abs((j - m) - round(j - m)) > 1e-9:
        raise DomainError(f"m={m} out of range for j={j}")
    amps = np.zeros(dim_for(j), dtype=complex)
    amps[int(round(j - m))] = 1.0
    return DickeState(j, amps)


def make_css(j: float, theta: float, phi: float) -> DickeState:
    """Coherent spin state along (theta, phi), built by rotating |j,j>.

    Defined operationally as Rz(phi) Ry(theta) |j,j> so one global phase
    convention holds everywhere; mean spin is j*(sin t cos p, sin t sin p, cos t).
    """
    vec = np.zeros(dim_for(_check_j(j)), dtype=complex)
    vec[0] = 1.0
    vec = _rotate_vec_axis(j, vec, "y", float(theta))
    vec = _rotate_vec_axis(j, vec, "z", float(phi))
    return DickeState(j, vec)


def css_amplitudes(j: float, theta: float, phi: float) -> np.ndarray:
    """Closed-form CSS amplitudes matching make_css's phase convention.

    c_m = binom(2j, j-m)^(1/2) cos(t/2)^(j+m) sin(t/2)^(j-m) e^(-i m phi)
    for theta in [0, pi], evaluated through log-gamma so large j stays
    stable. Used for fast Husimi grids; agreement with make_css is covered
    by tests.
    """
    from scipy.special import gammaln

    j = _check_j(j)
    if not 0.0 <= theta <= np.pi + 1e-12:
        raise DomainError("css_amplitudes requires theta in [0, pi]")
    m = m_values(j)
    half = theta / 2.0
    log_c = np.log(max(np.cos(half), 1e-300))
    log_s = np.log(max(np.sin(half), 1e-300))
    log_binom = 0.5 * (
        gammaln(2 * j + 1) - gammaln(j - m + 1) - gammaln(j + m + 1)
    )
    mag = np.exp(log_binom + (j + m) * log_c + (j - m) * log_s)
    amps = mag * np.exp(-1j * m * phi)
    return amps / np.linalg.norm(amps)


def overlap(a: DickeState, b: DickeState) -> complex:
    if a.j != b.j:
        raise DomainError("states have different spin length")
    return complex(np.vdot(a.amplitudes, b.amplitudes))


def fidelity(a: DickeState, b: DickeState) -> float:
    """Phase-insensitive |<a|b>|; the only comparison used across the package."""
    return abs(overlap(a, b))


def rotate_classical(vec, axis, angle):
    """Rodrigues rotation of a 3-vector; oracle for mean-spin covariance."""
    v = np.asarray(vec, dtype=float)
    k = np.asarray(axis, dtype=float)
    k = k / np.linalg.norm(k)
    return (
        v * np.cos(angle)
        + np.cross(k, v) * np.sin(angle)
        + k * (k @ v) * (1 - np.cos(angle))
    )
