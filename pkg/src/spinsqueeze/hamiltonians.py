"""Generator builders: twisting Hamiltonians, the modulated drive, and the
high-frequency effective forms with their Bessel coefficient.

Internal convention is dimensionless: chi = 1 and time means chi*t unless a
caller converts units at the boundary.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.special import j0 as _scipy_j0

from .dicke import RotationSpec, m_values, spin_operator
from .errors import DomainError


@dataclass(frozen=True)
class DriveEnvelope:
    """Modulated drive Omega(t) = omega0 * cos(omega*t + phase)."""

    omega0: float
    omega: float
    phase: float = 0.0

    def __post_init__(self):
        if not self.omega > 0:
            raise DomainError(f"omega must be positive, got {self.omega}")
        if self.omega0 < 0:
            raise DomainError(f"omega0 must be nonnegative, got {self.omega0}")

    @property
    def period(self) -> float:
        return 2 * np.pi / self.omega


def drive_value(env: DriveEnvelope, t: float) -> float:
    return env.omega0 * np.cos(env.omega * t + env.phase)


def drive_integral(env: DriveEnvelope, t0: float, t1: float) -> float:
    """Exact antiderivative of the envelope over [t0, t1]."""
    r = env.omega0 / env.omega
    return r * (np.sin(env.omega * t1 + env.phase) - np.sin(env.omega * t0 + env.phase))


def bessel_j0(x: float) -> float:
    """Zeroth-order Bessel function of the first kind.

    Delegates to scipy's vetted routine; the 1e-12 absolute accuracy
    contract is pinned by tests against an independent power-series oracle.
    """
    if not np.isfinite(x):
        raise DomainError("bessel_j0 requires finite x")
    return float(_scipy_j0(x))


def alpha0(omega0: float, omega: float) -> float:
    """Mixing coefficient [1 + J0(2*omega0/omega)] / 2 of the averaged model."""
    if not omega > 0:
        raise DomainError(f"omega must be positive, got {omega}")
    return 0.5 * (1.0 + bessel_j0(2.0 * omega0 / omega))


_FORMS = ("oat", "tact", "quadratic", "mixture", "driven")


@dataclass(frozen=True)
class HamiltonianSpec:
    """Tagged description of a generator.

    forms: oat = chi*Jz^2, tact = chi*(Jz^2 - Jy^2), quadratic = chi*J_axis^2,
    mixture = chi*(alpha0*Jz^2 + (1-alpha0)*Jx^2), driven = oat + Omega(t)*Jy.
    """

    chi: float
    form: str
    axis: str | None = None
    alpha0: float | None = None
    drive: DriveEnvelope | None = None

    def __post_init__(self):
        if not self.chi > 0:
            raise DomainError(f"chi must be positive, got {self.chi}")
        if self.form not in _FORMS:
            raise DomainError(f"unknown Hamiltonian form {self.form!r}")
        if self.form == "quadratic" and self.axis not in ("x", "y", "z"):
            raise DomainError("quadratic form needs axis in x/y/z")
        if self.form == "mixture":
            if self.alpha0 is None or not (-0.5 < self.alpha0 <= 1.0):
                raise DomainError("mixture alpha0 must lie in (-0.5, 1]")
        if self.form == "driven" and self.drive is None:
            raise DomainError("driven form needs a DriveEnvelope")


def oat(chi: float = 1.0) -> HamiltonianSpec:
    return HamiltonianSpec(chi, "oat")


def tact(chi: float = 1.0) -> HamiltonianSpec:
    return HamiltonianSpec(chi, "tact")


def quadratic(axis: str, chi: float = 1.0) -> HamiltonianSpec:
    return HamiltonianSpec(chi, "quadratic", axis=axis)


def mixture(alpha: float, chi: float = 1.0) -> HamiltonianSpec:
    return HamiltonianSpec(chi, "mixture", alpha0=alpha)


def driven(envelope: DriveEnvelope, chi: float = 1.0) -> HamiltonianSpec:
    return HamiltonianSpec(chi, "driven", drive=envelope)


@lru_cache(maxsize=None)
def quadratic_matrix(j: float, axis: str) -> np.ndarray:
    """Dense J_axis^2 (pentadiagonal in practice, dense for simplicity)."""
    op = spin_operator(j, f"j{axis}").dense()
    mat = op @ op
    mat.setflags(write=False)
    return mat


def matrix(j: float, spec: HamiltonianSpec) -> np.ndarray:
    """Dense matrix of a time-independent spec (driven is rejected)."""
    if spec.form == "oat":
        return spec.chi * np.diag(m_values(j).astype(complex) ** 2)
    if spec.form == "tact":
        return spec.chi * (quadratic_matrix(j, "z") - quadratic_matrix(j, "y"))
    if spec.form == "quadratic":
        return spec.chi * quadratic_matrix(j, spec.axis)
    if spec.form == "mixture":
        return spec.chi * (
            spec.alpha0 * quadratic_matrix(j, "z")
            + (1.0 - spec.alpha0) * quadratic_matrix(j, "x")
        )
    raise DomainError(f"no static matrix for form {spec.form!r}")


def build_effective(
    j: float, chi: float, omega0: float, omega: float, phase: float
) -> tuple[np.ndarray, RotationSpec]:
    """Averaged high-frequency generator and its frame rotation.

    Returns the dense matrix chi*[a0*Jz^2 + (1-a0)*Jx^2] with
    a0 = [1 + J0(2*omega0/omega)]/2, plus the y-rotation by
    (omega0/omega)*sin(phase) that conjugates it for nonzero drive phase.
    """
    a0 = alpha0(omega0, omega)
    mat = matrix(j, mixture(a0, chi))
    rot = RotationSpec((0.0, 1.0, 0.0), (omega0 / omega) * np.sin(phase))
    return mat, rot


def time_averaged_trig_moments(
    omega0: float, omega: float, phase: float, quadrature_points: int = 4096
) -> tuple[float, float, float]:
    """Period averages of cos^2, sin^2, and sin*cos of the accumulated
    rotation angle theta1(t) = (omega0/omega) * sin(omega*t + phase).

    Uniform midpoint quadrature over one period; spectrally accurate for
    this periodic integrand. Serves as the independent check that the
    averaged model's coefficients are the Bessel values.
    """
    if quadrature_points < 64:
        raise DomainError("need at least 64 quadrature points")
    if not omega > 0:
        raise DomainError("omega must be positive")
    period = 2 * np.pi / omega
    t = (np.arange(quadrature_points) + 0.5) * (period / quadrature_points)
    theta1 = (omega0 / omega) * np.sin(omega * t + phase)
    c, s = np.cos(theta1), np.sin(theta1)
    return (
        float(np.mean(c * c)),
        float(np.mean(s * s)),
        float(np.mean(s * c)),
    )
