"""UPA steering vectors, their analytic angle derivatives, and the rank-one
round-trip target response matrices built from them.

Conventions: angles are radians, `theta` is the vertical (polar) angle in
(0, pi) and `phi` the azimuth in (-pi, pi].  Element ordering is
vertical-major: entry v * n_h + h belongs to vertical index v and horizontal
index h, i.e. a = a_v kron a_h.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class ArrayGeometry:
    """Uniform planar array: n_h x n_v elements with given spacings (meters)."""

    n_h: int
    n_v: int
    d_h: float
    d_v: float
    wavelength: float

    def __post_init__(self):
        if self.n_h < 1 or self.n_v < 1:
            raise ValueError("element counts must be >= 1")
        if self.d_h <= 0 or self.d_v <= 0 or self.wavelength <= 0:
            raise ValueError("spacings and wavelength must be positive")

    @property
    def size(self) -> int:
        return self.n_h * self.n_v

    @classmethod
    def half_wavelength(cls, n_h: int, n_v: int, wavelength: float) -> "ArrayGeometry":
        """Geometry with the default d_h = d_v = wavelength / 2 spacing."""
        return cls(n_h, n_v, wavelength / 2, wavelength / 2, wavelength)


@dataclass(frozen=True)
class Doa:
    """Direction of arrival: vertical angle theta, azimuth phi (radians)."""

    theta: float
    phi: float

    def __post_init__(self):
        if not (math.isfinite(self.theta) and math.isfinite(self.phi)):
            raise ValueError("angles must be finite")
        if not 0.0 < self.theta < math.pi:
            raise ValueError(f"theta must lie in (0, pi), got {self.theta}")
        if not -math.pi < self.phi <= math.pi:
            raise ValueError(f"phi must lie in (-pi, pi], got {self.phi}")


@dataclass(frozen=True)
class SteeringBundle:
    """Steering vector with its two analytic angle derivatives.

    `zeta_theta` / `zeta_phi` are the purely imaginary diagonals of the
    phase-derivative matrices, so da_theta = zeta_theta * a holds exactly,
    and likewise for phi.
    """

    a: np.ndarray
    da_theta: np.ndarray
    da_phi: np.ndarray
    zeta_theta: np.ndarray
    zeta_phi: np.ndarray

    @property
    def z_theta(self) -> np.ndarray:
        return np.diag(self.zeta_theta)

    @property
    def z_phi(self) -> np.ndarray:
        return np.diag(self.zeta_phi)


def steering_upa(geom: ArrayGeometry, doa: Doa) -> np.ndarray:
    """Unit-modulus UPA steering vector of length n_h * n_v.

    The vertical factor advances phase by 2 pi d_v cos(theta) / lambda per
    row; the horizontal factor by 2 pi d_h sin(theta) cos(phi) / lambda per
    column.
    """
    k = 2.0 * np.pi / geom.wavelength
    dv = np.arange(geom.n_v)
    dh = np.arange(geom.n_h)
    a_v = np.exp(1j * k * geom.d_v * dv * np.cos(doa.theta))
    a_h = np.exp(1j * k * geom.d_h * dh * np.sin(doa.theta) * np.cos(doa.phi))
    return np.kron(a_v, a_h)


def steering_bundle(geom: ArrayGeometry, doa: Doa) -> SteeringBundle:
    """Steering vector together with its exact theta / phi derivatives."""
    k = 2.0 * np.pi / geom.wavelength
    a = steering_upa(geom, doa)
    dv = np.kron(np.arange(geom.n_v), np.ones(geom.n_h))
    dh = np.kron(np.ones(geom.n_v), np.arange(geom.n_h))
    zeta_theta = 1j * k * (
        geom.d_h * np.cos(doa.theta) * np.cos(doa.phi) * dh
        - geom.d_v * np.sin(doa.theta) * dv
    )
    zeta_phi = -1j * k * geom.d_h * np.sin(doa.theta) * np.sin(doa.phi) * dh
    return SteeringBundle(
        a=a,
        da_theta=zeta_theta * a,
        da_phi=zeta_phi * a,
        zeta_theta=zeta_theta,
        zeta_phi=zeta_phi,
    )


def target_response_bs(beta: complex, a: np.ndarray) -> np.ndarray:
    """Round-trip response beta * a a^T for the reflect-and-return path.

    Complex symmetric (not Hermitian) and rank one by construction.
    """
    a = np.asarray(a)
    return beta * np.outer(a, a)


def target_response_irs(beta: complex, a_sensor: np.ndarray, a_reflect: np.ndarray) -> np.ndarray:
    """Round-trip response beta * a_sensor a_reflect^T seen by the sensor array."""
    return beta * np.outer(np.asarray(a_sensor), np.asarray(a_reflect))
