"""Gaussian random spherical harmonics of a fixed degree.

A realization is T(x) = sqrt(4 pi / (2l+1)) sum_m c_m Y_m(x) with i.i.d.
standard Gaussian c_m, so that E[T(x)^2] = 1 and
E[T(x) T(y)] = P_l(cos d(x, y)).
"""

from __future__ import annotations

from dataclasses import dataclass, field as dc_field
import math

import numpy as np

from .legendre import DomainError, assoc_tables

__all__ = [
    "RNG_ALGORITHM",
    "SphericalPoint",
    "HarmonicField",
    "sample_field",
    "field_from_coeffs",
    "eval_field",
    "eval_gradient",
    "field_on_grid",
    "gradient_on_grid",
    "field_at_points",
    "field_at_rows",
    "geodesic_distance",
]

RNG_ALGORITHM = "numpy PCG64 seeded by SeedSequence"


@dataclass(frozen=True)
class SphericalPoint:
    theta: float
    phi: float

    def __post_init__(self):
        if not (0.0 <= self.theta <= math.pi):
            raise DomainError(f"colatitude {self.theta} outside [0, pi]")

    def unit_vector(self):
        st = math.sin(self.theta)
        return np.array([st * math.cos(self.phi), st * math.sin(self.phi), math.cos(self.theta)])


def geodesic_distance(p: SphericalPoint, q: SphericalPoint) -> float:
    # atan2 form keeps accuracy for nearby and antipodal points alike
    u, v = p.unit_vector(), q.unit_vector()
    return math.atan2(np.linalg.norm(np.cross(u, v)), float(u @ v))


@dataclass(frozen=True, eq=False)
class HarmonicField:
    """One realization of the degree-l random field.

    ``coeffs[l + m]`` multiplies the order-m real harmonic.  ``offset`` is a
    constant added to every value; it is zero for sampled fields and exists
    so tests can build fields of constant sign.
    """

    degree: int
    coeffs: np.ndarray
    seed_tag: int | None = None
    offset: float = 0.0
    _trig: tuple = dc_field(init=False, repr=False)

    def __post_init__(self):
        c = np.array(self.coeffs, dtype=float)
        if c.shape != (2 * self.degree + 1,):
            raise ValueError(f"expected {2 * self.degree + 1} coefficients, got {c.shape}")
        c.setflags(write=False)
        object.__setattr__(self, "coeffs", c)
        ell = self.degree
        s2 = math.sqrt(2.0)
        # per-order coefficients of R_m cos(m phi) and R_m sin(m phi)
        a = np.concatenate([[c[ell]], s2 * c[ell + 1 :]])
        b = np.concatenate([[0.0], s2 * c[:ell][::-1]])
        object.__setattr__(self, "_trig", (a, b))


def sample_field(ell: int, seed: int) -> HarmonicField:
    if int(ell) != ell or ell < 1:
        raise DomainError("degree must be an integer >= 1")
    rng = np.random.Generator(np.random.PCG64(int(seed)))
    return HarmonicField(int(ell), rng.standard_normal(2 * int(ell) + 1), seed_tag=int(seed))


def field_from_coeffs(ell: int, coeffs, offset: float = 0.0) -> HarmonicField:
    return HarmonicField(int(ell), np.asarray(coeffs, dtype=float), None, float(offset))


def _trig_tables(ell: int, phi):
    m = np.arange(ell + 1)
    arg = np.outer(m, np.asarray(phi, dtype=float))
    return np.cos(arg), np.sin(arg), m


def field_on_grid(f: HarmonicField, theta, phi):
    """Values on the tensor grid theta x phi, shape (len(theta), len(phi))."""
    R, _, _ = assoc_tables(f.degree, theta)
    cos_t, sin_t, _ = _trig_tables(f.degree, phi)
    a, b = f._trig
    return (R * a) @ cos_t + (R * b) @ sin_t + f.offset


def gradient_on_grid(f: HarmonicField, theta, phi):
    """Gradient components (d/dtheta, (1/sin theta) d/dphi) on a tensor grid.

    At the poles the second component is the limit along the meridian phi.
    """
    _, R_sin, dR = assoc_tables(f.degree, theta)
    cos_t, sin_t, m = _trig_tables(f.degree, phi)
    a, b = f._trig
    g_theta = (dR * a) @ cos_t + (dR * b) @ sin_t
    g_phi = (R_sin * (m * b)) @ cos_t - (R_sin * (m * a)) @ sin_t
    return g_theta, g_phi


def field_at_points(f: HarmonicField, theta, phi):
    """Values at scattered points given by matching theta and phi arrays."""
    theta = np.atleast_1d(np.asarray(theta, dtype=float))
    phi = np.atleast_1d(np.asarray(phi, dtype=float))
    R, _, _ = assoc_tables(f.degree, theta)
    m = np.arange(f.degree + 1)
    arg = phi[:, None] * m[None, :]
    a, b = f._trig
    return np.sum(R * (a * np.cos(arg) + b * np.sin(arg)), axis=1) + f.offset


def field_at_rows(f: HarmonicField, theta_rows, row_index, phi):
    """Values at points (theta_rows[row_index[k]], phi[k]).

    Cheaper than :func:`field_at_points` when many points share a small,
    fixed set of colatitudes.
    """
    R, _, _ = assoc_tables(f.degree, theta_rows)
    m = np.arange(f.degree + 1)
    arg = np.asarray(phi, dtype=float)[:, None] * m[None, :]
    a, b = f._trig
    return np.sum(R[row_index] * (a * np.cos(arg) + b * np.sin(arg)), axis=1) + f.offset


def eval_field(f: HarmonicField, p: SphericalPoint) -> float:
    return float(field_on_grid(f, [p.theta], [p.phi])[0, 0])


def eval_gradient(f: HarmonicField, p: SphericalPoint):
    """Gradient of T at p in the orthonormal frame (e_theta, e_phi)."""
    g_theta, g_phi = gradient_on_grid(f, [p.theta], [p.phi])
    return np.array([g_theta[0, 0], g_phi[0, 0]])
