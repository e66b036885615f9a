"""Toroidal coordinates and the surface kernels of the single layer and NP operators.

A torus is the level set ``xi = const`` of the toroidal coordinate system
``(xi, eta, phi)``.  Points on it are addressed by the poloidal angle ``eta``
and the toroidal angle ``phi``.  All kernels are written as functions of
``(eta, eta', phi - phi')`` so that they can be Fourier-reduced in ``phi``.

The distance-like quantity ``mu(dphi) - cos(deta)`` is evaluated through the
equivalent form ``2 (1/xi^2 - 1) sin^2(dphi/2) + 2 sin^2(deta/2)`` which keeps
full relative precision near coincident points.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

TWO_PI = 2.0 * math.pi

# gap values below this are treated as coincident points
COINCIDENT_GAP = 1e-13


class DomainError(ValueError):
    """Raised when an operation is evaluated outside its domain."""


def reduce_angle(angle):
    """Reduce an angle (or array of angles) to ``[0, 2*pi)``."""
    r = np.mod(angle, TWO_PI)
    r = np.where(r >= TWO_PI, 0.0, r)
    if np.ndim(r) == 0:
        return float(r)
    return r


@dataclass(frozen=True)
class TorusShape:
    """Torus ``xi = const`` with poloidal-axis radius ``R0``.

    The major and minor radii are derived: ``r0 = R0 / sqrt(1 - xi^2)`` and
    ``a = xi * R0 / sqrt(1 - xi^2)``, so that ``R0 = sqrt(r0^2 - a^2)`` and
    ``xi = a / r0``.
    """

    xi: float
    R0: float = 1.0
    r0: float = field(init=False)
    a: float = field(init=False)

    def __post_init__(self):
        xi = float(self.xi)
        R0 = float(self.R0)
        if not (0.0 < xi < 1.0) or not math.isfinite(xi):
            raise DomainError(f"xi must lie in (0, 1), got {self.xi!r}")
        if not (R0 > 0.0) or not math.isfinite(R0):
            raise DomainError(f"R0 must be positive, got {self.R0!r}")
        object.__setattr__(self, "xi", xi)
        object.__setattr__(self, "R0", R0)
        c = math.sqrt(1.0 - xi * xi)
        object.__setattr__(self, "r0", R0 / c)
        object.__setattr__(self, "a", xi * R0 / c)

    @classmethod
    def from_radii(cls, r0: float, a: float) -> "TorusShape":
        if not (0.0 < a < r0):
            raise DomainError(f"need 0 < a < r0, got a={a!r}, r0={r0!r}")
        return cls(xi=a / r0, R0=math.sqrt(r0 * r0 - a * a))

    @property
    def sqrt1m(self) -> float:
        """``sqrt(1 - xi^2)``."""
        return math.sqrt(1.0 - self.xi * self.xi)

    @property
    def aniso(self) -> float:
        """``1/xi^2 - 1``, the weight of the toroidal direction in the gap."""
        return 1.0 / (self.xi * self.xi) - 1.0

    def recomputed_R0(self) -> float:
        return math.sqrt(self.r0 * self.r0 - self.a * self.a)


@dataclass(frozen=True)
class SurfacePoint:
    eta: float
    phi: float

    def __post_init__(self):
        object.__setattr__(self, "eta", reduce_angle(float(self.eta)))
        object.__setattr__(self, "phi", reduce_angle(float(self.phi)))


def psi(shape: TorusShape, eta):
    """Metric factor ``1 - xi cos(eta)``; lies in ``[1 - xi, 1 + xi]``."""
    return 1.0 - shape.xi * np.cos(eta)


def mu(shape: TorusShape, dphi):
    """``1/xi^2 + (1 - 1/xi^2) cos(dphi)``; equals 1 at ``dphi = 0``."""
    inv = 1.0 / (shape.xi * shape.xi)
    return inv + (1.0 - inv) * np.cos(dphi)


def gap(shape: TorusShape, deta, dphi):
    """``mu(dphi) - cos(deta)`` in cancellation-free form."""
    sp = np.sin(0.5 * np.asarray(dphi, dtype=float))
    se = np.sin(0.5 * np.asarray(deta, dtype=float))
    return 2.0 * shape.aniso * sp * sp + 2.0 * se * se


def to_cartesian(shape: TorusShape, p: SurfacePoint) -> np.ndarray:
    return cartesian(shape, p.eta, p.phi)


def cartesian(shape: TorusShape, eta, phi) -> np.ndarray:
    """Vectorised form of :func:`to_cartesian`; last axis holds ``(x, y, z)``."""
    eta = np.asarray(eta, dtype=float)
    phi = np.asarray(phi, dtype=float)
    p = psi(shape, eta)
    rho = shape.R0 * shape.sqrt1m / p
    z = -shape.R0 * shape.xi * np.sin(eta) / p
    return np.stack(np.broadcast_arrays(rho * np.cos(phi), rho * np.sin(phi), z), axis=-1)


def scale_factors(shape: TorusShape, p: SurfacePoint) -> tuple[float, float, float]:
    """Scale factors ``(h_xi, h_eta, h_phi)``; ``d sigma = h_eta h_phi d eta d phi``."""
    ps = float(psi(shape, p.eta))
    return (
        shape.R0 / (shape.sqrt1m * ps),
        shape.R0 * shape.xi / ps,
        shape.R0 * shape.sqrt1m / ps,
    )


def surface_jacobian(shape: TorusShape, eta):
    """``h_eta * h_phi = R0^2 xi sqrt(1 - xi^2) / psi(eta)^2``."""
    return shape.R0**2 * shape.xi * shape.sqrt1m / psi(shape, eta) ** 2


def outward_normal(shape: TorusShape, p: SurfacePoint) -> np.ndarray:
    return normal(shape, p.eta, p.phi)


def normal(shape: TorusShape, eta, phi) -> np.ndarray:
    eta = np.asarray(eta, dtype=float)
    phi = np.asarray(phi, dtype=float)
    ps = psi(shape, eta)
    radial = (np.cos(eta) - shape.xi) / ps
    nz = -shape.sqrt1m * np.sin(eta) / ps
    return np.stack(np.broadcast_arrays(radial * np.cos(phi), radial * np.sin(phi), nz), axis=-1)


def _checked_gap(shape, eta, eta_p, dphi):
    g = gap(shape, np.asarray(eta) - np.asarray(eta_p), dphi)
    if np.any(g < COINCIDENT_GAP):
        raise DomainError("kernel evaluated at (nearly) coincident points")
    return g


def fundamental_solution(shape: TorusShape, eta, eta_p, dphi):
    """``1 / (4 pi |x - y|)`` written in toroidal coordinates."""
    g = _checked_gap(shape, eta, eta_p, dphi)
    num = np.sqrt(psi(shape, eta) * psi(shape, eta_p))
    return num / (4.0 * math.pi * math.sqrt(2.0) * shape.R0 * shape.xi * np.sqrt(g))


def normal_projection(shape: TorusShape, eta, eta_p, dphi):
    """Closed form of ``(x - y) . nu_x`` for ``x = (eta, phi)``, ``y = (eta', phi')``."""
    xi = shape.xi
    pe = psi(shape, eta)
    pp = psi(shape, eta_p)
    g = gap(shape, np.asarray(eta) - np.asarray(eta_p), dphi)
    s = np.sin(0.5 * np.asarray(dphi, dtype=float))
    one_m_cos = 2.0 * s * s
    c = shape.R0 * shape.sqrt1m
    return c * xi * g / (pe * pp) - c * one_m_cos / (xi * pp)


def kernel_single(shape: TorusShape, eta, eta_p, dphi):
    """Single-layer kernel ``s(eta, eta'; dphi)`` in ``S[f] = int int s f d eta' d phi'``."""
    g = _checked_gap(shape, eta, eta_p, dphi)
    pre = shape.R0 * shape.sqrt1m / (4.0 * math.pi * math.sqrt(2.0))
    return pre * np.sqrt(psi(shape, eta)) / psi(shape, eta_p) ** 1.5 / np.sqrt(g)


def kernel_np_terms(shape: TorusShape, eta, eta_p, dphi):
    """The two terms of the NP kernel, returned separately (their difference is the kernel)."""
    xi = shape.xi
    g = _checked_gap(shape, eta, eta_p, dphi)
    pre = (1.0 - xi * xi) / (8.0 * math.pi * math.sqrt(2.0) * xi)
    pe = psi(shape, eta)
    pp = psi(shape, eta_p)
    s = np.sin(0.5 * np.asarray(dphi, dtype=float))
    one_m_cos = 2.0 * s * s
    first = pre * np.sqrt(pe) / pp**1.5 / np.sqrt(g)
    second = pre / (xi * xi) * pe**1.5 / pp**1.5 * one_m_cos / g**1.5
    return first, second


def kernel_np(shape: TorusShape, eta, eta_p, dphi):
    """NP kernel ``k(eta, eta'; dphi)`` of ``K*[f] = int int k f d eta' d phi'``."""
    first, second = kernel_np_terms(shape, eta, eta_p, dphi)
    return first - second


def identity_deviations(shape: TorusShape, n_pairs: int = 100, seed: int = 0) -> dict:
    """Max relative deviations of the closed forms from brute-force Cartesian evaluation.

    Compares the fundamental solution, ``(x - y) . nu_x``, and the NP kernel at
    ``n_pairs`` random point pairs against direct evaluation from
    :func:`cartesian` and :func:`normal`.
    """
    rng = np.random.default_rng(seed)
    e1, p1, e2, p2 = rng.uniform(0.0, TWO_PI, size=(4, n_pairs))
    x = cartesian(shape, e1, p1)
    y = cartesian(shape, e2, p2)
    nu = normal(shape, e1, p1)
    d = x - y
    dist = np.linalg.norm(d, axis=-1)
    proj = np.einsum("ij,ij->i", d, nu)

    gamma_ref = 1.0 / (4.0 * math.pi * dist)
    gamma = fundamental_solution(shape, e1, e2, p1 - p2)
    proj_cf = normal_projection(shape, e1, e2, p1 - p2)
    k_ref = proj / (4.0 * math.pi * dist**3) * surface_jacobian(shape, e2)
    k_cf = kernel_np(shape, e1, e2, p1 - p2)
    s_ref = gamma_ref * surface_jacobian(shape, e2)
    s_cf = kernel_single(shape, e1, e2, p1 - p2)

    def rel(a, b):
        return float(np.max(np.abs(a - b) / np.maximum(np.abs(b), 1e-300)))

    return {
        "fundamental_solution": rel(gamma, gamma_ref),
        "normal_projection": rel(proj_cf, proj),
        "kernel_single": rel(s_cf, s_ref),
        "kernel_np": rel(k_cf, k_ref),
    }
