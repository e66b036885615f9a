"""Stationary-phase predictions for ``I_kl`` and empirical sign certificates.

In polar coordinates about the singular point,
``I_kl = 1/2 int int h(r, theta) exp(-i r (k cos theta + l sin theta)) dr dtheta``
over ``r in (-R, R)``, ``theta in [-pi, pi)``.  With ``(k, l) = n (cos a, sin a)``
the phase ``-r cos(theta - a)`` has two non-degenerate critical points
``(0, a +- pi/2)``, each with ``|det H| = 1`` and signature 0, so to leading order
``I_kl ~ 2 pi h(0, a + pi/2) / n``.  Along ``l = 0`` this gives ``2 sqrt2 pi / k``
(positive); along ``k = 0`` it gives ``2 pi h(0, 0) / l``, which is negative for
every ``0 < xi < 1``.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass, field

import numpy as np

from .geometry import TorusShape
from .modes import SIGN_MARGIN, h_eval, mode_table
from .quadrature import DEFAULT_SPEC, QuadratureSpec

# the polar double integral over r in (-R, R) carries a factor 1/2
POLAR_PREFACTOR = 0.5
DEFAULT_L_SCAN_KS = (0, 3, 12)


class SingularHessianError(ValueError):
    pass


@dataclass(frozen=True)
class CriticalPointData:
    location: tuple
    hessian: np.ndarray
    phase_value: float
    amplitude: float

    def __post_init__(self):
        h = np.asarray(self.hessian, dtype=float)
        if h.shape != (2, 2) or abs(h[0, 1] - h[1, 0]) > 1e-14 * max(1.0, np.abs(h).max()):
            raise ValueError("hessian must be a symmetric 2x2 matrix")
        if abs(np.linalg.det(h)) <= 1e-10:
            raise SingularHessianError(f"degenerate critical point at {self.location}")
        object.__setattr__(self, "hessian", h)

    @property
    def signature(self) -> int:
        ev = np.linalg.eigvalsh(self.hessian)
        return int(np.sum(ev > 0) - np.sum(ev < 0))


def stationary_phase_estimate(points, n: float, prefactor: float = 1.0) -> complex:
    """Leading-order stationary-phase value of ``prefactor * int h e^{i n Psi}`` in 2D."""
    if not n > 0:
        raise ValueError("the large parameter must be positive")
    total = 0j
    for p in points:
        if not isinstance(p, CriticalPointData):
            raise TypeError("expected CriticalPointData")
        det = abs(np.linalg.det(p.hessian))
        total += (cmath.exp(1j * n * p.phase_value) * det**-0.5
                  * cmath.exp(0.25j * math.pi * p.signature) * (2.0 * math.pi / n) * p.amplitude)
    return prefactor * total


def lead_I_k0(shape: TorusShape | None, k: int) -> float:
    """Leading term ``2 sqrt2 pi / k`` of ``I_{k,0}``; independent of ``xi``."""
    if k < 1:
        raise ValueError("k must be >= 1")
    return 2.0 * math.sqrt(2.0) * math.pi / k


def lead_I_l(shape: TorusShape, l: int) -> float:
    """Leading term of ``I_{k,l}`` as ``l`` grows with ``k`` fixed; negative."""
    if l < 1:
        raise ValueError("l must be >= 1")
    xi = shape.xi
    return -2.0 * math.sqrt(2.0) * math.pi * xi * (1.0 - math.sqrt(1.0 - xi * xi)) / ((1.0 - xi * xi) * l)


def leading_prediction(shape: TorusShape, k: int, l: int) -> float | None:
    """The applicable closed-form leading term: the ``l`` law when ``l != 0``, else the ``k`` law."""
    k, l = abs(int(k)), abs(int(l))
    if l:
        return lead_I_l(shape, l)
    if k:
        return lead_I_k0(shape, k)
    return None


def directional_leading_term(shape: TorusShape, k: int, l: int) -> float:
    """``2 pi h(0, theta_perp) / |(k, l)|`` for an arbitrary direction of ``(k, l)``."""
    n = math.hypot(k, l)
    if n == 0:
        raise ValueError("(k, l) must be nonzero")
    perp = math.atan2(l, k) + 0.5 * math.pi
    return 2.0 * math.pi * h_eval(shape, 0.0, perp) / n


def critical_points_k_axis(shape: TorusShape) -> list[CriticalPointData]:
    """Critical data of the ``l = 0`` phase ``-r cos theta``: ``(0, +-pi/2)``."""
    amp = h_eval(shape, 0.0, 0.5 * math.pi)
    return [
        CriticalPointData((0.0, 0.5 * math.pi), np.array([[0.0, 1.0], [1.0, 0.0]]), 0.0, amp),
        CriticalPointData((0.0, -0.5 * math.pi), np.array([[0.0, -1.0], [-1.0, 0.0]]), 0.0, amp),
    ]


def critical_points_l_axis(shape: TorusShape) -> list[CriticalPointData]:
    """Critical data of the ``k = 0`` phase after the shift ``theta -> theta - pi/2``.

    The phase becomes ``r cos theta`` with critical points ``(0, +-pi/2)``;
    the amplitude there is ``h(0, 0) = h(0, -pi)`` of the unshifted variable.
    """
    amp = h_eval(shape, 0.0, 0.0)
    return [
        CriticalPointData((0.0, 0.5 * math.pi), np.array([[0.0, -1.0], [-1.0, 0.0]]), 0.0, amp),
        CriticalPointData((0.0, -0.5 * math.pi), np.array([[0.0, 1.0], [1.0, 0.0]]), 0.0, amp),
    ]


@dataclass
class SignCertificate:
    """Empirical sign threshold along one axis of ``(k, l)``.

    ``mode_axis`` is ``"k"`` (scan over ``k`` with ``l = 0``, expected
    positive) or ``"l"`` (scan over ``l`` at ``fixed_index = k``, expected
    negative).  ``threshold`` is the smallest scanned index from which every
    value has the expected sign with margin ``>= 3``; ``None`` if the largest
    index itself is not certified.
    """

    xi: float
    mode_axis: str
    fixed_index: int
    expected_sign: int
    indices: list
    values: list
    errors: list
    leads: list
    threshold: int | None
    margins: list = field(default_factory=list)
    ratio_at_max: float = float("nan")
    leading_constant_check: float = float("nan")

    @property
    def certified(self) -> bool:
        return self.threshold is not None

    def to_dict(self) -> dict:
        return {
            "xi": self.xi,
            "mode_axis": self.mode_axis,
            "fixed_index": self.fixed_index,
            "expected_sign": "positive" if self.expected_sign > 0 else "negative",
            "threshold": self.threshold,
            "certified": self.certified,
            "max_index": self.indices[-1],
            "min_margin_above_threshold": self.min_margin(),
            "ratio_at_max": self.ratio_at_max,
            "leading_constant_check": self.leading_constant_check,
        }

    def min_margin(self) -> float | None:
        if self.threshold is None:
            return None
        i0 = self.indices.index(self.threshold)
        return float(min(self.margins[i0:]))


def _margins(values, errors):
    errors = np.maximum(np.asarray(errors, dtype=float), np.finfo(float).tiny)
    return np.abs(values) / errors


def build_certificate(xi, axis, fixed, expected, indices, values, errors, leads) -> SignCertificate:
    values = np.asarray(values, dtype=float)
    margins = _margins(values, errors)
    good = (np.sign(values) == expected) & (margins >= SIGN_MARGIN)
    threshold = None
    if good.size and good[-1]:
        bad = np.flatnonzero(~good)
        start = bad[-1] + 1 if bad.size else 0
        threshold = int(indices[start])
    ratio = float(values[-1] / leads[-1])
    return SignCertificate(
        xi=xi, mode_axis=axis, fixed_index=int(fixed), expected_sign=expected,
        indices=[int(i) for i in indices], values=values.tolist(), errors=list(map(float, errors)),
        leads=list(map(float, leads)), threshold=threshold, margins=margins.tolist(),
        ratio_at_max=ratio, leading_constant_check=abs(ratio - 1.0),
    )


def certify_signs(shape: TorusShape, k_scan_max: int, l_scan_max: int, spec: QuadratureSpec | None = None,
                  l_scan_ks=DEFAULT_L_SCAN_KS, table=None):
    """Certify ``I_{k,0} > 0`` for large ``k`` and ``I_{k,l} < 0`` for large ``l``.

    Returns ``(k_certificate, [l_certificate for k in l_scan_ks])``.  Every
    index from 1 to the scan maximum is evaluated; all values come from one
    shared :func:`~nptorus.modes.mode_table`.
    """
    if k_scan_max < 8 or l_scan_max < 8:
        raise ValueError("scan bounds must be >= 8")
    spec = spec or DEFAULT_SPEC
    ks = np.arange(1, k_scan_max + 1)
    ls = np.arange(1, l_scan_max + 1)
    if table is None:
        table = mode_table(shape, np.concatenate([[0], ks, np.abs(l_scan_ks)]), np.concatenate([[0], ls]), spec)
    I, err = table.I, table.I_err
    rows = [table.row(k) for k in ks]
    col0 = table.col(0)
    k_cert = build_certificate(shape.xi, "k", 0, +1, ks, I[rows, col0], err[rows, col0],
                               [lead_I_k0(shape, k) for k in ks])
    cols = [table.col(l) for l in ls]
    l_certs = []
    for k in l_scan_ks:
        row = table.row(k)
        l_certs.append(build_certificate(shape.xi, "l", abs(k), -1, ls, I[row, cols], err[row, cols],
                                         [lead_I_l(shape, l) for l in ls]))
    return k_cert, l_certs
