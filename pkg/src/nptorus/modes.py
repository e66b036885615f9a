"""Mode-reduced integrals of the single-layer and NP kernels on a torus.

Notation used throughout (``Q = mu(phi) - cos(eta)``, ``s = sqrt(1 - xi^2)``)::

    s_k(eta)  = int_0^{2pi} e^{-ik phi} Q(phi, eta)^{-1/2} dphi
    s_kl      = int int e^{-ik phi} e^{-il eta} Q^{-1/2}
    ds_kl     = xi^-3 int int (1 - cos phi) e^{-ik phi} e^{-il eta} Q^{-3/2}   (d s_kl / d xi)
    c_m       = (1/2pi) int e^{-im eta} / psi(eta) deta
    I_kl      = s_kl - xi s ds_kl

``I_kl`` is computed three ways: from ``s_kl`` and ``ds_kl`` ("spectral"), as a
single double integral of ``N / (xi^2 Q^{3/2})`` ("direct"), and in polar
coordinates about the singular point ("polar"), where the Jacobian cancels the
singularity.  The numerator ``N = 1 - s - (1 - xi^2 - s) cos phi - xi^2 cos eta``
is evaluated as ``2 (1 - xi^2 - s) sin^2(phi/2) + 2 xi^2 sin^2(eta/2)`` to avoid
cancellation near the origin.

All integrals are even in ``k`` and in ``l``, so tables are indexed by
``|k|, |l|``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .geometry import DomainError, TorusShape, gap
from .quadrature import (
    DEFAULT_SPEC,
    Refinement,
    TWO_PI,
    QuadratureSpec,
    QuadResult,
    check_frequency,
    integrate_2d,
    integrate_periodic,
    iterated_rule,
    polar_rule,
    FIRST_2D_LEVEL,
)

XI_MIN = 0.05
XI_MAX = 0.99
# chunk size (nodes) for polar evaluations
POLAR_CHUNK = 1 << 20
SIGN_MARGIN = 3.0
# the polar integrand is smooth; levels beyond this indicate a broken rule
MAX_POLAR_LEVEL = 8


def check_shape(shape: TorusShape) -> None:
    if not (XI_MIN <= shape.xi <= XI_MAX):
        raise DomainError(f"xi={shape.xi!r} outside the supported range [{XI_MIN}, {XI_MAX}]")


def _sqrt1m(shape):
    return math.sqrt(1.0 - shape.xi * shape.xi)


def _health_checked(res: QuadResult, spec: QuadratureSpec) -> QuadResult:
    # imaginary parts vanish by evenness; a visible one means the rule is broken
    imag = abs(complex(res.value).imag)
    ok = res.converged and imag <= max(spec.abs_tol, res.err_estimate)
    return QuadResult(complex(res.value).real, res.err_estimate, res.evaluations, ok, res.level, res.err_history)


def s_k_eta(shape: TorusShape, k: int, eta: float, spec: QuadratureSpec | None = None) -> QuadResult:
    """``s_k(eta)``; logarithmically singular as ``eta -> 0``."""
    spec = spec or DEFAULT_SPEC
    check_shape(shape)
    check_frequency(k)
    se = math.sin(0.5 * eta)
    if 2.0 * se * se < 1e-13:
        raise DomainError("s_k(eta) is singular at eta = 0 (mod 2*pi)")

    def f(phi):
        return np.exp(-1j * k * phi) / np.sqrt(gap(shape, eta, phi))

    return _health_checked(integrate_periodic(f, spec), spec)


def c_m(shape: TorusShape, m: int) -> float:
    """Fourier coefficient of ``1/psi``: ``beta^|m| / sqrt(1 - xi^2)``."""
    s = _sqrt1m(shape)
    beta = (1.0 - s) / shape.xi
    return beta ** abs(int(m)) / s


def c_m_quadrature(shape: TorusShape, m: int, spec: QuadratureSpec | None = None) -> QuadResult:
    """``c_m`` by direct quadrature of ``e^{-im eta}/psi``; used to validate :func:`c_m`."""
    res = integrate_periodic(lambda t: np.exp(-1j * m * t) / (1.0 - shape.xi * np.cos(t)), spec)
    return QuadResult(complex(res.value).real / TWO_PI, res.err_estimate / TWO_PI,
                      res.evaluations, res.converged, res.level)


# integrands on [-pi, pi]^2 (phi, eta), without the Fourier factor

def _q(shape, phi, eta):
    return gap(shape, eta, phi)


def single_integrand(shape: TorusShape, phi, eta):
    return 1.0 / np.sqrt(_q(shape, phi, eta))


def derivative_integrand(shape: TorusShape, phi, eta):
    sp = np.sin(0.5 * phi)
    q = _q(shape, phi, eta)
    return 2.0 * sp * sp / (shape.xi**3 * q * np.sqrt(q))


def numerator(shape: TorusShape, phi, eta):
    """Numerator of the direct integrand of ``I_kl``, cancellation free."""
    xi = shape.xi
    s = _sqrt1m(shape)
    sp = np.sin(0.5 * phi)
    se = np.sin(0.5 * eta)
    return 2.0 * (1.0 - xi * xi - s) * sp * sp + 2.0 * xi * xi * se * se


def numerator_literal(shape: TorusShape, phi, eta):
    xi = shape.xi
    s = _sqrt1m(shape)
    return 1.0 - s - (1.0 - xi * xi - s) * np.cos(phi) - xi * xi * np.cos(eta)


def direct_integrand(shape: TorusShape, phi, eta):
    q = _q(shape, phi, eta)
    return numerator(shape, phi, eta) / (shape.xi**2 * q * np.sqrt(q))


def _pair_2d(shape, k, l, spec, integrand, swap=False):
    check_shape(shape)
    check_frequency(k, l)
    spec = spec or DEFAULT_SPEC
    if swap:
        def f(eta, phi):
            return integrand(shape, phi, eta) * np.exp(-1j * (k * phi + l * eta))
        res = integrate_2d(f, spec, singular_point=(0.0, 0.0), frequencies=(abs(l), abs(k)))
    else:
        def f(phi, eta):
            return integrand(shape, phi, eta) * np.exp(-1j * (k * phi + l * eta))
        res = integrate_2d(f, spec, singular_point=(0.0, 0.0), frequencies=(abs(k), abs(l)))
    return _health_checked(res, spec)


def s_kl(shape: TorusShape, k: int, l: int, spec: QuadratureSpec | None = None) -> QuadResult:
    """``s_kl`` for a single pair (complex integrand, iterated rule)."""
    return _pair_2d(shape, k, l, spec, single_integrand)


def ds_kl(shape: TorusShape, k: int, l: int, spec: QuadratureSpec | None = None) -> QuadResult:
    """``d s_kl / d xi`` by differentiating under the integral sign."""
    return _pair_2d(shape, k, l, spec, derivative_integrand)


def I_kl_spectral(shape: TorusShape, k: int, l: int, spec: QuadratureSpec | None = None) -> QuadResult:
    a = s_kl(shape, k, l, spec)
    b = ds_kl(shape, k, l, spec)
    w = shape.xi * _sqrt1m(shape)
    return QuadResult(a.value - w * b.value, a.err_estimate + w * b.err_estimate,
                      a.evaluations + b.evaluations, a.converged and b.converged, max(a.level, b.level))


def I_kl_direct(shape: TorusShape, k: int, l: int, spec: QuadratureSpec | None = None) -> QuadResult:
    """``I_kl`` as one double integral; iterates with ``phi`` inner and ``eta`` outer."""
    return _pair_2d(shape, k, l, spec, direct_integrand, swap=True)


def _sinc_half(x):
    # sin(x/2) / (x/2)
    return np.sinc(x / TWO_PI)


def _polar_parts(shape, r, theta):
    c = np.cos(theta)
    sn = np.sin(theta)
    sp = _sinc_half(r * c)
    se = _sinc_half(r * sn)
    cp = c * c * sp * sp
    ce = sn * sn * se * se
    q = shape.aniso * cp + ce
    return cp, ce, q


def h_eval(shape: TorusShape, r, theta):
    """Polar amplitude ``h(r, theta)`` of the ``I_kl`` integrand (Jacobian included).

    For ``r != 0`` it equals ``|r| N / (xi^2 Q^{3/2})`` at
    ``(phi, eta) = (r cos theta, r sin theta)``, evaluated through
    ``sin(x/2) / (x/2)`` factors; at ``r = 0`` the closed-form limit is used.
    """
    xi = shape.xi
    s = _sqrt1m(shape)
    r = np.asarray(r, dtype=float)
    theta = np.asarray(theta, dtype=float)
    cp, ce, q = _polar_parts(shape, r, theta)
    away = math.sqrt(2.0) * ((1.0 - xi * xi - s) * cp + xi * xi * ce) / (xi * xi * q * np.sqrt(q))
    c2 = np.cos(theta) ** 2
    s2 = np.sin(theta) ** 2
    at_zero = (math.sqrt(2.0) * (xi * (1.0 - xi * xi - s) * c2 + xi**3 * s2)
               / ((1.0 - xi * xi) * c2 + xi * xi * s2) ** 1.5)
    out = np.where(r == 0.0, at_zero, away)
    return float(out) if out.ndim == 0 else out


def _polar_amplitudes(shape, r, theta, which):
    xi = shape.xi
    cp, ce, q = _polar_parts(shape, r, theta)
    if which == "s":
        return math.sqrt(2.0) / np.sqrt(q)
    if which == "ds":
        return math.sqrt(2.0) * cp / (xi**3 * q * np.sqrt(q))
    s = _sqrt1m(shape)
    return math.sqrt(2.0) * ((1.0 - xi * xi - s) * cp + xi * xi * ce) / (xi * xi * q * np.sqrt(q))


def _polar_sum(shape, rule, pairs, which):
    """Half-square polar sums ``2 * sum w h cos(r (k cos + l sin))`` for each pair."""
    pairs = np.asarray(pairs, dtype=float).reshape(-1, 2)
    total = np.zeros(len(pairs))
    mag = np.zeros(len(pairs))
    for r, th, w in rule.blocks(POLAR_CHUNK):
        wh = w * _polar_amplitudes(shape, r, th, which)
        u = r * np.cos(th)
        v = r * np.sin(th)
        for i, (k, l) in enumerate(pairs):
            t = wh * np.cos(k * u + l * v)
            total[i] += t.sum()
            mag[i] += np.abs(t).sum()
    return 2.0 * total, 2.0 * mag


def polar_pairs(shape: TorusShape, pairs, spec: QuadratureSpec | None = None, which: str = "I"):
    """Polar-form integrals for many ``(k, l)`` pairs on shared nodes.

    ``which`` selects ``"I"`` (the numerical range), ``"s"`` or ``"ds"``.
    Returns ``(values, err_estimates, converged)`` arrays.
    """
    spec = spec or DEFAULT_SPEC
    check_shape(shape)
    pairs = np.atleast_2d(np.asarray(pairs, dtype=int))
    check_frequency(*pairs.ravel())
    freq = float(np.max(np.hypot(pairs[:, 0], pairs[:, 1]))) if pairs.size else 0.0
    ref = Refinement(spec)
    for level in range(0, MAX_POLAR_LEVEL + 1):
        ref.push(*_polar_sum(shape, polar_rule(level, freq), pairs, which))
        if ref.converged or ref.stagnated:
            break
    return ref.value, ref.err, ref.accepted


def I_kl_polar(shape: TorusShape, k: int, l: int, spec: QuadratureSpec | None = None) -> QuadResult:
    """``I_kl`` from the polar form about the singular point; the integrand is smooth."""
    v, e, ok = polar_pairs(shape, [(k, l)], spec, "I")
    return QuadResult(float(v[0]), float(e[0]), 0, bool(ok[0]))


@dataclass
class ModeTable:
    """``s_kl`` and ``ds_kl`` on a grid of non-negative ``k`` (rows) and ``l`` (columns)."""

    xi: float
    ks: np.ndarray
    ls: np.ndarray
    s: np.ndarray
    ds: np.ndarray
    s_err: np.ndarray
    ds_err: np.ndarray
    converged: bool
    level: int

    @property
    def I(self) -> np.ndarray:
        return self.s - self.xi * math.sqrt(1.0 - self.xi**2) * self.ds

    @property
    def I_err(self) -> np.ndarray:
        return self.s_err + self.xi * math.sqrt(1.0 - self.xi**2) * self.ds_err

    def row(self, k: int) -> int:
        hit = np.flatnonzero(self.ks == abs(k))
        if not hit.size:
            raise KeyError(f"k={k} not in table")
        return int(hit[0])

    def col(self, l: int) -> int:
        hit = np.flatnonzero(self.ls == abs(l))
        if not hit.size:
            raise KeyError(f"l={l} not in table")
        return int(hit[0])

    def lookup(self, k: int, l: int):
        return self.row(k), self.col(l)

    unconverged: np.ndarray

    def failures(self):
        """``(k, l)`` pairs whose entries missed tolerance."""
        return [(int(self.ks[i]), int(self.ls[j])) for i, j in zip(*np.nonzero(self.unconverged))]


def _table_level(shape, rule, ks, ls):
    """Quadrant sums for ``s`` and ``ds`` with separable cosine factors.

    Returns the two tables and the matching sums of ``|w f|``.
    """
    g_s = np.empty((rule.outer.size, ls.size))
    g_d = np.empty((rule.outer.size, ls.size))
    m_s = np.empty(rule.outer.size)
    m_d = np.empty(rule.outer.size)
    for idx, t, w in rule.row_blocks():
        phi = rule.outer[idx][:, None]
        q = _q(shape, phi, t[None, :])
        fs = 1.0 / np.sqrt(q)
        sp = np.sin(0.5 * phi)
        fd = (2.0 * sp * sp / shape.xi**3) * fs / q
        basis = w[:, None] * np.cos(np.outer(t, ls))
        g_s[idx] = fs @ basis
        g_d[idx] = fd @ basis
        m_s[idx] = fs @ w
        m_d[idx] = fd @ w
    outer = np.cos(np.outer(ks, rule.outer)) * rule.outer_w
    ow = rule.outer_w
    ones = np.ones((ks.size, ls.size))
    return 4.0 * outer @ g_s, 4.0 * outer @ g_d, 4.0 * (ow @ m_s) * ones, 4.0 * (ow @ m_d) * ones


def mode_table(shape: TorusShape, ks, ls, spec: QuadratureSpec | None = None) -> ModeTable:
    """``s_kl`` and ``ds_kl`` for all ``k in ks``, ``l in ls`` on shared nodes.

    Uses the iterated rule over one quadrant (both integrands are even in
    ``phi`` and ``eta``), with the Fourier factors applied as matrix products.
    Refinement continues until every entry meets tolerance on two successive
    levels.
    """
    spec = spec or DEFAULT_SPEC
    check_shape(shape)
    ks = np.unique(np.abs(np.asarray(ks, dtype=int)))
    ls = np.unique(np.abs(np.asarray(ls, dtype=int)))
    check_frequency(*ks, *ls)
    fk, fl = float(ks.max()), float(ls.max())
    rs, rd = Refinement(spec), Refinement(spec)
    level = FIRST_2D_LEVEL
    for level in range(FIRST_2D_LEVEL, spec.max_levels + 1):
        s, d, ms, md = _table_level(shape, iterated_rule(level, spec, fk, fl), ks, ls)
        rs.push(s, ms)
        rd.push(d, md)
        if (rs.converged and rd.converged) or rs.stagnated or rd.stagnated:
            break
    bad = ~(rs.accepted & rd.accepted)
    return ModeTable(shape.xi, ks, ls, rs.value, rd.value, rs.err, rd.err, not bad.any(), level, bad)


@dataclass(frozen=True)
class NumericalRangeRecord:
    xi: float
    k: int
    l: int
    s_kl: float
    ds_kl: float
    I_spectral: float
    I_direct: float | None
    I_polar: float | None
    lead_pred: float | None
    sign_verdict: str
    err_estimate: float
    err_direct: float | None = None
    err_polar: float | None = None
    converged: bool = True

    def spread_ok(self, factor: float = 3.0) -> bool:
        """Pairwise agreement within ``factor`` times the summed error estimates."""
        vals = [(self.I_spectral, self.err_estimate)]
        if self.I_direct is not None:
            vals.append((self.I_direct, self.err_direct))
        if self.I_polar is not None:
            vals.append((self.I_polar, self.err_polar))
        return all(abs(a - b) <= factor * (ea + eb)
                   for i, (a, ea) in enumerate(vals) for b, eb in vals[i + 1:])


def sign_verdict(value: float, err: float, converged: bool = True) -> str:
    if converged and value > SIGN_MARGIN * err:
        return "positive"
    if converged and value < -SIGN_MARGIN * err:
        return "negative"
    return "indeterminate"


def numerical_range_record(shape: TorusShape, k: int, l: int, spec: QuadratureSpec | None = None,
                           methods=("spectral", "direct", "polar"), table: ModeTable | None = None
                           ) -> NumericalRangeRecord:
    """Evaluate ``I_kl`` by the requested methods and bundle the results.

    ``spectral`` is always computed (from ``table`` when given, which must
    contain ``|k|, |l|``).
    """
    from .asymptotics import leading_prediction

    spec = spec or DEFAULT_SPEC
    if table is None:
        table = mode_table(shape, [k], [l], spec)
    i, j = table.lookup(k, l)
    s, ds = float(table.s[i, j]), float(table.ds[i, j])
    I_s, e_s = float(table.I[i, j]), float(table.I_err[i, j])
    ok = not table.unconverged[i, j]
    I_d = e_d = I_p = e_p = None
    if "direct" in methods:
        r = I_kl_direct(shape, k, l, spec)
        I_d, e_d, ok = r.value, r.err_estimate, ok and r.converged
    if "polar" in methods:
        r = I_kl_polar(shape, k, l, spec)
        I_p, e_p, ok = r.value, r.err_estimate, ok and r.converged
    return NumericalRangeRecord(
        xi=shape.xi, k=int(k), l=int(l), s_kl=s, ds_kl=ds, I_spectral=I_s, I_direct=I_d,
        I_polar=I_p, lead_pred=leading_prediction(shape, k, l), sign_verdict=sign_verdict(I_s, e_s, ok),
        err_estimate=e_s, err_direct=e_d, err_polar=e_p, converged=ok,
    )
