"""Quadrature for 2*pi-periodic integrands, smooth or with one point singularity.

Three families of rules live here:

* trapezoid sums with step halving for smooth periodic integrands (spectrally
  accurate, error estimated from successive halvings);
* composite Gauss-Legendre on geometrically graded panels for an integrable
  singularity at an endpoint.  Panel edges toward the singular point shrink by
  ``2**-grading_exponent`` per layer;
* an iterated 2D rule for a point singularity at the origin of
  ``[-pi, pi]^2`` whose inner grading depth follows the distance of the outer
  node from the singular point, and a polar rule for the same square whose
  integrand carries the Jacobian ``r`` and is therefore smooth.

Integrands are called with numpy arrays and must be vectorised.  They may be
vector valued: a result of shape ``(..., n)`` for ``n`` nodes integrates each
leading component independently.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable

import numpy as np
from numpy.polynomial.legendre import leggauss

TWO_PI = 2.0 * math.pi
EPS = np.finfo(float).eps

GAUSS_ORDER = 20
# oscillation phase (radians) one Gauss panel is asked to carry at the first level
PANEL_PHASE = 8.0
# extra inner grading layers beyond the depth implied by the outer node
INNER_EXTRA_LAYERS = 2
FIRST_2D_LEVEL = 6
# multiple of eps * sum|w f| treated as rounding noise
ROUNDING_FACTOR = 8.0
STAGNATION_LEVELS = 3
MAX_FREQUENCY = 512

SINGULARITY_CLASSES = ("inv_sqrt", "log", "none")


@dataclass(frozen=True)
class QuadratureSpec:
    """Tolerances and refinement limits.

    ``rel_tol`` and ``abs_tol`` define the acceptance threshold
    ``max(rel_tol * |value|, abs_tol)``; ``max_levels`` caps the number of
    refinement levels; ``grading_exponent`` sets the geometric grading ratio
    ``2**-grading_exponent`` of panels toward a singular point.
    """

    rel_tol: float = 1e-9
    abs_tol: float = 1e-12
    max_levels: int = 22
    grading_exponent: float = 3.0

    def __post_init__(self):
        if not (0.0 < self.rel_tol <= 1e-2):
            raise ValueError(f"rel_tol must lie in (0, 1e-2], got {self.rel_tol!r}")
        if not (self.abs_tol > 0.0):
            raise ValueError(f"abs_tol must be positive, got {self.abs_tol!r}")
        if int(self.max_levels) != self.max_levels or self.max_levels < 4:
            raise ValueError(f"max_levels must be an integer >= 4, got {self.max_levels!r}")
        if not (self.grading_exponent >= 1.0):
            raise ValueError(f"grading_exponent must be >= 1, got {self.grading_exponent!r}")

    @property
    def layer_ratio(self) -> float:
        return 2.0 ** (-self.grading_exponent)

    def tolerance(self, value):
        return np.maximum(self.rel_tol * np.abs(value), self.abs_tol)


DEFAULT_SPEC = QuadratureSpec()


@dataclass
class QuadResult:
    value: object
    err_estimate: object
    evaluations: int
    converged: bool
    level: int = 0
    # largest change per refinement level, oldest first
    err_history: tuple = ()

    @property
    def real(self) -> "QuadResult":
        return QuadResult(np.real(self.value), self.err_estimate, self.evaluations, self.converged,
                          self.level, self.err_history)


class ConvergenceError(RuntimeError):
    """Raised by callers that cannot proceed with a non-converged integral."""


def check_frequency(*freqs) -> None:
    for f in freqs:
        if abs(f) > MAX_FREQUENCY:
            raise ValueError(f"oscillation index {f} exceeds the supported maximum {MAX_FREQUENCY}")


@lru_cache(maxsize=None)
def gauss_legendre(order: int) -> tuple[np.ndarray, np.ndarray]:
    x, w = leggauss(order)
    x.flags.writeable = False
    w.flags.writeable = False
    return x, w


def panel_rule(edges, order: int = GAUSS_ORDER) -> tuple[np.ndarray, np.ndarray]:
    """Composite Gauss-Legendre rule on consecutive panels ``edges[i], edges[i+1]``."""
    edges = np.asarray(edges, dtype=float)
    x, w = gauss_legendre(order)
    a = edges[:-1, None]
    b = edges[1:, None]
    half = 0.5 * (b - a)
    return (half * x + (a + half)).ravel(), (half * w).ravel()


def _subdivide(edges: np.ndarray, max_panel: float) -> np.ndarray:
    out = [edges[:1]]
    for a, b in zip(edges[:-1], edges[1:]):
        m = max(1, int(math.ceil((b - a) / max_panel - 1e-12)))
        out.append(np.linspace(a, b, m + 1)[1:])
    return np.concatenate(out)


@lru_cache(maxsize=4096)
def graded_rule(length: float, layers: int, max_panel: float, ratio: float,
                order: int = GAUSS_ORDER) -> tuple[np.ndarray, np.ndarray]:
    """Gauss panels on ``[0, length]`` graded geometrically toward 0.

    Edges are ``0, length*ratio**layers, ..., length*ratio, length``; panels
    longer than ``max_panel`` are split evenly.
    """
    edges = length * ratio ** np.arange(layers, -1, -1, dtype=float)
    edges = np.concatenate([[0.0], edges])
    x, w = panel_rule(_subdivide(edges, max_panel), order)
    x.flags.writeable = False
    w.flags.writeable = False
    return x, w


def _evaluate(f: Callable, *args) -> np.ndarray:
    y = np.asarray(f(*args))
    shape = np.broadcast_shapes(*(np.shape(a) for a in args))
    return np.broadcast_to(y, np.broadcast_shapes(y.shape, shape))


def _scalar(v):
    v = np.asarray(v)
    return v.item() if v.ndim == 0 else v


def rounding_bound(magnitude):
    """Rounding noise bound for a weighted sum with ``sum |w f| = magnitude``."""
    return ROUNDING_FACTOR * EPS * np.asarray(magnitude)


class Refinement:
    """Bookkeeping for a sequence of refined estimates.

    A level is accepted when its change from the previous level is within
    ``max(rel_tol |value|, abs_tol)`` or within the rounding bound of the sum,
    whichever is larger.  Convergence needs two accepted levels in a row.
    Refinement is abandoned early once the change has stopped decreasing for
    ``STAGNATION_LEVELS`` levels while some component is still unaccepted.
    """

    def __init__(self, spec: QuadratureSpec):
        self.spec = spec
        self.value = None
        self.errs = []
        self.floors = []
        self.ok = []

    def push(self, value, magnitude) -> None:
        value = np.asarray(value)
        if self.value is not None:
            floor = rounding_bound(magnitude)
            err = np.maximum(np.abs(value - self.value), floor)
            self.errs.append(err)
            self.floors.append(floor)
            self.ok.append(err <= np.maximum(self.spec.tolerance(value), floor))
        self.value = value

    @property
    def accepted(self):
        """Per-component flag: the last two levels were both accepted."""
        if len(self.ok) < 2:
            return np.zeros(np.shape(self.value), bool)
        return self.ok[-1] & self.ok[-2]

    @property
    def converged(self) -> bool:
        return bool(np.all(self.accepted))

    @property
    def stagnated(self) -> bool:
        n = STAGNATION_LEVELS
        if len(self.errs) <= n or np.all(self.ok[-1]):
            return False
        recent = [float(np.max(e)) for e in self.errs[-n - 1:]]
        return min(recent[1:]) >= recent[0]

    @property
    def err(self):
        return self.errs[-1] if self.errs else np.full(np.shape(self.value), np.inf)

    def result(self, evaluations: int, level: int, converged: bool | None = None) -> "QuadResult":
        ok = self.converged if converged is None else converged
        history = tuple(float(np.max(e)) for e in self.errs)
        return QuadResult(_scalar(self.value), _scalar(self.err), evaluations, ok, level, history)


def integrate_periodic(f: Callable, spec: QuadratureSpec | None = None) -> QuadResult:
    """Trapezoid rule on ``[0, 2*pi)`` with step halving.

    ``f`` must be smooth and 2*pi-periodic.  Old nodes are reused at every
    halving.  The error estimate is the change between the last two levels,
    floored at a rounding bound.
    """
    spec = spec or DEFAULT_SPEC
    n = 8
    x = TWO_PI * np.arange(n) / n
    fx = _evaluate(f, x)
    total = fx.sum(axis=-1)
    mag = np.abs(fx).sum(axis=-1)
    ref = Refinement(spec)
    ref.push(TWO_PI / n * total, TWO_PI / n * mag)
    evals = n
    level = 3
    for level in range(4, spec.max_levels + 1):
        h = TWO_PI / (2 * n)
        fx = _evaluate(f, h * (2 * np.arange(n) + 1))
        evals += n
        n *= 2
        total = total + fx.sum(axis=-1)
        mag = mag + np.abs(fx).sum(axis=-1)
        ref.push(h * total, h * mag)
        if ref.converged or ref.stagnated:
            break
    return ref.result(evals, level)


def _normalise_class(singularity_class: str) -> str:
    c = str(singularity_class).lower().replace("-", "_")
    if c.startswith("none"):
        return "none"
    if c not in SINGULARITY_CLASSES:
        raise ValueError(f"unknown singularity class {singularity_class!r}")
    return c


def _expected_contraction(cls: str, ratio: float) -> float:
    # per-layer error reduction for an x**-1/2 or log endpoint singularity
    return ratio**0.5 if cls == "inv_sqrt" else ratio**0.75


def _class_consistent(ref: Refinement, cls: str, ratio: float) -> bool:
    d = [float(np.max(a)) for a, fl in zip(ref.errs, ref.floors) if np.all(a > 100 * fl)]
    ratios = [b / a for a, b in zip(d[:-1], d[1:]) if a > 0][-3:]
    if len(ratios) < 2:
        return True
    observed = math.exp(sum(math.log(max(r, 1e-300)) for r in ratios) / len(ratios))
    return observed <= math.sqrt(_expected_contraction(cls, ratio))


def integrate_singular_periodic(f: Callable, singular_point: float, singularity_class: str,
                                spec: QuadratureSpec | None = None) -> QuadResult:
    """Integrate a periodic ``f`` over one period with an isolated singularity.

    The period is recentred at ``singular_point`` and folded onto ``(0, pi]``.
    Level ``j`` uses ``j`` geometric layers toward the singular point and
    panels no longer than ``pi * 2**-(j//2)`` elsewhere.  If the observed
    refinement is much slower than the declared class allows, the result is
    flagged as not converged.

    ``f`` is sampled at ``singular_point +- t``, so for a singular point away
    from 0 nodes within one ulp of it are lost and the attainable relative
    accuracy is about ``sqrt(eps * |singular_point|)``.  Callers needing more
    should pass ``f`` in offset form with ``singular_point = 0``.
    """
    spec = spec or DEFAULT_SPEC
    cls = _normalise_class(singularity_class)
    if cls == "none":
        return integrate_periodic(f, spec)
    s = float(singular_point)
    ratio = spec.layer_ratio
    ref = Refinement(spec)
    evals = 0
    level = 0
    for level in range(1, spec.max_levels + 1):
        t, w = graded_rule(math.pi, level, math.pi * 2.0 ** (-(level // 2)), ratio)
        # nodes closer than one ulp of s round onto the singular point; drop them
        w = np.where((s + t != s) & (s - t != s), w, 0.0)
        t = np.where(w > 0, t, math.pi)
        fx = _evaluate(f, s + t) + _evaluate(f, s - t)
        evals += 2 * t.size
        ref.push(fx @ w, np.abs(fx) @ w)
        if ref.converged:
            return ref.result(evals, level, _class_consistent(ref, cls, ratio))
        if ref.stagnated:
            break
    return ref.result(evals, level, False)


def _level_cap(level: int, frequency: float, first: int) -> float:
    base = min(0.5 * math.pi, PANEL_PHASE / max(abs(frequency), 1.0))
    return base * 2.0 ** (-(level - first) / 3.0)


def inner_depth(t_outer, ratio: float) -> np.ndarray:
    """Grading layers needed in the inner variable at outer distance ``t_outer``."""
    d = np.ceil(np.log(math.pi / np.asarray(t_outer)) / math.log(1.0 / ratio))
    return np.maximum(d, 0).astype(int) + INNER_EXTRA_LAYERS


@dataclass(frozen=True)
class IteratedRule:
    """Iterated rule on the quadrant ``(0, pi]^2`` graded toward the origin.

    ``outer`` and ``outer_w`` are the outer nodes; ``groups`` holds
    ``(index, inner, inner_w)`` triples, one per distinct inner rule, where
    ``index`` selects the outer nodes sharing that inner rule.
    """

    outer: np.ndarray
    outer_w: np.ndarray
    groups: tuple

    @property
    def size(self) -> int:
        return sum(idx.size * t.size for idx, t, _ in self.groups)

    def row_blocks(self, max_nodes: int = 1 << 20):
        """Yield ``(index, inner, inner_w)`` with at most ``max_nodes`` tensor nodes each."""
        for idx, t, wt in self.groups:
            per = max(1, max_nodes // t.size)
            for i in range(0, idx.size, per):
                yield idx[i:i + per], t, wt

    def blocks(self, max_nodes: int = 1 << 20):
        """Yield flattened ``(t_outer, t_inner, weight)`` arrays in blocks."""
        for idx, t, wt in self.row_blocks(max_nodes):
            yield (np.repeat(self.outer[idx], t.size), np.tile(t, idx.size),
                   np.outer(self.outer_w[idx], wt).ravel())


def iterated_rule(level: int, spec: QuadratureSpec, outer_frequency: float = 0.0,
                  inner_frequency: float = 0.0) -> IteratedRule:
    ratio = spec.layer_ratio
    outer, outer_w = graded_rule(math.pi, level, _level_cap(level, outer_frequency, FIRST_2D_LEVEL), ratio)
    depth = inner_depth(outer, ratio)
    cap = _level_cap(level, inner_frequency, FIRST_2D_LEVEL)
    groups = []
    for d in np.unique(depth):
        idx = np.flatnonzero(depth == d)
        t, w = graded_rule(math.pi, int(d), cap, ratio)
        groups.append((idx, t, w))
    return IteratedRule(outer, outer_w, tuple(groups))


def _integrate_2d_smooth(f, spec):
    ref = Refinement(spec)
    evals = 0
    top = min(spec.max_levels, 11)
    level = 3
    for level in range(3, top + 1):
        n = 2**level
        x = TWO_PI * np.arange(n) / n
        fx = _evaluate(f, x[:, None], x[None, :])
        evals += n * n
        cell = (TWO_PI / n) ** 2
        ref.push(fx.sum(axis=(-2, -1)) * cell, np.abs(fx).sum(axis=(-2, -1)) * cell)
        if ref.converged or ref.stagnated:
            break
    return ref.result(evals, level)


def integrate_2d(f: Callable, spec: QuadratureSpec | None = None, singular_point=None,
                 frequencies=(0.0, 0.0)) -> QuadResult:
    """Integrate ``f(phi, eta)`` over ``[0, 2*pi]^2``.

    Without ``singular_point`` the integrand is taken as smooth and a tensor
    trapezoid rule is refined.  With ``singular_point = (phi0, eta0)`` the
    domain is recentred there and integrated iteratively (inner ``eta``, outer
    ``phi``): the outer variable is graded toward the singular point and the
    inner grading depth follows ``|phi - phi0|``.  ``frequencies`` are hints
    for the largest oscillation indices in ``(phi, eta)`` and only size the
    regular panels.
    """
    spec = spec or DEFAULT_SPEC
    if singular_point is None:
        return _integrate_2d_smooth(f, spec)
    p0, e0 = (float(v) for v in singular_point)
    fo, fi = (abs(float(v)) for v in frequencies)
    check_frequency(fo, fi)
    ref = Refinement(spec)
    evals = 0
    level = FIRST_2D_LEVEL
    for level in range(FIRST_2D_LEVEL, spec.max_levels + 1):
        total = mag = 0.0
        for to, ti, w in iterated_rule(level, spec, fo, fi).blocks():
            fx = (_evaluate(f, p0 + to, e0 + ti) + _evaluate(f, p0 + to, e0 - ti)
                  + _evaluate(f, p0 - to, e0 + ti) + _evaluate(f, p0 - to, e0 - ti))
            evals += 4 * to.size
            total = total + fx @ w
            mag = mag + np.abs(fx) @ w
        ref.push(total, mag)
        if ref.converged or ref.stagnated:
            break
    return ref.result(evals, level)


def square_radius(theta):
    """Distance from the origin to the boundary of ``[-pi, pi]^2`` along ``theta``."""
    theta = np.asarray(theta, dtype=float)
    th = np.mod(theta + math.pi, TWO_PI) - math.pi
    q = math.pi / 4.0
    cos_branch = (th < -3 * q) | ((th >= -q) & (th < q)) | (th >= 3 * q)
    with np.errstate(divide="ignore"):
        r = np.where(cos_branch, math.pi / np.abs(np.cos(th)), math.pi / np.abs(np.sin(th)))
    return float(r) if r.ndim == 0 else r


# the three smooth pieces of the boundary radius over a half turn
HALF_TURN_PIECES = ((0.0, 0.25 * math.pi), (0.25 * math.pi, 0.75 * math.pi), (0.75 * math.pi, math.pi))
# widest theta panel; keeps Gauss panels inside the analyticity strip of the polar integrands
THETA_PANEL = 0.25


@dataclass(frozen=True)
class PolarRule:
    """Tensor Gauss rule in ``(r, theta)`` over the half square ``theta in [0, pi)``.

    Stored compactly: ``theta``/``theta_w`` for the angle and ``unit``/``unit_w``
    on ``[0, 1]`` for the radius, scaled by the boundary distance at each angle.
    """

    theta: np.ndarray
    theta_w: np.ndarray
    unit: np.ndarray
    unit_w: np.ndarray

    @property
    def size(self) -> int:
        return self.theta.size * self.unit.size

    def blocks(self, max_nodes: int = 1 << 20):
        """Yield flat ``(r, theta, weight)`` arrays in blocks of whole angles.

        ``weight`` includes ``dr dtheta`` but not the polar Jacobian ``r``.
        """
        per = max(1, max_nodes // self.unit.size)
        for i in range(0, self.theta.size, per):
            th = self.theta[i:i + per]
            R = square_radius(th)
            yield ((R[:, None] * self.unit).ravel(), np.repeat(th, self.unit.size),
                   (R[:, None] * self.unit_w * self.theta_w[i:i + per, None]).ravel())


def polar_rule(level: int, frequency: float) -> PolarRule:
    """Polar rule on the half square sized for phases up to ``frequency * r``.

    Level 0 allots about ``PANEL_PHASE`` radians of phase per Gauss panel;
    each further level multiplies the panel counts in both variables by sqrt(2).
    """
    rmax = math.pi * math.sqrt(2.0)
    scale = 2.0 ** (0.5 * level)
    phase = rmax * max(abs(frequency), 1.0)
    n_r = int(math.ceil(scale * (phase / PANEL_PHASE + 1.0)))
    unit, unit_w = panel_rule(np.linspace(0.0, 1.0, n_r + 1))
    ths, wts = [], []
    for a, b in HALF_TURN_PIECES:
        n_t = int(math.ceil(scale * ((b - a) * phase / PANEL_PHASE + (b - a) / THETA_PANEL)))
        th, wt = panel_rule(np.linspace(a, b, n_t + 1))
        ths.append(th)
        wts.append(wt)
    return PolarRule(np.concatenate(ths), np.concatenate(wts), unit, unit_w)
