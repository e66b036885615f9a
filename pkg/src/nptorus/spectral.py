"""Galerkin matrices of the mode operators ``A_k`` and their spectra.

In the basis ``g_l = e^{il eta}``, ``|l| <= L``, the mode operator acts as
``A_k g_l = s_kl psi^{-1} g_l - xi ds_kl g_l`` and ``psi^{-1} = sum_m c_m e^{im eta}``,
so its matrix is ``M[m, l] = c_{m-l} s_kl - xi ds_kl delta_ml``.  The inner
product in which ``A_k`` is self-adjoint has the diagonal Gram matrix
``G = diag(2 pi s_kl)``.  The congruence ``B = G^{1/2} M G^{-1/2}`` gives the symmetric
matrix ``B[m, l] = c_{m-l} sqrt(s_km s_kl) - xi ds_kl delta_ml``, which has the
same eigenvalues.  An eigenvalue ``lambda`` of ``A_k`` maps to the NP eigenvalue
``(1 - xi^2) lambda / (8 pi sqrt2 xi)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .geometry import TorusShape
from .modes import ModeTable, c_m, check_shape, mode_table
from .quadrature import DEFAULT_SPEC, ConvergenceError, QuadratureSpec

DEFAULT_L = 64
MAX_L = 256
SYMMETRY_RTOL = 1e-12
RESIDUAL_RTOL = 1e-10


class EigenSolverError(RuntimeError):
    pass


def np_scale(shape: TorusShape) -> float:
    """Factor mapping ``A_k`` eigenvalues to NP eigenvalues."""
    return (1.0 - shape.xi**2) / (8.0 * math.pi * math.sqrt(2.0) * shape.xi)


@dataclass
class ModeMatrix:
    xi: float
    k: int
    L: int
    entries: np.ndarray
    s_diag: np.ndarray
    ds_diag: np.ndarray
    build_err: float

    @property
    def modes(self) -> np.ndarray:
        return np.arange(-self.L, self.L + 1)

    def raw_matrix(self) -> np.ndarray:
        """The unsymmetrised matrix ``M`` of ``A_k``."""
        shape = TorusShape(self.xi)
        m = self.modes
        c = np.array([c_m(shape, j) for j in range(2 * self.L + 1)])
        M = c[np.abs(m[:, None] - m[None, :])] * self.s_diag[None, :]
        M[np.diag_indices_from(M)] -= self.xi * self.ds_diag
        return M

    def gram(self) -> np.ndarray:
        return np.diag(2.0 * math.pi * self.s_diag)


def _check_table(table: ModeTable, k: int, L: int) -> None:
    i = table.row(k)
    cols = [table.col(l) for l in range(L + 1)]
    bad = np.flatnonzero(table.unconverged[i, cols])
    if bad.size:
        raise ConvergenceError(f"quadrature did not converge for (k, l) = ({abs(k)}, {int(bad[0])})")


def build_mode_matrix(shape: TorusShape, k: int, L: int, spec: QuadratureSpec | None = None,
                      table: ModeTable | None = None) -> ModeMatrix:
    """Symmetrised Galerkin matrix of ``A_k`` on ``l = -L..L``.

    ``build_err`` bounds the spectral norm of the entry perturbation implied
    by the quadrature error estimates (infinity-norm bound, valid for
    symmetric perturbations), in ``A_k`` units.
    """
    if L < 1 or L > MAX_L:
        raise ValueError(f"L must lie in [1, {MAX_L}], got {L}")
    check_shape(shape)
    spec = spec or DEFAULT_SPEC
    if table is None:
        table = mode_table(shape, [k], range(L + 1), spec)
    _check_table(table, k, L)
    i = table.row(k)
    idx = [table.col(l) for l in range(-L, L + 1)]
    s = table.s[i, idx]
    ds = table.ds[i, idx]
    es = table.s_err[i, idx]
    eds = table.ds_err[i, idx]
    if np.any(s <= 0):
        raise ConvergenceError(f"non-positive s_kl at k={k}; quadrature is unreliable")

    m = np.arange(-L, L + 1)
    c = np.array([c_m(shape, j) for j in range(2 * L + 1)])
    C = c[np.abs(m[:, None] - m[None, :])]
    root = np.sqrt(s)
    B = C * np.outer(root, root)
    B[np.diag_indices_from(B)] -= shape.xi * ds
    B = 0.5 * (B + B.T)

    rel = es / s
    dB = C * np.outer(root, root) * 0.5 * (rel[:, None] + rel[None, :])
    dB[np.diag_indices_from(dB)] += shape.xi * eds
    build_err = float(np.max(dB.sum(axis=1)))
    return ModeMatrix(shape.xi, int(k), int(L), B, s, ds, build_err)


def symmetric_eigendecomposition(matrix, tol: float = RESIDUAL_RTOL):
    """Eigenvalues (descending), orthonormal eigenvectors (columns) and residual norms.

    Delegates to LAPACK's symmetric solver and verifies the result.
    """
    A = np.asarray(matrix, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError("matrix must be square")
    scale = max(np.abs(A).max(), np.finfo(float).tiny)
    if np.abs(A - A.T).max() > SYMMETRY_RTOL * scale:
        raise ValueError("matrix is not symmetric")
    try:
        w, V = np.linalg.eigh(A)
    except np.linalg.LinAlgError as exc:
        raise EigenSolverError(f"symmetric eigensolver failed to converge: {exc}") from exc
    order = np.argsort(w, kind="stable")[::-1]
    w, V = w[order], V[:, order]
    residuals = np.linalg.norm(A @ V - V * w, axis=0)
    norm = np.linalg.norm(A, 2) if A.size else 0.0
    if np.any(residuals > tol * max(norm, np.finfo(float).tiny)):
        raise EigenSolverError(f"eigen-residual {residuals.max():.3e} exceeds {tol:g} * ||A||")
    if A.size and np.abs(V.T @ V - np.eye(len(w))).max() > 1e-10:
        raise EigenSolverError("eigenvectors are not orthonormal")
    return w, V, residuals


@dataclass(frozen=True)
class SpectrumRecord:
    xi: float
    k: int
    L: int
    index: int
    lambda_A: float
    lambda_np: float
    residual: float


@dataclass
class ModeSpectrum:
    """Spectrum of one mode block; iterates over its :class:`SpectrumRecord` list."""

    matrix: ModeMatrix
    records: list

    def __iter__(self):
        return iter(self.records)

    def __len__(self):
        return len(self.records)

    def __getitem__(self, i):
        return self.records[i]

    @property
    def lambda_np(self) -> np.ndarray:
        return np.array([r.lambda_np for r in self.records])

    @property
    def positive_count(self) -> int:
        return int(np.sum(self.lambda_np > 0))

    @property
    def negative_count(self) -> int:
        return int(np.sum(self.lambda_np < 0))

    @property
    def build_err_np(self) -> float:
        return np_scale(TorusShape(self.matrix.xi)) * self.matrix.build_err

    def contained(self, factor: float = 10.0) -> bool:
        """All NP eigenvalues within ``1/2 + factor * build_err`` in modulus."""
        return bool(np.all(np.abs(self.lambda_np) <= 0.5 + factor * self.build_err_np))


def mode_spectrum(shape: TorusShape, k: int, L: int = DEFAULT_L, spec: QuadratureSpec | None = None,
                  table: ModeTable | None = None) -> ModeSpectrum:
    mat = build_mode_matrix(shape, k, L, spec, table)
    w, _, res = symmetric_eigendecomposition(mat.entries)
    scale = np_scale(shape)
    recs = [SpectrumRecord(shape.xi, int(k), int(L), i, float(a), float(scale * a), float(r))
            for i, (a, r) in enumerate(zip(w, res))]
    return ModeSpectrum(mat, recs)


@dataclass
class SpectrumTable:
    xi: float
    L: int
    blocks: dict
    failures: dict = field(default_factory=dict)

    @property
    def records(self) -> list:
        return [r for k in sorted(self.blocks) for r in self.blocks[k]]

    def counts(self) -> dict:
        return {k: {"positive": b.positive_count, "negative": b.negative_count}
                for k, b in sorted(self.blocks.items())}

    @property
    def negative_count(self) -> int:
        return sum(b.negative_count for b in self.blocks.values())

    @property
    def positive_count(self) -> int:
        return sum(b.positive_count for b in self.blocks.values())

    def summary(self) -> dict:
        neg = [b.negative_count for _, b in sorted(self.blocks.items())]
        return {
            "xi": self.xi,
            "L": self.L,
            "per_k": {str(k): v for k, v in self.counts().items()},
            "negative_count": self.negative_count,
            "positive_count": self.positive_count,
            "negative_count_nondecreasing_in_k": all(a <= b for a, b in zip(neg, neg[1:])),
            "max_build_err_np": max((b.build_err_np for b in self.blocks.values()), default=0.0),
            "failures": {str(k): v for k, v in sorted(self.failures.items())},
        }


def assemble_spectrum(shape: TorusShape, k_max: int, L: int = DEFAULT_L, spec: QuadratureSpec | None = None,
                      ks=None) -> SpectrumTable:
    """Per-mode spectra for ``k = 0..k_max`` (or the given ``ks``), sharing one quadrature table.

    Only ``k >= 0`` is computed: every input is even in ``k``.
    """
    spec = spec or DEFAULT_SPEC
    ks = list(range(k_max + 1)) if ks is None else sorted({abs(int(k)) for k in ks})
    table = mode_table(shape, ks, range(L + 1), spec)
    out = SpectrumTable(shape.xi, L, {})
    for k in ks:
        try:
            out.blocks[k] = mode_spectrum(shape, k, L, spec, table)
        except (ConvergenceError, EigenSolverError) as exc:
            out.failures[k] = str(exc)
    return out


@dataclass
class ConvergenceStudy:
    xi: float
    k: int
    L_sequence: list
    top: np.ndarray      # (len(L_sequence), n) largest NP eigenvalues, descending
    bottom: np.ndarray   # (len(L_sequence), n) smallest NP eigenvalues, ascending
    negative_counts: list

    @property
    def top_deltas(self) -> np.ndarray:
        return np.abs(np.diff(self.top, axis=0))

    @property
    def bottom_deltas(self) -> np.ndarray:
        return np.abs(np.diff(self.bottom, axis=0))

    @property
    def top_monotone(self) -> bool:
        d = self.top_deltas[:, 0]
        return bool(np.all(np.diff(d) < 0))

    def rows(self) -> list:
        out = []
        for i, L in enumerate(self.L_sequence):
            for j in range(self.top.shape[1]):
                out.append({
                    "L": L, "rank": j, "top": self.top[i, j], "bottom": self.bottom[i, j],
                    "top_delta": self.top_deltas[i - 1, j] if i else float("nan"),
                    "bottom_delta": self.bottom_deltas[i - 1, j] if i else float("nan"),
                })
        return out


def convergence_study(shape: TorusShape, k: int, L_sequence, spec: QuadratureSpec | None = None,
                      n_values: int = 4) -> ConvergenceStudy:
    """Extreme NP eigenvalues of the ``k`` block as the truncation grows."""
    Ls = [int(L) for L in L_sequence]
    if not Ls or any(b <= a for a, b in zip(Ls, Ls[1:])):
        raise ValueError("L_sequence must be non-empty and strictly increasing")
    spec = spec or DEFAULT_SPEC
    table = mode_table(shape, [k], range(Ls[-1] + 1), spec)
    n = min(n_values, 2 * Ls[0] + 1)
    top, bottom, neg = [], [], []
    for L in Ls:
        lam = mode_spectrum(shape, k, L, spec, table).lambda_np
        top.append(lam[:n])
        bottom.append(lam[::-1][:n])
        neg.append(int(np.sum(lam < 0)))
    return ConvergenceStudy(shape.xi, int(k), Ls, np.array(top), np.array(bottom), neg)


def interlaces(inner, outer, slack: float = 1e-10) -> bool:
    """Cauchy interlacing of a principal submatrix spectrum ``inner`` in ``outer``.

    Both descending; ``outer`` has ``d = len(outer) - len(inner)`` more values and
    ``outer[i] >= inner[i] >= outer[i + d]`` must hold for all ``i``.
    """
    inner = np.asarray(inner)
    outer = np.asarray(outer)
    d = outer.size - inner.size
    if d < 0:
        raise ValueError("outer spectrum must be at least as large as inner")
    i = np.arange(inner.size)
    return bool(np.all(outer[i] >= inner - slack) and np.all(inner >= outer[i + d] - slack))
