"""Preconditioned CG, condition numbers, least eigenpairs and the Tikhonov SSL solve."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy import linalg
from scipy.sparse.linalg import LinearOperator, eigsh, splu

from .graph import ConnectionGraph, MagneticLaplacian, magnetic_laplacian
from .sparsifier import CholeskyFactor, SparsifierBatch, cholesky_mtsf, solve_factored

SINGULAR_SHIFT = 1e-12
DENSE_EIG_MAX_NODES = 3000
DENSE_GEN_EIG_MAX_NODES = 800


class NegativeCurvatureError(np.linalg.LinAlgError):
    """CG met ``p^H A p <= 0``: the operator is not positive definite."""


class ConvergenceError(RuntimeError):
    pass


def _as_matrix(a):
    if isinstance(a, MagneticLaplacian):
        return a.regularized
    return a


class Preconditioner:
    """Approximate inverse ``x = M^{-1} b`` of a sparsifier ``Delta~ + q I``.

    A single-forest batch is factored with the leaf-first MTSF Cholesky; a
    union of several samples falls back to a sparse LU with COLAMD ordering.
    Singular sparsifiers get a ``1e-12`` diagonal shift.
    """

    def __init__(self, solve, kind, nnz=0, factor=None):
        self._solve = solve
        self.kind = kind
        self.nnz = nnz
        self.factor = factor

    def solve(self, b):
        return self._solve(b)

    __call__ = solve

    @classmethod
    def from_factor(cls, factor: CholeskyFactor):
        return cls(lambda b: solve_factored(factor, b), "mtsf-cholesky", factor.R.nnz, factor)

    @classmethod
    def from_matrix(cls, a, shift=0.0):
        a = sp.csc_matrix(_as_matrix(a), dtype=complex)
        if shift:
            a = a + shift * sp.identity(a.shape[0], format="csc")
        lu = splu(a, permc_spec="COLAMD")
        return cls(lambda b: lu.solve(np.asarray(b, dtype=complex)), "splu",
                   lu.L.nnz + lu.U.nnz)

    @classmethod
    def from_batch(cls, batch: SparsifierBatch):
        from .sampler import Mtsf

        q = batch.q
        if batch.t == 1 and isinstance(batch.samples[0], Mtsf):
            f = batch.samples[0]
            union, w = batch.edge_weights()
            singular = q == 0 and (f.n_trees > 0 or np.any(f.cycle_weights <= 1e-14))
            if not singular and np.array_equal(union, f.edges):
                return cls.from_factor(cholesky_mtsf(f, q, w))
        lap = magnetic_laplacian(batch.sparsified_graph(), q)
        shift = SINGULAR_SHIFT if q == 0 else 0.0
        return cls.from_matrix(lap.regularized, shift)


def pcg_solve(a, precond, b, tol=1e-10, maxit=1000, x0=None):
    """Preconditioned CG for Hermitian positive definite ``a``.

    ``precond`` is a :class:`Preconditioner`, a callable, a
    :class:`CholeskyFactor`, or ``None`` for the identity.  Returns
    ``(x, iterations, relative residual history)``; the history's last entry
    above ``tol`` flags a solve that hit ``maxit``.
    """
    a = _as_matrix(a)
    b = np.asarray(b, dtype=complex)
    if isinstance(precond, CholeskyFactor):
        precond = Preconditioner.from_factor(precond)
    apply_m = (lambda r: r) if precond is None else precond
    nb = np.linalg.norm(b)
    if nb == 0:
        return np.zeros_like(b), 0, [0.0]
    x = np.zeros_like(b) if x0 is None else np.asarray(x0, dtype=complex).copy()
    r = b - a @ x
    hist = [np.linalg.norm(r) / nb]
    if hist[-1] <= tol:
        return x, 0, hist
    z = apply_m(r)
    p = z.copy()
    rz = np.vdot(r, z).real
    for it in range(1, maxit + 1):
        ap = a @ p
        curv = np.vdot(p, ap).real
        if curv <= 0:
            raise NegativeCurvatureError(f"p^H A p = {curv:.3g} <= 0 at CG iteration {it}")
        alpha = rz / curv
        x += alpha * p
        r -= alpha * ap
        hist.append(np.linalg.norm(r) / nb)
        if hist[-1] <= tol:
            return x, it, hist
        z = apply_m(r)
        rz_new = np.vdot(r, z).real
        p = z + (rz_new / rz) * p
        rz = rz_new
    return x, maxit, hist


def _inverse_operator(m):
    if isinstance(m, Preconditioner):
        solve = m.solve
    elif isinstance(m, CholeskyFactor):
        solve = lambda b: solve_factored(m, b)  # noqa: E731
    else:
        lu = splu(sp.csc_matrix(_as_matrix(m), dtype=complex), permc_spec="COLAMD")
        solve = lambda b: lu.solve(np.asarray(b, dtype=complex))  # noqa: E731
    return solve


def generalized_eigenvalues(a, b):
    """All eigenvalues of ``B^{-1} A`` by a dense Hermitian-definite solve."""
    a = _as_matrix(a)
    b = _as_matrix(b)
    a = a.toarray() if sp.issparse(a) else np.asarray(a)
    b = b.toarray() if sp.issparse(b) else np.asarray(b)
    return linalg.eigh(a, b, eigvals_only=True)


def extremal_generalized_eigenvalues(a, b, tol=1e-8):
    """``(lambda_min, lambda_max)`` of ``B^{-1} A``; dense below 800 nodes, ARPACK above."""
    a = _as_matrix(a)
    bm = _as_matrix(b)
    n = a.shape[0]
    if n <= DENSE_GEN_EIG_MAX_NODES:
        ev = generalized_eigenvalues(a, bm)
        return float(ev[0]), float(ev[-1])
    a_solve = _inverse_operator(a)
    b_solve = _inverse_operator(bm)
    a_op = sp.csr_matrix(a, dtype=complex)
    b_op = sp.csr_matrix(bm, dtype=complex)
    binv = LinearOperator((n, n), matvec=b_solve, dtype=complex)
    ainv = LinearOperator((n, n), matvec=a_solve, dtype=complex)
    rng = np.random.default_rng(0)
    v0 = rng.standard_normal(n) + 0j
    try:
        lmax = eigsh(a_op, k=1, M=b_op, Minv=binv, which="LM", tol=tol, v0=v0,
                     return_eigenvectors=False)[0]
        mu = eigsh(b_op, k=1, M=a_op, Minv=ainv, which="LM", tol=tol, v0=v0,
                   return_eigenvectors=False)[0]
    except Exception as exc:  # ARPACK nonconvergence
        raise ConvergenceError(f"generalized eigenvalue iteration failed: {exc}") from exc
    return float(1.0 / mu), float(lmax)


def cond_estimate(a, b, tol=1e-8):
    """``lambda_max / lambda_min`` of ``B^{-1} A``; invariant under joint scaling."""
    lo, hi = extremal_generalized_eigenvalues(a, b, tol)
    return hi / lo


@dataclass
class PrecondReport:
    cond: float
    lambda_min: float
    lambda_max: float
    iterations: int
    iterations_unpreconditioned: int
    residuals: list = field(default_factory=list)
    residuals_unpreconditioned: list = field(default_factory=list)
    preconditioner_nnz: int = 0

    def to_dict(self):
        return {
            "cond": self.cond,
            "lambda_min": self.lambda_min,
            "lambda_max": self.lambda_max,
            "iterations": self.iterations,
            "iterations_unpreconditioned": self.iterations_unpreconditioned,
            "residuals": [float(r) for r in self.residuals],
            "residuals_unpreconditioned": [float(r) for r in self.residuals_unpreconditioned],
            "preconditioner_nnz": self.preconditioner_nnz,
        }


def precondition_report(a, sparsifier, b=None, tol=1e-8, maxit=5000, seed=0):
    """Condition number and CG iteration counts with and without the sparsifier."""
    a = _as_matrix(a)
    sm = _as_matrix(sparsifier)
    pre = Preconditioner.from_matrix(sm)
    if b is None:
        b = np.random.default_rng(seed).standard_normal(a.shape[0]) + 0j
    lo, hi = extremal_generalized_eigenvalues(a, sm)
    _, it_p, hist_p = pcg_solve(a, pre, b, tol, maxit)
    _, it_0, hist_0 = pcg_solve(a, None, b, tol, maxit)
    return PrecondReport(hi / lo, lo, hi, it_p, it_0, hist_p, hist_0, pre.nnz)


# -- least eigenpair ---------------------------------------------------------------


@dataclass(frozen=True)
class Eigenpair:
    value: float
    vector: np.ndarray  # normalized to ||f||^2 = n
    residual: float
    iterations: int
    degenerate: bool


def _norm_bound(a):
    # Gershgorin bound on the spectral norm of a Hermitian matrix
    return float(abs(a).sum(axis=1).max())


def least_eigenpair(lap, precond=None, shift=None, tol=1e-8, maxit=300, block=2, seed=0,
                    dense=None):
    """Least eigenpair of a Hermitian PSD matrix.

    Block inverse iteration on ``Delta + tau I`` (``tau`` small and positive)
    with Rayleigh-Ritz; each inner solve is CG preconditioned by ``precond``
    (a :class:`Preconditioner`, typically of a sparsifier) or a sparse LU
    when ``precond`` is None.  Stops once ``||Delta f - lambda f|| <= tol ||Delta||``.
    ``shift`` is a lower estimate of the least eigenvalue; 99% of it is
    subtracted from the operator to speed up convergence.
    Two Ritz values within ``1e-10`` set the ``degenerate`` flag.
    """
    a = sp.csr_matrix(lap.matrix if isinstance(lap, MagneticLaplacian) else lap, dtype=complex)
    n = a.shape[0]
    scale = _norm_bound(a)
    if dense is None:
        dense = n <= DENSE_EIG_MAX_NODES and precond is None
    if dense:
        vals, vecs = linalg.eigh(a.toarray(), subset_by_index=[0, min(1, n - 1)])
        f = vecs[:, 0]
        lam = float(vals[0])
        res = float(np.linalg.norm(a @ f - lam * f))
        degen = n > 1 and abs(vals[1] - vals[0]) <= 1e-10
        return Eigenpair(lam, f * math.sqrt(n), res, 0, bool(degen))
    # stay positive definite: move towards a lower estimate of lambda_1 but not past it
    tau = 1e-6 * scale - (0.0 if shift is None else 0.99 * max(float(shift), 0.0))
    shifted = (a + tau * sp.identity(n, format="csr")).tocsr()
    if precond is None:
        inner = _inverse_operator(shifted)
    else:
        def inner(b):
            return pcg_solve(shifted, precond, b, tol=1e-12, maxit=2000)[0]
    rng = np.random.default_rng(seed)
    x = rng.standard_normal((n, block)) + 1j * rng.standard_normal((n, block))
    x, _ = np.linalg.qr(x)
    theta = np.zeros(block)
    res = np.inf
    for it in range(1, maxit + 1):
        y = np.column_stack([inner(x[:, j]) for j in range(block)])
        qm, _ = np.linalg.qr(y)
        h = qm.conj().T @ (a @ qm)
        theta, v = np.linalg.eigh(0.5 * (h + h.conj().T))
        x = qm @ v
        f = x[:, 0]
        res = float(np.linalg.norm(a @ f - theta[0] * f))
        if res <= tol * scale:
            break
    degen = block > 1 and abs(theta[1] - theta[0]) <= 1e-10
    return Eigenpair(float(theta[0]), x[:, 0] * math.sqrt(n), res, it, bool(degen))


def eigenvector_distance(f, g):
    """``min over unit phases c of ||f - c g||`` (both taken as given)."""
    ip = np.vdot(g, f)
    c = ip / abs(ip) if abs(ip) > 0 else 1.0
    return float(np.linalg.norm(f - c * g))


def davis_kahan_bound(lambda_n, delta_star, eps, n):
    """``sqrt(2 n) eps lambda_n / (delta* - eps lambda_n)``; needs ``eps lambda_n < delta*``."""
    if eps * lambda_n >= delta_star:
        raise ValueError("Davis-Kahan bound undefined: eps * lambda_n >= spectral gap")
    return math.sqrt(2.0 * n) * eps * lambda_n / (delta_star - eps * lambda_n)


# -- semi-supervised learning -------------------------------------------------------


def ssl_solve(g: ConnectionGraph, q, y, precond=None, tol=1e-10, maxit=5000, seed=None,
              return_info=False):
    """Tikhonov smoothing: solve ``(Delta + q I) f = q y`` by PCG.

    Without an explicit preconditioner one MTSF is sampled (capped law) and
    weighted with uniform leverage scores, then factored.
    """
    if q <= 0:
        raise ValueError("ssl_solve needs q > 0")
    y = np.asarray(y, dtype=complex)
    if y.shape != (g.n,):
        raise ValueError(f"labels must have length n = {g.n}")
    a = magnetic_laplacian(g, q).regularized
    if precond is None:
        from .sampler import cycle_popping

        f, _ = cycle_popping(g.with_unit_weights(), q, "capped", seed=seed)
        batch = SparsifierBatch(g, [f], "uniform", q)
        precond = Preconditioner.from_batch(batch)
    x, it, hist = pcg_solve(a, precond, q * y, tol=tol, maxit=maxit)
    if return_info:
        return x, it, hist
    return x


__all__ = [
    "ConvergenceError",
    "Eigenpair",
    "NegativeCurvatureError",
    "PrecondReport",
    "Preconditioner",
    "cond_estimate",
    "davis_kahan_bound",
    "eigenvector_distance",
    "extremal_generalized_eigenvalues",
    "generalized_eigenvalues",
    "least_eigenpair",
    "pcg_solve",
    "precondition_report",
    "ssl_solve",
]
