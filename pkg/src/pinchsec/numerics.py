"""Hermitian linear algebra used by the optimizer and the robust machinery.

The eigensolver is a cyclic Jacobi iteration run on the real-symmetric
embedding [[Re, -Im], [Im, Re]] of the Hermitian input; that embedding has
the same spectrum with every eigenvalue doubled.  Matrices here are tiny
(at most a few per side beyond N+1), so Jacobi's simplicity and orthonormal
eigenvectors outweigh its asymptotic cost.
"""

from __future__ import annotations

import numpy as np


class NotHermitianError(ValueError):
    """Input matrix is not Hermitian within tolerance."""


class NotPsdError(ValueError):
    """Input matrix has an eigenvalue below the PSD tolerance."""


def _check_hermitian(mat: np.ndarray) -> np.ndarray:
    mat = np.asarray(mat, dtype=complex)
    if mat.ndim != 2 or mat.shape[0] != mat.shape[1]:
        raise ValueError("expected a square matrix")
    scale = max(1.0, float(np.max(np.abs(mat)))) if mat.size else 1.0
    if np.max(np.abs(mat - mat.conj().T)) > 1e-9 * scale + 1e-12:
        raise NotHermitianError("matrix deviates from its conjugate transpose")
    return mat


def jacobi_symmetric(sym: np.ndarray, max_sweeps: int = 60):
    """Cyclic Jacobi diagonalization of a real symmetric matrix.

    Returns (eigenvalues ascending, orthonormal eigenvector columns, sweeps).
    Each sweep rotates away every above-diagonal element once; the
    off-diagonal Frobenius norm decreases monotonically until it falls below
    machine-level relative to the matrix norm.
    """
    a = np.array(sym, dtype=float)
    n = a.shape[0]
    v = np.eye(n)
    norm = np.linalg.norm(a)
    if norm == 0.0:
        return np.zeros(n), v, 0
    off_mask = ~np.eye(n, dtype=bool)
    sweeps = 0
    for sweeps in range(1, max_sweeps + 1):
        off = np.sqrt(np.sum(a[off_mask] ** 2))
        if off <= 1e-14 * norm:
            sweeps -= 1
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                if abs(apq) <= 1e-18 * norm:
                    continue
                theta = 0.5 * np.arctan2(2.0 * apq, a[q, q] - a[p, p])
                c, s = np.cos(theta), np.sin(theta)
                col_p = a[:, p].copy()
                col_q = a[:, q].copy()
                a[:, p] = c * col_p - s * col_q
                a[:, q] = s * col_p + c * col_q
                row_p = a[p, :].copy()
                row_q = a[q, :].copy()
                a[p, :] = c * row_p - s * row_q
                a[q, :] = s * row_p + c * row_q
                a[p, q] = 0.0
                a[q, p] = 0.0
                vec_p = v[:, p].copy()
                vec_q = v[:, q].copy()
                v[:, p] = c * vec_p - s * vec_q
                v[:, q] = s * vec_p + c * vec_q
    eigvals = np.diag(a).copy()
    order = np.argsort(eigvals, kind="stable")
    return eigvals[order], v[:, order], sweeps


def hermitian_eig(mat: np.ndarray):
    """Eigen-decomposition of a Hermitian matrix via the real embedding.

    Returns (eigenvalues ascending, unitary eigenvector columns) satisfying
    mat @ v_i = lam_i v_i.  The embedding duplicates every eigenvalue; one
    complex eigenvector per pair is recovered, with a Gram-Schmidt pass
    inside (near-)degenerate clusters to keep the complex set orthonormal.
    """
    mat = _check_hermitian(mat)
    n = mat.shape[0]
    re, im = mat.real, mat.imag
    embed = np.block([[re, -im], [im, re]])
    embed = 0.5 * (embed + embed.T)
    vals, vecs, _ = jacobi_symmetric(embed)
    scale = max(float(np.max(np.abs(vals))), 1e-300)
    out_vals = np.empty(n)
    out_vecs = np.empty((n, n), dtype=complex)
    kept = 0
    cluster: list[np.ndarray] = []
    cluster_val = None
    for idx in range(2 * n):
        if kept == n:
            break
        lam = vals[idx]
        z = vecs[:n, idx] + 1j * vecs[n:, idx]
        if cluster_val is None or abs(lam - cluster_val) > 1e-8 * scale:
            cluster = []
        # orthogonalize against accepted vectors of the same eigenvalue cluster
        for prev in cluster:
            z = z - prev * np.vdot(prev, z)
        nz = np.linalg.norm(z)
        if nz < 0.5:
            # complex duplicate of an already-kept embedding vector
            cluster_val = lam
            continue
        z = z / nz
        out_vals[kept] = lam
        out_vecs[:, kept] = z
        cluster.append(z)
        cluster_val = lam
        kept += 1
    if kept != n:  # pragma: no cover - defensive, embedding always pairs up
        raise RuntimeError("eigenvalue pairing of the real embedding failed")
    return out_vals, out_vecs


def min_eig(mat: np.ndarray):
    """Smallest eigenvalue of a Hermitian matrix and its unit eigenvector."""
    vals, vecs = hermitian_eig(mat)
    return float(vals[0]), vecs[:, 0]


def _psd_eigvals(mat: np.ndarray):
    vals, vecs = hermitian_eig(mat)
    trace = float(np.real(np.trace(mat)))
    if vals[0] < -1e-9 * max(trace, 0.0) - 1e-20:
        raise NotPsdError(f"matrix is not PSD: min eigenvalue {vals[0]:.3e}")
    return vals, vecs, trace


def regularized_inverse(phi: np.ndarray, eps_rel: float = 1e-9,
                        tiny_floor: float = 1e-18) -> np.ndarray:
    """(phi + eps I)^-1 for a PSD matrix, with eps = eps_rel * max(tr/n, floor).

    phi is typically a rank-deficient channel-uncertainty ellipsoid matrix,
    so a plain inverse does not exist; the ridge keeps the inverse finite
    while perturbing the well-conditioned subspace at the eps_rel level.
    Slightly negative eigenvalues from roundoff are clamped to zero.
    """
    vals, vecs, trace = _psd_eigvals(phi)
    n = phi.shape[0]
    eps = eps_rel * max(trace / n, tiny_floor)
    if eps <= 0.0:
        eps = tiny_floor
    inv_vals = 1.0 / (np.maximum(vals, 0.0) + eps)
    return (vecs * inv_vals[None, :]) @ vecs.conj().T


def hermitian_sqrt(phi: np.ndarray) -> np.ndarray:
    """Hermitian PSD square root S with S @ S = phi (negatives clamped to 0)."""
    vals, vecs, _ = _psd_eigvals(phi)
    root = np.sqrt(np.maximum(vals, 0.0))
    return (vecs * root[None, :]) @ vecs.conj().T
