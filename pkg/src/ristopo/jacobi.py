"""Cyclic Jacobi eigensolver for dense real symmetric matrices.

Works on a single ``(n, n)`` matrix or a stack ``(..., n, n)``; every matrix in
the stack is rotated with the same (p, q) schedule, which keeps exhaustive
sweeps over thousands of small Laplacians cheap.
"""
from __future__ import annotations

import numpy as np

OFF_TOL = 1e-12
MAX_SWEEPS = 100


def off_norm(a: np.ndarray) -> np.ndarray:
    """Frobenius norm of the strictly off-diagonal part (per matrix)."""
    n = a.shape[-1]
    off = a * (1.0 - np.eye(n))
    return np.sqrt(np.sum(off * off, axis=(-2, -1)))


def jacobi_eigh(a, tol: float = OFF_TOL, max_sweeps: int = MAX_SWEEPS, vectors: bool = False):
    """Eigen-decompose symmetric matrices by cyclic Jacobi rotations.

    Returns ascending eigenvalues with shape ``(..., n)``; with ``vectors=True``
    also the eigenvector matrices (columns), shape ``(..., n, n)``.

    Convergence is declared when the off-diagonal Frobenius norm drops below
    ``tol * max(1, ||A||_F)``.
    """
    a = np.array(a, dtype=float, copy=True)
    if a.ndim < 2 or a.shape[-1] != a.shape[-2]:
        raise ValueError(f"expected square matrices, got shape {a.shape}")
    single = a.ndim == 2
    if single:
        a = a[None]
    batch_shape = a.shape[:-2]
    n = a.shape[-1]
    a = a.reshape(-1, n, n)
    v = np.broadcast_to(np.eye(n), a.shape).copy() if vectors else None

    scale = np.maximum(1.0, np.sqrt(np.sum(a * a, axis=(-2, -1))))
    # batch-last layout keeps every row/column slice contiguous over the batch
    a = np.ascontiguousarray(np.moveaxis(a, 0, -1))
    if v is not None:
        v = np.ascontiguousarray(np.moveaxis(v, 0, -1))
    live = np.arange(a.shape[-1])
    for _ in range(max_sweeps):
        off = a[:, :, live] * (1.0 - np.eye(n))[:, :, None]
        done = np.sqrt(np.sum(off * off, axis=(0, 1))) < tol * scale[live]
        live = live[~done]
        if live.size == 0:
            break
        sub = a[:, :, live]
        vsub = v[:, :, live] if v is not None else None
        for p in range(n - 1):
            for q in range(p + 1, n):
                _rotate(sub, vsub, p, q)
        a[:, :, live] = sub
        if v is not None:
            v[:, :, live] = vsub
    else:
        raise RuntimeError(f"Jacobi did not converge in {max_sweeps} sweeps")
    a = np.moveaxis(a, -1, 0)
    if v is not None:
        v = np.moveaxis(v, -1, 0)

    w = np.diagonal(a, axis1=-2, axis2=-1).copy()
    order = np.argsort(w, axis=-1, kind="stable")
    w = np.take_along_axis(w, order, axis=-1)
    w = w.reshape(*batch_shape, n)
    if v is not None:
        v = np.take_along_axis(v, order[:, None, :], axis=-1).reshape(*batch_shape, n, n)
    if single:
        w = w[0]
        if v is not None:
            v = v[0]
    return (w, v) if vectors else w


def _rotate(a: np.ndarray, v, p: int, q: int) -> None:
    """Zero a[p, q] in place for every matrix of a batch-last stack."""
    apq = a[p, q].copy()
    active = apq != 0.0
    if not active.any():
        return
    app, aqq = a[p, p].copy(), a[q, q].copy()
    theta = (aqq - app) / (2.0 * np.where(active, apq, 1.0))
    t = np.sign(theta) / (np.abs(theta) + np.hypot(theta, 1.0))
    t = np.where(theta == 0.0, 1.0, t)
    t = np.where(active, t, 0.0)
    c = 1.0 / np.sqrt(t * t + 1.0)
    s = t * c
    rp, rq = a[p].copy(), a[q].copy()
    new_p = c * rp - s * rq
    new_q = s * rp + c * rq
    a[p], a[q] = new_p, new_q
    a[:, p], a[:, q] = new_p, new_q
    a[p, p] = app - t * apq
    a[q, q] = aqq + t * apq
    a[p, q] = 0.0
    a[q, p] = 0.0
    if v is not None:
        vp, vq = v[:, p].copy(), v[:, q].copy()
        v[:, p] = c * vp - s * vq
        v[:, q] = s * vp + c * vq


def jacobi_eigvalsh(a, tol: float = OFF_TOL) -> np.ndarray:
    return jacobi_eigh(a, tol=tol)
