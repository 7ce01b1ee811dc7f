"""Dense multi-way array arithmetic: unfolding, folding, mode products, SVD, norms.

Arrays are plain ``numpy.ndarray`` values in 64-bit floating point; an order-N
tensor is an ndarray with N axes, a matrix is an ndarray with 2 axes.  All
functions are pure and never mutate their inputs.

Unfolding convention
--------------------
``unfold(x, mode)`` moves ``mode`` to the front and reshapes C-contiguously:
row ``i`` of the result is ``x[..., i, ...].ravel()`` with the remaining axes
kept in their original order, the last one varying fastest.  ``fold`` is the
exact inverse.  The convention is internal; everything downstream relies only
on the fold/unfold round trip.
"""

from __future__ import annotations

import math
from typing import NamedTuple, Sequence

import numpy as np

__all__ = [
    "SvdResult",
    "unfold",
    "fold",
    "mode_product",
    "svd",
    "frobenius_norm",
    "l2_norm",
    "mse",
]

# Relative threshold below which a rotated column is treated as numerically zero
# and replaced by an orthonormal completion vector.
_RANK_TOL = 1e-13


class SvdResult(NamedTuple):
    """Thin SVD ``a = u @ diag(s) @ vt``.

    ``u`` is m x k with orthonormal columns, ``s`` holds the k = min(m, n)
    singular values sorted descending, ``vt`` is k x n with orthonormal rows.
    """

    u: np.ndarray
    s: np.ndarray
    vt: np.ndarray


def _as_tensor(x) -> np.ndarray:
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim < 1 or any(n < 1 for n in arr.shape):
        raise ValueError(f"expected a tensor with >= 1 non-empty modes, got shape {arr.shape}")
    return arr


def unfold(x, mode: int) -> np.ndarray:
    """Mode-``mode`` matricization: rows indexed by that mode, columns by the rest."""
    arr = _as_tensor(x)
    if not 0 <= mode < arr.ndim:
        raise ValueError(f"mode {mode} out of range for order-{arr.ndim} tensor")
    return np.moveaxis(arr, mode, 0).reshape(arr.shape[mode], -1)


def fold(m, mode: int, shape: Sequence[int]) -> np.ndarray:
    """Inverse of :func:`unfold`: rebuild the tensor of ``shape`` from its matricization."""
    mat = np.asarray(m, dtype=np.float64)
    shape = tuple(int(n) for n in shape)
    if mat.ndim != 2:
        raise ValueError(f"expected a matrix, got shape {mat.shape}")
    if not 0 <= mode < len(shape):
        raise ValueError(f"mode {mode} out of range for shape {shape}")
    rest = shape[:mode] + shape[mode + 1 :]
    if mat.shape[0] != shape[mode] or mat.shape[1] != math.prod(rest):
        raise ValueError(f"matrix {mat.shape} inconsistent with shape {shape} at mode {mode}")
    return np.moveaxis(mat.reshape((shape[mode],) + rest), 0, mode)


def mode_product(x, u, mode: int) -> np.ndarray:
    """Mode-``mode`` product: multiply that mode's fibers by the matrix ``u``.

    Equivalent to ``fold(u @ unfold(x, mode), mode, new_shape)`` where the mode's
    size becomes ``u.shape[0]``.
    """
    arr = _as_tensor(x)
    mat = np.asarray(u, dtype=np.float64)
    if mat.ndim != 2:
        raise ValueError(f"expected a matrix, got shape {mat.shape}")
    if not 0 <= mode < arr.ndim:
        raise ValueError(f"mode {mode} out of range for order-{arr.ndim} tensor")
    if mat.shape[1] != arr.shape[mode]:
        raise ValueError(
            f"matrix columns {mat.shape[1]} != tensor mode-{mode} size {arr.shape[mode]}"
        )
    return np.moveaxis(np.tensordot(mat, arr, axes=(1, mode)), 0, mode)


def _orthonormal_completion(u: np.ndarray, cols: Sequence[int]) -> None:
    """Fill the listed columns of ``u`` with unit vectors orthogonal to the rest.

    Deterministic: candidates are taken from the identity basis in order.
    Modifies ``u`` in place.
    """
    m = u.shape[0]
    good = [j for j in range(u.shape[1]) if j not in set(cols)]
    basis = [u[:, j] for j in good]
    e = 0
    for j in cols:
        while True:
            if e >= m:  # cannot happen for k <= m, kept as a hard stop
                raise RuntimeError("orthonormal completion exhausted the identity basis")
            cand = np.zeros(m)
            cand[e] = 1.0
            e += 1
            for b in basis:
                cand -= (b @ cand) * b
            norm = np.linalg.norm(cand)
            if norm > 0.5:  # identity vectors lose at most their projection
                cand /= norm
                u[:, j] = cand
                basis.append(cand)
                break


def _jacobi_svd_tall(a: np.ndarray, max_sweeps: int = 60) -> SvdResult:
    """One-sided Jacobi SVD of a tall-or-square matrix (m >= n).

    Repeatedly rotates column pairs to kill their inner product; on
    convergence the working columns are ``u_j * s_j`` and the accumulated
    rotations form ``v``.
    """
    m, n = a.shape
    work = a.copy()
    v = np.eye(n)
    tol = 1e-15
    for _ in range(max_sweeps):
        rotated = False
        for p in range(n - 1):
            for q in range(p + 1, n):
                cp = work[:, p]
                cq = work[:, q]
                apq = cp @ cq
                app = cp @ cp
                aqq = cq @ cq
                if abs(apq) <= tol * math.sqrt(app * aqq):
                    continue
                rotated = True
                theta = 0.5 * math.atan2(2.0 * apq, app - aqq)
                c = math.cos(theta)
                s = math.sin(theta)
                new_p = c * cp + s * cq
                new_q = -s * cp + c * cq
                work[:, p] = new_p
                work[:, q] = new_q
                vp = v[:, p].copy()
                v[:, p] = c * vp + s * v[:, q]
                v[:, q] = -s * vp + c * v[:, q]
        if not rotated:
            break

    norms = np.linalg.norm(work, axis=0)
    order = np.argsort(-norms, kind="stable")
    s_vals = norms[order]
    u = work[:, order]
    v = v[:, order]
    cutoff = _RANK_TOL * s_vals[0] if s_vals[0] > 0 else 0.0
    dead = []
    for j in range(n):
        if s_vals[j] > cutoff:
            u[:, j] /= s_vals[j]
        else:
            dead.append(j)
    if dead:
        _orthonormal_completion(u, dead)
    return SvdResult(u=u, s=s_vals, vt=v.T)


def svd(m) -> SvdResult:
    """Thin SVD via one-sided Jacobi rotations.

    Wide matrices are handled by factoring the transpose and swapping the
    factors.  Singular values are sorted descending; exact-zero directions get
    orthonormal filler vectors so both factors stay orthonormal.
    """
    mat = np.asarray(m, dtype=np.float64)
    if mat.ndim != 2:
        raise ValueError(f"expected a matrix, got shape {mat.shape}")
    if not np.all(np.isfinite(mat)):
        raise ValueError("matrix has non-finite entries")
    if mat.shape[0] >= mat.shape[1]:
        return _jacobi_svd_tall(mat)
    res = _jacobi_svd_tall(mat.T.copy())
    return SvdResult(u=res.vt.T, s=res.s, vt=res.u.T)


def frobenius_norm(x) -> float:
    """Square root of the sum of squared entries."""
    return float(np.linalg.norm(np.asarray(x, dtype=np.float64).ravel()))


def l2_norm(x) -> float:
    """Euclidean norm of the flattened array (alias of the Frobenius norm)."""
    return frobenius_norm(x)


def mse(a, b) -> float:
    """Mean of squared entrywise differences."""
    aa = np.asarray(a, dtype=np.float64)
    bb = np.asarray(b, dtype=np.float64)
    if aa.shape != bb.shape:
        raise ValueError(f"shape mismatch: {aa.shape} vs {bb.shape}")
    return float(np.mean((aa - bb) ** 2))
