"""Pure-Python versions of the compiled kernels in ``_ckernels.pyx``.

Same loop order and arithmetic, so results are bit-identical to the compiled
path. Used when the extension is not built or ``LATENT_STEER_PURE=1``.
"""
from __future__ import annotations

import math

import numpy as np


def _popcount(x: int) -> int:
    return bin(x).count("1")


def tanimoto_rows(fps: np.ndarray, ref: np.ndarray) -> np.ndarray:
    fps = np.ascontiguousarray(fps, dtype=np.uint64)
    ref = np.ascontiguousarray(ref, dtype=np.uint64)
    if ref.shape[0] != fps.shape[1]:
        raise ValueError("fingerprint width mismatch")
    ref_words = [int(w) for w in ref]
    out = np.empty(fps.shape[0], dtype=np.float64)
    for r, row in enumerate(fps.tolist()):
        inter = union = 0
        for x, y in zip(row, ref_words):
            inter += _popcount(x & y)
            union += _popcount(x | y)
        out[r] = 1.0 if union == 0 else inter / union
    return out


def tanimoto_pairs(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a, dtype=np.uint64)
    b = np.ascontiguousarray(b, dtype=np.uint64)
    if a.shape != b.shape:
        raise ValueError("fingerprint shape mismatch")
    out = np.empty(a.shape[0], dtype=np.float64)
    for r, (ra, rb) in enumerate(zip(a.tolist(), b.tolist())):
        inter = union = 0
        for x, y in zip(ra, rb):
            inter += _popcount(x & y)
            union += _popcount(x | y)
        out[r] = 1.0 if union == 0 else inter / union
    return out


def smr_rows(values: np.ndarray, gamma: int, tau: float) -> np.ndarray:
    values = np.ascontiguousarray(values, dtype=np.float64)
    m, length = values.shape
    out = np.zeros(m, dtype=np.int64)
    for r, row in enumerate(values.tolist()):
        srt = sorted(row)
        distinct = 1 if length > 0 else 0
        for k in range(1, length):
            if srt[k] != srt[k - 1]:
                distinct += 1
        if distinct < gamma:
            continue
        if length <= 1:
            out[r] = 1
            continue
        bad = 0
        for k in range(length - 1):
            if row[k + 1] < row[k] - 1e-12:
                bad += 1
        if bad / (length - 1) <= tau:
            out[r] = 1
    return out


def joint_histogram(xb: np.ndarray, yb: np.ndarray, nx: int, ny: int) -> np.ndarray:
    if len(xb) != len(yb):
        raise ValueError("length mismatch")
    out = np.zeros((nx, ny), dtype=np.int64)
    for x, y in zip(np.asarray(xb).tolist(), np.asarray(yb).tolist()):
        if not (0 <= x < nx and 0 <= y < ny):
            raise ValueError("bin index out of range")
        out[x, y] += 1
    return out


def jacobi_eigh(a_in, tol: float = 1e-15, max_sweeps: int = 64):
    a_np = np.array(a_in, dtype=np.float64, order="C", copy=True)
    if a_np.ndim != 2 or a_np.shape[0] != a_np.shape[1]:
        raise ValueError("jacobi_eigh expects a square matrix")
    n = a_np.shape[0]
    a = a_np.tolist()
    v = np.eye(n).tolist()
    total = 0.0
    for p in range(n):
        for q in range(n):
            total += a[p][q] * a[p][q]
    for _ in range(max_sweeps):
        off = 0.0
        for p in range(n):
            for q in range(p + 1, n):
                off += a[p][q] * a[p][q]
        if off <= tol * tol * total or off == 0.0:
            return np.array([a[k][k] for k in range(n)]), np.array(v, dtype=np.float64).reshape(n, n)
        for p in range(n - 1):
            for q in range(p + 1, n):
                if a[p][q] == 0.0:
                    continue
                theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q])
                if theta >= 0:
                    t = 1.0 / (theta + math.sqrt(theta * theta + 1.0))
                else:
                    t = -1.0 / (-theta + math.sqrt(theta * theta + 1.0))
                c = 1.0 / math.sqrt(t * t + 1.0)
                s = t * c
                for row in a:
                    x, y = row[p], row[q]
                    row[p] = c * x - s * y
                    row[q] = s * x + c * y
                ap, aq = a[p], a[q]
                for k in range(n):
                    x, y = ap[k], aq[k]
                    ap[k] = c * x - s * y
                    aq[k] = s * x + c * y
                for row in v:
                    x, y = row[p], row[q]
                    row[p] = c * x - s * y
                    row[q] = s * x + c * y
    raise ArithmeticError("Jacobi iteration did not converge")
