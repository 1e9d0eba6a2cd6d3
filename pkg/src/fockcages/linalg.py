"""Exact rank of integer matrices.

Two routes: fraction-free (Bareiss) elimination in integer arithmetic, and
dense Gaussian elimination modulo a prime below 2**31. The modular rank never
exceeds the rational rank, and equals it unless the prime divides every
maximal nonvanishing minor.
"""

from __future__ import annotations

import random

import numpy as np
import scipy.sparse as sp

_INT64_SAFE = 1 << 31


def is_prime(n: int) -> bool:
    """Deterministic Miller-Rabin for n < 3.3e24."""
    if n < 2:
        return False
    small = (2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41)
    for p in small:
        if n % p == 0:
            return n == p
    d, r = n - 1, 0
    while d % 2 == 0:
        d //= 2
        r += 1
    for a in small:
        x = pow(a, d, n)
        if x in (1, n - 1):
            continue
        for _ in range(r - 1):
            x = x * x % n
            if x == n - 1:
                break
        else:
            return False
    return True


def random_prime(rng: random.Random, lo: int = (1 << 30) + 1, hi: int = (1 << 31) - 1) -> int:
    while True:
        p = rng.randrange(lo | 1, hi, 2)
        if is_prime(p):
            return p


def _as_dense_int(M) -> np.ndarray:
    if sp.issparse(M):
        M = M.toarray()
    return np.asarray(M, dtype=np.int64)


def _drop_empty(A: np.ndarray) -> np.ndarray:
    if A.size == 0:
        return A
    A = A[np.any(A != 0, axis=1)]
    if A.size == 0:
        return A
    return A[:, np.any(A != 0, axis=0)]


def _bareiss_int64(A: np.ndarray) -> int | None:
    """Vectorized Bareiss; returns None as soon as an entry risks int64 overflow."""
    A = A.copy()
    m, n = A.shape
    rank = 0
    prev = 1
    for col in range(n):
        if rank == m:
            break
        nz = np.flatnonzero(A[rank:, col])
        if nz.size == 0:
            continue
        piv = rank + nz[0]
        if piv != rank:
            A[[rank, piv]] = A[[piv, rank]]
        p = A[rank, col]
        below = A[rank + 1:, col:]
        if np.abs(below).max(initial=0) >= _INT64_SAFE or abs(p) >= _INT64_SAFE or np.abs(A[rank, col:]).max() >= _INT64_SAFE:
            return None
        # det-ratio update: (p * a_ij - a_ic * a_rj) / prev is exact
        update = p * below - np.outer(below[:, 0], A[rank, col:])
        A[rank + 1:, col:] = update // prev
        prev = p
        rank += 1
    return rank


def _bareiss_object(rows: list[list[int]]) -> int:
    m = len(rows)
    n = len(rows[0]) if m else 0
    A = [list(r) for r in rows]
    rank, prev = 0, 1
    for col in range(n):
        if rank == m:
            break
        piv = next((i for i in range(rank, m) if A[i][col]), None)
        if piv is None:
            continue
        A[rank], A[piv] = A[piv], A[rank]
        p = A[rank][col]
        pr = A[rank]
        for i in range(rank + 1, m):
            ai = A[i]
            f = ai[col]
            for j in range(col, n):
                ai[j] = (p * ai[j] - f * pr[j]) // prev
        prev = p
        rank += 1
    return rank


def bareiss_rank(M) -> int:
    """Exact rank by fraction-free elimination.

    Runs on int64 while entries stay below 2**31 and restarts with Python
    integers otherwise.
    """
    A = _drop_empty(_as_dense_int(M))
    if A.size == 0:
        return 0
    if A.shape[0] > A.shape[1]:
        A = A.T.copy()
    r = _bareiss_int64(A)
    if r is not None:
        return r
    return _bareiss_object(A.tolist())


def modular_rank(M, p: int) -> int:
    """Rank over GF(p) by dense elimination; requires p < 2**31."""
    if p >= _INT64_SAFE:
        raise ValueError("prime must stay below 2**31 for int64 products")
    A = _drop_empty(_as_dense_int(M))
    if A.size == 0:
        return 0
    if A.shape[0] > A.shape[1]:
        A = A.T.copy()
    A %= p
    m, n = A.shape
    rank = 0
    for col in range(n):
        if rank == m:
            break
        nz = np.flatnonzero(A[rank:, col])
        if nz.size == 0:
            continue
        piv = rank + nz[0]
        if piv != rank:
            A[[rank, piv]] = A[[piv, rank]]
        inv = pow(int(A[rank, col]), -1, p)
        A[rank, col:] = A[rank, col:] * inv % p
        hit = rank + 1 + np.flatnonzero(A[rank + 1:, col])
        if hit.size:
            f = A[hit, col][:, None]
            A[hit, col:] = (A[hit, col:] - f * A[rank, col:]) % p
        rank += 1
    return rank
