"""Brute-force reference implementations used only by the test suite."""

from functools import reduce

import numpy as np

X = np.array([[0, 1], [1, 0]])
N = np.array([[0, 0], [0, 1]])
I2 = np.eye(2, dtype=int)


def site_op(op, i, L):
    """Single-site operator; site i is bit i, so site L-1 is the leftmost factor."""
    return reduce(np.kron, [op if j == i else I2 for j in reversed(range(L))])


def dense_hamiltonian(spec):
    """Kronecker-product construction of the Hamiltonian, one product per term."""
    L = spec.L
    H = np.zeros((1 << L, 1 << L), dtype=int)
    for f, fam in enumerate(spec.families):
        for i in range(L):
            if not fam.admits(i):
                continue
            targets = [i + c.offset for c in fam.controls]
            out_of_range = any(not 0 <= j < L for j in targets)
            if out_of_range and spec.bc == "open" and (f, i) not in spec.wraps:
                continue
            op = site_op(X, i, L)
            for c, j in zip(fam.controls, targets):
                proj = N if c.polarity == "occupied" else I2 - N
                op = op @ site_op(proj, j % L, L)
            H += fam.sign * op
    return H


def sector_by_bfs(H, seed):
    """Connected component of ``seed`` in the graph of a dense matrix."""
    seen = {seed}
    frontier = [seed]
    while frontier:
        nxt = []
        for s in frontier:
            for u in np.flatnonzero(H[:, s]):
                if int(u) not in seen:
                    seen.add(int(u))
                    nxt.append(int(u))
        frontier = nxt
    return sorted(seen)


def nullity(M):
    """Dimension of the kernel by SVD, for small well-conditioned integer matrices."""
    if M.size == 0:
        return M.shape[1]
    s = np.linalg.svd(np.asarray(M, dtype=float), compute_uv=False)
    return M.shape[1] - int(np.sum(s > 1e-9 * max(1.0, s.max())))


def propagate_expm(H, psi0, times):
    """psi(t) by scipy's dense matrix exponential."""
    from scipy.linalg import expm

    return np.array([expm(-1j * H * t) @ psi0 for t in times]).T
