"""Zero-mode counting and ternary cage searches on the biadjacency matrix.

A zero mode supported on sublattice A is a vector ``psi`` over the A nodes with
``M @ psi == 0``: every B row of the biadjacency matrix must sum to zero. Both
searches look for such vectors with entries restricted to {-1, 0, +1}.
"""

from __future__ import annotations

import json
import random
import time
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np
import scipy.sparse as sp

from .fockgraph import BiadjacencyMatrix
from .linalg import bareiss_rank, modular_rank, random_prime
from .model import ModelError, ModelSpec, apply_to_vector, bitstring


# --- counting ----------------------------------------------------------------

@dataclass(frozen=True)
class KernelReport:
    n_a: int
    n_b: int
    rank: int
    method: str

    @property
    def dim_ker_M(self) -> int:
        """Zero modes living on A."""
        return self.n_a - self.rank

    @property
    def dim_ker_Mdagger(self) -> int:
        """Zero modes living on B."""
        return self.n_b - self.rank

    @property
    def dim_ker_H(self) -> int:
        return self.dim_ker_M + self.dim_ker_Mdagger

    @property
    def bound(self) -> int:
        return abs(self.n_a - self.n_b)

    def to_dict(self) -> dict:
        return {
            "n_A": self.n_a,
            "n_B": self.n_b,
            "rank": self.rank,
            "dim_ker_M": self.dim_ker_M,
            "dim_ker_Mdagger": self.dim_ker_Mdagger,
            "dim_ker_H": self.dim_ker_H,
            "bound": self.bound,
            "method": self.method,
        }


def kernel_dimensions(bi: BiadjacencyMatrix, rng_seed: int = 0, exact_limit: int = 400) -> KernelReport:
    """Exact zero-mode count of ``H = (0 M^T; M 0)``.

    A modular rank over a random prime above 2**30 runs first. It is a lower
    bound on the rational rank, so a full-rank result is already exact.
    Otherwise matrices whose smaller side is at most ``exact_limit`` are
    re-ranked by fraction-free elimination; larger ones are cross-checked with
    a second prime and escalated to exact elimination if the two disagree.
    """
    n_b, n_a = bi.shape
    if min(n_a, n_b) == 0 or bi.M.nnz == 0:
        return KernelReport(n_a, n_b, 0, "exact-integer")
    rng = random.Random(rng_seed)
    p1 = random_prime(rng)
    r1 = modular_rank(bi.M, p1)
    if r1 == min(n_a, n_b):
        return KernelReport(n_a, n_b, r1, "exact-integer")
    if min(n_a, n_b) <= exact_limit:
        return KernelReport(n_a, n_b, bareiss_rank(bi.M), "exact-integer")
    p2 = random_prime(rng)
    while p2 == p1:
        p2 = random_prime(rng)
    r2 = modular_rank(bi.M, p2)
    if r1 != r2:
        return KernelReport(n_a, n_b, bareiss_rank(bi.M), "exact-integer")
    return KernelReport(n_a, n_b, r1, "modular-prime")


# --- ternary vectors ---------------------------------------------------------

@dataclass
class TernaryVector:
    sublattice: str
    nodes: np.ndarray
    values: np.ndarray
    meta: dict = field(default_factory=dict)

    @property
    def support(self) -> list[int]:
        return [int(s) for s in self.nodes[self.values != 0]]

    def amplitudes(self) -> dict[int, int]:
        return {int(s): int(v) for s, v in zip(self.nodes, self.values) if v}

    def key(self) -> tuple:
        return tuple(sorted(self.amplitudes().items()))


class SearchResult(list):
    """List of solutions with a ``complete`` flag (False when a cap or timeout hit)."""

    def __init__(self, solutions=(), complete: bool = True, nodes_visited: int = 0):
        super().__init__(solutions)
        self.complete = complete
        self.nodes_visited = nodes_visited


def _constraints(bi: BiadjacencyMatrix, sublattice: str, signed: bool):
    """Constraint matrix with one column per target node and one row per checked node."""
    if sublattice == "A":
        C, targets = bi.M, bi.cols
    elif sublattice == "B":
        C, targets = bi.M.T.tocsr(), bi.rows
    else:
        raise ValueError(f"sublattice must be 'A' or 'B', got {sublattice!r}")
    C = sp.csr_matrix(C, dtype=np.int64)
    if not signed:
        C = C.copy()
        C.data = np.ones_like(C.data)
    return C, targets


def default_node_order(C: sp.csr_matrix) -> np.ndarray:
    """Columns by ascending degree, ties by index (BFS order)."""
    deg = np.diff(C.tocsc().indptr)
    return np.lexsort((np.arange(C.shape[1]), deg))


def backtracking_search(
    bi: BiadjacencyMatrix,
    sublattice: str = "A",
    max_solutions: int | None = None,
    max_support: int | None = None,
    node_order: Sequence[int] | None = None,
    signed: bool = True,
    timeout: float | None = None,
) -> SearchResult:
    """Enumerate ternary zero modes column by column with forward checking.

    Values are tried in the order 0, +1, -1 and the first nonzero entry is
    fixed to +1. After each assignment every touched row is checked: a row
    whose unassigned columns can no longer cancel its partial sum prunes the
    branch, which includes the plain "all neighbours assigned and sum != 0"
    test. With ``max_support`` the search also prunes once the remaining budget
    is exhausted while some row is still charged.
    """
    C, targets = _constraints(bi, sublattice, signed)
    n_rows, n_cols = C.shape
    order = np.asarray(default_node_order(C) if node_order is None else node_order, dtype=np.int64)
    if sorted(order.tolist()) != list(range(n_cols)):
        raise ValueError("node_order must be a permutation of the target nodes")
    budget = n_cols if max_support is None else max_support
    csc = C.tocsc()
    cols = [
        list(zip(csc.indices[csc.indptr[c]:csc.indptr[c + 1]].tolist(), csc.data[csc.indptr[c]:csc.indptr[c + 1]].tolist()))
        for c in order.tolist()
    ]
    capacity = np.asarray(abs(C).sum(axis=1)).ravel().astype(np.int64).tolist()
    partial = [0] * n_rows
    values = np.zeros(n_cols, dtype=np.int8)
    assigned = [0] * n_cols
    charged = 0
    support = 0

    deadline = None if timeout is None else time.monotonic() + timeout
    out = SearchResult()
    visited = 0

    choices = (0, 1, -1)
    depth = 0
    tried = [-1] * (n_cols + 1)
    applied = [False] * (n_cols + 1)

    def undo(k):
        nonlocal charged, support
        v = assigned[k]
        for r, m in cols[k]:
            old = partial[r]
            new = old - v * m
            partial[r] = new
            capacity[r] += abs(m)
            charged += (new != 0) - (old != 0)
        if v:
            support -= 1
        assigned[k] = 0

    def apply(k, v) -> bool:
        nonlocal charged, support
        ok = True
        for r, m in cols[k]:
            old = partial[r]
            new = old + v * m
            partial[r] = new
            cap = capacity[r] - abs(m)
            capacity[r] = cap
            charged += (new != 0) - (old != 0)
            if abs(new) > cap:
                ok = False
        assigned[k] = v
        if v:
            support += 1
        if charged and support >= budget:
            ok = False
        return ok

    while depth >= 0:
        if depth == n_cols:
            if support:
                values[order] = assigned
                out.append(TernaryVector(sublattice, targets, values.copy(), {"signed": signed}))
                if max_solutions is not None and len(out) >= max_solutions:
                    out.complete = False
                    break
            depth -= 1
            continue
        if applied[depth]:
            undo(depth)
            applied[depth] = False
        tried[depth] += 1
        if tried[depth] >= 3:
            tried[depth] = -1
            depth -= 1
            continue
        v = choices[tried[depth]]
        if v == -1 and support == 0:
            continue  # gauge: first nonzero entry is +1
        if v and support >= budget:
            continue
        visited += 1
        if deadline is not None and visited % 4096 == 0 and time.monotonic() > deadline:
            out.complete = False
            break
        ok = apply(depth, v)
        applied[depth] = True
        if ok:
            depth += 1
    out.nodes_visited = visited
    return out


def charge_flow_search(
    bi: BiadjacencyMatrix,
    seed_node: int | None = None,
    rng_seed: int = 0,
    max_steps: int = 200,
    restarts: int = 100,
    sublattice: str = "A",
    max_support: int | None = None,
) -> TernaryVector | None:
    """Grow a zero mode outward from a seed row by local charge neutralization.

    Two neighbours of the seed receive opposite charges. Charged rows are then
    neutralized one at a time by charging one of their unassigned neighbours;
    a row that cannot be fixed undoes the most recent assignment once before
    the attempt is abandoned. Every restart after the first uses a random seed.
    Returns a verified vector, or None once ``restarts`` attempts are spent.
    """
    C, targets = _constraints(bi, sublattice, True)
    C = C.tocsr()
    CT = C.T.tocsr()
    n_rows, n_cols = C.shape
    if n_rows == 0 or n_cols == 0:
        return None
    rng = random.Random(rng_seed)
    checked = bi.rows if sublattice == "A" else bi.cols
    seed_row = None
    if seed_node is not None:
        hits = np.flatnonzero(checked == seed_node)
        if hits.size == 0:
            raise ValueError(f"seed {seed_node} is not on the opposite sublattice")
        seed_row = int(hits[0])
    budget = max_support if max_support is not None else n_cols

    def row(r):
        lo, hi = C.indptr[r], C.indptr[r + 1]
        return C.indices[lo:hi], C.data[lo:hi]

    def col(c):
        lo, hi = CT.indptr[c], CT.indptr[c + 1]
        return CT.indices[lo:hi], CT.data[lo:hi]

    for attempt in range(restarts):
        r0 = seed_row if (attempt == 0 and seed_row is not None) else rng.randrange(n_rows)
        nbrs, amps = row(r0)
        if len(nbrs) < 2:
            continue
        psi: dict[int, int] = {}
        charge = np.zeros(n_rows, dtype=np.int64)
        history: list[int] = []

        def assign(c, v):
            psi[c] = v
            rs, ms = col(c)
            charge[rs] += v * ms
            history.append(c)

        def unassign(c):
            v = psi.pop(c)
            rs, ms = col(c)
            charge[rs] -= v * ms
            history.remove(c)

        i, j = rng.sample(range(len(nbrs)), 2)
        a1, a2 = int(nbrs[i]), int(nbrs[j])
        assign(a1, 1)
        # opposite charge as seen by the seed row
        assign(a2, -1 if amps[i] * amps[j] > 0 else 1)
        banned: set[tuple[int, int]] = set()
        backtracked = False
        for _ in range(max_steps):
            hot = np.flatnonzero(charge)
            if hot.size == 0:
                values = np.zeros(n_cols, dtype=np.int8)
                for c, v in psi.items():
                    values[c] = v
                first = values[np.flatnonzero(values)[0]]
                values = values * first
                vec = TernaryVector(sublattice, targets, values, {"restarts": attempt, "seed": int(checked[r0])})
                if not np.any(C @ values.astype(np.int64)):
                    return vec
                break
            if len(psi) >= budget:
                break
            r = int(hot[0]) if rng.random() < 0.5 else int(rng.choice(hot.tolist()))
            q = int(charge[r])
            cand_c, cand_m = row(r)
            options = [(int(c), int(m)) for c, m in zip(cand_c, cand_m) if int(c) not in psi and (r, int(c)) not in banned]
            exact = [(c, m) for c, m in options if abs(m) == abs(q)]
            smaller = [(c, m) for c, m in options if abs(m) < abs(q)]
            pool = exact or smaller or options
            if not pool:
                if backtracked or len(history) <= 2:
                    break
                last = history[-1]
                unassign(last)
                banned.add((r, last))
                backtracked = True
                continue
            c, m = rng.choice(pool)
            assign(c, -1 if q * m > 0 else 1)
            backtracked = False
    return None


# --- verification ------------------------------------------------------------

@dataclass(frozen=True)
class ZeroModeCheck:
    ok: bool
    residual: dict

    def __bool__(self):
        return self.ok

    def violations(self, L: int) -> list[str]:
        return [f"{bitstring(s, L)}:{a:+d}" for s, a in sorted(self.residual.items())]


def verify_zero_mode(spec: ModelSpec, state) -> ZeroModeCheck:
    """Apply H in integer arithmetic; exact zero residual means a zero mode."""
    amps = state
    if not isinstance(state, Mapping):
        amps = state.amplitudes() if callable(state.amplitudes) else state.amplitudes
    L = getattr(state, "L", spec.L)
    if L != spec.L:
        raise ModelError(f"state has L={L}, model has L={spec.L}")
    for s, a in amps.items():
        if not 0 <= s < (1 << spec.L):
            raise ModelError(f"state {s} does not fit in L={spec.L}")
        if int(a) != a:
            raise ModelError("amplitudes must be integers")
    res = apply_to_vector(spec, {int(s): int(a) for s, a in amps.items()})
    return ZeroModeCheck(not res, res)


def solution_record(spec: ModelSpec, vec: TernaryVector) -> dict:
    amps = vec.amplitudes()
    return {
        "sublattice": vec.sublattice,
        "entries": [[bitstring(s, spec.L), v] for s, v in sorted(amps.items())],
        "verified": verify_zero_mode(spec, amps).ok,
        "model": spec.name,
        "L": spec.L,
        "bc": spec.bc,
    }


def write_solutions(spec: ModelSpec, vectors, path) -> None:
    with open(path, "w") as fh:
        json.dump([solution_record(spec, v) for v in vectors], fh, indent=1)
        fh.write("\n")


def read_solution(record: Mapping) -> dict[int, int]:
    return {int(b, 2): int(v) for b, v in record["entries"]}
