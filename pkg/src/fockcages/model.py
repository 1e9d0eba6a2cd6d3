"""Constrained spin-flip Hamiltonians on bitstring bases.

A model is a list of term families. Each family contributes, for every flip
site ``i`` admitted by its site filter, the operator ``sign * X_i * prod(P)``
where the projectors test the occupation of sites ``i + offset``. Basis
states are plain integers: bit ``i`` is the occupation of site ``i``.

All amplitudes are integers in units of the coupling ``J``.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, Mapping

import numpy as np
import scipy.sparse as sp

OCCUPIED = "occupied"
EMPTY = "empty"
SITE_FILTERS = ("all", "even", "odd")
BOUNDARIES = ("open", "periodic")


class ModelError(ValueError):
    """Invalid model definition or mismatched basis state."""


def bitstring(s: int, L: int) -> str:
    """Render ``s`` most-significant site first, so ``bitstring(1, 4) == '0001'``."""
    return format(s, f"0{L}b")


def parse_bitstring(text: str) -> tuple[int, int]:
    """Inverse of :func:`bitstring`; returns ``(state, L)``."""
    text = text.strip()
    if not text or set(text) - {"0", "1"}:
        raise ModelError(f"not a bitstring: {text!r}")
    return int(text, 2), len(text)


def popcount(s: int) -> int:
    return bin(s).count("1")


def parity(s: int) -> int:
    """0 for even occupation number (sublattice A), 1 for odd (sublattice B)."""
    return popcount(s) & 1


@dataclass(frozen=True)
class BasisState:
    bits: int
    L: int

    def __post_init__(self):
        if not 0 <= self.bits < (1 << self.L):
            raise ModelError(f"state {self.bits} does not fit in {self.L} sites")

    def __str__(self):
        return bitstring(self.bits, self.L)

    @classmethod
    def single(cls, site: int, L: int) -> "BasisState":
        return cls(1 << site, L)


@dataclass(frozen=True)
class ProjectorControl:
    offset: int
    polarity: str = OCCUPIED

    def __post_init__(self):
        if self.offset == 0:
            raise ModelError("a control cannot sit on the flip site")
        if self.polarity not in (OCCUPIED, EMPTY):
            raise ModelError(f"unknown polarity {self.polarity!r}")


@dataclass(frozen=True)
class TermFamily:
    controls: tuple[ProjectorControl, ...]
    sign: int = 1
    sites: str = "all"

    def __post_init__(self):
        object.__setattr__(self, "controls", tuple(self.controls))
        if self.sign not in (1, -1):
            raise ModelError(f"sign must be +1 or -1, got {self.sign}")
        if self.sites not in SITE_FILTERS:
            raise ModelError(f"unknown site filter {self.sites!r}")

    def admits(self, i: int) -> bool:
        if self.sites == "even":
            return i % 2 == 0
        if self.sites == "odd":
            return i % 2 == 1
        return True

    @property
    def radius(self) -> int:
        return max((abs(c.offset) for c in self.controls), default=0)


def family(*offsets: int, sign: int = 1, sites: str = "all") -> TermFamily:
    """Shorthand for a family whose controls all require occupation."""
    return TermFamily(tuple(ProjectorControl(o) for o in offsets), sign, sites)


@dataclass(frozen=True)
class Term:
    """One compiled product term: flip ``flip`` when ``s & occ == occ`` and ``s & emp == 0``."""

    flip: int
    occ: int
    emp: int
    sign: int


@dataclass(frozen=True)
class ModelSpec:
    """Immutable Hamiltonian definition.

    ``wraps`` lists ``(family_index, flip_site)`` terms that are kept under open
    boundaries even though a control leaves the chain; their offsets are then
    taken modulo ``L``. Periodic models ignore it.
    """

    L: int
    families: tuple[TermFamily, ...]
    bc: str = "open"
    coupling: float = 1.0
    name: str = "custom"
    wraps: frozenset = field(default_factory=frozenset)

    def __post_init__(self):
        object.__setattr__(self, "families", tuple(self.families))
        object.__setattr__(self, "wraps", frozenset(tuple(w) for w in self.wraps))
        if self.L < 2:
            raise ModelError("need at least two sites")
        if self.bc not in BOUNDARIES:
            raise ModelError(f"unknown boundary condition {self.bc!r}")
        for fam in self.families:
            if fam.radius >= self.L:
                raise ModelError(f"control offset {fam.radius} does not fit in L={self.L}")
        for f, i in self.wraps:
            if not (0 <= f < len(self.families) and 0 <= i < self.L):
                raise ModelError(f"wrap entry {(f, i)} out of range")

    @cached_property
    def terms(self) -> tuple[Term, ...]:
        """Product terms surviving the boundary condition, in (family, site) order."""
        out = []
        L = self.L
        for f, fam in enumerate(self.families):
            for i in range(L):
                if not fam.admits(i):
                    continue
                wrap = self.bc == "periodic" or (f, i) in self.wraps
                occ = emp = 0
                ok = True
                for c in fam.controls:
                    j = i + c.offset
                    if not 0 <= j < L:
                        if not wrap:
                            ok = False
                            break
                        j %= L
                    if c.polarity == OCCUPIED:
                        occ |= 1 << j
                    else:
                        emp |= 1 << j
                if ok:
                    out.append(Term(1 << i, occ, emp, fam.sign))
        return tuple(out)

    @property
    def nominal_terms(self) -> int:
        """Number of (family, site) pairs before boundary dropping."""
        return sum(sum(fam.admits(i) for i in range(self.L)) for fam in self.families)

    def with_size(self, L: int) -> "ModelSpec":
        """Same model at another size (named presets are rebuilt; wraps are dropped)."""
        if self.name in PRESETS:
            return PRESETS[self.name](L, self.bc)
        return ModelSpec(L, self.families, self.bc, self.coupling, self.name)

    def to_dict(self) -> dict:
        d = {
            "name": self.name,
            "L": self.L,
            "bc": self.bc,
            "coupling": self.coupling,
            "families": [
                {
                    "controls": [{"offset": c.offset, "polarity": c.polarity} for c in fam.controls],
                    "sign": fam.sign,
                    "sites": fam.sites,
                }
                for fam in self.families
            ],
        }
        if self.wraps:
            d["wraps"] = sorted([list(w) for w in self.wraps])
        return d

    def content_hash(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()


def spec_from_dict(d: Mapping) -> ModelSpec:
    fams = tuple(
        TermFamily(
            tuple(ProjectorControl(int(c["offset"]), c.get("polarity", OCCUPIED)) for c in fam["controls"]),
            int(fam.get("sign", 1)),
            fam.get("sites", "all"),
        )
        for fam in d["families"]
    )
    return ModelSpec(
        L=int(d["L"]),
        families=fams,
        bc=d.get("bc", "open"),
        coupling=float(d.get("coupling", 1.0)),
        name=d.get("name", "custom"),
        wraps=frozenset(tuple(w) for w in d.get("wraps", ())),
    )


# --- presets -----------------------------------------------------------------

def single_cage_wraps(L: int) -> frozenset:
    """Boundary bond kept by the single-cage preset under open boundaries.

    Dropping every out-of-range term leaves the chain reflection-antisymmetric
    (``I H I = -H``), which forces ``2**ceil(L/2) - 1`` zero modes in the
    sector. Keeping the single next-nearest bond between sites 1 and ``L-1``
    removes that antisymmetry while leaving the uniform cage exact.
    """
    return frozenset({(2, 1), (3, L - 1)})


def build_single_cage(L: int, bc: str = "open", break_inversion: bool = True) -> ModelSpec:
    """H = sum_i X_i (P_{i-1} - P_{i+1}) + X_i (P_{i-2} - P_{i+2})."""
    if L < 4:
        raise ModelError("single-cage model needs L >= 4")
    fams = (family(-1, sign=1), family(1, sign=-1), family(-2, sign=1), family(2, sign=-1))
    wraps = single_cage_wraps(L) if (bc == "open" and break_inversion) else frozenset()
    return ModelSpec(L, fams, bc, name="single_cage", wraps=wraps)


def build_multi_cage(L: int, bc: str = "periodic") -> ModelSpec:
    """H = sum_i X_i (P_{i-1} + P_{i+1})."""
    if L < 3:
        raise ModelError("multi-cage model needs L >= 3")
    return ModelSpec(L, (family(-1), family(1)), bc, name="multi_cage")


def build_o1_cage(L: int, bc: str = "periodic") -> ModelSpec:
    """Even-site nearest-neighbour flips plus three-site-controlled flips everywhere."""
    if bc == "open" and L < 7:
        raise ModelError("O(1)-cage model with open boundaries needs L >= 7")
    if bc == "periodic" and L < 4:
        raise ModelError("O(1)-cage model with periodic boundaries needs L >= 4")
    fams = (
        family(-1, sites="even"),
        family(1, sites="even"),
        family(-1, -2, -3),
        family(1, 2, 3),
    )
    return ModelSpec(L, fams, bc, name="o1_cage")


PRESETS = {
    "single_cage": build_single_cage,
    "multi_cage": build_multi_cage,
    "o1_cage": build_o1_cage,
}

DEFAULT_BC = {"single_cage": "open", "multi_cage": "periodic", "o1_cage": "periodic"}


def preset(name: str, L: int, bc: str | None = None) -> ModelSpec:
    try:
        builder = PRESETS[name]
    except KeyError:
        raise ModelError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}") from None
    return builder(L, bc or DEFAULT_BC[name])


# --- application -------------------------------------------------------------

def _state_bits(spec: ModelSpec, s) -> int:
    if isinstance(s, BasisState):
        if s.L != spec.L:
            raise ModelError(f"state has L={s.L}, model has L={spec.L}")
        return s.bits
    s = int(s)
    if not 0 <= s < (1 << spec.L):
        raise ModelError(f"state {s} does not fit in L={spec.L}")
    return s


def apply_terms(spec: ModelSpec, s) -> dict[int, int]:
    """H|s> as a sparse map ``{state: integer amplitude}`` with zero entries removed."""
    s = _state_bits(spec, s)
    out: dict[int, int] = {}
    for t in spec.terms:
        if s & t.occ == t.occ and not s & t.emp:
            u = s ^ t.flip
            out[u] = out.get(u, 0) + t.sign
    return {u: a for u, a in out.items() if a}


def apply_to_vector(spec: ModelSpec, amplitudes: Mapping[int, int]) -> dict[int, int]:
    """H applied to a sparse integer vector."""
    out: dict[int, int] = {}
    for s, a in amplitudes.items():
        if not a:
            continue
        for u, h in apply_terms(spec, s).items():
            out[u] = out.get(u, 0) + a * h
    return {u: a for u, a in out.items() if a}


def matrix_elements(spec: ModelSpec, states: Iterable[int]) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Vectorized COO triplets ``(target, source, amplitude)`` over ``states``.

    Duplicate pairs are not summed; pass through ``scipy.sparse`` to combine.
    """
    states = np.asarray(list(states) if not isinstance(states, np.ndarray) else states, dtype=np.int64)
    rows, cols, vals = [], [], []
    for t in spec.terms:
        hit = ((states & t.occ) == t.occ) & ((states & t.emp) == 0)
        src = states[hit]
        rows.append(src ^ t.flip)
        cols.append(src)
        vals.append(np.full(src.size, t.sign, dtype=np.int64))
    if not rows:
        e = np.zeros(0, dtype=np.int64)
        return e, e, e
    return np.concatenate(rows), np.concatenate(cols), np.concatenate(vals)


def full_matrix(spec: ModelSpec) -> sp.csr_matrix:
    """Integer Hamiltonian on the whole ``2**L`` space, rows/cols indexed by state."""
    n = 1 << spec.L
    r, c, v = matrix_elements(spec, np.arange(n, dtype=np.int64))
    m = sp.coo_matrix((v, (r, c)), shape=(n, n), dtype=np.int64).tocsr()
    m.eliminate_zeros()
    return m


def hermiticity_check(spec: ModelSpec, L_max: int = 12) -> bool:
    """True iff the assembled integer matrix is symmetric."""
    if spec.L > L_max:
        raise ModelError(f"L={spec.L} exceeds L_max={L_max}")
    m = full_matrix(spec)
    return (m != m.T).nnz == 0
