"""Closed-form Fock-space cages and their composition.

Amplitudes are unnormalized integers; ``norm_squared`` carries the
normalization so that the normalized state is ``amplitudes / sqrt(norm_squared)``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from functools import reduce
from itertools import product
from math import gcd, isqrt

import numpy as np

from .model import ModelError, bitstring, build_multi_cage, build_o1_cage, build_single_cage

O1_RADIUS = 3


class CageError(ValueError):
    pass


@dataclass(frozen=True)
class CageState:
    amplitudes: dict
    L: int
    model: str
    family: str
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        amps = {int(s): int(a) for s, a in self.amplitudes.items() if a}
        if not amps:
            raise CageError("a cage needs non-empty support")
        if any(not 0 <= s < (1 << self.L) for s in amps):
            raise CageError(f"support state outside L={self.L}")
        object.__setattr__(self, "amplitudes", amps)

    @property
    def support(self) -> list[int]:
        return sorted(self.amplitudes)

    @property
    def norm_squared(self) -> int:
        return sum(a * a for a in self.amplitudes.values())

    @property
    def normalization(self) -> str:
        n = self.norm_squared
        r = isqrt(n)
        return f"1/{r}" if r * r == n else f"1/sqrt({n})"

    @property
    def content(self) -> int:
        """gcd of the amplitudes (1 for a primitive integer vector)."""
        return reduce(gcd, (abs(a) for a in self.amplitudes.values()))

    def spec(self):
        from .model import preset

        bc = "open" if self.model == "single_cage" else "periodic"
        return preset(self.model, self.L, bc)

    def vector(self, nodes: np.ndarray) -> np.ndarray:
        """Normalized amplitudes on an ordered node list."""
        index = {int(s): i for i, s in enumerate(nodes)}
        v = np.zeros(len(nodes))
        for s, a in self.amplitudes.items():
            if s not in index:
                raise CageError(f"{bitstring(s, self.L)} is not in the node list")
            v[index[s]] = a
        return v / np.sqrt(self.norm_squared)

    def to_record(self) -> dict:
        from .zeromodes import verify_zero_mode

        spec = self.spec()
        return {
            "sublattice": "A" if bin(self.support[0]).count("1") % 2 == 0 else "B",
            "entries": [[bitstring(s, self.L), a] for s, a in sorted(self.amplitudes.items())],
            "verified": verify_zero_mode(spec, self.amplitudes).ok,
            "model": self.model,
            "L": self.L,
            "bc": spec.bc,
            "family": self.family,
        }


def fsc_single(L: int) -> CageState:
    """Uniform superposition of the L singly occupied bitstrings."""
    if L < 4:
        raise CageError("single-cage model needs L >= 4")
    return CageState({1 << i: 1 for i in range(L)}, L, "single_cage", "FSC")


def fsc_multi(L: int, family: int, variant: int = 0) -> CageState:
    """Closed-form cages of the nearest-neighbour multi-cage model (periodic).

    family 1: alternating single-particle states (even L).
    family 2: alternating adjacent pairs (even L).
    family 3: the full state, antipodal pairs and their complements; this
    combination cancels only for L = 6.

    ``variant=1`` would be the alternate sign pattern on the same support. No
    such second zero mode exists for any family, so it is rejected.
    """
    if family not in (1, 2, 3):
        raise CageError(f"unknown family {family}")
    if variant not in (0, 1):
        raise CageError(f"variant must be 0 or 1, got {variant}")
    if variant == 1:
        raise CageError(f"family {family} has no independent alternate-sign cage on its support")
    if L % 2:
        raise CageError(f"family {family} needs even L (the alternating signs frustrate on odd rings)")
    if family == 1:
        amps = {1 << i: (-1) ** i for i in range(L)}
    elif family == 2:
        amps = {(1 << i) | (1 << ((i + 1) % L)): (-1) ** i for i in range(L)}
    else:
        if L != 6:
            raise CageError("family 3 is a zero mode only for L = 6")
        amps = fsc3_literal(L)
    return CageState(amps, L, "multi_cage", f"FSC{family}")


def fsc3_literal(L: int) -> dict[int, int]:
    """Amplitudes of the family-3 expression at any even L (zero mode only at L=6)."""
    full = (1 << L) - 1
    h = L // 2
    amps = {full: 1}
    for i in range(h):
        pair = (1 << i) | (1 << (i + h))
        amps[pair] = amps.get(pair, 0) + 1
        amps[full - pair] = amps.get(full - pair, 0) - 1
    return {s: a for s, a in amps.items() if a}


def o1_valid_position(p: int) -> bool:
    """Leftmost pair site must be even (fixed by exhaustive annihilation checks)."""
    return p % 2 == 0


def fsc_o1(L: int, p: int) -> CageState:
    """Pair at (p, p+1) minus the pair shifted one site to (p+1, p+2)."""
    if L % 2 or L < 4:
        raise CageError("O(1) cages need even L >= 4 with periodic boundaries")
    if not 0 <= p < L:
        raise CageError(f"position {p} outside the chain")
    if not o1_valid_position(p):
        raise CageError(f"position {p} has the wrong sublattice parity; use an even site")
    a = (1 << p) | (1 << ((p + 1) % L))
    b = (1 << ((p + 1) % L)) | (1 << ((p + 2) % L))
    return CageState({a: 1, b: -1}, L, "o1_cage", "FSC_O1", {"p": p})


def _sites(state: int, L: int) -> set[int]:
    return {i for i in range(L) if state >> i & 1}


def footprint(cage: CageState) -> set[int]:
    """Sites touched by any support bitstring."""
    out: set[int] = set()
    for s in cage.amplitudes:
        out |= _sites(s, cage.L)
    return out


def _ring_dist(i: int, j: int, L: int) -> int:
    d = abs(i - j) % L
    return min(d, L - d)


def compose(cages, frozen_even_sites=(), radius: int = O1_RADIUS) -> CageState:
    """Product of spatially separated O(1) cages with frozen even-site particles.

    Every site of one cage must be more than ``radius`` sites from every site
    of the other cages and from every frozen particle.
    """
    cages = list(cages)
    frozen = sorted(set(frozen_even_sites))
    if not cages:
        raise CageError("composition needs at least one cage")
    L = cages[0].L
    if any(c.L != L for c in cages):
        raise CageError("cages have different sizes")
    if any(f % 2 or not 0 <= f < L for f in frozen):
        raise CageError("frozen particles must sit on even sites inside the chain")
    feet = [footprint(c) for c in cages]
    for i, fa in enumerate(feet):
        for fb in feet[i + 1:]:
            if any(_ring_dist(x, y, L) <= radius for x in fa for y in fb):
                raise CageError("cages overlap within the interaction radius")
        if any(_ring_dist(x, f, L) <= radius for x in fa for f in frozen):
            raise CageError("a frozen particle sits within the interaction radius of a cage")
    frozen_bits = sum(1 << f for f in frozen)
    amps: dict[int, int] = {}
    for combo in product(*(sorted(c.amplitudes.items()) for c in cages)):
        s = frozen_bits
        a = 1
        for state, amp in combo:
            s |= state
            a *= amp
        amps[s] = amps.get(s, 0) + a
    fam = "composite" if len(cages) > 1 or frozen else cages[0].family
    return CageState(amps, L, cages[0].model, fam, {"cages": [c.meta for c in cages], "frozen": frozen})


def compatible_configurations(L: int, radius: int = O1_RADIUS) -> list[tuple[tuple[int, ...], tuple[int, ...]]]:
    """All (cage positions, frozen sites) pairs accepted by :func:`compose`, with at least one cage."""
    positions = [p for p in range(0, L, 2)]
    out = []
    for mask in range(1, 1 << len(positions)):
        ps = [positions[k] for k in range(len(positions)) if mask >> k & 1]
        cages = [fsc_o1(L, p) for p in ps]
        feet = [footprint(c) for c in cages]
        clash = any(
            _ring_dist(x, y, L) <= radius for i, fa in enumerate(feet) for fb in feet[i + 1:] for x in fa for y in fb
        )
        if clash:
            continue
        occupied = set().union(*feet)
        free = [f for f in range(0, L, 2) if all(_ring_dist(x, f, L) > radius for x in occupied)]
        for fmask in range(1 << len(free)):
            out.append((tuple(ps), tuple(free[k] for k in range(len(free)) if fmask >> k & 1)))
    return out


def catalog(L_single=range(4, 17), L_multi=range(4, 15, 2), L_o1=range(8, 17, 2)):
    """Every closed-form cage the constructors accept, with its model spec."""
    out = []
    for L in L_single:
        out.append((build_single_cage(L, "open"), fsc_single(L)))
    for L in L_multi:
        spec = build_multi_cage(L, "periodic")
        for fam in (1, 2, 3):
            try:
                out.append((spec, fsc_multi(L, fam)))
            except CageError:
                continue
    for L in L_o1:
        spec = build_o1_cage(L, "periodic")
        for p in range(0, L, 2):
            out.append((spec, fsc_o1(L, p)))
        if L >= 16:
            out.append((spec, compose([fsc_o1(L, 0), fsc_o1(L, 8)])))
        out.append((spec, compose([fsc_o1(L, 0)], [L - 4] if L - 4 > 5 else [])))
    return out


def write_catalog(entries, path) -> None:
    with open(path, "w") as fh:
        json.dump([c.to_record() for _, c in entries], fh, indent=1)
        fh.write("\n")
