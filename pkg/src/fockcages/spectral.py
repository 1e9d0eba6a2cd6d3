"""Dense spectra, gap-ratio statistics, eigenstate entanglement and momentum blocks."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from math import log

import numpy as np

from .fockgraph import FockGraph
from .model import ModelError, ModelSpec, apply_terms

DENSE_CAP = 1 << 14
ZERO_TOL = 1e-10


class SpectrumError(RuntimeError):
    pass


@dataclass(frozen=True)
class Spectrum:
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray | None = None
    meta: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.eigenvalues)

    def zero_count(self, tol: float = ZERO_TOL) -> int:
        """Eigenvalues with |E| < tol * max(1, ||H||)."""
        scale = max(1.0, float(np.max(np.abs(self.eigenvalues), initial=0.0)))
        return int(np.sum(np.abs(self.eigenvalues) < tol * scale))

    def zero_space(self, tol: float = ZERO_TOL) -> np.ndarray:
        if self.eigenvectors is None:
            raise SpectrumError("spectrum was computed without eigenvectors")
        scale = max(1.0, float(np.max(np.abs(self.eigenvalues), initial=0.0)))
        return self.eigenvectors[:, np.abs(self.eigenvalues) < tol * scale]


def dense_spectrum(graph: FockGraph, want_vectors: bool = False, cap: int = DENSE_CAP) -> Spectrum:
    n = len(graph)
    if n > cap:
        raise SpectrumError(f"sector dimension {n} exceeds the dense cap {cap}")
    H = graph.dense(float)
    meta = {"model": graph.spec.name, "L": graph.L, "bc": graph.spec.bc, "dim": n}
    if want_vectors:
        E, V = np.linalg.eigh(H)
        return Spectrum(E, V, meta)
    return Spectrum(np.linalg.eigvalsh(H), None, meta)


def chiral_symmetric(spectrum: Spectrum, tol: float = 1e-9) -> bool:
    E = np.sort(spectrum.eigenvalues)
    return bool(np.allclose(E, -E[::-1], atol=tol))


# --- level statistics ----------------------------------------------------------

@dataclass(frozen=True)
class GapRatioStats:
    r_values: np.ndarray
    mean_r: float
    bins: np.ndarray
    counts: np.ndarray
    dropped_zero_multiplet: bool


def collapse_zero_multiplet(E: np.ndarray, tol: float = ZERO_TOL) -> np.ndarray:
    E = np.sort(np.asarray(E, dtype=float))
    scale = max(1.0, float(np.max(np.abs(E), initial=0.0)))
    zero = np.abs(E) < tol * scale
    if zero.sum() <= 1:
        return E
    return np.sort(np.concatenate([E[~zero], [0.0]]))


def ratios(E: np.ndarray) -> np.ndarray:
    """r_n = min(d_n, d_{n+1}) / max(d_n, d_{n+1}) on consecutive gaps."""
    d = np.diff(np.sort(E))
    lo = np.minimum(d[:-1], d[1:])
    hi = np.maximum(d[:-1], d[1:])
    with np.errstate(invalid="ignore", divide="ignore"):
        r = np.where(hi > 0, lo / np.where(hi > 0, hi, 1.0), np.nan)
    return r[~np.isnan(r)]


def gap_ratio(spectrum, drop_zero_multiplet: bool = False, n_bins: int = 20) -> GapRatioStats:
    """Adjacent-gap-ratio statistics.

    ``spectrum`` may also be a list of spectra (symmetry blocks); ratios are
    then formed inside each block and pooled.
    """
    blocks = spectrum if isinstance(spectrum, (list, tuple)) else [spectrum]
    rs = []
    for blk in blocks:
        E = blk.eigenvalues if isinstance(blk, Spectrum) else np.asarray(blk)
        if drop_zero_multiplet:
            E = collapse_zero_multiplet(E)
        if len(E) < 3:
            if len(blocks) == 1:
                raise SpectrumError("need at least three levels")
            continue
        rs.append(ratios(E))
    r = np.concatenate(rs) if rs else np.zeros(0)
    if r.size == 0:
        raise SpectrumError("no finite gap ratios")
    counts, bins = np.histogram(r, bins=n_bins, range=(0.0, 1.0))
    return GapRatioStats(r, float(r.mean()), bins, counts, drop_zero_multiplet)


# --- entanglement ----------------------------------------------------------

def page_value(cut: int, L: int) -> float:
    """Page's mean entropy ln(m) - m/(2n), m = 2**min(cut, L-cut), n = 2**max."""
    a, b = sorted((cut, L - cut))
    return a * log(2) - 2.0 ** (a - b) / 2


def entropy_of(amplitudes: np.ndarray, L: int, cut: int) -> float:
    """Von Neumann entropy of sites [0, cut) for a full 2**L state vector."""
    psi = np.asarray(amplitudes).reshape(1 << (L - cut), 1 << cut)
    s = np.linalg.svd(psi, compute_uv=False)
    p = s * s
    p = p[p > 1e-300]
    return float(-(p * np.log(p)).sum())


@dataclass(frozen=True)
class EntanglementProfile:
    energies: np.ndarray
    entropies: np.ndarray
    cut: int
    page: float


def embed(graph: FockGraph, vec: np.ndarray) -> np.ndarray:
    full = np.zeros(1 << graph.L, dtype=vec.dtype)
    full[graph.nodes] = vec
    return full


def entanglement_profile(spectrum: Spectrum, graph: FockGraph, cut: int | None = None) -> EntanglementProfile:
    if spectrum.eigenvectors is None:
        raise SpectrumError("entanglement needs eigenvectors")
    L = graph.L
    cut = L // 2 if cut is None else cut
    if not 1 <= cut <= L - 1:
        raise SpectrumError(f"cut {cut} outside [1, {L - 1}]")
    V = spectrum.eigenvectors
    S = np.array([entropy_of(embed(graph, V[:, n]), L, cut) for n in range(V.shape[1])])
    return EntanglementProfile(spectrum.eigenvalues.copy(), S, cut, page_value(cut, L))


# --- momentum resolution -----------------------------------------------------

def translate(s: int, L: int, n: int = 1) -> int:
    """Shift every particle from site i to site i+n (mod L)."""
    n %= L
    mask = (1 << L) - 1
    return ((s << n) | (s >> (L - n))) & mask


def translation_step(spec: ModelSpec) -> int:
    """Smallest translation leaving the model invariant (2 once a family is site-filtered)."""
    return 2 if any(f.sites != "all" for f in spec.families) else 1


def _orbit_data(s: int, L: int, step: int) -> tuple[int, int, int]:
    """(representative, number of steps bringing s onto it, period in steps)."""
    rep, shift, t = s, 0, s
    n_max = L // step
    period = n_max
    for n in range(1, n_max + 1):
        t = translate(t, L, step)
        if t == s:
            period = n
            break
        if t < rep:
            rep, shift = t, n
    return rep, shift, period


def momentum_blocks(graph: FockGraph) -> list[tuple[int, np.ndarray, np.ndarray]]:
    """Bloch-basis block Hamiltonians ``(m, reps, H_k)`` with ``k = 2 pi m / N``.

    ``N = L / step`` is the number of unit cells; the sector must be closed
    under translation by one cell.
    """
    spec = graph.spec
    if spec.bc != "periodic":
        raise ModelError("momentum resolution needs periodic boundaries")
    L = spec.L
    step = translation_step(spec)
    if L % step:
        raise ModelError(f"L={L} is not a multiple of the unit cell {step}")
    N = L // step
    info = {int(s): _orbit_data(int(s), L, step) for s in graph.nodes}
    reps = sorted({v[0] for v in info.values()})
    if any(r not in info or info[r][0] != r for r in reps):
        raise ModelError("node set is not translation closed")
    period = {r: info[r][2] for r in reps}
    rows = {r: apply_terms(spec, r) for r in reps}
    out = []
    for m in range(N):
        k = 2 * np.pi * m / N
        basis = [r for r in reps if (m * period[r]) % N == 0]
        idx = {r: i for i, r in enumerate(basis)}
        Hk = np.zeros((len(basis), len(basis)), dtype=complex)
        for r in basis:
            a = idx[r]
            for t, h in rows[r].items():
                rep, shift, _ = info[t]
                if rep not in idx:
                    continue
                Hk[idx[rep], a] += h * np.exp(-1j * k * shift) * np.sqrt(period[r] / period[rep])
        out.append((m, np.array(basis, dtype=np.int64), Hk))
    return out


def momentum_sectors(graph: FockGraph) -> list[Spectrum]:
    """Per-momentum spectra of a translation-closed sector; k and -k kept separately."""
    out = []
    for m, basis, Hk in momentum_blocks(graph):
        E = np.linalg.eigvalsh(Hk) if len(basis) else np.zeros(0)
        out.append(Spectrum(E, None, {"model": graph.spec.name, "L": graph.L, "bc": "periodic", "momentum": m, "dim": len(basis)}))
    return out


# --- CSV ---------------------------------------------------------------------

def write_eigenvalues(spectrum: Spectrum, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["E"])
        for e in spectrum.eigenvalues:
            w.writerow([f"{e:.12g}"])


def write_rstats(stats: GapRatioStats, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["r_lo", "r_hi", "count", "density"])
        width = stats.bins[1] - stats.bins[0]
        total = stats.counts.sum()
        for lo, hi, c in zip(stats.bins[:-1], stats.bins[1:], stats.counts):
            w.writerow([f"{lo:.4f}", f"{hi:.4f}", int(c), f"{c / (total * width):.6g}"])


def write_entanglement(profile: EntanglementProfile, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["E", "S"])
        for e, s in zip(profile.energies, profile.entropies):
            w.writerow([f"{e:.12g}", f"{s:.12g}"])
