"""Quench dynamics from bitstring states: return probability and magnetization.

Two propagators share one interface. Sectors up to ``DENSE_CAP`` states are
diagonalized once and evolved in the eigenbasis; larger sectors use a
Chebyshev expansion of ``exp(-iHt)`` applied with sparse matrix-vector
products.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.special import jv

from .fockgraph import FockGraph, build_krylov_graph
from .model import BasisState, ModelSpec, bitstring, parse_bitstring

DENSE_CAP = 1 << 13
DEFAULT_T_MAX = 1e3
DEFAULT_SAMPLES = 1000
MIN_SATURATION_TIME = 1e3
DEGENERACY_TOL = 1e-8
CHEB_TOL = 1e-15
# largest a*dt advanced by one Chebyshev expansion
CHEB_MAX_ARG = 40.0
OBSERVABLES = ("return", "Z_total")


class DynamicsError(ValueError):
    pass


@dataclass(frozen=True)
class TimeGrid:
    """``spacing`` is ``linear``, ``log`` or ``loglinear``.

    ``loglinear`` places half the samples on a log scale up to ``t_max / 2``
    and the rest on a uniform tail over ``(t_max / 2, t_max]``, so that the
    averaging window is uniformly sampled. ``t = 0`` is always included.
    """

    t_max: float = DEFAULT_T_MAX
    samples: int = DEFAULT_SAMPLES
    spacing: str = "loglinear"
    t_min: float = 1e-2

    def __post_init__(self):
        if self.spacing not in ("linear", "log", "loglinear"):
            raise DynamicsError(f"unknown spacing {self.spacing!r}")
        if self.samples < 3:
            raise DynamicsError("a time grid needs at least three samples")
        if not self.t_max > self.t_min > 0:
            raise DynamicsError("need 0 < t_min < t_max")

    def times(self) -> np.ndarray:
        n = self.samples - 1
        if self.spacing == "linear":
            t = np.linspace(0.0, self.t_max, self.samples)
        elif self.spacing == "log":
            t = np.concatenate([[0.0], np.geomspace(self.t_min, self.t_max, n)])
        else:
            half = self.t_max / 2
            n_log = n // 2
            head = np.geomspace(self.t_min, half, n_log) if n_log else np.zeros(0)
            tail = np.linspace(half, self.t_max, n - n_log + 1)[1:]
            t = np.concatenate([[0.0], head, tail])
        if np.any(np.diff(t) <= 0):
            raise DynamicsError("time grid is not strictly increasing")
        return t

    def to_dict(self) -> dict:
        return {"t_max": self.t_max, "samples": self.samples, "spacing": self.spacing, "t_min": self.t_min}


@dataclass(frozen=True)
class QuenchSetup:
    """Model, initial state and time grid.

    ``psi0`` is a basis state (int, bitstring or :class:`BasisState`), in
    which case the sector is its Krylov graph, or a vector over the nodes of
    an explicitly supplied ``graph``.
    """

    spec: ModelSpec
    psi0: object
    grid: TimeGrid = field(default_factory=TimeGrid)
    graph: FockGraph | None = None

    def resolve(self) -> tuple[FockGraph, np.ndarray]:
        """Sector graph and normalized complex initial vector on its nodes."""
        psi0 = self.psi0
        if isinstance(psi0, str):
            bits, L = parse_bitstring(psi0)
            psi0 = BasisState(bits, L)
        if isinstance(psi0, (int, np.integer, BasisState)):
            bits = psi0.bits if isinstance(psi0, BasisState) else int(psi0)
            if isinstance(psi0, BasisState) and psi0.L != self.spec.L:
                raise DynamicsError(f"initial state has L={psi0.L}, model has L={self.spec.L}")
            graph = self.graph if self.graph is not None else build_krylov_graph(self.spec, bits)
            if bits not in graph.node_index:
                raise DynamicsError(f"{bitstring(bits, self.spec.L)} lies outside the sector")
            v = np.zeros(len(graph), dtype=complex)
            v[graph.node_index[bits]] = 1.0
            return graph, v
        if self.graph is None:
            raise DynamicsError("a vector initial state needs the sector graph")
        v = np.asarray(psi0, dtype=complex)
        if v.shape != (len(self.graph),):
            raise DynamicsError("initial vector does not match the sector dimension")
        nrm = np.linalg.norm(v)
        if nrm == 0:
            raise DynamicsError("initial vector is zero")
        return self.graph, v / nrm


@dataclass(frozen=True)
class ObservableSeries:
    name: str
    times: np.ndarray
    values: np.ndarray
    meta: dict = field(default_factory=dict)

    def saturation(self, window_fraction: float = 0.5) -> float:
        return saturation(self, window_fraction)


def z_diagonal(graph: FockGraph) -> np.ndarray:
    """Z_total per node with Z = +1 on an empty site, -1 on an occupied one."""
    pc = np.array([bin(int(s)).count("1") for s in graph.nodes], dtype=float)
    return graph.L - 2 * pc


# --- propagators ---------------------------------------------------------------

def _dense_states(H: np.ndarray, v: np.ndarray, times: np.ndarray, chunk: int = 64):
    """Yield ``(t_slice, Psi)`` blocks with Psi[:, j] = psi(times[j])."""
    E, V = np.linalg.eigh(H)
    c = V.T @ v
    for start in range(0, len(times), chunk):
        ts = times[start:start + chunk]
        yield slice(start, start + len(ts)), V @ (c[:, None] * np.exp(-1j * np.outer(E, ts)))


def spectral_bound(H: sp.csr_matrix) -> float:
    """Gershgorin bound on ||H|| (at least 1, so the rescaling is never degenerate)."""
    rows = np.asarray(abs(H).sum(axis=1)).ravel()
    return max(1.0, float(rows.max(initial=0.0)))


def chebyshev_coefficients(x: float, tol: float = CHEB_TOL) -> np.ndarray:
    """Coefficients ``(2 - delta_k0) (-i)^k J_k(x)`` truncated once |J_k| < tol past k > x."""
    K = int(x + 10 * max(1.0, x ** (1 / 3))) + 20
    while True:
        j = jv(np.arange(K), x)
        if np.all(np.abs(j[int(x) + 1:][-5:]) < tol):
            break
        K *= 2
    tail = np.flatnonzero(np.abs(j) >= tol)
    K = int(tail[-1]) + 1 if tail.size else 1
    k = np.arange(K)
    return np.where(k == 0, 1.0, 2.0) * (-1j) ** k * j[:K]


def chebyshev_step(H: sp.csr_matrix, v: np.ndarray, dt: float, a: float) -> np.ndarray:
    """exp(-i H dt) v for ||H|| <= a."""
    coef = chebyshev_coefficients(a * dt)
    Hs = H / a
    t_prev, t_cur = v, Hs @ v
    out = coef[0] * t_prev
    if len(coef) > 1:
        out = out + coef[1] * t_cur
    for ck in coef[2:]:
        t_prev, t_cur = t_cur, 2 * (Hs @ t_cur) - t_prev
        out += ck * t_cur
    return out


def _chebyshev_states(H: sp.csr_matrix, v: np.ndarray, times: np.ndarray):
    a = spectral_bound(H)
    psi = v.copy()
    t_now = 0.0
    for j, t in enumerate(times):
        while t - t_now > 0:
            dt = min(t - t_now, CHEB_MAX_ARG / a)
            psi = chebyshev_step(H, psi, dt, a)
            t_now = t if dt == t - t_now else t_now + dt
        yield slice(j, j + 1), psi[:, None]


def evolve_series(setup: QuenchSetup, observables=OBSERVABLES, method: str = "auto") -> list[ObservableSeries]:
    """Return probability and/or Z_total on the setup's time grid.

    ``method`` is ``auto`` (dense up to ``DENSE_CAP`` states), ``dense`` or
    ``chebyshev``. Every series carries norm and energy drift in its metadata.
    """
    for name in observables:
        if name not in OBSERVABLES:
            raise DynamicsError(f"unknown observable {name!r}")
    graph, v = setup.resolve()
    times = setup.grid.times()
    n = len(graph)
    if method == "auto":
        method = "dense" if n <= DENSE_CAP else "chebyshev"
    Hs = graph.edges.astype(float).tocsr()
    if method == "dense":
        if n > DENSE_CAP:
            raise DynamicsError(f"sector dimension {n} exceeds the dense cap {DENSE_CAP}")
        blocks = _dense_states(Hs.toarray(), v, times)
    elif method == "chebyshev":
        blocks = _chebyshev_states(Hs, v, times)
    else:
        raise DynamicsError(f"unknown method {method!r}")

    z = z_diagonal(graph)
    e0 = float(np.real(np.vdot(v, Hs @ v)))
    ret = np.empty(len(times))
    mag = np.empty(len(times))
    norm_err = 0.0
    energy_err = 0.0
    escale = max(1.0, abs(e0))
    for sl, Psi in blocks:
        p = np.abs(Psi) ** 2
        norm_err = max(norm_err, float(np.max(np.abs(p.sum(axis=0) - 1.0))))
        energy = np.real(np.einsum("ij,ij->j", Psi.conj(), Hs @ Psi))
        energy_err = max(energy_err, float(np.max(np.abs(energy - e0))) / escale)
        ret[sl] = np.abs(v.conj() @ Psi) ** 2
        mag[sl] = z @ p
    meta = {
        "model": graph.spec.name,
        "L": graph.L,
        "bc": graph.spec.bc,
        "dim": n,
        "method": method,
        "grid": setup.grid.to_dict(),
        "norm_error": norm_err,
        "energy_drift": energy_err,
        "energy": e0,
        "z_convention": "Z|0>=+|0>, Z|1>=-|1>",
    }
    series = {"return": ret, "Z_total": mag}
    return [ObservableSeries(name, times, series[name], dict(meta)) for name in observables]


def return_probability(setup: QuenchSetup, method: str = "auto") -> ObservableSeries:
    return evolve_series(setup, ("return",), method)[0]


def magnetization_series(setup: QuenchSetup, method: str = "auto") -> ObservableSeries:
    return evolve_series(setup, ("Z_total",), method)[0]


def saturation(series: ObservableSeries, window_fraction: float = 0.5, min_time: float = MIN_SATURATION_TIME) -> float:
    """Mean over the final ``window_fraction`` of samples."""
    if not 0 < window_fraction <= 1:
        raise DynamicsError("window_fraction must lie in (0, 1]")
    t = np.asarray(series.times)
    if len(t) < 2:
        raise DynamicsError("series too short to average")
    if t[-1] < min_time:
        raise DynamicsError(f"series ends at t={t[-1]:g}, below the required {min_time:g}")
    k = max(1, int(round(window_fraction * len(t))))
    return float(np.mean(np.asarray(series.values)[-k:]))


def diagonal_ensemble(setup: QuenchSetup, tol: float = DEGENERACY_TOL) -> float:
    """Infinite-time average of the return probability.

    Sum over distinct energies of the squared weight of psi0 in each
    (possibly degenerate) eigenspace.
    """
    graph, v = setup.resolve()
    if len(graph) > DENSE_CAP:
        raise DynamicsError(f"no dense spectrum above {DENSE_CAP} states")
    E, V = np.linalg.eigh(graph.dense(float))
    w = np.abs(V.T @ v) ** 2
    # eigenvalues arrive sorted; split wherever consecutive levels separate
    cuts = np.flatnonzero(np.diff(E) > tol) + 1
    blocks = np.add.reduceat(w, np.concatenate([[0], cuts]))
    return float(np.sum(blocks ** 2))


# --- output --------------------------------------------------------------------

def write_dynamics_csv(series: list[ObservableSeries], path) -> None:
    """Columns t, L_return, Z_total; a missing observable is left blank."""
    by_name = {s.name: s for s in series}
    times = series[0].times
    ret = by_name.get("return")
    mag = by_name.get("Z_total")
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "L_return", "Z_total"])
        for j, t in enumerate(times):
            w.writerow([
                f"{t:.10g}",
                f"{ret.values[j]:.12g}" if ret is not None else "",
                f"{mag.values[j]:.12g}" if mag is not None else "",
            ])


def dynamics_manifest(setup: QuenchSetup, series: list[ObservableSeries], window_fraction: float = 0.5) -> dict:
    meta = series[0].meta
    return {
        "model": setup.spec.to_dict(),
        "model_hash": setup.spec.content_hash(),
        "grid": setup.grid.to_dict(),
        "window_fraction": window_fraction,
        "method": meta["method"],
        "dim": meta["dim"],
        "norm_error": meta["norm_error"],
        "energy_drift": meta["energy_drift"],
        "z_convention": meta["z_convention"],
        "saturation": {s.name: saturation(s, window_fraction, min_time=0.0) for s in series},
    }


def write_manifest(manifest: dict, path) -> None:
    with open(path, "w") as fh:
        json.dump(manifest, fh, indent=1, sort_keys=True)
        fh.write("\n")
