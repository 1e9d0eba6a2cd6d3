from math import gcd

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fockcages.fockgraph import biadjacency, build_krylov_graph, largest_sector
from fockcages.model import build_multi_cage, build_o1_cage, build_single_cage, preset
from fockcages.spectral import (
    Spectrum,
    SpectrumError,
    chiral_symmetric,
    collapse_zero_multiplet,
    dense_spectrum,
    entanglement_profile,
    entropy_of,
    gap_ratio,
    momentum_blocks,
    momentum_sectors,
    page_value,
    ratios,
    translate,
    write_eigenvalues,
    write_entanglement,
    write_rstats,
)
from fockcages.zeromodes import kernel_dimensions


def test_empty_sector_spectrum():
    s = dense_spectrum(build_krylov_graph(build_multi_cage(6), 0))
    assert s.eigenvalues.tolist() == [0.0] and s.zero_count() == 1


def test_ladder_ratios():
    assert np.allclose(ratios(np.arange(5.0)), 1.0)
    st_ = gap_ratio(Spectrum(np.arange(5.0)))
    assert st_.mean_r == 1.0 and st_.counts.sum() == 3
    with pytest.raises(SpectrumError):
        gap_ratio(Spectrum(np.array([0.0, 1.0])))


def test_collapse_zero_multiplet():
    E = np.array([-2.0, -1.0, 0.0, 1e-13, -1e-13, 1.0, 2.0])
    assert collapse_zero_multiplet(E).tolist() == [-2.0, -1.0, 0.0, 1.0, 2.0]
    assert collapse_zero_multiplet(np.array([-1.0, 0.0, 1.0])).tolist() == [-1.0, 0.0, 1.0]


@settings(max_examples=50, deadline=None)
@given(st.lists(st.integers(-10**6, 10**6), min_size=3, max_size=30, unique=True))
def test_ratio_bounds_and_scale_invariance(levels):
    E = np.array(levels) / 1e3
    r = ratios(E)
    assert np.all((r >= 0) & (r <= 1))
    assert np.allclose(ratios(3.5 * E + 2.0), r)


@pytest.mark.parametrize(
    "name,L,bc",
    [("single_cage", 8, "open"), ("single_cage", 10, "open"), ("multi_cage", 8, "periodic"),
     ("multi_cage", 10, "periodic"), ("o1_cage", 8, "periodic"), ("o1_cage", 10, "periodic"), ("multi_cage", 9, "open")],
)
def test_zero_count_equals_kernel_and_chiral(name, L, bc):
    g = largest_sector(preset(name, L, bc))
    s = dense_spectrum(g)
    assert chiral_symmetric(s)
    r = kernel_dimensions(biadjacency(g))
    assert s.zero_count() == r.dim_ker_H >= r.bound


def test_dense_cap():
    g = largest_sector(build_multi_cage(8))
    with pytest.raises(SpectrumError):
        dense_spectrum(g, cap=100)
    with pytest.raises(SpectrumError):
        dense_spectrum(g).zero_space()


def test_page_value():
    assert page_value(1, 2) == pytest.approx(np.log(2) - 0.5)
    assert page_value(6, 12) == page_value(6, 12)
    assert page_value(4, 12) == pytest.approx(4 * np.log(2) - 2.0 ** -4 / 2)


def test_entropy_product_and_bell():
    L = 6
    psi = np.zeros(1 << L)
    psi[0b010110] = 1
    assert abs(entropy_of(psi, L, 3)) < 1e-12
    psi = np.zeros(1 << L)
    psi[0b000001] = psi[0b100000] = 1 / np.sqrt(2)
    assert abs(entropy_of(psi, L, 3) - np.log(2)) < 1e-12


def test_entanglement_profile_single_cage():
    g = largest_sector(build_single_cage(8))
    s = dense_spectrum(g, want_vectors=True)
    prof = entanglement_profile(s, g)
    zero = np.abs(prof.energies) < 1e-10
    assert zero.sum() == 1
    assert abs(prof.entropies[zero][0] - np.log(2)) < 1e-9
    assert prof.cut == 4 and prof.page == page_value(4, 8)
    assert np.all(prof.entropies <= 4 * np.log(2) + 1e-9)
    with pytest.raises(SpectrumError):
        entanglement_profile(s, g, cut=8)


def test_zero_space_splits_by_sublattice():
    g = largest_sector(build_o1_cage(10))
    s = dense_spectrum(g, want_vectors=True)
    Z = s.zero_space()
    H = g.dense()
    for mask in (g.partition == 0, g.partition == 1):
        P = np.zeros_like(Z)
        P[mask] = Z[mask]
        assert np.allclose(H @ P, 0, atol=1e-8)


def test_translate():
    assert translate(0b0001, 4) == 0b0010
    assert translate(0b1000, 4) == 0b0001
    assert translate(0b0011, 4, 3) == 0b1001


def _burnside_orbits(L):
    phi = lambda n: sum(1 for k in range(1, n + 1) if gcd(k, n) == 1)
    return sum(phi(L // d) * 2 ** d for d in range(1, L + 1) if L % d == 0) // L


@pytest.mark.parametrize("name,L", [("multi_cage", 8), ("multi_cage", 9), ("single_cage", 8), ("o1_cage", 8), ("o1_cage", 10)])
def test_momentum_blocks_complete(name, L):
    spec = preset(name, L, "periodic")
    g = largest_sector(spec)
    blocks = momentum_blocks(g)
    assert sum(len(b) for _, b, _ in blocks) == len(g)
    if name == "multi_cage":
        assert len(blocks) == L
        assert len({int(r) for _, b, _ in blocks for r in b}) == _burnside_orbits(L) - 1
    for _, _, Hk in blocks:
        assert np.allclose(Hk, Hk.conj().T)
    pooled = np.sort(np.concatenate([s.eigenvalues for s in momentum_sectors(g)]))
    assert np.allclose(pooled, dense_spectrum(g).eigenvalues, atol=1e-9)


def test_momentum_needs_periodic():
    from fockcages.model import ModelError

    with pytest.raises(ModelError):
        momentum_blocks(largest_sector(build_single_cage(6)))


@pytest.mark.xfail(strict=True, reason="per-block statistics stay near 0.43 at L=12; see the decisions ledger")
def test_multi_cage_momentum_gap_ratio_goe():
    g = largest_sector(build_multi_cage(12))
    stats = gap_ratio(momentum_sectors(g), drop_zero_multiplet=True)
    assert abs(stats.mean_r - 0.53) <= 0.03


def test_csv_writers(tmp_path):
    g = largest_sector(build_single_cage(6))
    s = dense_spectrum(g, want_vectors=True)
    write_eigenvalues(s, tmp_path / "e.csv")
    lines = (tmp_path / "e.csv").read_text().splitlines()
    assert lines[0] == "E" and len(lines) == 64
    stats = gap_ratio(s)
    write_rstats(stats, tmp_path / "r.csv")
    rows = [l.split(",") for l in (tmp_path / "r.csv").read_text().splitlines()[1:]]
    assert sum(int(r[2]) for r in rows) == len(stats.r_values)
    dens = np.array([float(r[3]) for r in rows])
    assert dens.sum() * 0.05 == pytest.approx(1.0, rel=1e-5)
    write_entanglement(entanglement_profile(s, g), tmp_path / "s.csv")
    assert (tmp_path / "s.csv").read_text().startswith("E,S\n")
