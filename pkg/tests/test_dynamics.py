import json

import numpy as np
import pytest

from fockcages.cages import fsc_single
from fockcages.dynamics import (
    DynamicsError,
    ObservableSeries,
    QuenchSetup,
    TimeGrid,
    chebyshev_step,
    diagonal_ensemble,
    dynamics_manifest,
    evolve_series,
    magnetization_series,
    return_probability,
    saturation,
    spectral_bound,
    write_dynamics_csv,
)
from fockcages.fockgraph import build_krylov_graph, largest_sector
from fockcages.model import BasisState, build_multi_cage, build_o1_cage, build_single_cage
from oracles import propagate_expm


@pytest.mark.parametrize("spacing", ["linear", "log", "loglinear"])
def test_grid_shape(spacing):
    t = TimeGrid(1e3, 101, spacing).times()
    assert len(t) == 101 and t[0] == 0 and t[-1] == pytest.approx(1e3)
    assert np.all(np.diff(t) > 0)


def test_loglinear_tail_is_uniform():
    t = TimeGrid(1e3, 1001).times()
    tail = t[t > 500]
    assert np.allclose(np.diff(tail), np.diff(tail)[0])
    assert len(tail) == 500


def test_grid_errors():
    with pytest.raises(DynamicsError):
        TimeGrid(1e3, 2)
    with pytest.raises(DynamicsError):
        TimeGrid(1e-3, 10)
    with pytest.raises(DynamicsError):
        TimeGrid(spacing="cubic")


def test_empty_state_is_static():
    L = 8
    for spec in (build_single_cage(L), build_multi_cage(L), build_o1_cage(L)):
        ret, mag = evolve_series(QuenchSetup(spec, 0, TimeGrid(1e3, 50)))
        assert np.allclose(ret.values, 1) and np.allclose(mag.values, L)


def test_cage_state_is_static():
    L = 8
    spec = build_single_cage(L)
    g = build_krylov_graph(spec, 1)
    v = fsc_single(L).vector(g.nodes)
    for method in ("dense", "chebyshev"):
        ret, mag = evolve_series(QuenchSetup(spec, v, TimeGrid(1e3, 40), g), method=method)
        assert np.allclose(ret.values, 1, atol=1e-9)
        assert np.allclose(mag.values, L - 2, atol=1e-9)


@pytest.mark.parametrize("method", ["dense", "chebyshev"])
def test_matches_matrix_exponential(method):
    spec = build_single_cage(6)
    g = build_krylov_graph(spec, 1 << 3)
    grid = TimeGrid(20.0, 12, "linear")
    ret, mag = evolve_series(QuenchSetup(spec, 1 << 3, grid), method=method)
    psi0 = np.zeros(len(g), dtype=complex)
    psi0[g.node_index[1 << 3]] = 1
    Psi = propagate_expm(g.dense(), psi0, grid.times())
    assert np.allclose(ret.values, np.abs(Psi[g.node_index[1 << 3]]) ** 2, atol=1e-10)
    z = np.array([6 - 2 * bin(int(s)).count("1") for s in g.nodes])
    assert np.allclose(mag.values, z @ np.abs(Psi) ** 2, atol=1e-10)


def test_initial_values_and_bounds():
    spec = build_o1_cage(10)
    ret, mag = evolve_series(QuenchSetup(spec, "0000000011", TimeGrid(1e3, 200)))
    assert ret.values[0] == pytest.approx(1.0, abs=1e-12)
    assert mag.values[0] == pytest.approx(10 - 4, abs=1e-12)
    assert np.all(ret.values >= -1e-9) and np.all(ret.values <= 1 + 1e-9)
    assert np.all(np.abs(mag.values) <= 10 + 1e-9)
    assert ret.meta["norm_error"] < 1e-9 and ret.meta["energy_drift"] < 1e-8
    assert "Z|0>=+|0>" in mag.meta["z_convention"]


def test_paths_agree_l8():
    spec = build_single_cage(8)
    setup = QuenchSetup(spec, 1 << 4, TimeGrid(200.0, 100))
    a = evolve_series(setup, method="dense")
    b = evolve_series(setup, method="chebyshev")
    for x, y in zip(a, b):
        assert np.max(np.abs(x.values - y.values)) < 1e-6
    assert b[0].meta["norm_error"] < 1e-9 and b[0].meta["energy_drift"] < 1e-8


def test_chebyshev_step_is_unitary_on_random_vector():
    g = largest_sector(build_multi_cage(8))
    H = g.edges.astype(float).tocsr()
    rng = np.random.default_rng(0)
    v = rng.normal(size=len(g)) + 1j * rng.normal(size=len(g))
    v /= np.linalg.norm(v)
    w = chebyshev_step(H, v, 3.0, spectral_bound(H))
    E, V = np.linalg.eigh(g.dense())
    want = V @ (np.exp(-3j * E) * (V.T @ v))
    assert np.allclose(w, want, atol=1e-12)


def test_setup_errors():
    spec = build_single_cage(6)
    with pytest.raises(DynamicsError):
        QuenchSetup(spec, 0b11, graph=build_krylov_graph(spec, 0)).resolve()
    with pytest.raises(DynamicsError):
        QuenchSetup(spec, np.ones(3)).resolve()
    with pytest.raises(DynamicsError):
        QuenchSetup(spec, BasisState(1, 5)).resolve()
    with pytest.raises(DynamicsError):
        evolve_series(QuenchSetup(spec, 1), observables=("entropy",))
    with pytest.raises(DynamicsError):
        evolve_series(QuenchSetup(spec, 1), method="rk4")


def test_saturation_rules():
    t = np.linspace(0, 1e3, 11)
    assert saturation(ObservableSeries("return", t, np.full(11, 0.3))) == pytest.approx(0.3)
    vals = np.arange(11.0)
    assert saturation(ObservableSeries("return", t, vals), 0.2) == pytest.approx(9.5)
    with pytest.raises(DynamicsError):
        saturation(ObservableSeries("return", t[:1], vals[:1]))
    with pytest.raises(DynamicsError):
        saturation(ObservableSeries("return", t / 10, vals))
    with pytest.raises(DynamicsError):
        saturation(ObservableSeries("return", t, vals), 0.0)


def test_diagonal_ensemble_cases():
    spec = build_single_cage(8)
    g = build_krylov_graph(spec, 1)
    assert diagonal_ensemble(QuenchSetup(spec, fsc_single(8).vector(g.nodes), graph=g)) == pytest.approx(1.0)
    assert diagonal_ensemble(QuenchSetup(build_o1_cage(10), 0b11)) >= 0.25


def test_diagonal_ensemble_matches_long_time_average():
    setup = QuenchSetup(build_single_cage(10), 1 << 5, TimeGrid(1e4, 1000))
    measured = return_probability(setup).saturation()
    assert measured == pytest.approx(diagonal_ensemble(setup), rel=0.02)


@pytest.mark.slow
def test_diagonal_ensemble_l12():
    setup = QuenchSetup(build_single_cage(12), 1 << 6, TimeGrid(1e4, 1000))
    measured = return_probability(setup).saturation()
    assert measured == pytest.approx(diagonal_ensemble(setup), rel=0.02)


def test_saturation_stable_under_doubling():
    spec = build_single_cage(10)
    a = return_probability(QuenchSetup(spec, 1 << 5, TimeGrid(1e3, 1000))).saturation()
    b = return_probability(QuenchSetup(spec, 1 << 5, TimeGrid(2e3, 1000))).saturation()
    # temporal fluctuations over a 500/J window leave a ~2% floor at this size
    assert abs(a - b) / b < 0.03


def test_magnetization_series_and_outputs(tmp_path):
    setup = QuenchSetup(build_o1_cage(8), 0b11, TimeGrid(1e3, 60))
    mag = magnetization_series(setup)
    assert mag.name == "Z_total"
    series = evolve_series(setup)
    write_dynamics_csv(series, tmp_path / "d.csv")
    lines = (tmp_path / "d.csv").read_text().splitlines()
    assert lines[0] == "t,L_return,Z_total" and len(lines) == 61
    man = dynamics_manifest(setup, series)
    assert man["model_hash"] == setup.spec.content_hash()
    assert man["window_fraction"] == 0.5
    json.dumps(man)
    write_dynamics_csv([series[0]], tmp_path / "r.csv")
    assert (tmp_path / "r.csv").read_text().splitlines()[1].endswith(",")
