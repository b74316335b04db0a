import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from sssampling import ising
from sssampling.ising import IsingModel, energy, local_conditional


def two_spin():
    return IsingModel(m=2, h=[1.0, -1.0], couplings=((0, 1, 0.5),))


def test_energy_examples():
    model = two_spin()
    assert energy(model, [1, 1]) == pytest.approx(0.5, abs=1e-15)
    assert energy(model, [-1, 1]) == pytest.approx(-2.5, abs=1e-15)
    zero = IsingModel(m=3, h=np.zeros(3), couplings=((0, 1, 0.0), (1, 2, 0.0)))
    assert energy(zero, [1, -1, 1]) == 0.0


def test_energy_rejects_wrong_length():
    with pytest.raises(ValueError):
        energy(two_spin(), [1, 1, 1])


def test_energy_batch_matches_rows():
    model = ising.random_model(6, seed=2)
    ys = ising.all_states(6)
    batch = energy(model, ys)
    assert np.allclose(batch, [energy(model, y) for y in ys], atol=1e-12)


def test_local_conditional_examples():
    isolated = IsingModel(m=1, h=[0.0])
    assert local_conditional(isolated, [1], 0, 1.0) == pytest.approx(0.5)
    field = IsingModel(m=1, h=[1.0])
    assert local_conditional(field, [1], 0, 1.0) == pytest.approx(1 / (1 + math.e**2), abs=1e-12)
    model = ising.random_model(5, seed=1)
    assert local_conditional(model, [1, -1, 1, 1, -1], 3, 0.0) == pytest.approx(0.5)


@given(st.integers(0, 2**31), st.floats(0.0, 3.0))
def test_local_conditional_is_exact_conditional(seed, beta):
    model = ising.random_model(4, seed)
    ys = ising.all_states(4)
    weights = np.exp(-beta * energy(model, ys))
    for y_idx in range(0, 16, 5):
        y = ys[y_idx]
        flip = y.copy()
        flip[2] *= -1
        w_y = weights[y_idx]
        w_f = np.exp(-beta * energy(model, flip))
        assert local_conditional(model, y, 2, beta) == pytest.approx(w_y / (w_y + w_f), rel=1e-9)
        assert local_conditional(model, y, 2, beta) + local_conditional(model, flip, 2, beta) == pytest.approx(1.0)


def test_local_conditional_bad_arguments():
    with pytest.raises(ValueError):
        local_conditional(two_spin(), [1, 1], 2, 1.0)
    with pytest.raises(ValueError):
        local_conditional(two_spin(), [1, 1], 0, -1.0)


def test_model_validation():
    with pytest.raises(ValueError):
        IsingModel(m=2, h=[0, 0], couplings=((0, 0, 1.0),))
    with pytest.raises(ValueError):
        IsingModel(m=2, h=[0, 0], couplings=((0, 2, 1.0),))
    with pytest.raises(ValueError):
        IsingModel(m=2, h=[0, 0], couplings=((0, 1, 1.0), (1, 0, 2.0)))
    with pytest.raises(ValueError):
        IsingModel(m=0, h=[])
    with pytest.raises(ValueError):
        IsingModel(m=8, h=np.zeros(8), topology="grid3d", dims=(2, 2, 3))


def test_generators_are_deterministic():
    for family, size in [("independent", 100), ("chain", 50), ("sk", 20), ("grid3d", (3, 4, 5))]:
        assert ising.generate_problem(family, size, 7) == ising.generate_problem(family, size, 7)
    assert ising.generate_problem("chain", 50, 7) != ising.generate_problem("chain", 50, 8)


def test_generator_families():
    indep = ising.generate_problem("independent", 100, 7)
    assert indep.couplings == () and indep.topology == "independent"
    chain = ising.generate_problem("chain", 30, 1)
    assert [(i, j) for i, j, _ in chain.couplings] == [(i, i + 1) for i in range(29)]
    assert not np.any(chain.h)
    grid = ising.generate_problem("grid3d", (6, 6, 6), 3)
    assert grid.m == 216 and len(grid.couplings) == 648
    degrees = [len(nb) for nb, _ in grid.neighbours]
    assert set(degrees) == {6}


def test_grid_edges_match_lattice():
    import networkx as nx

    dims = (4, 3, 5)
    periodic = nx.grid_graph(dim=list(dims), periodic=True)
    mine = {tuple(e) for e in ising.grid_edges(dims, periodic=True)}
    # networkx nodes are (z, y, x) tuples when dim is given x first
    theirs = set()
    for a, b in periodic.edges():
        ia = ising.grid_index(a[2], a[1], a[0], dims)
        ib = ising.grid_index(b[2], b[1], b[0], dims)
        theirs.add((min(ia, ib), max(ia, ib)))
    assert mine == theirs
    assert len(ising.grid_edges(dims, periodic=False)) == nx.grid_graph(dim=list(dims)).number_of_edges()


def test_sk_coupling_variance():
    sk = ising.generate_problem("sk", 100, 11)
    J = np.array([c[2] for c in sk.couplings])
    assert len(J) == 4950
    assert abs(J.var() - 0.01) < 0.3 * 0.01


def test_gaussian_stream_is_standard_normal():
    z = ising.gaussian_stream(5, 200_000)
    assert abs(z.mean()) < 4 / math.sqrt(len(z))
    assert abs(z.var() - 1) < 0.02
    assert np.array_equal(z[:10], ising.gaussian_stream(5, 10))


def test_generator_rejects_bad_sizes():
    with pytest.raises(ValueError):
        ising.generate_problem("chain", 0, 1)
    with pytest.raises(ValueError):
        ising.generate_problem("grid3d", (3, 0, 3), 1)
    with pytest.raises(ValueError):
        ising.generate_problem("potts", 3, 1)


def test_exact_logz_independent():
    assert ising.exact_logz_independent(IsingModel(m=1, h=[0.0]), 1.0) == pytest.approx(math.log(2))
    assert ising.exact_logz_independent(IsingModel(m=1, h=[0.3]), 1.0) == pytest.approx(math.log(2 * math.cosh(0.3)))
    big = ising.generate_problem("independent", 100, 4)
    sub = IsingModel(m=10, h=big.h[:10], topology="independent")
    assert ising.exact_logz_independent(sub, 1.0) == pytest.approx(ising.enumerate_distribution(sub, 1.0).log_z, abs=1e-10)
    with pytest.raises(ValueError):
        ising.exact_logz_independent(two_spin(), 1.0)
    # large fields stay finite
    assert np.isfinite(ising.exact_logz_independent(IsingModel(m=1, h=[900.0]), 1.0))


def test_exact_logz_chain():
    pair = IsingModel(m=2, h=[0.0, 0.0], couplings=((0, 1, 1.0),), topology="chain")
    assert ising.exact_logz_chain(pair, 1.0) == pytest.approx(math.log(4 * math.cosh(1.0)), abs=1e-12)
    assert ising.exact_logz_chain(pair, 1.0) == pytest.approx(1.8200752, abs=1e-7)
    for seed in range(5):
        model = ising.generate_problem("chain", 12, seed)
        model = IsingModel(m=12, h=np.linspace(-1, 1, 12), couplings=model.couplings, topology="chain")
        assert ising.exact_logz_chain(model, 0.7) == pytest.approx(ising.enumerate_distribution(model, 0.7).log_z, abs=1e-10)
    with pytest.raises(ValueError):
        ising.exact_logz_chain(ising.random_model(4, 0), 1.0)


def test_enumeration():
    model = ising.random_model(5, 3)
    en = ising.enumerate_distribution(model, 1.0)
    assert en.probabilities.sum() == pytest.approx(1.0)
    assert len(en.states) == 32
    y = en.states[17]
    assert en.index_of(y) == 17
    with pytest.raises(ising.SizeGuardError):
        ising.enumerate_distribution(ising.generate_problem("independent", 30, 1), 1.0)
