"""Shared fixtures; the expensive stochastic-influence battery is built once."""

import pytest

import riskreg as rr
from riskreg.bench import default_grid

BENCHMARK_VARIANTS = [
    ("baart", None), ("deriv2", None), ("foxgood", None), ("gravity", None),
    ("heat", 1), ("heat", 5), ("i_laplace", 1), ("i_laplace", 2),
    ("i_laplace", 3), ("phillips", None), ("shaw", None),
]


@pytest.fixture(scope="session")
def benchmarks64():
    """All eleven benchmark variants at n = 64, with their decompositions."""
    out = []
    for name, variant in BENCHMARK_VARIANTS:
        p = rr.make_problem(name, variant, 64)
        out.append((p, rr.svd(p.A)))
    return out


@pytest.fixture(scope="session")
def shaw32():
    p = rr.make_problem("shaw", None, 32)
    return p, rr.svd(p.A)


@pytest.fixture(scope="session")
def shaw64():
    p = rr.make_problem("shaw", None, 64)
    return p, rr.svd(p.A)


@pytest.fixture(scope="session")
def shaw64_stochastic_battery(shaw64):
    """Fifty stochastic influence paths on the shaw(64) study grid, 200 probes
    each; shared by the matrix-free agreement tests."""
    p, dec = shaw64
    grid = default_grid(float(dec.s[0]) ** 2).values
    lam1 = rr.largest_eigenvalue(p.A, seed=11)
    paths = [rr.influence_path_stochastic(p.A, grid, probes=200, seed=seed, lam1=lam1)
             for seed in range(50)]
    return {"problem": p, "dec": dec, "grid": grid, "lam1": lam1, "paths": paths}
