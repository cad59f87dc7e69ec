import math
from dataclasses import dataclass

import numpy as np
import pytest

from mgaseq.evolve import (
    Archipelago, SENTINEL_FITNESS, SgaConfig, grid_search, island_rng, migrate,
    migration_edges, nelder_mead, new_island, sga_evolve, sga_step,
)


def sphere(x):
    return float(np.sum(np.asarray(x) ** 2))


def bounds_nd(n, lo=-5.0, hi=5.0):
    return np.full(n, lo), np.full(n, hi)


# --- SGA ------------------------------------------------------------------------

def test_sga_converges_on_sphere():
    cfg = SgaConfig(population_size=50, generations=100, seed=12)
    isl = new_island(0, bounds_nd(5), sphere, cfg)
    sga_evolve(isl, sphere, cfg)
    assert np.linalg.norm(isl.best_x) < 0.1


def test_elitism_keeps_best_after_one_generation():
    cfg = SgaConfig(population_size=20, generations=1, elitism_count=2, seed=0)
    isl = new_island(0, bounds_nd(4), sphere, cfg)
    initial_best = isl.best_f
    sga_evolve(isl, sphere, cfg)
    assert isl.best_f <= initial_best
    assert np.min(isl.fitnesses) <= initial_best


def test_best_fitness_never_increases():
    cfg = SgaConfig(population_size=24, generations=60, seed=5)
    isl = new_island(0, bounds_nd(3), sphere, cfg)
    history = [isl.best_f]
    for _ in range(cfg.generations):
        sga_step(isl, sphere, cfg)
        history.append(isl.best_f)
    assert all(b <= a for a, b in zip(history, history[1:]))


def test_same_seed_gives_bit_identical_trajectories():
    cfg = SgaConfig(population_size=30, generations=25, seed=77)
    runs = []
    for _ in range(2):
        isl = new_island(3, bounds_nd(4), sphere, cfg)
        sga_evolve(isl, sphere, cfg)
        runs.append((isl.population.copy(), isl.fitnesses.copy(), isl.best_x.copy()))
    assert np.array_equal(runs[0][0], runs[1][0])
    assert np.array_equal(runs[0][1], runs[1][1])
    assert np.array_equal(runs[0][2], runs[1][2])


def test_population_always_within_bounds():
    cfg = SgaConfig(population_size=40, generations=30, seed=9, mutation_sigma=0.5)
    lo, hi = bounds_nd(6, -1.0, 2.0)
    isl = new_island(0, (lo, hi), sphere, cfg)
    for _ in range(cfg.generations):
        sga_step(isl, sphere, cfg)
        assert np.all(isl.population >= lo) and np.all(isl.population <= hi)


def test_objective_failure_gets_sentinel():
    def exploding(x):
        if x[0] > 0:
            raise RuntimeError("boom")
        return float(np.sum(x**2))

    cfg = SgaConfig(population_size=20, generations=2, seed=1)
    isl = new_island(0, bounds_nd(2), exploding, cfg)
    assert np.all(isl.fitnesses[isl.population[:, 0] > 0] == SENTINEL_FITNESS)


def test_config_validation():
    with pytest.raises(ValueError):
        SgaConfig(population_size=3)
    with pytest.raises(ValueError):
        SgaConfig(population_size=21)
    with pytest.raises(ValueError):
        SgaConfig(generations=0)


# --- migration ---------------------------------------------------------------------

def _mini_archipelago(tbs, prob, seed=0):
    cfg = SgaConfig(population_size=10, generations=1, seed=seed)
    islands = [
        new_island(i, bounds_nd(3), sphere, cfg, target_body=tb)
        for i, tb in enumerate(tbs)
    ]
    return Archipelago(islands=islands, topology_probability=prob,
                       rng=np.random.default_rng(seed))


def test_migration_edges_same_tb_only():
    arch = _mini_archipelago(["M", "M", "E", None], 1.0)
    assert migration_edges(arch.islands) == [(0, 1), (1, 0)]


def test_zero_probability_changes_nothing():
    arch = _mini_archipelago(["M", "M"], 0.0)
    before = [isl.population.copy() for isl in arch.islands]
    migrate(arch, 0, sphere)
    for isl, pop in zip(arch.islands, before):
        assert np.array_equal(isl.population, pop)


def test_forced_edges_swap_pre_migration_bests():
    arch = _mini_archipelago(["M", "M"], 1.0)
    bests = [isl.population[np.argmin(isl.fitnesses)].copy() for isl in arch.islands]
    migrate(arch, 0, sphere)
    for k, other in ((0, 1), (1, 0)):
        pop = arch.islands[k].population
        assert any(np.array_equal(row, bests[other]) for row in pop)


def test_different_tbs_never_exchange():
    for trial in range(1000):
        arch = _mini_archipelago(["M", "E"], 1.0, seed=trial)
        before = [isl.population.copy() for isl in arch.islands]
        migrate(arch, 0, sphere)
        for isl, pop in zip(arch.islands, before):
            assert np.array_equal(isl.population, pop)


def test_migrants_clipped_to_destination_bounds():
    cfg = SgaConfig(population_size=10, generations=1, seed=4)
    a = new_island(0, (np.array([5.0]), np.array([6.0])), sphere, cfg, target_body="T")
    b = new_island(1, (np.array([0.0]), np.array([1.0])), sphere, cfg, target_body="T")
    arch = Archipelago(islands=[a, b], topology_probability=1.0,
                       rng=np.random.default_rng(0))
    migrate(arch, 0, sphere)
    assert np.all(b.population <= 1.0)
    assert np.all(a.population >= 5.0)


def test_island_rng_streams_differ_by_id():
    r0 = island_rng(42, 0).random(4)
    r1 = island_rng(42, 1).random(4)
    assert not np.array_equal(r0, r1)
    assert np.array_equal(island_rng(42, 0).random(4), r0)


# --- Nelder-Mead ----------------------------------------------------------------------

def test_nelder_mead_quadratic_bowl():
    center = np.array([1.0, -2.0, 0.5])
    x, f = nelder_mead(lambda v: float(np.sum((v - center) ** 2)),
                       np.zeros(3), bounds_nd(3), tol=1e-14, max_iter=5000)
    np.testing.assert_allclose(x, center, atol=1e-6)
    assert f < 1e-10


def test_nelder_mead_rosenbrock():
    def rosen(v):
        return float(100.0 * (v[1] - v[0] ** 2) ** 2 + (1 - v[0]) ** 2)

    x, f = nelder_mead(rosen, np.array([-1.2, 1.0]), bounds_nd(2), tol=1e-14,
                       max_iter=5000)
    np.testing.assert_allclose(x, [1.0, 1.0], atol=1e-4)


def test_nelder_mead_fixed_point_at_optimum():
    x0 = np.array([0.0, 0.0])
    x, f = nelder_mead(sphere, x0, bounds_nd(2))
    assert f <= sphere(x0)
    np.testing.assert_allclose(x, x0, atol=1e-6)


def test_nelder_mead_respects_bounds():
    lo, hi = np.array([1.0, 1.0]), np.array([3.0, 3.0])
    x, f = nelder_mead(sphere, np.array([2.5, 2.5]), (lo, hi), max_iter=500)
    assert np.all(x >= lo) and np.all(x <= hi)
    np.testing.assert_allclose(x, lo, atol=1e-6)


# --- grid search -----------------------------------------------------------------------

@dataclass
class PlantedProblem:
    """Minimum sits mid-window at a known value; dims: [date, a, b, rev]."""

    window_start: float

    def bounds(self):
        lo = np.array([self.window_start, -2.0, -2.0, 0.0])
        hi = np.array([self.window_start + 60.0, 2.0, 2.0, 2.999])
        return lo, hi

    @property
    def rev_slice(self):
        return slice(3, 4)

    def fitness(self, x):
        return float(
            ((x[0] - (self.window_start + 30.0)) / 60.0) ** 2
            + x[1] ** 2 + x[2] ** 2 + 1.0
        )


def test_grid_partition_count_and_contract():
    cfg = SgaConfig(population_size=30, generations=20, seed=2)
    cells = grid_search(PlantedProblem, (61400.0, 61520.0), cfg)
    assert len(cells) == 2
    assert [c.window_start for c in cells] == [61400.0, 61460.0]
    for cell in cells:
        assert cell.refined_dv <= cell.best_dv
        # planted optimum: f=1 at date = window_start + 30, a = b = 0
        assert cell.refined_dv == pytest.approx(1.0, abs=1e-3)
        assert cell.departure_mjd == pytest.approx(cell.window_start + 30.0, abs=1.0)


def test_grid_rejects_uneven_window():
    cfg = SgaConfig(population_size=10, generations=1, seed=0)
    with pytest.raises(ValueError):
        grid_search(PlantedProblem, (61400.0, 61430.0), cfg)
