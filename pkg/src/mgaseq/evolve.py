"""Evolutionary machinery: simple GA, island archipelago, local refinement.

Islands evolve independently between generation barriers; at each barrier,
every directed edge between islands sharing a target body fires with a small
probability and copies the source's best individual over the destination's
worst. All randomness flows through per-island generators derived from the
master seed, so a full archipelago run is bit-reproducible regardless of how
the islands are scheduled.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable, Hashable, Sequence as Seq

import numpy as np

SENTINEL_FITNESS = 1.0e12


@dataclass
class SgaConfig:
    """Tuned optimizer parameters; defaults follow the problem tuning."""

    population_size: int = 1200
    generations: int = 300
    crossover_rate: float = 0.9
    mutation_rate: float | None = None      # None -> 1/dimension
    mutation_sigma: float = 0.1             # fraction of each gene's range
    tournament_size: int = 2
    elitism_count: int = 2
    topology_probability: float = 0.01
    seed: int = 0

    def __post_init__(self) -> None:
        if self.population_size < 4 or self.population_size % 2:
            raise ValueError("population_size must be even and >= 4")
        if self.generations < 1:
            raise ValueError("generations must be >= 1")


@dataclass
class Island:
    """One population plus its own random stream."""

    id: int
    lower: np.ndarray
    upper: np.ndarray
    rng: np.random.Generator
    population: np.ndarray = field(default=None)  # (N, d)
    fitnesses: np.ndarray = field(default=None)   # (N,)
    target_body: Hashable = None
    window_start: float | None = None
    best_x: np.ndarray = field(default=None)
    best_f: float = math.inf
    generation: int = 0


def island_rng(master_seed: int, island_id: int) -> np.random.Generator:
    """Per-island stream derived from the master seed by island id."""
    return np.random.default_rng(np.random.SeedSequence(entropy=(master_seed, island_id)))


def new_island(island_id: int, bounds, objective, config: SgaConfig,
               target_body: Hashable = None, window_start: float | None = None,
               seed: int | None = None) -> Island:
    """Initialize an island with a uniform random in-bounds population."""
    lower = np.asarray(bounds[0], dtype=float)
    upper = np.asarray(bounds[1], dtype=float)
    rng = island_rng(config.seed if seed is None else seed, island_id)
    isl = Island(id=island_id, lower=lower, upper=upper, rng=rng,
                 target_body=target_body, window_start=window_start)
    isl.population = rng.uniform(lower, upper, size=(config.population_size, lower.size))
    isl.fitnesses = _score(objective, isl.population)
    _track_best(isl)
    return isl


def _score(objective, pop: np.ndarray) -> np.ndarray:
    out = np.empty(len(pop))
    for i, x in enumerate(pop):
        try:
            out[i] = float(objective(x))
        except Exception:
            out[i] = SENTINEL_FITNESS
        if not math.isfinite(out[i]):
            out[i] = SENTINEL_FITNESS
    return out


def _track_best(isl: Island) -> None:
    i = int(np.argmin(isl.fitnesses))
    if isl.fitnesses[i] < isl.best_f:
        isl.best_f = float(isl.fitnesses[i])
        isl.best_x = isl.population[i].copy()


def sga_step(isl: Island, objective, config: SgaConfig) -> None:
    """One generation: tournament selection, uniform crossover, Gaussian
    mutation clipped to bounds, elitism."""
    pop, fit, rng = isl.population, isl.fitnesses, isl.rng
    n, dim = pop.shape
    n_children = n - config.elitism_count
    pm = config.mutation_rate if config.mutation_rate is not None else 1.0 / dim
    sigma = config.mutation_sigma * (isl.upper - isl.lower)

    contenders = rng.integers(0, n, size=(n_children, 2, config.tournament_size))
    picked = np.take_along_axis(
        contenders, np.argmin(fit[contenders], axis=2)[..., None], axis=2
    )[..., 0]
    parent_a = pop[picked[:, 0]]
    parent_b = pop[picked[:, 1]]
    cross = rng.random(n_children) < config.crossover_rate
    take_b = rng.random((n_children, dim)) < 0.5
    children = np.where(cross[:, None] & take_b, parent_b, parent_a)
    mutate = rng.random((n_children, dim)) < pm
    noise = rng.normal(0.0, 1.0, size=(n_children, dim)) * sigma
    children = np.clip(children + mutate * noise, isl.lower, isl.upper)

    elite_idx = np.argsort(fit, kind="stable")[:config.elitism_count]
    isl.population = np.vstack([pop[elite_idx], children])
    isl.fitnesses = np.concatenate([fit[elite_idx], _score(objective, children)])
    isl.generation += 1
    _track_best(isl)


def sga_evolve(isl: Island, objective, config: SgaConfig) -> Island:
    """Run the configured number of generations on one island."""
    for _ in range(config.generations):
        sga_step(isl, objective, config)
    return isl


@dataclass
class Archipelago:
    """Islands plus the same-target-body migration topology."""

    islands: list[Island]
    topology_probability: float = 0.01
    rng: np.random.Generator = field(default_factory=lambda: np.random.default_rng(0))


def migration_edges(islands: Seq[Island]) -> list[tuple[int, int]]:
    """Directed (source, destination) index pairs between same-TB islands."""
    edges = []
    for i, src in enumerate(islands):
        for j, dst in enumerate(islands):
            if i != j and src.target_body is not None and src.target_body == dst.target_body:
                edges.append((i, j))
    return edges


def migrate(arch: Archipelago, generation: int, objective=None) -> None:
    """Synchronous best-replaces-worst exchange over the same-TB edges.

    Sources are snapshotted before any replacement. A migrant is clipped to
    the destination's bounds (islands may own different departure windows);
    if clipping changes it and an objective is given, it is re-scored.
    """
    islands = arch.islands
    snapshot_best = []
    for isl in islands:
        i = int(np.argmin(isl.fitnesses))
        snapshot_best.append((isl.population[i].copy(), float(isl.fitnesses[i])))

    incoming: dict[int, list[tuple[np.ndarray, float]]] = {}
    for (i, j) in migration_edges(islands):
        if arch.rng.random() < arch.topology_probability:
            incoming.setdefault(j, []).append(snapshot_best[i])

    for j, migrants in sorted(incoming.items()):
        dst = islands[j]
        worst = np.argsort(dst.fitnesses, kind="stable")[::-1][:len(migrants)]
        for slot, (x, f) in zip(worst, migrants):
            clipped = np.clip(x, dst.lower, dst.upper)
            if not np.array_equal(clipped, x):
                f = _score(objective, clipped[None, :])[0] if objective else SENTINEL_FITNESS
            dst.population[slot] = clipped
            dst.fitnesses[slot] = f
        _track_best(dst)


def evolve_archipelago(arch: Archipelago, objective, config: SgaConfig) -> list[Island]:
    """Evolve all islands with a migration barrier at every generation."""
    for gen in range(config.generations):
        for isl in arch.islands:
            sga_step(isl, objective, config)
        migrate(arch, gen, objective)
    return arch.islands


def nelder_mead(objective, x0, bounds, tol: float = 1e-8,
                max_iter: int = 2000) -> tuple[np.ndarray, float]:
    """Nelder-Mead simplex minimization on a box, returning the best seen.

    Out-of-box trial points are projected back onto the bounds. Terminates
    when the simplex fitness spread drops below tol or the evaluation budget
    runs out; never returns a point worse than x0.
    """
    lower = np.asarray(bounds[0], dtype=float)
    upper = np.asarray(bounds[1], dtype=float)
    x0 = np.clip(np.asarray(x0, dtype=float), lower, upper)
    dim = x0.size

    def f(x):
        try:
            val = float(objective(x))
        except Exception:
            return SENTINEL_FITNESS
        return val if math.isfinite(val) else SENTINEL_FITNESS

    step = 0.05 * (upper - lower)
    step[step == 0.0] = 1e-8
    simplex = [x0]
    for k in range(dim):
        v = x0.copy()
        v[k] = v[k] + step[k] if v[k] + step[k] <= upper[k] else v[k] - step[k]
        simplex.append(v)
    simplex = np.array(simplex)
    values = np.array([f(x) for x in simplex])
    best_x, best_f = simplex[np.argmin(values)].copy(), float(np.min(values))

    alpha, gamma, rho, sig = 1.0, 2.0, 0.5, 0.5
    for _ in range(max_iter):
        order = np.argsort(values, kind="stable")
        simplex, values = simplex[order], values[order]
        if values[-1] - values[0] < tol:
            break
        centroid = simplex[:-1].mean(axis=0)

        def clipped(point):
            return np.clip(point, lower, upper)

        xr = clipped(centroid + alpha * (centroid - simplex[-1]))
        fr = f(xr)
        if fr < values[0]:
            xe = clipped(centroid + gamma * (xr - centroid))
            fe = f(xe)
            simplex[-1], values[-1] = (xe, fe) if fe < fr else (xr, fr)
        elif fr < values[-2]:
            simplex[-1], values[-1] = xr, fr
        else:
            xc = clipped(centroid + rho * (simplex[-1] - centroid))
            fc = f(xc)
            if fc < values[-1]:
                simplex[-1], values[-1] = xc, fc
            else:
                for k in range(1, dim + 1):
                    simplex[k] = clipped(simplex[0] + sig * (simplex[k] - simplex[0]))
                    values[k] = f(simplex[k])
        i = int(np.argmin(values))
        if values[i] < best_f:
            best_f, best_x = float(values[i]), simplex[i].copy()
    return best_x, best_f


@dataclass(frozen=True)
class GridCell:
    """Result of one departure-date interval of a grid search."""

    window_start: float
    best_dv: float
    refined_dv: float
    departure_mjd: float
    best_x: np.ndarray
    refined_x: np.ndarray


def refine_solution(problem_factory, x_best, bounds, tol=1e-8, max_iter=2000):
    """Nelder-Mead from a GA optimum with integer revolution genes frozen."""
    objective, frozen_slice = problem_factory
    x_best = np.asarray(x_best, dtype=float)
    free_mask = np.ones(x_best.size, dtype=bool)
    free_mask[frozen_slice] = False

    def reduced(xr):
        full = x_best.copy()
        full[free_mask] = xr
        return objective(full)

    lo = np.asarray(bounds[0], dtype=float)[free_mask]
    hi = np.asarray(bounds[1], dtype=float)[free_mask]
    xr, fr = nelder_mead(reduced, x_best[free_mask], (lo, hi), tol, max_iter)
    full = x_best.copy()
    full[free_mask] = xr
    return full, fr


def grid_search(problem_for_window: Callable[[float], object], window, config: SgaConfig,
                islands_per_interval: int = 1, interval_days: float = 60.0,
                nm_tol: float = 1e-8, nm_max_iter: int = 2000) -> list[GridCell]:
    """Partition a departure window into fixed intervals and optimize each.

    problem_for_window(window_start) must return an object exposing
    bounds(), fitness(x) and a rev-gene slice attribute rev_slice; each
    interval is SGA-optimized, then locally refined with revolutions frozen.
    The refined cost can never exceed the raw cost since the refinement
    starts at the GA optimum and keeps the best point seen.
    """
    start, end = float(window[0]), float(window[1])
    n_intervals = (end - start) / interval_days
    if n_intervals <= 0 or abs(n_intervals - round(n_intervals)) > 1e-9:
        raise ValueError(
            f"window span {end - start} days must be a multiple of {interval_days}"
        )
    cells = []
    for k in range(int(round(n_intervals))):
        w0 = start + k * interval_days
        problem = problem_for_window(w0)
        bounds = problem.bounds()
        best_x, best_f = None, math.inf
        for sub in range(islands_per_interval):
            isl = new_island(k * islands_per_interval + sub, bounds, problem.fitness, config,
                             target_body=None, window_start=w0)
            sga_evolve(isl, problem.fitness, config)
            if isl.best_f < best_f:
                best_x, best_f = isl.best_x, isl.best_f
        refined_x, refined_f = refine_solution(
            (problem.fitness, problem.rev_slice), best_x, bounds, nm_tol, nm_max_iter,
        )
        cells.append(GridCell(
            window_start=w0, best_dv=best_f, refined_dv=min(refined_f, best_f),
            departure_mjd=float(refined_x[0]), best_x=best_x, refined_x=refined_x,
        ))
    return cells
