"""Recursive target-body search over the flyby-sequence tree.

Each recursion Monte-Carlo samples unevaluated sequences from the sub-tree
under the current pseudo-sequence (evenly across first-position target
bodies), scores every sample with the island-parallel inner loop, blends
island costs into a per-sequence fitness f_s and per-target-body fitness
f_tb, then greedily fixes the best target body and recurses into its
sub-tree. No sequence is ever evaluated twice; every record found along the
way enters the final ranking.

Fitness blending conventions: chi weights min against mean delta-v across
islands at the sequence level, xi weights min against mean f_s at the
target-body level.
"""

from __future__ import annotations

import hashlib
import itertools
import logging
import math
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .ephemeris import Body, Planet, builtin_bodies
from .evolve import Archipelago, SgaConfig, evolve_archipelago, new_island
from .ltto import TOF_BOUNDS_DAYS, LttoProblem, Sequence, WINDOW_DAYS
from .shaping import SENTINEL_DV

log = logging.getLogger(__name__)

_MIGRATION_STREAM = 0x6D696772     # distinct entropy tag for migration draws
_SAMPLER_STREAM = 0x73616D70       # and for the Monte-Carlo sampler


class RtbaError(Exception):
    pass


@dataclass
class RtbaConfig:
    """Outer-loop configuration; defaults follow the tuned parameter table."""

    departure: Planet = Planet.EARTH
    arrival: Planet = Planet.JUPITER
    max_gas: int = 3
    q: float = 0.3
    p: int = 14
    cpu_count: int = 42
    max_recursions: int = 2
    xi: float = 0.7
    chi: float = 0.7
    departure_window: tuple[float, float] = (61400.0, 63400.0)
    seed: int = 0
    sga: SgaConfig = field(default_factory=SgaConfig)
    free_count: int = 1
    tof_days: tuple[float, float] = TOF_BOUNDS_DAYS
    bodies: dict[Planet, Body] | None = None
    max_thrust_accel: float | None = None

    def __post_init__(self) -> None:
        if not (0.0 < self.q <= 1.0):
            raise ValueError("q must be in (0, 1]")
        if not (0.0 <= self.xi <= 1.0 and 0.0 <= self.chi <= 1.0):
            raise ValueError("xi and chi must be in [0, 1]")
        if self.p < 1:
            raise ValueError("p must be >= 1")
        if self.max_gas < 0:
            raise ValueError("max_gas must be >= 0")
        if self.cpu_count % self.p != 0:
            warnings.warn(
                f"cpu_count={self.cpu_count} is not a multiple of p={self.p}; "
                f"{self.cpu_count // self.p} sequences will run concurrently",
                stacklevel=2,
            )

    def system(self) -> dict[Planet, Body]:
        return self.bodies if self.bodies is not None else builtin_bodies()


@dataclass(frozen=True)
class SequenceRecord:
    """One evaluated sequence with all island costs and its fitness."""

    sequence: Sequence
    island_dvs: tuple[float, ...]
    f_s: float
    recursion_found: int
    feasible: bool
    best_decision: tuple[float, ...]

    @property
    def min_dv(self) -> float:
        return min(self.island_dvs)

    @property
    def mean_dv(self) -> float:
        return sum(self.island_dvs) / len(self.island_dvs)

    def to_json_dict(self) -> dict:
        return {
            "sequence": str(self.sequence),
            "island_dvs_ms": [float(v) for v in self.island_dvs],
            "f_s_ms": float(self.f_s),
            "recursion_found": int(self.recursion_found),
            "feasible": bool(self.feasible),
            "best_decision": [float(v) for v in self.best_decision],
        }


@dataclass(frozen=True)
class TbCandidate:
    """A target body with every evaluated sequence that passes through it."""

    body: Planet
    member_records: tuple[SequenceRecord, ...]
    f_tb: float = math.nan


@dataclass
class SearchState:
    """Mutable progress of one outer-loop run."""

    pseudo_sequence: list[Planet] = field(default_factory=list)
    records: dict[str, SequenceRecord] = field(default_factory=dict)
    recursion_index: int = 0
    exhausted: bool = False
    finished: bool = False
    sampler_rng: np.random.Generator | None = None

    @property
    def evaluated_set(self) -> set[str]:
        return set(self.records)


def complexity(m: int, n: int) -> int:
    """Number of sequences with 0..n assists over m candidates: sum of m^i."""
    if m < 1 or n < 0:
        raise ValueError("complexity needs m >= 1 and n >= 0")
    return sum(m**i for i in range(n + 1))


def sequence_fitness(island_dvs, chi: float) -> float:
    """Blend of the minimum and mean island delta-v, weighted by chi."""
    dvs = list(island_dvs)
    return chi * min(dvs) + (1.0 - chi) * (sum(dvs) / len(dvs))


def candidate_bodies(cfg: RtbaConfig) -> list[Body]:
    """Assist candidates: bodies no farther out than the arrival planet,
    the arrival planet included, sorted by semi-major axis."""
    system = cfg.system()
    if cfg.arrival not in system or cfg.departure not in system:
        raise RtbaError("departure/arrival body missing from the system")
    a_arr = system[cfg.arrival].elements.a
    picked = [b for b in system.values() if b.elements.a <= a_arr]
    return sorted(picked, key=lambda b: (b.elements.a, b.id.letter))


def _sequence_seed(master_seed: int, seq: Sequence) -> int:
    """Stable per-sequence seed; independent of evaluation order."""
    digest = hashlib.sha256(f"{master_seed}|{seq}".encode()).digest()
    return int.from_bytes(digest[:8], "big")


def _window_tiles(window: tuple[float, float], p: int) -> list[float]:
    span = window[1] - window[0]
    n_tiles = max(1, int(span // WINDOW_DAYS))
    return [window[0] + WINDOW_DAYS * (i % n_tiles) for i in range(p)]


def evaluate_sequence(seq: Sequence, cfg: RtbaConfig) -> SequenceRecord:
    """Score one sequence with p islands tiling the departure window.

    Islands of the same sequence share its target body, so they form a
    fully-connected migration group (direct transfers get a per-sequence
    label for the same effect). The record's fitness is the chi blend of
    the islands' best costs.
    """
    system = cfg.system()
    problem = LttoProblem(
        sequence=seq, system=system, window_start=cfg.departure_window[0],
        free_count=cfg.free_count, tof_days=cfg.tof_days,
        max_thrust_accel=cfg.max_thrust_accel,
    )
    tb_label = seq.ga_bodies[0].letter if seq.n_gas else f"direct:{seq}"
    seq_seed = _sequence_seed(cfg.seed, seq)
    islands = []
    for i, w0 in enumerate(_window_tiles(cfg.departure_window, cfg.p)):
        prob_i = replace(problem, window_start=w0)
        islands.append(new_island(
            i, prob_i.bounds(), problem.fitness, cfg.sga,
            target_body=tb_label, window_start=w0, seed=seq_seed,
        ))
    arch = Archipelago(
        islands=islands,
        topology_probability=cfg.sga.topology_probability,
        rng=np.random.default_rng(np.random.SeedSequence(entropy=(seq_seed, _MIGRATION_STREAM))),
    )
    evolve_archipelago(arch, problem.fitness, cfg.sga)
    dvs = tuple(isl.best_f for isl in islands)
    best = min(islands, key=lambda isl: isl.best_f)
    return SequenceRecord(
        sequence=seq,
        island_dvs=dvs,
        f_s=sequence_fitness(dvs, cfg.chi),
        recursion_found=-1,
        feasible=min(dvs) < SENTINEL_DV,
        best_decision=tuple(float(v) for v in best.best_x),
    )


def _branch_sequences(cfg: RtbaConfig, ps: list[Planet], tb: Planet,
                      candidates: list[Planet]) -> list[str]:
    """All full sequence strings under the pseudo-sequence starting with tb."""
    suffix_max = cfg.max_gas - len(ps) - 1
    prefix = cfg.departure.letter + "".join(p.letter for p in ps) + tb.letter
    out = []
    for length in range(suffix_max + 1):
        for combo in itertools.product([c.letter for c in candidates], repeat=length):
            out.append(prefix + "".join(combo) + cfg.arrival.letter)
    return out


def sample_sequences(state: SearchState, cfg: RtbaConfig, count: int) -> list[Sequence]:
    """Draw unevaluated sequences from the sub-tree under the pseudo-sequence.

    The draw is uniform within each first-position target-body branch, with
    counts spread round-robin across branches (remainders go to the branches
    of smallest semi-major axis). When branches run dry their quota is
    redistributed; if the whole sub-tree is exhausted, fewer sequences come
    back and the state is flagged.
    """
    if count < 1:
        return []
    candidates = [b.id for b in candidate_bodies(cfg)]
    if cfg.max_gas - len(state.pseudo_sequence) < 1:
        state.exhausted = True
        return []
    pools = {}
    for tb in candidates:
        fresh = [s for s in _branch_sequences(cfg, state.pseudo_sequence, tb, candidates)
                 if s not in state.records]
        pools[tb] = sorted(fresh)

    quota = dict.fromkeys(candidates, count // len(candidates))
    for tb in candidates[:count % len(candidates)]:
        quota[tb] += 1

    picked: list[Sequence] = []
    pending = count
    while pending > 0 and any(pools.values()):
        for tb in candidates:
            take = min(quota[tb], len(pools[tb]), pending)
            if take <= 0:
                continue
            idx = state.sampler_rng.choice(len(pools[tb]), size=take, replace=False)
            chosen = sorted(int(j) for j in idx)
            for i in chosen:
                picked.append(Sequence.from_string(pools[tb][i]))
            for i in reversed(chosen):
                del pools[tb][i]
            pending -= take
            quota[tb] = 0
        if pending > 0:
            # redistribute shortfall over branches that still have sequences
            alive = [tb for tb in candidates if pools[tb]]
            if not alive:
                break
            quota = dict.fromkeys(candidates, 0)
            for k, tb in enumerate(itertools.islice(itertools.cycle(alive), pending)):
                quota[tb] += 1
    if pending > 0:
        state.exhausted = True
    return picked


def tb_candidates(records, candidates: list[Planet], depth: int) -> list[TbCandidate]:
    """Group evaluated records by the body they fly by at a given position."""
    out = []
    for tb in candidates:
        members = tuple(
            rec for rec in records
            if len(rec.sequence.ga_bodies) > depth and rec.sequence.ga_bodies[depth] == tb
        )
        out.append(TbCandidate(body=tb, member_records=members))
    return out


def tb_fitness(cands: list[TbCandidate], xi: float) -> list[TbCandidate]:
    """Score candidates as the xi blend of min and mean member f_s; empty
    candidates are dropped with a warning."""
    scored = []
    for cand in cands:
        if not cand.member_records:
            warnings.warn(f"target body {cand.body.letter} has no evaluated sequences",
                          stacklevel=2)
            continue
        fs = [rec.f_s for rec in cand.member_records]
        scored.append(replace(cand, f_tb=xi * min(fs) + (1.0 - xi) * (sum(fs) / len(fs))))
    return scored


def _evaluate_batch(seqs, cfg, evaluator, workers):
    """Evaluate sequences in deterministic order, chunked per the CPU budget."""
    chunk = max(1, cfg.cpu_count // cfg.p)
    out = []
    if workers <= 1:
        for seq in seqs:
            out.append(evaluator(seq, cfg))
        return out
    with ProcessPoolExecutor(max_workers=workers) as pool:
        for k in range(0, len(seqs), chunk):
            batch = seqs[k:k + chunk]
            out.extend(pool.map(evaluator, batch, itertools.repeat(cfg)))
    return out


def run_recursion(state: SearchState, cfg: RtbaConfig, evaluator=evaluate_sequence,
                  workers: int = 1, on_record=None) -> SearchState:
    """One recursion: sample, evaluate, score target bodies, extend the PS."""
    if state.finished or state.recursion_index >= cfg.max_recursions:
        raise RtbaError("recursion limit reached")
    candidates = [b.id for b in candidate_bodies(cfg)]
    n_remaining = cfg.max_gas - len(state.pseudo_sequence)
    total = complexity(len(candidates), n_remaining)
    n_eval = math.ceil(cfg.q * total)

    batch: list[Sequence] = []
    bare = Sequence(tuple([cfg.departure] + state.pseudo_sequence + [cfg.arrival]))
    budget = n_eval
    if str(bare) not in state.records:
        batch.append(bare)
        budget -= 1
    if budget > 0:
        batch.extend(sample_sequences(state, cfg, budget))

    if not batch:
        state.finished = True
        state.exhausted = True
        return state

    log.info("recursion %d: PS=%s, complexity %d, evaluating %d sequences",
             state.recursion_index, "".join(p.letter for p in state.pseudo_sequence),
             total, len(batch))
    for rec in _evaluate_batch(batch, cfg, evaluator, workers):
        rec = replace(rec, recursion_found=state.recursion_index)
        state.records[str(rec.sequence)] = rec
        if on_record is not None:
            on_record(rec)

    if n_remaining >= 1:
        scored = tb_fitness(
            tb_candidates(state.records.values(), candidates, state.recursion_index),
            cfg.xi,
        )
        if scored:
            system = cfg.system()
            best = min(scored, key=lambda c: (c.f_tb, system[c.body].elements.a, c.body.letter))
            state.pseudo_sequence.append(best.body)
            log.info("recursion %d fixed target body %s (f_tb %.1f m/s)",
                     state.recursion_index, best.body.letter, best.f_tb)
        else:
            state.finished = True
    else:
        state.finished = True
    state.recursion_index += 1
    return state


def ranking_key(system: dict[Planet, Body]):
    def key(rec: SequenceRecord):
        return (rec.f_s, tuple(system[p].elements.a for p in rec.sequence.bodies),
                str(rec.sequence))
    return key


def extract_optimal_group(ranking: list[SequenceRecord]) -> list[SequenceRecord]:
    """Records within 30 percent or 5 km/s of the lowest f_s."""
    if not ranking:
        raise RtbaError("empty ranking")
    f_min = min(rec.f_s for rec in ranking)
    return [rec for rec in ranking if rec.f_s <= 1.3 * f_min or rec.f_s <= f_min + 5000.0]


def evaluated_fraction(state: SearchState, cfg: RtbaConfig) -> float:
    """Share of the full initial tree that was actually evaluated."""
    total = complexity(len(candidate_bodies(cfg)), cfg.max_gas)
    return len(state.records) / total


@dataclass(frozen=True)
class RtbaResult:
    ranking: tuple[SequenceRecord, ...]
    optimal_group: tuple[SequenceRecord, ...]
    pseudo_sequence: tuple[Planet, ...]
    evaluated_fraction: float
    recursions_run: int


def run_rtba(cfg: RtbaConfig, evaluator=evaluate_sequence, workers: int = 1,
             on_record=None) -> RtbaResult:
    """Run recursions to the configured limit and rank everything found."""
    state = SearchState(
        sampler_rng=np.random.default_rng(
            np.random.SeedSequence(entropy=(cfg.seed, _SAMPLER_STREAM))
        ),
    )
    while state.recursion_index < cfg.max_recursions and not state.finished:
        run_recursion(state, cfg, evaluator=evaluator, workers=workers, on_record=on_record)
    ranking = tuple(sorted(state.records.values(), key=ranking_key(cfg.system())))
    return RtbaResult(
        ranking=ranking,
        optimal_group=tuple(extract_optimal_group(list(ranking))),
        pseudo_sequence=tuple(state.pseudo_sequence),
        evaluated_fraction=evaluated_fraction(state, cfg),
        recursions_run=state.recursion_index,
    )
