"""Command-line surface: config parsing, run orchestration, artifact output.

Config files are flat ``key = value`` documents ('#' starts a comment).
Every artifact is written atomically (temp file + rename) from the
orchestrating thread; the journal additionally flushes per record so a
failed run still leaves the sequences it scored.

Exit codes: 0 success, 2 configuration error, 3 runtime failure.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import os
import sys
import time
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import ltto, rtba, shaping
from .ephemeris import Planet, builtin_bodies, load_bodies_csv
from .evolve import SgaConfig, grid_search
from .ltto import LttoProblem, Sequence, TOF_BOUNDS_DAYS
from .rtba import RtbaConfig, run_rtba

log = logging.getLogger(__name__)

WORKERS_ENV = "MGASEQ_WORKERS"

MODES = ("ltto", "grid", "rtba")


class ConfigError(Exception):
    pass


@dataclass
class RunConfig:
    """Validated, fully-defaulted run description."""

    mode: str = "rtba"
    sequence: str | None = None
    output_dir: Path = Path("out")
    seed: int = 0
    workers: int | None = None
    elements_file: Path | None = None
    top_k: int = 5
    rtba: RtbaConfig = field(default_factory=RtbaConfig)
    sga: SgaConfig = field(default_factory=SgaConfig)

    def flat_dict(self) -> dict:
        """The flat key/value form this config round-trips through."""
        out = {
            "mode": self.mode,
            "seed": self.seed,
            "output_dir": str(self.output_dir),
            "departure": self.rtba.departure.letter,
            "arrival": self.rtba.arrival.letter,
            "max_gas": self.rtba.max_gas,
            "q": self.rtba.q,
            "xi": self.rtba.xi,
            "chi": self.rtba.chi,
            "p": self.rtba.p,
            "cpu_count": self.rtba.cpu_count,
            "max_recursions": self.rtba.max_recursions,
            "window_start": self.rtba.departure_window[0],
            "window_end": self.rtba.departure_window[1],
            "free_count": self.rtba.free_count,
            "tof_min": self.rtba.tof_days[0],
            "tof_max": self.rtba.tof_days[1],
            "population_size": self.sga.population_size,
            "generations": self.sga.generations,
            "crossover_rate": self.sga.crossover_rate,
            "mutation_sigma": self.sga.mutation_sigma,
            "tournament_size": self.sga.tournament_size,
            "elitism_count": self.sga.elitism_count,
            "topology_probability": self.sga.topology_probability,
            "top_k": self.top_k,
        }
        if self.sequence is not None:
            out["sequence"] = self.sequence
        if self.sga.mutation_rate is not None:
            out["mutation_rate"] = self.sga.mutation_rate
        if self.elements_file is not None:
            out["elements_file"] = str(self.elements_file)
        if self.workers is not None:
            out["workers"] = self.workers
        if self.rtba.max_thrust_accel is not None:
            out["max_thrust_accel"] = self.rtba.max_thrust_accel
        return out


_INT_KEYS = {"seed", "max_gas", "p", "cpu_count", "max_recursions", "free_count",
             "population_size", "generations", "tournament_size", "elitism_count",
             "workers", "top_k"}
_FLOAT_KEYS = {"q", "xi", "chi", "window_start", "window_end", "tof_min", "tof_max",
               "crossover_rate", "mutation_rate", "mutation_sigma",
               "topology_probability", "max_thrust_accel"}
_STR_KEYS = {"mode", "sequence", "output_dir", "departure", "arrival", "elements_file"}
_ALL_KEYS = _INT_KEYS | _FLOAT_KEYS | _STR_KEYS


def _read_kv_file(path) -> dict[str, str]:
    out = {}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected 'key = value', got {raw!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        out[key] = value
    return out


def parse_config(file=None, overrides: dict | None = None) -> RunConfig:
    """Build a RunConfig from an optional key=value file plus overrides.

    Unknown keys and out-of-bounds values are rejected with the offending
    field named; time-of-flight bounds beyond the tuned defaults are allowed
    with a warning since they are a deliberate user extension.
    """
    kv: dict = {}
    if file is not None:
        kv.update(_read_kv_file(file))
    for key, value in (overrides or {}).items():
        if value is not None:
            kv[key] = value

    unknown = set(kv) - _ALL_KEYS
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(sorted(unknown))}")

    def get(key, default=None):
        if key not in kv:
            return default
        raw = kv[key]
        try:
            if key in _INT_KEYS:
                return int(raw)
            if key in _FLOAT_KEYS:
                return float(raw)
        except (TypeError, ValueError):
            raise ConfigError(f"config key {key}: cannot parse {raw!r}") from None
        return raw

    mode = str(get("mode", "rtba")).lower()
    if mode not in MODES:
        raise ConfigError(f"mode must be one of {MODES}, got {mode!r}")

    sequence = get("sequence")
    if sequence is not None:
        try:
            Sequence.from_string(str(sequence))
        except ltto.SequenceError as exc:
            raise ConfigError(str(exc)) from None
        sequence = str(sequence).upper()
    if mode in ("ltto", "grid") and sequence is None:
        raise ConfigError(f"mode {mode} requires a sequence")

    tof_min = get("tof_min", TOF_BOUNDS_DAYS[0])
    tof_max = get("tof_max", TOF_BOUNDS_DAYS[1])
    if tof_min <= 0 or tof_max <= tof_min:
        raise ConfigError("tof bounds must satisfy 0 < tof_min < tof_max")
    if tof_max > TOF_BOUNDS_DAYS[1] or tof_min < TOF_BOUNDS_DAYS[0]:
        warnings.warn(
            f"tof bounds [{tof_min}, {tof_max}] days extend the tuned "
            f"defaults {TOF_BOUNDS_DAYS}; accepted as a user override",
            stacklevel=2,
        )

    try:
        sga = SgaConfig(
            population_size=get("population_size", 1200),
            generations=get("generations", 300),
            crossover_rate=get("crossover_rate", 0.9),
            mutation_rate=get("mutation_rate"),
            mutation_sigma=get("mutation_sigma", 0.1),
            tournament_size=get("tournament_size", 2),
            elitism_count=get("elitism_count", 2),
            topology_probability=get("topology_probability", 0.01),
            seed=get("seed", 0),
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from None

    elements_file = get("elements_file")
    bodies = None
    if elements_file is not None:
        elements_file = Path(elements_file)
        try:
            bodies = load_bodies_csv(elements_file)
        except Exception as exc:
            raise ConfigError(f"elements_file: {exc}") from None

    departure = get("departure", "E")
    arrival = get("arrival", "J")
    if sequence is not None:
        departure, arrival = sequence[0], sequence[-1]
    try:
        rtba_cfg = RtbaConfig(
            departure=Planet.from_letter(departure),
            arrival=Planet.from_letter(arrival),
            max_gas=get("max_gas", 3),
            q=get("q", 0.3),
            p=get("p", 14),
            cpu_count=get("cpu_count", 42),
            max_recursions=get("max_recursions", 2),
            xi=get("xi", 0.7),
            chi=get("chi", 0.7),
            departure_window=(get("window_start", 61400.0), get("window_end", 63400.0)),
            seed=get("seed", 0),
            sga=sga,
            free_count=get("free_count", 1),
            tof_days=(tof_min, tof_max),
            bodies=bodies,
            max_thrust_accel=get("max_thrust_accel"),
        )
    except (ValueError, KeyError) as exc:
        raise ConfigError(str(exc)) from None
    if rtba_cfg.departure_window[1] <= rtba_cfg.departure_window[0]:
        raise ConfigError("departure window must have positive span")
    if rtba_cfg.free_count not in shaping.ADDITIONAL_COUNTS:
        raise ConfigError("free_count must be 0, 1 or 2")

    return RunConfig(
        mode=mode,
        sequence=sequence,
        output_dir=Path(get("output_dir", "out")),
        seed=get("seed", 0),
        workers=get("workers"),
        elements_file=elements_file,
        top_k=get("top_k", 5),
        rtba=rtba_cfg,
        sga=sga,
    )


def resolve_workers(config: RunConfig, cli_value: int | None = None) -> int:
    """Worker count: CLI flag, then environment, then config, then machine."""
    if cli_value is not None:
        return max(1, cli_value)
    env = os.environ.get(WORKERS_ENV)
    if env is not None:
        try:
            return max(1, int(env))
        except ValueError:
            raise ConfigError(f"{WORKERS_ENV}={env!r} is not an integer") from None
    if config.workers is not None:
        return max(1, config.workers)
    return max(1, min(config.rtba.cpu_count, os.cpu_count() or 1))


def atomic_write(path: Path, text: str) -> None:
    """Write text so the target never exists half-written."""
    path = Path(path)
    tmp = path.with_name(f".{path.name}.tmp{os.getpid()}")
    tmp.write_text(text)
    os.replace(tmp, path)


def _fmt(value: float) -> str:
    return repr(float(value))


def write_thrust_csv(path: Path, solution: ltto.TrajectorySolution) -> None:
    """Per-leg thrust profile sampled at the quadrature nodes."""
    lines = ["t_s,r_m,theta_rad,z_m,f_r,f_theta,f_z,f_mag"]
    offset = 0.0
    for leg in solution.legs:
        if leg is None:
            continue
        for row in shaping.thrust_profile(leg):
            lines.append(",".join(_fmt(v) for v in (row[0] + offset, *row[1:])))
        offset += leg.tof
    atomic_write(path, "\n".join(lines) + "\n")


def _best_solution(record: rtba.SequenceRecord, cfg: RtbaConfig) -> ltto.TrajectorySolution:
    return ltto.evaluate(record.sequence, np.asarray(record.best_decision),
                         cfg.system(), cfg.free_count, cfg.max_thrust_accel)


def _run_ltto(config: RunConfig, workers: int, outdir: Path) -> None:
    seq = Sequence.from_string(config.sequence)
    record = rtba.evaluate_sequence(seq, config.rtba)
    solution = _best_solution(record, config.rtba)
    atomic_write(outdir / "solution.json",
                 json.dumps(solution.to_record(), sort_keys=True, indent=2) + "\n")
    write_thrust_csv(outdir / f"thrust_{seq}.csv", solution)
    log.info("%s best delta-v %.1f m/s (feasible=%s)",
             seq, min(record.island_dvs), record.feasible)


def _run_grid(config: RunConfig, workers: int, outdir: Path) -> None:
    seq = Sequence.from_string(config.sequence)

    def factory(window_start: float) -> LttoProblem:
        return LttoProblem(
            sequence=seq, system=config.rtba.system(), window_start=window_start,
            free_count=config.rtba.free_count, tof_days=config.rtba.tof_days,
            max_thrust_accel=config.rtba.max_thrust_accel,
        )

    cells = grid_search(factory, config.rtba.departure_window, config.sga)
    lines = ["window_start_mjd,best_dv_ms,refined_dv_ms,departure_date_mjd"]
    for cell in cells:
        lines.append(",".join(_fmt(v) for v in
                              (cell.window_start, cell.best_dv, cell.refined_dv,
                               cell.departure_mjd)))
    atomic_write(outdir / "grid_search.csv", "\n".join(lines) + "\n")


def _run_rtba(config: RunConfig, workers: int, outdir: Path) -> None:
    journal_path = outdir / "journal.jsonl"
    tmp_journal = journal_path.with_name(journal_path.name + f".tmp{os.getpid()}")
    with open(tmp_journal, "w") as journal:
        def on_record(rec: rtba.SequenceRecord) -> None:
            journal.write(json.dumps(rec.to_json_dict(), sort_keys=True) + "\n")
            journal.flush()

        try:
            result = run_rtba(config.rtba, workers=workers, on_record=on_record)
        finally:
            journal.flush()
            os.replace(tmp_journal, journal_path)

    group = {str(rec.sequence) for rec in result.optimal_group}
    lines = ["rank,sequence,f_s_ms,min_dv_ms,mean_dv_ms,recursion_found,in_optimal_group"]
    for rank, rec in enumerate(result.ranking, start=1):
        lines.append(",".join([
            str(rank), str(rec.sequence), _fmt(rec.f_s), _fmt(rec.min_dv),
            _fmt(rec.mean_dv), str(rec.recursion_found),
            str(int(str(rec.sequence) in group)),
        ]))
    atomic_write(outdir / "ranking.csv", "\n".join(lines) + "\n")

    for rank, rec in enumerate(result.ranking[:config.top_k], start=1):
        if str(rec.sequence) not in group or not rec.feasible:
            continue
        write_thrust_csv(outdir / f"thrust_{rank:02d}_{rec.sequence}.csv",
                         _best_solution(rec, config.rtba))
    log.info("evaluated %d sequences (Q=%.4f), PS=%s",
             len(result.ranking), result.evaluated_fraction,
             "".join(p.letter for p in result.pseudo_sequence))


def run(config: RunConfig, workers: int | None = None) -> int:
    """Dispatch one configured run and persist its artifacts."""
    try:
        n_workers = resolve_workers(config, workers)
    except ConfigError as exc:
        log.error("%s", exc)
        return 2
    outdir = Path(config.output_dir)
    outdir.mkdir(parents=True, exist_ok=True)
    started = time.monotonic()
    try:
        if config.mode == "ltto":
            _run_ltto(config, n_workers, outdir)
        elif config.mode == "grid":
            _run_grid(config, n_workers, outdir)
        else:
            _run_rtba(config, n_workers, outdir)
    except Exception:
        log.exception("run failed")
        return 3
    metadata = {
        "config": config.flat_dict(),
        "seed": config.seed,
        "wall_time_s": time.monotonic() - started,
        "peak_workers": n_workers,
    }
    atomic_write(outdir / "run_metadata.json",
                 json.dumps(metadata, sort_keys=True, indent=2) + "\n")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mgaseq",
        description="Low-thrust multiple-gravity-assist transfer optimization",
    )
    parser.add_argument("--mode", choices=MODES, help="run mode")
    parser.add_argument("--config", type=Path, help="key=value config file")
    parser.add_argument("--sequence", help="body sequence, e.g. EMJ (Y is Mercury)")
    parser.add_argument("--seed", type=int, help="master random seed")
    parser.add_argument("--workers", type=int, help="process pool size")
    parser.add_argument("--output-dir", dest="output_dir", help="artifact directory")
    parser.add_argument("--q", type=float, help="per-recursion evaluated fraction")
    parser.add_argument("--xi", type=float, help="target-body min/mean blend weight")
    parser.add_argument("--chi", type=float, help="sequence min/mean blend weight")
    parser.add_argument("--elements-file", dest="elements_file",
                        help="CSV overriding the built-in planetary elements")
    return parser


def main(argv=None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    overrides = {
        key: getattr(args, key)
        for key in ("mode", "sequence", "seed", "output_dir", "q", "xi", "chi",
                    "elements_file")
    }
    try:
        config = parse_config(args.config, overrides)
    except (ConfigError, OSError) as exc:
        log.error("configuration error: %s", exc)
        return 2
    return run(config, workers=args.workers)


if __name__ == "__main__":
    sys.exit(main())
