"""Command line: ``threatsim {synthesize,simulate,analyze,sweep}``."""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import logging
import os
import sys
import tempfile
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__
from .analysis import (
    attitude_tables_csv,
    classify_changes,
    condition_profile,
    distribution_csv,
    profile_csv,
    series_csv,
    summary_json,
    mean_attitude_toward_group,
    table_from_matrix,
)
from .config import ConfigError, RunConfig, config_from_dict, read_raw
from .core import ModelParams
from .population import Population, attitude_matrix, fmt, population_from_csv, population_to_csv
from .rng import stream
from .synthesis import (
    IndicatorMatrix,
    build_population,
    dumps,
    expand,
    fit,
    fit_result_to_dict,
)
from .threat import ScenarioResult, run_scenario, trace_to_csv

log = logging.getLogger("threatsim")

OUT_ENV = "THREATSIM_OUT"


class RunWriter:
    """Writes artifacts atomically into one run directory and tracks their hashes."""

    def __init__(self, root: Path):
        self.root = root
        self.hashes: dict[str, str] = {}

    def write(self, rel: str, text: str) -> None:
        path = self.root / rel
        path.parent.mkdir(parents=True, exist_ok=True)
        data = text.encode("utf-8")
        fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
        try:
            with os.fdopen(fd, "wb") as fh:
                fh.write(data)
            os.replace(tmp, path)
        except BaseException:
            if os.path.exists(tmp):
                os.unlink(tmp)
            raise
        self.hashes[rel] = hashlib.sha256(data).hexdigest()

    def manifest(self, command: str, cfg: RunConfig) -> None:
        body = {
            "format_version": 1,
            "package": "threatsim",
            "version": __version__,
            "command": command,
            "seed": cfg.seed,
            "config_sha256": cfg.digest(),
            "artifacts": dict(sorted(self.hashes.items())),
        }
        self.write("manifest.json", json.dumps(body, indent=2, sort_keys=True) + "\n")


def _csv(rows) -> str:
    buf = io.StringIO()
    csv.writer(buf, lineterminator="\n").writerows(rows)
    return buf.getvalue()


def _num(x) -> str:
    return "" if np.isnan(x) else fmt(x)


def _initial_population(cfg: RunConfig, seed_name: str = "population", index: int = 0,
                        spec=None) -> Population:
    if cfg.population_file is not None and spec is None:
        pop = population_from_csv(cfg.population_file.read_text())
        if pop.labels != cfg.labels:
            raise ConfigError(f"population.file: labels {list(pop.labels)} differ from {list(cfg.labels)}")
        pop.validate(cfg.model.epsilon)
        return pop
    spec = spec or cfg.population
    if spec.jitter > 0:
        if cfg.seed is None:
            raise ConfigError("seed: required when population.jitter > 0")
        spec = replace(spec, seed=int(stream(cfg.seed, seed_name, index).integers(2**62)))
    return build_population(spec, cfg.model.epsilon, cfg.labels, cfg.near_zero)


def _group_matrix_csv(result: ScenarioResult) -> str:
    labels = result.initial.labels
    rows = [["t", "observer_group", "target_group", "mean_attitude"]]
    for t, m in enumerate(result.mean_attitude):
        for g, lg in enumerate(labels):
            for h, lh in enumerate(labels):
                rows.append([t, lg, lh, _num(m[g, h])])
    return _csv(rows)


# -- subcommands ------------------------------------------------------------------------


def cmd_simulate(cfg: RunConfig, out: Path) -> None:
    pop = _initial_population(cfg)
    spec = cfg.scenario_spec()
    grid = cfg.model.grid()
    log.info("simulating %d agents, %d messages", pop.n, spec.n_messages)
    result = run_scenario(pop, spec, grid, cfg.model, threads=cfg.threads)
    target = spec.terrorist.main_worldview
    series = mean_attitude_toward_group(result, grid, cfg.model, target, cfg.threads)

    w = RunWriter(out)
    w.write("config.json", json.dumps(cfg.to_dict(), indent=2, sort_keys=True) + "\n")
    w.write("population.csv", population_to_csv(pop))
    for t, snap in enumerate(result.snapshots):
        w.write(f"snapshots/t{t:03d}.csv", population_to_csv(snap))
    if spec.record_trace:
        w.write("trace.csv", trace_to_csv(result))
    w.write("group_matrix.csv", _group_matrix_csv(result))
    w.write("mean_attitude.csv", series_csv(series))
    w.manifest("simulate", cfg)


def load_result(run_dir: Path) -> ScenarioResult:
    snaps = sorted((run_dir / "snapshots").glob("t*.csv"))
    if not snaps:
        raise ConfigError(f"analyze.input: no snapshots found under {run_dir / 'snapshots'}")
    pops = tuple(population_from_csv(p.read_text()) for p in snaps)
    return ScenarioResult(pops, tuple(() for _ in pops[1:]))


def cmd_analyze(cfg: RunConfig, out: Path) -> None:
    run_dir = cfg.analyze.input
    if run_dir is None:
        raise ConfigError("analyze.input: a simulate output directory is required (--input)")
    params = cfg.model
    stored = run_dir / "config.json"
    if stored.exists():
        params = ModelParams(**json.loads(stored.read_text())["model"])
    result = load_result(run_dir)
    target = cfg.label_index(cfg.analyze.target, "analyze.target")
    grid = params.grid()
    tables = [table_from_matrix(attitude_matrix(pop, grid, params, cfg.threads), pop)
              for pop in result.snapshots]
    series = mean_attitude_toward_group(result, grid, params, target, cfg.threads)
    report = None
    if len(result.snapshots) >= 2:
        report = classify_changes(result, grid, params, cfg.analyze.tau, target, cfg.threads)
    profile = condition_profile(result.initial, grid, params, target)

    w = RunWriter(out)
    w.write("attitude_matrix.csv", attitude_tables_csv(tables))
    if report is not None:
        w.write("change_distribution.csv", distribution_csv(report))
    w.write("condition_profile.csv", profile_csv(profile))
    w.write("mean_attitude.csv", series_csv(series))
    w.write("analysis.json", summary_json(tables, report, profile, series))
    w.manifest("analyze", cfg)


def cmd_synthesize(cfg: RunConfig, out: Path) -> None:
    ref_path = cfg.synthesize.reference
    if ref_path is None:
        raise ConfigError("synthesize.reference: a reference indicator CSV is required (--reference)")
    if cfg.seed is None:
        raise ConfigError("seed: required for synthesize")
    reference = IndicatorMatrix.from_csv(ref_path.read_text(), cfg.labels)
    fcfg = cfg.fit_config()
    log.info("fitting against %s (budget %d)", ref_path, fcfg.budget)
    result = fit(reference, fcfg, cfg.seed, cfg.model)

    w = RunWriter(out)
    w.write("config.json", json.dumps(cfg.to_dict(), indent=2, sort_keys=True) + "\n")
    w.write("reference.csv", reference.to_csv())
    w.write("fit_result.json", dumps(fit_result_to_dict(result, cfg.labels)))
    rows = [["rank", "l1", "avg_rel", "max_rel"]]
    rows += [[r, fmt(c.l1), fmt(c.avg_rel), fmt(c.max_rel)] for r, c in enumerate(result.candidates)]
    w.write("candidates.csv", _csv(rows))
    for r, cand in enumerate(result.candidates[:cfg.synthesize.write_populations]):
        spec = replace(expand(cand.spec, cfg.synthesize.expand_n), jitter=cfg.population.jitter)
        pop = _initial_population(cfg, "synthesize-population", r, spec=spec)
        w.write(f"populations/rank{r:03d}.csv", population_to_csv(pop))
    w.manifest("synthesize", cfg)


def cmd_sweep(cfg: RunConfig, out: Path) -> None:
    if cfg.population_file is not None:
        raise ConfigError("population.file: sweep needs a generated population (prototypes), not a file")
    group = cfg.label_index(cfg.sweep.group, "sweep.group")
    spec = cfg.scenario_spec()
    target = spec.terrorist.main_worldview
    grid = cfg.model.grid()
    rows = [["x_" + cfg.sweep.group, "n_agents", "mean_toward_target_t0", "mean_toward_target_final",
             "delta", "increased"]]
    for i, x in enumerate(cfg.sweep.values):
        fractions = list(cfg.population.inclusive_fraction)
        fractions[group] = x
        pop_spec = replace(cfg.population, inclusive_fraction=tuple(fractions))
        pop = _initial_population(cfg, "sweep", i, spec=pop_spec)
        result = run_scenario(pop, replace(spec, record_trace=False), grid, cfg.model, summarize=False)
        series = mean_attitude_toward_group(result, grid, cfg.model, target, cfg.threads)
        delta = series[-1] - series[0]
        rows.append([fmt(x), pop.n, _num(series[0]), _num(series[-1]), _num(delta),
                     str(bool(delta > 0)).lower()])
        log.info("x=%s delta=%s", x, delta)
    w = RunWriter(out)
    w.write("config.json", json.dumps(cfg.to_dict(), indent=2, sort_keys=True) + "\n")
    w.write("sweep.csv", _csv(rows))
    w.manifest("sweep", cfg)


COMMANDS = {
    "synthesize": cmd_synthesize,
    "simulate": cmd_simulate,
    "analyze": cmd_analyze,
    "sweep": cmd_sweep,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="threatsim", description=__doc__)
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="YAML run configuration")
    common.add_argument("--seed", type=int, help="master seed (overrides the config)")
    common.add_argument("--out", type=Path,
                        help=f"output directory (default: ${OUT_ENV}/<command> or ./runs/<command>)")
    common.add_argument("--threads", type=int, help="worker threads for attitude matrices")
    common.add_argument("-v", "--verbose", action="store_true")
    sub.add_parser("simulate", parents=[common], help="run the threat scenario")
    p = sub.add_parser("synthesize", parents=[common], help="calibrate populations to reference indicators")
    p.add_argument("--reference", type=Path, help="reference indicator CSV")
    p = sub.add_parser("analyze", parents=[common], help="analyse a stored simulate run")
    p.add_argument("--input", type=Path, help="simulate output directory")
    p = sub.add_parser("sweep", parents=[common], help="vary one group's inclusive fraction")
    p.add_argument("--group", help="group whose inclusive fraction varies")
    p.add_argument("--values", type=lambda s: [float(v) for v in s.split(",")],
                   help="comma-separated fractions, e.g. 0,0.5,1")
    return parser


def _apply_cli(args) -> RunConfig:
    raw, base = read_raw(args.config) if args.config is not None else ({}, Path("."))
    raw = dict(raw)

    def put(section, key, value):
        raw[section] = {**(raw.get(section) or {}), key: value}

    if args.seed is not None:
        raw["seed"] = args.seed
    if args.threads is not None:
        raw["threads"] = args.threads
    if getattr(args, "reference", None) is not None:
        put("synthesize", "reference", str(args.reference.resolve()))
    if getattr(args, "input", None) is not None:
        put("analyze", "input", str(args.input.resolve()))
    if getattr(args, "group", None) is not None:
        put("sweep", "group", args.group)
    if getattr(args, "values", None) is not None:
        put("sweep", "values", args.values)
    return config_from_dict(raw, base)


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = _apply_cli(args)
        out = args.out
        if out is None:
            out = Path(os.environ.get(OUT_ENV, "runs")) / args.command
        COMMANDS[args.command](cfg, out)
    except (ConfigError, ValueError, OSError) as e:
        print(f"threatsim {args.command}: error: {e}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
