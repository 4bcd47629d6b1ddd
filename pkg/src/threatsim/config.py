"""Run configuration: the YAML schema and its validation.

Schema (version 1); every key is optional::

    version: 1
    seed: 7
    threads: 1
    labels: [M, C, A]
    model:      {alpha: 0.5, epsilon: 0.05, d: 400, eq2_normalizer: 1.0}
    scenario:   {n_messages: 7, main_worldview: M, high: 1.0, low: -1.0,
                 terrorist_width: null, all_worldviews: false, record_trace: true}
    population: {file: agents.csv}            # or a generated population:
    population: {n: 1000, shares: [...], inclusive_fraction: [...],
                 jitter: 0.0, near_zero: 0.3, prototypes: [...]}
    synthesize: {reference: ref.csv, n: 60, n_starts: 200, budget: 20000,
                 n_climbers: 4, top: 120, step: 0.25, min_step: 0.001,
                 expand_n: 1000, write_populations: 120}
    analyze:    {input: run_dir, tau: 1.0e-9, target: M}
    sweep:      {group: M, values: [0.0, 0.5, 1.0]}

Relative paths are resolved against the config file's directory.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import yaml

from .core import DEFAULT_LABELS, ModelParams
from .synthesis import FitConfig, PopulationSpec, spec_from_dict, spec_to_dict
from .threat import ScenarioSpec, TerroristProfile

SCHEMA_VERSION = 1


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class ScenarioOptions:
    n_messages: int = 7
    main_worldview: str = "M"
    high: float = 1.0
    low: float = -1.0
    terrorist_width: float | None = None
    all_worldviews: bool = False
    record_trace: bool = True


@dataclass(frozen=True)
class SynthesizeOptions:
    reference: Path | None = None
    n: int = 60
    n_starts: int = 200
    budget: int = 20000
    n_climbers: int = 4
    top: int = 120
    step: float = 0.25
    min_step: float = 1e-3
    expand_n: int = 1000
    write_populations: int = 120


@dataclass(frozen=True)
class AnalyzeOptions:
    input: Path | None = None
    tau: float = 1e-9
    target: str = "M"


@dataclass(frozen=True)
class SweepOptions:
    group: str = "M"
    values: tuple[float, ...] = (0.0, 0.5, 1.0)


@dataclass(frozen=True)
class RunConfig:
    model: ModelParams = field(default_factory=ModelParams)
    scenario: ScenarioOptions = field(default_factory=ScenarioOptions)
    population: PopulationSpec = field(default_factory=PopulationSpec)
    population_file: Path | None = None
    near_zero: float = 0.3
    synthesize: SynthesizeOptions = field(default_factory=SynthesizeOptions)
    analyze: AnalyzeOptions = field(default_factory=AnalyzeOptions)
    sweep: SweepOptions = field(default_factory=SweepOptions)
    labels: tuple[str, ...] = DEFAULT_LABELS
    seed: int | None = None
    threads: int = 1

    def label_index(self, label: str, key: str) -> int:
        if label not in self.labels:
            raise ConfigError(f"{key}: unknown worldview {label!r} (labels are {list(self.labels)})")
        return self.labels.index(label)

    def scenario_spec(self) -> ScenarioSpec:
        s = self.scenario
        main = self.label_index(s.main_worldview, "scenario.main_worldview")
        width = self.model.epsilon if s.terrorist_width is None else s.terrorist_width
        terrorist = TerroristProfile.extreme(main, len(self.labels), width, s.high, s.low)
        return ScenarioSpec(terrorist, s.n_messages, s.record_trace, s.all_worldviews)

    def fit_config(self) -> FitConfig:
        s = self.synthesize
        return FitConfig(n=s.n, shares=self.population.shares, n_starts=s.n_starts, budget=s.budget,
                         n_climbers=s.n_climbers, top=s.top, step=s.step, min_step=s.min_step,
                         near_zero=self.near_zero)

    def to_dict(self) -> dict:
        """Canonical JSON-able form of everything that affects results.

        ``threads`` is left out: outputs do not depend on it.
        """
        def paths(d):
            return {k: (str(v) if isinstance(v, Path) else v) for k, v in d.items()}

        pop = {"file": str(self.population_file)} if self.population_file else \
            {**spec_to_dict(self.population, self.labels), "near_zero": self.near_zero}
        pop.pop("seed", None)
        return {
            "version": SCHEMA_VERSION,
            "seed": self.seed,
            "labels": list(self.labels),
            "model": asdict(self.model),
            "scenario": asdict(self.scenario),
            "population": pop,
            "synthesize": paths(asdict(self.synthesize)),
            "analyze": paths(asdict(self.analyze)),
            "sweep": {"group": self.sweep.group, "values": list(self.sweep.values)},
        }

    def digest(self) -> str:
        return hashlib.sha256(json.dumps(self.to_dict(), sort_keys=True).encode()).hexdigest()


def _section(raw: dict, name: str, allowed) -> dict:
    sec = raw.get(name) or {}
    if not isinstance(sec, dict):
        raise ConfigError(f"{name}: expected a mapping")
    unknown = set(sec) - set(allowed)
    if unknown:
        raise ConfigError(f"{name}.{sorted(unknown)[0]}: unknown key")
    return sec


def _build(cls, sec: dict, name: str, conv: dict | None = None):
    conv = conv or {}
    try:
        return cls(**{k: conv.get(k, lambda v: v)(v) for k, v in sec.items()})
    except (TypeError, ValueError) as e:
        raise ConfigError(f"{name}: {e}") from None


def _positive(name, value, minimum=1):
    if value < minimum:
        raise ConfigError(f"{name}: must be >= {minimum}, got {value}")


def config_from_dict(raw: dict | None, base_dir: Path = Path(".")) -> RunConfig:
    raw = dict(raw or {})
    top = {"version", "seed", "threads", "labels", "model", "scenario", "population",
           "synthesize", "analyze", "sweep"}
    unknown = set(raw) - top
    if unknown:
        raise ConfigError(f"{sorted(unknown)[0]}: unknown key")
    if raw.get("version", SCHEMA_VERSION) != SCHEMA_VERSION:
        raise ConfigError(f"version: unsupported schema version {raw['version']!r}")

    labels = tuple(raw.get("labels") or DEFAULT_LABELS)
    if len(labels) < 2 or len(set(labels)) != len(labels):
        raise ConfigError(f"labels: need >= 2 distinct labels, got {list(labels)}")

    def path(v):
        p = Path(v)
        return p if p.is_absolute() else base_dir / p

    model_sec = _section(raw, "model", ModelParams.__dataclass_fields__)
    for key, val in model_sec.items():
        if isinstance(val, bool) or not isinstance(val, (int, float)):
            raise ConfigError(f"model.{key}: expected a number, got {val!r}")
    model = _build(ModelParams, model_sec, "model")
    scenario = _build(ScenarioOptions, _section(raw, "scenario", ScenarioOptions.__dataclass_fields__),
                      "scenario")
    if scenario.n_messages < 0:
        raise ConfigError(f"scenario.n_messages: must be >= 0, got {scenario.n_messages}")
    synth = _build(SynthesizeOptions, _section(raw, "synthesize", SynthesizeOptions.__dataclass_fields__),
                   "synthesize", {"reference": path})
    for key in ("n", "n_climbers", "top", "expand_n"):
        _positive(f"synthesize.{key}", getattr(synth, key))
    for key in ("n_starts", "budget", "write_populations"):
        _positive(f"synthesize.{key}", getattr(synth, key), 0)
    analyze = _build(AnalyzeOptions, _section(raw, "analyze", AnalyzeOptions.__dataclass_fields__),
                     "analyze", {"input": path, "tau": float})
    if not analyze.tau >= 0:
        raise ConfigError(f"analyze.tau: must be >= 0, got {analyze.tau}")
    sweep = _build(SweepOptions, _section(raw, "sweep", SweepOptions.__dataclass_fields__), "sweep",
                   {"values": lambda v: tuple(float(x) for x in v)})
    if any(not 0.0 <= x <= 1.0 for x in sweep.values):
        raise ConfigError("sweep.values: inclusive fractions must lie in [0, 1]")

    pop_sec = dict(_section(raw, "population", {"file", "n", "shares", "inclusive_fraction", "jitter",
                                                "near_zero", "prototypes"}))
    near_zero = float(pop_sec.pop("near_zero", 0.3))
    pop_file = None
    population = PopulationSpec()
    if "file" in pop_sec:
        if len(pop_sec) > 1:
            raise ConfigError(f"population.{sorted(set(pop_sec) - {'file'})[0]}: not allowed with population.file")
        pop_file = path(pop_sec["file"])
    else:
        try:
            population = spec_from_dict(pop_sec, labels)
        except (TypeError, ValueError, KeyError) as e:
            raise ConfigError(f"population: {e}") from None
        if population.n < 1:
            raise ConfigError("population.n: must be >= 1")

    seed = raw.get("seed")
    if seed is not None and (isinstance(seed, bool) or not isinstance(seed, int) or seed < 0):
        raise ConfigError(f"seed: expected a non-negative integer, got {seed!r}")
    threads = raw.get("threads", 1)
    if isinstance(threads, bool) or not isinstance(threads, int) or threads < 1:
        raise ConfigError(f"threads: expected a positive integer, got {threads!r}")

    cfg = RunConfig(model, scenario, population, pop_file, near_zero, synth, analyze, sweep,
                    labels, seed, threads)
    cfg.label_index(scenario.main_worldview, "scenario.main_worldview")
    cfg.label_index(analyze.target, "analyze.target")
    cfg.label_index(sweep.group, "sweep.group")
    for key, p in (("population.file", pop_file), ("synthesize.reference", synth.reference),
                   ("analyze.input", analyze.input)):
        if p is not None and not p.exists():
            raise ConfigError(f"{key}: no such file or directory: {p}")
    return cfg


def read_raw(path: str | Path) -> tuple[dict, Path]:
    """Parsed YAML mapping and the directory relative paths resolve against."""
    path = Path(path)
    try:
        raw = yaml.safe_load(path.read_text())
    except OSError as e:
        raise ConfigError(f"cannot read config {path}: {e}") from None
    except yaml.YAMLError as e:
        raise ConfigError(f"config {path} is not valid YAML: {e}") from None
    if raw is not None and not isinstance(raw, dict):
        raise ConfigError("config: top level must be a mapping")
    return raw or {}, path.parent


def load_config(path: str | Path | None) -> RunConfig:
    """Read and validate a YAML config; ``None`` or an empty file gives defaults."""
    if path is None:
        return config_from_dict({})
    return config_from_dict(*read_raw(path))
