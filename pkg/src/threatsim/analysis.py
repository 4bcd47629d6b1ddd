"""Post-hoc analyses of a scenario run."""

from __future__ import annotations

import csv
import enum
import io
import json
from dataclasses import dataclass

import numpy as np

from .core import Grid, ModelParams, segment_attitude_matrix
from .population import EXCLUSIVE, INCLUSIVE, KINDS, Population, attitude_matrix, fmt
from .threat import ScenarioResult


class ChangeClass(enum.Enum):
    DECREASE_BOTH = "DecreaseBoth"
    INCREASE_INCLUSIVE_ONLY = "IncreaseInclusiveOnly"
    INCREASE_BOTH = "IncreaseBoth"
    INCREASE_EXCLUSIVE_ONLY = "IncreaseExclusiveOnly"
    NO_CHANGE = "NoChange"


CLASSES = tuple(ChangeClass)


def _mean_toward(w: np.ndarray, cols: np.ndarray) -> np.ndarray:
    """Row means of ``w`` over the ``cols`` mask, skipping the diagonal. NaN if empty."""
    n = w.shape[0]
    diag_in = cols.astype(float)
    sums = w[:, cols].sum(axis=1) - np.where(cols, np.diag(w), 0.0)
    counts = cols.sum() - diag_in
    out = np.full(n, np.nan)
    ok = counts > 0
    out[ok] = sums[ok] / counts[ok]
    return out


# -- attitude matrix ----------------------------------------------------------


@dataclass(frozen=True, eq=False)
class AttitudeTable:
    """Mean attitudes by observer group.

    ``by_group[g, h]`` averages over targets in group ``h``;
    ``by_kind[g, h, c]`` over targets of group ``h`` and kind ``c``. NaN marks
    a cell with no ``i != j`` pair.
    """

    by_group: np.ndarray
    by_kind: np.ndarray
    labels: tuple[str, ...]


def table_from_matrix(w: np.ndarray, pop: Population) -> AttitudeTable:
    k = pop.k
    n = pop.n
    offdiag = ~np.eye(n, dtype=bool)
    by_group = np.full((k, k), np.nan)
    by_kind = np.full((k, k, 2), np.nan)
    for g in range(k):
        rows = pop.group == g
        for h in range(k):
            cols = pop.group == h
            m = rows[:, None] & cols[None, :] & offdiag
            if m.any():
                by_group[g, h] = w[m].mean()
            for c in (INCLUSIVE, EXCLUSIVE):
                m = rows[:, None] & (cols & (pop.kind == c))[None, :] & offdiag
                if m.any():
                    by_kind[g, h, c] = w[m].mean()
    return AttitudeTable(by_group, by_kind, pop.labels)


def attitude_table(pop: Population, grid: Grid, params: ModelParams, threads: int = 1) -> AttitudeTable:
    return table_from_matrix(attitude_matrix(pop, grid, params, threads=threads), pop)


def mean_attitude_toward_group(result: ScenarioResult, grid: Grid, params: ModelParams,
                               target: int = 0, threads: int = 1) -> np.ndarray:
    """Per snapshot: mean over agents of their mean attitude about group ``target``.

    Agents with no other member of ``target`` to look at are skipped.
    """
    series = []
    for pop in result.snapshots:
        w = attitude_matrix(pop, grid, params, threads=threads)
        per_agent = _mean_toward(w, pop.group == target)
        ok = ~np.isnan(per_agent)
        series.append(per_agent[ok].mean() if ok.any() else np.nan)
    return np.array(series)


# -- change classification ---------------------------------------------------------


def classify(d_inc: float, d_exc: float, tau: float) -> ChangeClass:
    """Label a pair of attitude changes; NaN means that axis is absent."""
    inc_up = d_inc > tau
    exc_up = d_exc > tau
    if inc_up and exc_up:
        return ChangeClass.INCREASE_BOTH
    if inc_up:
        return ChangeClass.INCREASE_INCLUSIVE_ONLY
    if exc_up:
        return ChangeClass.INCREASE_EXCLUSIVE_ONLY
    if d_inc < -tau or d_exc < -tau:
        return ChangeClass.DECREASE_BOTH
    return ChangeClass.NO_CHANGE


@dataclass(frozen=True, eq=False)
class ChangeReport:
    classes: tuple[ChangeClass, ...]
    delta_inclusive: np.ndarray
    delta_exclusive: np.ndarray
    by_agent: dict
    by_agent_time: dict
    tau: float


def _distribution(labels_per_agent, cells):
    """Percent of each class overall and per observer cell."""
    out = {}
    keys = sorted(set(cells)) + ["all"]
    for key in keys:
        sel = [c for c, cell in zip(labels_per_agent, cells) if key == "all" or cell == key]
        total = len(sel)
        out[key] = {cls.value: (100.0 * sel.count(cls) / total if total else float("nan"))
                    for cls in CLASSES}
    return out


def classify_changes(result: ScenarioResult, grid: Grid, params: ModelParams, tau: float = 1e-9,
                     target: int = 0, threads: int = 1) -> ChangeReport:
    """Classify each agent by how its attitude toward inclusive and exclusive
    members of ``target`` moved between the first and last snapshot.

    Two distributions are reported: one over agents (final vs initial) and
    one over (agent, time) pairs, each time ``t >= 1`` compared with ``t = 0``.
    Keys of the distributions are ``"<group>-<kind>"`` plus ``"all"``.
    """
    if len(result.snapshots) < 2:
        raise ValueError("need at least two snapshots")
    pop0 = result.initial
    inc_cols = (pop0.group == target) & (pop0.kind == INCLUSIVE)
    exc_cols = (pop0.group == target) & (pop0.kind == EXCLUSIVE)
    cells = [f"{pop0.labels[g]}-{KINDS[c]}" for g, c in zip(pop0.group, pop0.kind)]

    toward = []
    for pop in result.snapshots:
        w = attitude_matrix(pop, grid, params, threads=threads)
        toward.append((_mean_toward(w, inc_cols), _mean_toward(w, exc_cols)))
    inc0, exc0 = toward[0]

    def labels_at(t):
        d_inc = toward[t][0] - inc0
        d_exc = toward[t][1] - exc0
        return [classify(a, b, tau) for a, b in zip(d_inc, d_exc)], d_inc, d_exc

    final, d_inc, d_exc = labels_at(len(toward) - 1)
    pairs, pair_cells = [], []
    for t in range(1, len(toward)):
        pairs += labels_at(t)[0]
        pair_cells += cells
    return ChangeReport(tuple(final), d_inc, d_exc, _distribution(final, cells),
                        _distribution(pairs, pair_cells), tau)


# -- condition profile ---------------------------------------------------------------

STATS = ("position", "margin_low", "margin_high", "segment_attitude")


@dataclass(frozen=True, eq=False)
class ConditionProfile:
    """Per-group means of the target-worldview statistics and the condition flags.

    ``segment_attitude`` is an agent's mean attitude about the target-worldview
    segments of the target group's members. ``flags[label]`` holds the
    comparisons against the whole-population mean: for the target group,
    ``position_lower``, ``margin_high_larger``, ``margin_low_larger``; for the
    other groups, ``position_higher``, ``margin_high_smaller``,
    ``margin_low_larger``.
    """

    group_means: dict
    population_means: dict
    flags: dict
    target: int
    labels: tuple[str, ...]

    @property
    def favourable(self) -> bool:
        return all(all(f.values()) for f in self.flags.values())


def condition_profile(pop: Population, grid: Grid, params: ModelParams, target: int = 0,
                      rtol: float = 1e-12) -> ConditionProfile:
    """Compare each group to the population on the target worldview.

    Comparisons are strict, with a relative slack of ``rtol`` so that a
    homogeneous population never flags.
    """
    a = pop.position[:, target]
    stats = {
        "position": a,
        "margin_low": a - pop.lower[:, target],
        "margin_high": pop.upper[:, target] - a,
    }
    w = segment_attitude_matrix(a, pop.lower[:, target], pop.upper[:, target],
                                pop.lower[:, target], pop.upper[:, target], grid, params)
    stats["segment_attitude"] = _mean_toward(w, pop.group == target)

    pop_means = {s: float(np.nanmean(v)) if np.any(~np.isnan(v)) else float("nan") for s, v in stats.items()}
    group_means = {}
    flags = {}

    def above(x, ref):
        return bool(x > ref + rtol * max(1.0, abs(ref)))

    def below(x, ref):
        return bool(x < ref - rtol * max(1.0, abs(ref)))

    for g, lab in enumerate(pop.labels):
        rows = pop.group == g
        if not rows.any():
            continue
        gm = {}
        for s, v in stats.items():
            vv = v[rows]
            vv = vv[~np.isnan(vv)]
            gm[s] = float(vv.mean()) if vv.size else float("nan")
        group_means[lab] = gm
        if g == target:
            flags[lab] = {
                "position_lower": below(gm["position"], pop_means["position"]),
                "margin_high_larger": above(gm["margin_high"], pop_means["margin_high"]),
                "margin_low_larger": above(gm["margin_low"], pop_means["margin_low"]),
            }
        else:
            flags[lab] = {
                "position_higher": above(gm["position"], pop_means["position"]),
                "margin_high_smaller": below(gm["margin_high"], pop_means["margin_high"]),
                "margin_low_larger": above(gm["margin_low"], pop_means["margin_low"]),
            }
    return ConditionProfile(group_means, pop_means, flags, target, pop.labels)


# -- exports -----------------------------------------------------------------------------


def _csv(rows) -> str:
    buf = io.StringIO()
    csv.writer(buf, lineterminator="\n").writerows(rows)
    return buf.getvalue()


def _num(x):
    return "" if x is None or np.isnan(x) else fmt(x)


def attitude_tables_csv(tables: list[AttitudeTable]) -> str:
    rows = [["t", "observer_group", "target_group", "target_kind", "mean_attitude"]]
    for t, tab in enumerate(tables):
        for g, lg in enumerate(tab.labels):
            for h, lh in enumerate(tab.labels):
                rows.append([t, lg, lh, "all", _num(tab.by_group[g, h])])
                for c in (INCLUSIVE, EXCLUSIVE):
                    rows.append([t, lg, lh, KINDS[c], _num(tab.by_kind[g, h, c])])
    return _csv(rows)


def distribution_csv(report: ChangeReport) -> str:
    rows = [["aggregation", "observer", "class", "percent"]]
    for name, dist in (("agent", report.by_agent), ("agent_time", report.by_agent_time)):
        for cell, pct in dist.items():
            for cls in CLASSES:
                rows.append([name, cell, cls.value, _num(pct[cls.value])])
    return _csv(rows)


def profile_csv(profile: ConditionProfile) -> str:
    rows = [["group", "statistic", "group_mean", "population_mean"]]
    for lab, gm in profile.group_means.items():
        for s in STATS:
            rows.append([lab, s, _num(gm[s]), _num(profile.population_means[s])])
    for lab, fl in profile.flags.items():
        for name, val in fl.items():
            rows.append([lab, f"flag:{name}", str(val).lower(), ""])
    return _csv(rows)


def series_csv(series: np.ndarray) -> str:
    return _csv([["t", "value"]] + [[t, _num(v)] for t, v in enumerate(series)])


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, np.ndarray):
        return _jsonable(x.tolist())
    if isinstance(x, float) and np.isnan(x):
        return None
    return x


def summary_json(tables: list[AttitudeTable], report: ChangeReport | None,
                 profile: ConditionProfile, series: np.ndarray) -> str:
    body = {
        "mean_attitude_toward_target": [{"t": t, "value": v} for t, v in enumerate(series.tolist())],
        "attitude_matrix": [{"t": t, "by_group": tab.by_group, "by_kind": tab.by_kind}
                            for t, tab in enumerate(tables)],
        "change_distribution": None if report is None else {
            "tau": report.tau, "agent": report.by_agent, "agent_time": report.by_agent_time},
        "condition_profile": {"target": profile.labels[profile.target],
                              "group_means": profile.group_means,
                              "population_means": profile.population_means,
                              "flags": profile.flags},
    }
    return json.dumps(_jsonable(body), indent=2, sort_keys=True) + "\n"
