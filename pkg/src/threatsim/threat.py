"""Terrorist messages and the margin contraction they trigger."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field

import numpy as np

from .core import (
    CulturalIdentity,
    Grid,
    ModelParams,
    attitude_to_identity,
    group_of,
    identity_attitude_matrix,
)
from .population import KINDS, Population, attitude_matrix, fmt

LOWER, UPPER = "lower", "upper"


@dataclass(frozen=True)
class TerroristProfile:
    identity: CulturalIdentity

    @property
    def main_worldview(self) -> int:
        return group_of(self.identity)

    @classmethod
    def extreme(cls, main: int = 0, k: int = 3, epsilon: float = 0.05,
                high: float = 1.0, low: float = -1.0) -> "TerroristProfile":
        """Position ``high`` on ``main``, ``low`` elsewhere, all margins ``epsilon``.

        Bounds are clamped into ``[-1, 1]``; a position at +1 gets ``B = 1`` and
        ``b = 1 - epsilon``.
        """
        triples = []
        for w in range(k):
            a = high if w == main else low
            b = max(-1.0, a - epsilon)
            B = min(1.0, a + epsilon)
            triples.append((a, b, B))
        return cls(CulturalIdentity.from_triples(triples))


@dataclass(frozen=True)
class ThreatUpdateRecord:
    agent_id: int
    t: int
    omega_qi: float
    mu: float
    worldview: int
    side: str
    bound_before: float
    bound_after: float


@dataclass(frozen=True)
class ScenarioSpec:
    terrorist: TerroristProfile
    n_messages: int = 7
    record_trace: bool = True
    all_worldviews: bool = False

    def __post_init__(self):
        if self.n_messages < 0:
            raise ValueError(f"n_messages must be >= 0, got {self.n_messages}")


@dataclass(frozen=True, eq=False)
class ScenarioResult:
    snapshots: tuple[Population, ...]
    traces: tuple[tuple[ThreatUpdateRecord, ...], ...]
    mean_attitude: tuple[np.ndarray, ...] = field(default=())

    @property
    def initial(self) -> Population:
        return self.snapshots[0]

    @property
    def final(self) -> Population:
        return self.snapshots[-1]


def reaction_intensity(omega_qi: float, alpha: float = 0.5) -> float:
    """Strength of the margin contraction; 0 unless the terrorist's attitude is negative."""
    if omega_qi >= 0:
        return 0.0
    e = math.exp(omega_qi)
    return alpha * (e - 1.0) / (e + 1.0)


def contract_bound(bound, pos, mu, epsilon):
    """Move ``bound`` toward ``pos`` so that ``width - epsilon`` scales by ``1 + mu``.

    A zero-width margin is left where it is.
    """
    diff = bound - pos
    return bound + mu * (diff - epsilon * np.sign(diff))


def _closest_side(lower, upper, target):
    # tie goes to the upper bound
    return np.where(np.abs(lower - target) < np.abs(upper - target), LOWER, UPPER)


def apply_threat(identity: CulturalIdentity, terrorist: TerroristProfile, grid: Grid,
                 params: ModelParams, agent_id: int = 0, t: int = 0,
                 all_worldviews: bool = False):
    """React to one message. Returns ``(identity', records)``.

    ``records`` is empty when the terrorist's attitude about the agent is
    non-negative; the identity is then returned unchanged.
    """
    if identity.k != terrorist.identity.k:
        raise ValueError("worldview count mismatch")
    omega = attitude_to_identity(terrorist.identity, identity, grid, params)
    if not omega < 0:
        return identity, []
    mu = reaction_intensity(omega, params.alpha)
    targets = range(identity.k) if all_worldviews else [terrorist.main_worldview]
    records = []
    new = identity
    for w in targets:
        seg = identity.segments[w]
        a_q = terrorist.identity.segments[w].position
        side = str(_closest_side(seg.lower, seg.upper, a_q))
        before = seg.lower if side == LOWER else seg.upper
        after = float(contract_bound(before, seg.position, mu, params.epsilon))
        new = new.replace(w, seg.with_bound(side, after))
        records.append(ThreatUpdateRecord(agent_id, t, omega, mu, w, side, before, after))
    return new, records


def terrorist_attitudes(pop: Population, terrorist: TerroristProfile, grid: Grid,
                        params: ModelParams) -> np.ndarray:
    """Terrorist's attitude about every agent, shape ``(N,)``."""
    segs = terrorist.identity.segments
    pos = np.array([[s.position for s in segs]])
    low = np.array([[s.lower for s in segs]])
    up = np.array([[s.upper for s in segs]])
    return identity_attitude_matrix(pos, low, up, pop.position, pop.lower, pop.upper,
                                    grid, params)[0]


def scenario_step(pop: Population, spec: ScenarioSpec, grid: Grid, params: ModelParams,
                  t: int = 0):
    """One broadcast message, applied synchronously to every agent.

    All reactions are computed from the pre-step state, then committed
    together, so agent order never matters.
    """
    terrorist = spec.terrorist
    if pop.k != terrorist.identity.k:
        raise ValueError("worldview count mismatch")
    omega = terrorist_attitudes(pop, terrorist, grid, params)
    threatened = omega < 0
    e = np.exp(np.where(threatened, omega, 0.0))
    mu = np.where(threatened, params.alpha * (e - 1.0) / (e + 1.0), 0.0)

    lower = np.array(pop.lower)
    upper = np.array(pop.upper)
    targets = range(pop.k) if spec.all_worldviews else [terrorist.main_worldview]
    records = []
    idx = np.flatnonzero(threatened)
    for w in targets:
        a_q = terrorist.identity.segments[w].position
        pos = pop.position[idx, w]
        lo, up = pop.lower[idx, w], pop.upper[idx, w]
        side = _closest_side(lo, up, a_q)
        before = np.where(side == LOWER, lo, up)
        after = contract_bound(before, pos, mu[idx], params.epsilon)
        is_low = side == LOWER
        lower[idx[is_low], w] = after[is_low]
        upper[idx[~is_low], w] = after[~is_low]
        if spec.record_trace:
            for n, i in enumerate(idx):
                records.append(ThreatUpdateRecord(int(i), t, float(omega[i]), float(mu[i]), w,
                                                  str(side[n]), float(before[n]), float(after[n])))
    records.sort(key=lambda r: (r.agent_id, r.worldview))
    return pop.with_bounds(lower, upper), records


def run_scenario(pop: Population, spec: ScenarioSpec, grid: Grid, params: ModelParams,
                 summarize: bool = True, threads: int = 1) -> ScenarioResult:
    """Apply ``spec.n_messages`` messages; keep every snapshot.

    With ``summarize`` the mean attitude matrix by (observer group, target
    group) is stored for each snapshot.
    """
    snaps = [pop]
    traces = []
    for t in range(spec.n_messages):
        pop, rec = scenario_step(pop, spec, grid, params, t=t)
        snaps.append(pop)
        traces.append(tuple(rec))
    summaries = ()
    if summarize:
        summaries = tuple(group_mean_matrix(s, grid, params, threads=threads) for s in snaps)
    return ScenarioResult(tuple(snaps), tuple(traces), summaries)


def group_mean_matrix(pop: Population, grid: Grid, params: ModelParams,
                      threads: int = 1) -> np.ndarray:
    """``(K, K)`` mean attitude of observer group about target group, ``i != j``.

    Cells without any pair are NaN.
    """
    w = attitude_matrix(pop, grid, params, threads=threads)
    return _group_means(w, pop.group, pop.group, pop.k)


def _group_means(w, obs_group, tgt_group, k):
    out = np.full((k, k), np.nan)
    n = w.shape[0]
    offdiag = ~np.eye(n, dtype=bool)
    for g in range(k):
        rows = obs_group == g
        for h in range(k):
            cols = tgt_group == h
            mask = rows[:, None] & cols[None, :] & offdiag
            if mask.any():
                out[g, h] = w[mask].mean()
    return out


# -- trace export ---------------------------------------------------------------

TRACE_COLUMNS = ["t", "agent_id", "group", "prototype", "omega_qi", "mu", "worldview",
                 "side", "bound_before", "bound_after"]


def trace_to_csv(result: ScenarioResult) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(TRACE_COLUMNS)
    pop = result.initial
    labels = pop.labels
    for records in result.traces:
        for r in records:
            w.writerow([r.t, r.agent_id, labels[pop.group[r.agent_id]], KINDS[pop.kind[r.agent_id]],
                        fmt(r.omega_qi), fmt(r.mu), labels[r.worldview], r.side,
                        fmt(r.bound_before), fmt(r.bound_after)])
    return buf.getvalue()

