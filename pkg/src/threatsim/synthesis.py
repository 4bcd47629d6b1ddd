"""Virtual populations built from six prototypes and calibrated against attitude indicators.

Each group (M, C, A) mixes an inclusive and an exclusive prototype. The
prototype segments and the per-group inclusive fractions are calibrated
so that the mean/std attitude matrix of the virtual population is close,
in L1, to a reference matrix.
"""

from __future__ import annotations

import csv
import heapq
import io
import json
import math
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np

from .core import DEFAULT_LABELS, CulturalIdentity, Grid, ModelParams, group_of, identity_attitude_matrix
from .population import EXCLUSIVE, INCLUSIVE, KINDS, Population, attitude_matrix, fmt
from .rng import stream

REL_FLOOR = 0.1


# -- prototypes -----------------------------------------------------------------


@dataclass(frozen=True)
class Prototype:
    group: int
    kind: int
    identity: CulturalIdentity

    @property
    def label(self) -> str:
        return f"group {self.group} {KINDS[self.kind]}"


def check_prototype(p: Prototype, epsilon: float, near_zero: float = 0.3, tol: float = 1e-12) -> None:
    """Raise ``ValueError`` if ``p`` breaks the inclusive/exclusive shape rules."""
    segs = p.identity.segments
    for w, s in enumerate(segs):
        if s.margin_low < epsilon - tol or s.margin_high < epsilon - tol:
            raise ValueError(f"{p.label}: worldview {w} margin narrower than epsilon")
    if group_of(p.identity) != p.group:
        raise ValueError(f"{p.label}: highest position is not on its own worldview")
    own = segs[p.group]
    if own.lower < -tol or own.position <= 0:
        raise ValueError(f"{p.label}: own segment must lie in [0, 1] with a positive position")
    for w, s in enumerate(segs):
        if w == p.group:
            continue
        if p.kind == EXCLUSIVE:
            if s.upper > tol:
                raise ValueError(f"{p.label}: worldview {w} segment must lie in [-1, 0]")
        else:
            if abs(s.position) > near_zero + tol:
                raise ValueError(f"{p.label}: worldview {w} position must be within {near_zero} of 0")
            if s.lower + s.upper < -tol:
                raise ValueError(f"{p.label}: worldview {w} segment must sit mostly on the positive side")


def default_prototypes() -> tuple[Prototype, ...]:
    """Hand-made prototypes, ordered M-inc, M-exc, C-inc, C-exc, A-inc, A-exc."""
    T = CulturalIdentity.from_triples
    return (
        Prototype(0, INCLUSIVE, T([(0.5, 0.1, 0.9), (0.0, -0.3, 0.4), (0.0, -0.3, 0.4)])),
        Prototype(0, EXCLUSIVE, T([(0.8, 0.5, 0.95), (-0.6, -0.9, -0.3), (-0.6, -0.9, -0.3)])),
        Prototype(1, INCLUSIVE, T([(0.0, -0.3, 0.4), (0.6, 0.2, 0.9), (0.1, -0.2, 0.5)])),
        Prototype(1, EXCLUSIVE, T([(-0.6, -0.9, -0.3), (0.8, 0.5, 1.0), (-0.5, -0.8, -0.2)])),
        Prototype(2, INCLUSIVE, T([(0.0, -0.4, 0.4), (0.1, -0.3, 0.5), (0.6, 0.2, 0.9)])),
        Prototype(2, EXCLUSIVE, T([(-0.6, -1.0, -0.3), (-0.5, -0.8, -0.2), (0.8, 0.5, 1.0)])),
    )


# -- population spec -------------------------------------------------------------


@dataclass(frozen=True)
class PopulationSpec:
    n: int = 1000
    shares: tuple[float, ...] = (1 / 3, 1 / 3, 1 / 3)
    inclusive_fraction: tuple[float, ...] = (0.5, 0.5, 0.5)
    prototypes: tuple[Prototype, ...] = field(default_factory=default_prototypes)
    jitter: float = 0.0
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "shares", tuple(float(s) for s in self.shares))
        object.__setattr__(self, "inclusive_fraction", tuple(float(x) for x in self.inclusive_fraction))
        object.__setattr__(self, "prototypes", tuple(self.prototypes))
        if self.n < 0:
            raise ValueError(f"n must be >= 0, got {self.n}")
        k = len(self.shares)
        if len(self.inclusive_fraction) != k:
            raise ValueError("one inclusive fraction per group is required")
        if any(s < 0 for s in self.shares) or not math.isclose(sum(self.shares), 1.0, abs_tol=1e-9):
            raise ValueError(f"group shares must be >= 0 and sum to 1, got {self.shares}")
        if any(not 0.0 <= x <= 1.0 for x in self.inclusive_fraction):
            raise ValueError(f"inclusive fractions must be in [0, 1], got {self.inclusive_fraction}")
        if self.jitter < 0:
            raise ValueError("jitter must be >= 0")
        if len(self.prototypes) != 2 * k:
            raise ValueError(f"expected {2 * k} prototypes, got {len(self.prototypes)}")
        for idx, p in enumerate(self.prototypes):
            if (p.group, p.kind) != (idx // 2, idx % 2):
                raise ValueError(f"prototype {idx} must be group {idx // 2} kind {KINDS[idx % 2]}")
            if p.identity.k != k:
                raise ValueError(f"prototype {idx} has {p.identity.k} worldviews, expected {k}")


def largest_remainder(total: int, weights: Sequence[float]) -> list[int]:
    """Integer apportionment of ``total``; remainders tie-break to the lowest index."""
    w = np.asarray(weights, dtype=float)
    if w.sum() <= 0:
        return [0] * len(w)
    quota = total * w / w.sum()
    base = np.floor(quota).astype(int)
    left = total - int(base.sum())
    order = sorted(range(len(w)), key=lambda i: (-(quota[i] - base[i]), i))
    for i in order[:left]:
        base[i] += 1
    return [int(c) for c in base]


def mixture_counts(n: int, shares: Sequence[float], fractions: Sequence[float]) -> list[int]:
    """Agents per prototype (inclusive then exclusive, group by group)."""
    counts = []
    for g, n_g in enumerate(largest_remainder(n, shares)):
        x = fractions[g]
        counts += largest_remainder(n_g, (x, 1.0 - x))
    return counts


def prototype_counts(spec: PopulationSpec) -> list[int]:
    return mixture_counts(spec.n, spec.shares, spec.inclusive_fraction)


def _repair(a, b, B, epsilon):
    b, a, B = np.sort(np.clip([b, a, B], -1.0, 1.0))
    a = min(max(a, -1.0 + epsilon), 1.0 - epsilon)
    return a, min(b, a - epsilon), max(B, a + epsilon)


def build_population(spec: PopulationSpec, epsilon: float = 0.05,
                     labels: Sequence[str] = DEFAULT_LABELS, near_zero: float | None = 0.3) -> Population:
    """Copies of each prototype, optionally jittered.

    Jitter adds uniform noise of half-width ``spec.jitter`` to every bound and
    position, then re-sorts and clamps so ``b <= a <= B`` in ``[-1, 1]`` with
    widths of at least ``epsilon``. Draws that would leave no positive
    position are redrawn. Agents keep their prototype's group and kind.
    """
    if near_zero is not None:
        for p in spec.prototypes:
            check_prototype(p, epsilon, near_zero)
    counts = prototype_counts(spec)
    rng = stream(spec.seed, "synthesis")
    pos, low, up, group, kind = [], [], [], [], []
    for p, c in zip(spec.prototypes, counts):
        base = np.array([[s.position, s.lower, s.upper] for s in p.identity.segments])
        for _ in range(c):
            trip = base
            if spec.jitter > 0:
                for _attempt in range(100):
                    noisy = base + rng.uniform(-spec.jitter, spec.jitter, size=base.shape)
                    trip = np.array([_repair(a, b, B, epsilon) for a, b, B in noisy])
                    if trip[:, 0].max() > 0:
                        break
                else:
                    trip = base
            pos.append(trip[:, 0])
            low.append(trip[:, 1])
            up.append(trip[:, 2])
            group.append(p.group)
            kind.append(p.kind)
    k = len(spec.shares)
    if not pos:
        return Population(np.zeros((0, k)), np.zeros((0, k)), np.zeros((0, k)), [], [], labels)
    return Population(pos, low, up, group, kind, tuple(labels))


# -- indicators -------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class IndicatorMatrix:
    """Mean and population std of interpersonal attitudes per ordered group pair."""

    mean: np.ndarray
    std: np.ndarray
    labels: tuple[str, ...] = DEFAULT_LABELS

    def __post_init__(self):
        m = np.array(self.mean, dtype=float)
        s = np.array(self.std, dtype=float)
        k = len(self.labels)
        if m.shape != (k, k) or s.shape != (k, k):
            raise ValueError(f"indicator matrices must be {k}x{k}")
        if np.any(~np.isfinite(m)) or np.any(~np.isfinite(s)):
            raise ValueError("indicators must be finite")
        m.flags.writeable = False
        s.flags.writeable = False
        object.__setattr__(self, "mean", m)
        object.__setattr__(self, "std", s)
        object.__setattr__(self, "labels", tuple(self.labels))

    def vector(self) -> np.ndarray:
        return np.concatenate([self.mean.ravel(), self.std.ravel()])

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["observer_group", "target_group", "mean", "std"])
        for g, lg in enumerate(self.labels):
            for h, lh in enumerate(self.labels):
                w.writerow([lg, lh, fmt(self.mean[g, h]), fmt(self.std[g, h])])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str, labels: Sequence[str] = DEFAULT_LABELS) -> "IndicatorMatrix":
        labels = tuple(labels)
        rows = list(csv.DictReader(io.StringIO(text)))
        k = len(labels)
        index = {lab: i for i, lab in enumerate(labels)}
        mean = np.full((k, k), np.nan)
        std = np.full((k, k), np.nan)
        for n, row in enumerate(rows, start=2):
            try:
                g, h = index[row["observer_group"].strip()], index[row["target_group"].strip()]
                m, s = float(row["mean"]), float(row["std"])
            except KeyError as e:
                raise ValueError(f"line {n}: unknown group or missing column {e}") from None
            if not np.isnan(mean[g, h]):
                raise ValueError(f"line {n}: duplicate pair {labels[g]}->{labels[h]}")
            if not (-1.0 <= m <= 1.0 and -1.0 <= s <= 1.0):
                raise ValueError(f"line {n}: indicator values must lie in [-1, 1]")
            mean[g, h], std[g, h] = m, s
        if np.isnan(mean).any():
            raise ValueError(f"reference must list all {k * k} ordered group pairs")
        return cls(mean, std, labels)


def _weighted_stats(values, weights):
    wsum = weights.sum()
    m = (values * weights).sum() / wsum
    var = (weights * (values - m) ** 2).sum() / wsum
    return m, math.sqrt(max(var, 0.0))


def indicators_from_matrix(w: np.ndarray, group: np.ndarray, labels: Sequence[str]) -> IndicatorMatrix:
    k = len(labels)
    mean = np.zeros((k, k))
    std = np.zeros((k, k))
    n = w.shape[0]
    offdiag = ~np.eye(n, dtype=bool)
    for g in range(k):
        rows = group == g
        if not rows.any():
            raise ValueError(f"group {labels[g]} is empty")
        for h in range(k):
            vals = w[rows[:, None] & (group == h)[None, :] & offdiag]
            if vals.size == 0:
                raise ValueError(f"no attitude pairs for {labels[g]}->{labels[h]}")
            mean[g, h] = vals.mean()
            std[g, h] = vals.std()
    return IndicatorMatrix(mean, std, labels)


def compute_indicators(pop: Population, grid: Grid, params: ModelParams, threads: int = 1) -> IndicatorMatrix:
    """Mean and population std of ``w[i, j]`` over ``i`` in g, ``j`` in h, ``i != j``."""
    if pop.n == 0:
        raise ValueError("empty population")
    w = attitude_matrix(pop, grid, params, threads=threads)
    return indicators_from_matrix(w, pop.group, pop.labels)


def prototype_indicators(protos: np.ndarray, counts: Sequence[int], grid: Grid, params: ModelParams,
                         labels: Sequence[str] = DEFAULT_LABELS) -> IndicatorMatrix:
    """Indicators of an unjittered population, without expanding it.

    ``protos`` has shape ``(2K, K, 3)`` holding ``(a, b, B)``. Pairs of
    agents sharing a prototype are weighted ``c * (c - 1)``.
    """
    k = len(labels)
    pos, low, up = protos[..., 0], protos[..., 1], protos[..., 2]
    w = identity_attitude_matrix(pos, low, up, pos, low, up, grid, params)
    c = np.asarray(counts, dtype=float)
    pair_w = np.outer(c, c) - np.diag(c)
    mean = np.zeros((k, k))
    std = np.zeros((k, k))
    for g in range(k):
        for h in range(k):
            ww = pair_w[2 * g:2 * g + 2, 2 * h:2 * h + 2]
            if ww.sum() <= 0:
                raise ValueError(f"no attitude pairs for {labels[g]}->{labels[h]}")
            mean[g, h], std[g, h] = _weighted_stats(w[2 * g:2 * g + 2, 2 * h:2 * h + 2], ww)
    return IndicatorMatrix(mean, std, labels)


def objective(candidate: IndicatorMatrix, reference: IndicatorMatrix) -> tuple[float, float, float]:
    """``(l1, average relative error, max relative error)`` over all 2*K*K indicators.

    Relative errors divide by ``max(|reference|, 0.1)``.
    """
    c, r = candidate.vector(), reference.vector()
    if c.shape != r.shape:
        raise ValueError("indicator matrices differ in shape")
    diff = np.abs(c - r)
    rel = diff / np.maximum(np.abs(r), REL_FLOOR)
    return float(diff.sum()), float(rel.mean()), float(rel.max())


# -- search space -----------------------------------------------------------------


@dataclass(frozen=True)
class SearchSpace:
    """Bijection between the unit cube and valid prototype sets plus fractions.

    Per prototype and worldview three coordinates pick the position in its
    allowed range, then the lower bound, then the upper bound, each as a
    fraction of what remains feasible. The last ``K`` coordinates are the
    inclusive fractions.
    """

    k: int = 3
    epsilon: float = 0.05
    near_zero: float = 0.3

    @property
    def dim(self) -> int:
        return 2 * self.k * self.k * 3 + self.k

    def _ranges(self, group, kind, w):
        e, z = self.epsilon, self.near_zero
        if w == group:
            lo_a = z + e if kind == INCLUSIVE else e
            return (lo_a, 1.0 - e), 0.0, 1.0, False
        if kind == EXCLUSIVE:
            return (-1.0 + e, -e), -1.0, 0.0, False
        return (-z, z), -1.0, 1.0, True

    def decode(self, u: np.ndarray) -> tuple[np.ndarray, tuple[float, ...]]:
        """Return ``(protos, fractions)`` with ``protos`` of shape ``(2K, K, 3)``."""
        u = np.clip(np.asarray(u, dtype=float), 0.0, 1.0)
        e = self.epsilon
        protos = np.zeros((2 * self.k, self.k, 3))
        i = 0
        for p in range(2 * self.k):
            group, kind = divmod(p, 2)
            for w in range(self.k):
                (amin, amax), lo, hi, mostly_pos = self._ranges(group, kind, w)
                a = amin + u[i] * (amax - amin)
                b = lo + u[i + 1] * (a - e - lo)
                bmin = max(a + e, -b) if mostly_pos else a + e
                B = bmin + u[i + 2] * (hi - bmin)
                protos[p, w] = (a, min(b, a - e), max(B, a + e))
                i += 3
        return protos, tuple(float(x) for x in u[i:i + self.k])

    def encode(self, protos: np.ndarray, fractions: Sequence[float]) -> np.ndarray:
        e = self.epsilon
        u = []
        for p in range(2 * self.k):
            group, kind = divmod(p, 2)
            for w in range(self.k):
                (amin, amax), lo, hi, mostly_pos = self._ranges(group, kind, w)
                a, b, B = protos[p, w]
                u.append(_frac(a - amin, amax - amin))
                u.append(_frac(b - lo, a - e - lo))
                bmin = max(a + e, -b) if mostly_pos else a + e
                u.append(_frac(B - bmin, hi - bmin))
        u.extend(fractions)
        return np.clip(np.array(u), 0.0, 1.0)


def _frac(num, den):
    return num / den if den > 0 else 0.0


def protos_to_prototypes(protos: np.ndarray) -> tuple[Prototype, ...]:
    return tuple(Prototype(p // 2, p % 2, CulturalIdentity.from_triples(protos[p]))
                 for p in range(protos.shape[0]))


def prototypes_to_array(prototypes: Sequence[Prototype]) -> np.ndarray:
    return np.array([[(s.position, s.lower, s.upper) for s in p.identity.segments] for p in prototypes])


# -- fitting ----------------------------------------------------------------------


@dataclass(frozen=True)
class FitConfig:
    n: int = 60
    shares: tuple[float, ...] = (1 / 3, 1 / 3, 1 / 3)
    n_starts: int = 200
    budget: int = 20000
    n_climbers: int = 4
    top: int = 120
    step: float = 0.25
    min_step: float = 1e-3
    near_zero: float = 0.3


@dataclass(frozen=True)
class Candidate:
    spec: PopulationSpec
    l1: float
    avg_rel: float
    max_rel: float


@dataclass(frozen=True)
class FitResult:
    candidates: tuple[Candidate, ...]
    evaluations: int
    seed: int

    @property
    def best(self) -> Candidate:
        return self.candidates[0]


Optimizer = Callable[[Callable[[np.ndarray], float], int, np.random.Generator, FitConfig], None]


def multistart_hill_climb(evaluate: Callable[[np.ndarray], float], dim: int,
                          rng: np.random.Generator, cfg: FitConfig) -> None:
    """Random starts, then coordinate-wise stochastic hill-climbing from the best.

    Each climber sweeps the coordinates in random order, trying a random
    signed step on each; a sweep without improvement halves the step. When
    the step drops below ``cfg.min_step`` the climber restarts its step
    size. The climb budget is shared equally by the climbers.
    """
    starts = rng.uniform(size=(cfg.n_starts, dim))
    scores = [evaluate(u) for u in starts]
    if cfg.budget <= 0 or not scores:
        return
    order = np.argsort(scores, kind="stable")[:max(1, cfg.n_climbers)]
    share = cfg.budget // len(order)
    extra = cfg.budget - share * len(order)
    for rank, s in enumerate(order):
        left = share + (1 if rank < extra else 0)
        u, f = starts[s].copy(), scores[s]
        step = cfg.step
        while left > 0:
            improved = False
            for c in rng.permutation(dim):
                if left <= 0:
                    break
                trial = u.copy()
                trial[c] = np.clip(trial[c] + rng.choice((-1.0, 1.0)) * step * rng.uniform(0.5, 1.0), 0.0, 1.0)
                if trial[c] == u[c]:
                    continue
                ft = evaluate(trial)
                left -= 1
                if ft < f:
                    u, f, improved = trial, ft, True
            if not improved:
                step *= 0.5
                if step < cfg.min_step:
                    step = cfg.step


def fit(reference: IndicatorMatrix, cfg: FitConfig = FitConfig(), seed: int = 0,
        params: ModelParams = ModelParams(), optimizer: Optimizer = multistart_hill_climb) -> FitResult:
    """Calibrate prototypes and inclusive fractions against ``reference``.

    Every evaluated point is feasible by construction; the ``cfg.top`` best
    distinct ones are returned, best first.
    """
    k = len(reference.labels)
    space = SearchSpace(k, params.epsilon, cfg.near_zero)
    grid = params.grid()
    ref_vec = reference.vector()
    floor = np.maximum(np.abs(ref_vec), REL_FLOOR)
    pool: list = []
    seen: set = set()
    count = 0

    def evaluate(u: np.ndarray) -> float:
        nonlocal count
        count += 1
        protos, fractions = space.decode(u)
        try:
            ind = prototype_indicators(protos, mixture_counts(cfg.n, cfg.shares, fractions),
                                       grid, params, reference.labels)
        except ValueError:
            return math.inf
        diff = np.abs(ind.vector() - ref_vec)
        l1 = float(diff.sum())
        key = tuple(np.round(u, 15))
        if key not in seen:
            seen.add(key)
            item = (-l1, -count, u.copy(), float((diff / floor).mean()), float((diff / floor).max()))
            if len(pool) < cfg.top:
                heapq.heappush(pool, item)
            elif item[:2] > pool[0][:2]:
                heapq.heapreplace(pool, item)
        return l1

    optimizer(evaluate, space.dim, stream(seed, "optimizer"), cfg)

    candidates = []
    for neg_l1, _neg_n, u, avg_rel, max_rel in sorted(pool, key=lambda it: (-it[0], -it[1])):
        protos, fractions = space.decode(u)
        spec = PopulationSpec(n=cfg.n, shares=cfg.shares, inclusive_fraction=fractions,
                              prototypes=protos_to_prototypes(protos), seed=seed)
        candidates.append(Candidate(spec, -neg_l1, avg_rel, max_rel))
    return FitResult(tuple(candidates), count, seed)


# -- JSON ---------------------------------------------------------------------------


def spec_to_dict(spec: PopulationSpec, labels: Sequence[str] = DEFAULT_LABELS) -> dict:
    return {
        "n": spec.n,
        "shares": list(spec.shares),
        "inclusive_fraction": list(spec.inclusive_fraction),
        "jitter": spec.jitter,
        "seed": spec.seed,
        "prototypes": [
            {"group": labels[p.group], "kind": KINDS[p.kind],
             "segments": [[s.position, s.lower, s.upper] for s in p.identity.segments]}
            for p in spec.prototypes
        ],
    }


def spec_from_dict(d: dict, labels: Sequence[str] = DEFAULT_LABELS) -> PopulationSpec:
    allowed = {"n", "shares", "inclusive_fraction", "jitter", "seed", "prototypes"}
    unknown = set(d) - allowed
    if unknown:
        raise ValueError(f"unknown population keys: {sorted(unknown)}")
    kw = {key: d[key] for key in ("n", "jitter", "seed") if key in d}
    if "shares" in d:
        kw["shares"] = tuple(d["shares"])
    if "inclusive_fraction" in d:
        kw["inclusive_fraction"] = tuple(d["inclusive_fraction"])
    if "prototypes" in d:
        protos = []
        for n, p in enumerate(d["prototypes"]):
            extra = set(p) - {"group", "kind", "segments"}
            if extra:
                raise ValueError(f"prototypes[{n}]: unknown keys {sorted(extra)}")
            if p["group"] not in labels or p["kind"] not in KINDS:
                raise ValueError(f"prototypes[{n}]: bad group/kind {p['group']!r}/{p['kind']!r}")
            protos.append(Prototype(labels.index(p["group"]), KINDS.index(p["kind"]),
                                    CulturalIdentity.from_triples(p["segments"])))
        kw["prototypes"] = tuple(protos)
    return PopulationSpec(**kw)


def fit_result_to_dict(res: FitResult, labels: Sequence[str] = DEFAULT_LABELS) -> dict:
    return {
        "seed": res.seed,
        "evaluations": res.evaluations,
        "candidates": [
            {"rank": r, "l1": c.l1, "avg_rel": c.avg_rel, "max_rel": c.max_rel,
             "spec": spec_to_dict(c.spec, labels)}
            for r, c in enumerate(res.candidates)
        ],
    }


def fit_result_from_dict(d: dict, labels: Sequence[str] = DEFAULT_LABELS) -> FitResult:
    cands = tuple(Candidate(spec_from_dict(c["spec"], labels), float(c["l1"]), float(c["avg_rel"]),
                            float(c["max_rel"])) for c in d["candidates"])
    return FitResult(cands, int(d["evaluations"]), int(d["seed"]))


def dumps(obj: dict) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def expand(spec: PopulationSpec, n: int) -> PopulationSpec:
    """Same prototypes and fractions at a different population size."""
    return replace(spec, n=n)
