"""Cultural identities and the attitude functions between them.

An agent holds, for each worldview, an acceptance segment ``(b, a, B)``:
the most acceptable position ``a`` and the lower/upper bounds of its
margins of acceptance. Attitudes are computed on a regular grid of the
``[-1, 1]`` axis.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

DEFAULT_LABELS = ("M", "C", "A")


class InvalidSegment(ValueError):
    pass


class DegenerateTargetSegment(ValueError):
    """Raised when no grid point lies strictly inside a target segment."""


@dataclass(frozen=True)
class WorldviewId:
    index: int
    label: str

    def __str__(self) -> str:
        return self.label


@dataclass(frozen=True)
class AcceptanceSegment:
    position: float
    lower: float
    upper: float

    def __post_init__(self):
        a, b, B = self.position, self.lower, self.upper
        if not all(math.isfinite(v) for v in (a, b, B)):
            raise InvalidSegment(f"non-finite segment {self}")
        if not (-1.0 <= b <= a <= B <= 1.0):
            raise InvalidSegment(f"segment must satisfy -1 <= b <= a <= B <= 1, got b={b}, a={a}, B={B}")

    @property
    def margin_low(self) -> float:
        return self.position - self.lower

    @property
    def margin_high(self) -> float:
        return self.upper - self.position

    def with_bound(self, side: str, value: float) -> "AcceptanceSegment":
        if side == "lower":
            return AcceptanceSegment(self.position, value, self.upper)
        if side == "upper":
            return AcceptanceSegment(self.position, self.lower, value)
        raise ValueError(f"unknown side {side!r}")


@dataclass(frozen=True)
class CulturalIdentity:
    segments: tuple[AcceptanceSegment, ...]

    def __post_init__(self):
        object.__setattr__(self, "segments", tuple(self.segments))
        if len(self.segments) < 2:
            raise ValueError("an identity needs at least two worldviews")

    @property
    def k(self) -> int:
        return len(self.segments)

    @property
    def positions(self) -> tuple[float, ...]:
        return tuple(s.position for s in self.segments)

    def replace(self, index: int, segment: AcceptanceSegment) -> "CulturalIdentity":
        segs = list(self.segments)
        segs[index] = segment
        return CulturalIdentity(tuple(segs))

    @classmethod
    def from_triples(cls, triples: Sequence[Sequence[float]]) -> "CulturalIdentity":
        """Build from ``(a, b, B)`` triples, one per worldview."""
        return cls(tuple(AcceptanceSegment(float(a), float(b), float(B)) for a, b, B in triples))


@dataclass(frozen=True)
class Grid:
    d: int
    points: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.d < 2:
            raise ValueError(f"grid needs d >= 2, got {self.d}")
        # -1 + 2p/(d-1), endpoints exact
        pts = -1.0 + 2.0 * np.arange(self.d) / (self.d - 1)
        pts.flags.writeable = False
        object.__setattr__(self, "points", pts)

    def interior_range(self, lower, upper):
        """Index range ``[lo, hi)`` of grid points strictly inside ``(lower, upper)``.

        Works elementwise on arrays.
        """
        lo = np.searchsorted(self.points, lower, side="right")
        hi = np.searchsorted(self.points, upper, side="left")
        return lo, np.maximum(hi, lo)


@dataclass(frozen=True)
class ModelParams:
    alpha: float = 0.5
    epsilon: float = 0.05
    d: int = 400
    eq2_normalizer: float = 1.0

    def __post_init__(self):
        if not (0.0 < self.alpha <= 1.0):
            raise ValueError(f"alpha out of (0,1]: {self.alpha}")
        if not (0.0 < self.epsilon < 1.0):
            raise ValueError(f"epsilon out of (0,1): {self.epsilon}")
        if int(self.d) != self.d or self.d < 2:
            raise ValueError(f"d must be an integer >= 2: {self.d}")
        if not self.eq2_normalizer > 0:
            raise ValueError(f"eq2_normalizer must be > 0: {self.eq2_normalizer}")

    def grid(self) -> Grid:
        return _grid_cache(int(self.d))


_GRIDS: dict[int, Grid] = {}


def _grid_cache(d: int) -> Grid:
    g = _GRIDS.get(d)
    if g is None:
        g = _GRIDS[d] = Grid(d)
    return g


def worldviews(labels: Sequence[str] = DEFAULT_LABELS) -> tuple[WorldviewId, ...]:
    if len(labels) < 2 or len(set(labels)) != len(labels):
        raise ValueError(f"need >= 2 distinct worldview labels, got {labels!r}")
    return tuple(WorldviewId(i, lab) for i, lab in enumerate(labels))


# -- attitude to a position ---------------------------------------------------


def _falloff(y):
    # (e^y - 1)/(e^y + 1) == tanh(y/2)
    return np.tanh(0.5 * y)


def attitude_to_position(seg: AcceptanceSegment, a: float) -> float:
    """Attitude of the holder of ``seg`` about position ``a``.

    1 strictly inside ``(b, B)``, 0 on a bound, then falling toward -1 with
    a slope set by the width of the margin on the exited side.
    """
    if not (-1.0 <= a <= 1.0):
        raise ValueError(f"position out of [-1, 1]: {a}")
    pos, b, B = seg.position, seg.lower, seg.upper
    if b < a < B:
        return 1.0
    if a <= b:
        width = pos - b
        if a == b:
            return 0.0
        if width <= 0.0:
            return -1.0
        y = 1.0 + (a - pos) / width
    else:
        width = B - pos
        if a == B:
            return 0.0
        if width <= 0.0:
            return -1.0
        y = 1.0 + (pos - a) / width
    return float(_falloff(y))


def attitude_profile(position, lower, upper, points: np.ndarray) -> np.ndarray:
    """Vectorised attitude over grid ``points`` for one or many segments.

    ``position``, ``lower`` and ``upper`` are scalars or 1-d arrays of length
    ``n``; the result has shape ``(n, len(points))`` (or ``(len(points),)``
    for scalars).
    """
    a = np.asarray(position, dtype=float)[..., None]
    b = np.asarray(lower, dtype=float)[..., None]
    B = np.asarray(upper, dtype=float)[..., None]
    p = points
    wl = a - b
    wh = B - a
    with np.errstate(divide="ignore", invalid="ignore"):
        y_low = 1.0 + (p - a) / wl
        y_high = 1.0 + (a - p) / wh
    low_val = np.where(wl > 0, _falloff(y_low), -1.0)
    high_val = np.where(wh > 0, _falloff(y_high), -1.0)
    out = np.where(p <= b, low_val, high_val)
    out = np.where(p == b, 0.0, out)
    out = np.where(p == B, 0.0, out)
    out = np.where((p > b) & (p < B), 1.0, out)
    return out


# -- attitude to a segment / identity -----------------------------------------


def attitude_to_segment(observer: AcceptanceSegment, target: AcceptanceSegment,
                        grid: Grid, params: ModelParams) -> float:
    """Observer's mean attitude over the grid points strictly inside ``target``."""
    lo, hi = grid.interior_range(target.lower, target.upper)
    lo, hi = int(lo), int(hi)
    if hi <= lo:
        raise DegenerateTargetSegment(
            f"no grid point strictly inside ({target.lower}, {target.upper}) at d={grid.d}")
    prof = attitude_profile(observer.position, observer.lower, observer.upper, grid.points[lo:hi])
    return params.eq2_normalizer * float(prof.sum()) / (hi - lo)


def attitude_to_identity(observer: CulturalIdentity, target: CulturalIdentity,
                         grid: Grid, params: ModelParams) -> float:
    if observer.k != target.k:
        raise ValueError(f"worldview count mismatch: {observer.k} vs {target.k}")
    total = 0.0
    for s_obs, s_tgt in zip(observer.segments, target.segments):
        total += attitude_to_segment(s_obs, s_tgt, grid, params)
    return total / observer.k


def group_of(identity: CulturalIdentity) -> int:
    """Index of the worldview with the highest position; lowest index wins ties."""
    pos = identity.positions
    return max(range(len(pos)), key=lambda k: (pos[k], -k))


# -- many-agent kernels -------------------------------------------------------


def segment_attitude_matrix(obs_pos, obs_low, obs_up, tgt_low, tgt_up,
                            grid: Grid, params: ModelParams) -> np.ndarray:
    """Matrix ``M[i, j]`` of observer ``i``'s attitude about target ``j``'s segment.

    Uses prefix sums of each observer's grid profile, so the cost is
    ``O(n_obs * d + n_obs * n_tgt)``.
    """
    prof = attitude_profile(obs_pos, obs_low, obs_up, grid.points)
    prof = np.atleast_2d(prof)
    csum = np.zeros((prof.shape[0], grid.d + 1))
    np.cumsum(prof, axis=1, out=csum[:, 1:])
    lo, hi = grid.interior_range(np.asarray(tgt_low, dtype=float), np.asarray(tgt_up, dtype=float))
    lo = np.atleast_1d(lo)
    hi = np.atleast_1d(hi)
    count = hi - lo
    if np.any(count <= 0):
        j = int(np.flatnonzero(count <= 0)[0])
        raise DegenerateTargetSegment(
            f"target {j}: no grid point strictly inside its segment at d={grid.d}")
    sums = csum[:, hi] - csum[:, lo]
    return params.eq2_normalizer * sums / count


def identity_attitude_matrix(obs_pos, obs_low, obs_up, tgt_pos, tgt_low, tgt_up,
                             grid: Grid, params: ModelParams) -> np.ndarray:
    """``W[i, j]``: attitude of observer ``i`` about target identity ``j``.

    Arguments are ``(n, K)`` arrays of positions and bounds.
    """
    obs_pos = np.atleast_2d(obs_pos)
    k = obs_pos.shape[1]
    if np.atleast_2d(tgt_pos).shape[1] != k:
        raise ValueError("worldview count mismatch")
    obs_low, obs_up = np.atleast_2d(obs_low), np.atleast_2d(obs_up)
    tgt_low, tgt_up = np.atleast_2d(tgt_low), np.atleast_2d(tgt_up)
    total = np.zeros((obs_pos.shape[0], tgt_low.shape[0]))
    for w in range(k):
        total += segment_attitude_matrix(obs_pos[:, w], obs_low[:, w], obs_up[:, w],
                                         tgt_low[:, w], tgt_up[:, w], grid, params)
    return total / k
