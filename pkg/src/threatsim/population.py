"""Array-backed agent populations and their CSV form."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .core import DEFAULT_LABELS, CulturalIdentity, Grid, ModelParams, identity_attitude_matrix

KINDS = ("inclusive", "exclusive")
INCLUSIVE, EXCLUSIVE = 0, 1


def fmt(x: float) -> str:
    return format(float(x), ".17g")


def _frozen(arr, dtype) -> np.ndarray:
    out = np.array(arr, dtype=dtype, copy=True)
    out.flags.writeable = False
    return out


@dataclass(frozen=True, eq=False)
class Population:
    """``N`` agents with ``K`` acceptance segments each.

    ``position``, ``lower`` and ``upper`` are ``(N, K)`` arrays; ``group`` is
    the declared cultural group index and ``kind`` the prototype kind
    (0 inclusive, 1 exclusive). All arrays are read-only.
    """

    position: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    group: np.ndarray
    kind: np.ndarray
    labels: tuple[str, ...] = DEFAULT_LABELS

    def __post_init__(self):
        for name in ("position", "lower", "upper"):
            object.__setattr__(self, name, _frozen(np.atleast_2d(getattr(self, name)), float))
        object.__setattr__(self, "group", _frozen(self.group, np.int64))
        object.__setattr__(self, "kind", _frozen(self.kind, np.int64))
        object.__setattr__(self, "labels", tuple(self.labels))
        n, k = self.position.shape
        if self.lower.shape != (n, k) or self.upper.shape != (n, k):
            raise ValueError("position/lower/upper shapes differ")
        if self.group.shape != (n,) or self.kind.shape != (n,):
            raise ValueError("group/kind must have one entry per agent")
        if len(self.labels) != k:
            raise ValueError(f"{len(self.labels)} labels for {k} worldviews")

    @property
    def n(self) -> int:
        return self.position.shape[0]

    @property
    def k(self) -> int:
        return self.position.shape[1]

    def identity(self, i: int) -> CulturalIdentity:
        return CulturalIdentity.from_triples(
            zip(self.position[i], self.lower[i], self.upper[i]))

    def validate(self, epsilon: float | None = None, tol: float = 1e-12) -> None:
        """Check bounds; margin widths may fall short of ``epsilon`` by ``tol`` (rounding)."""
        a, b, B = self.position, self.lower, self.upper
        if not (np.all(np.isfinite(a)) and np.all(np.isfinite(b)) and np.all(np.isfinite(B))):
            raise ValueError("non-finite bounds")
        if np.any(b < -1) or np.any(B > 1) or np.any(b > a) or np.any(a > B):
            raise ValueError("segments must satisfy -1 <= b <= a <= B <= 1")
        if epsilon is not None:
            if np.any(a - b < epsilon - tol) or np.any(B - a < epsilon - tol):
                raise ValueError(f"margin narrower than epsilon={epsilon}")

    def with_bounds(self, lower: np.ndarray, upper: np.ndarray) -> "Population":
        return Population(self.position, lower, upper, self.group, self.kind, self.labels)

    def subset(self, idx) -> "Population":
        idx = np.asarray(idx)
        return Population(self.position[idx], self.lower[idx], self.upper[idx],
                          self.group[idx], self.kind[idx], self.labels)

    def same_as(self, other: "Population") -> bool:
        return (self.labels == other.labels
                and all(np.array_equal(getattr(self, f), getattr(other, f))
                        for f in ("position", "lower", "upper", "group", "kind")))

    @classmethod
    def from_identities(cls, identities: Sequence[CulturalIdentity], group=None, kind=None,
                        labels: Sequence[str] = DEFAULT_LABELS) -> "Population":
        from .core import group_of

        pos = [[s.position for s in ident.segments] for ident in identities]
        low = [[s.lower for s in ident.segments] for ident in identities]
        up = [[s.upper for s in ident.segments] for ident in identities]
        if group is None:
            group = [group_of(ident) for ident in identities]
        if kind is None:
            kind = [INCLUSIVE] * len(identities)
        return cls(pos, low, up, group, kind, tuple(labels))


def attitude_matrix(pop: Population, grid: Grid, params: ModelParams,
                    threads: int = 1) -> np.ndarray:
    """``W[i, j]``: attitude of agent ``i`` about agent ``j`` (diagonal included).

    With ``threads > 1`` rows are computed in blocks on a thread pool; each
    block does the same arithmetic as the serial path, so results match
    bit for bit.
    """
    if threads <= 1 or pop.n < 2 * threads:
        return identity_attitude_matrix(pop.position, pop.lower, pop.upper,
                                        pop.position, pop.lower, pop.upper, grid, params)
    from concurrent.futures import ThreadPoolExecutor

    blocks = np.array_split(np.arange(pop.n), threads)

    def run(rows):
        return identity_attitude_matrix(pop.position[rows], pop.lower[rows], pop.upper[rows],
                                        pop.position, pop.lower, pop.upper, grid, params)

    with ThreadPoolExecutor(max_workers=threads) as ex:
        parts = list(ex.map(run, blocks))
    return np.vstack(parts)


# -- CSV ----------------------------------------------------------------------


def population_header(labels: Sequence[str]) -> list[str]:
    cols = ["id", "group", "kind"]
    for lab in labels:
        cols += [f"a_{lab}", f"b_{lab}", f"B_{lab}"]
    return cols


def population_to_csv(pop: Population) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(population_header(pop.labels))
    for i in range(pop.n):
        row = [str(i), pop.labels[pop.group[i]], KINDS[pop.kind[i]]]
        for k in range(pop.k):
            row += [fmt(pop.position[i, k]), fmt(pop.lower[i, k]), fmt(pop.upper[i, k])]
        w.writerow(row)
    return buf.getvalue()


def population_from_csv(text: str) -> Population:
    rows = list(csv.reader(io.StringIO(text)))
    if not rows:
        raise ValueError("empty population file")
    header = rows[0]
    if header[:3] != ["id", "group", "kind"] or (len(header) - 3) % 3:
        raise ValueError(f"bad population header: {header}")
    labels = tuple(h[2:] for h in header[3::3])
    if header != population_header(labels):
        raise ValueError(f"bad population header: {header}")
    lab_index = {lab: i for i, lab in enumerate(labels)}
    pos, low, up, group, kind = [], [], [], [], []
    for line, row in enumerate(rows[1:], start=2):
        if len(row) != len(header):
            raise ValueError(f"line {line}: expected {len(header)} fields, got {len(row)}")
        if row[1] not in lab_index or row[2] not in KINDS:
            raise ValueError(f"line {line}: unknown group/kind {row[1]!r}/{row[2]!r}")
        vals = [float(v) for v in row[3:]]
        pos.append(vals[0::3])
        low.append(vals[1::3])
        up.append(vals[2::3])
        group.append(lab_index[row[1]])
        kind.append(KINDS.index(row[2]))
    if not pos:
        raise ValueError("population file has no agents")
    pop = Population(pos, low, up, group, kind, labels)
    pop.validate()
    return pop
