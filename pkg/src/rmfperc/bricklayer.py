"""Two-scale "bricklayer" coupling between RMF labels on the first quadrant
of Z^2 and an inhomogeneous dependent oriented percolation model.

The bricklayer lattice has vertices V_L = {(x, y): y in Z+, x - y/2 in Z+}
with oriented edges (x,y)->(x+1,y) and (x,y)->(x+1/2,y+1).  Each vertex is
blown up into a brick: 3 rows x (n+1) columns of Z+^2 sites.  A horizontal
edge ((a,b),(a+1,b)) is open iff the source uniform lies in a window
(3*5^q/n^q, 1-3*5^q/n^q) (or (n^-2, 1-n^-2) for q = inf); a vertical edge
((a,b),(a,b+1)) is open iff U_(a,b) < U_(a,b+1).  A brick is good when all
its horizontal edges are open and at least one left-vertical and one
right-vertical edge are open.  A directed path of good bricks yields an
explicit open-edge path, and for drifts close enough to 1 every open edge
far enough from the origin is label-increasing.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Optional

import numpy as np

from .core import LabelField, Metric

__all__ = [
    "BrickId",
    "BrickConfig",
    "Brick",
    "brick_build",
    "edge_open",
    "brick_good",
    "goodness_probability",
    "compute_A",
    "distance_gap_check",
    "open_implies_increasing_check",
    "simulate_bricklayer",
]

_A_SCAN_MAX = 10**6


@dataclass(frozen=True)
class BrickId:
    """Vertex (x, y) of the bricklayer lattice; x is a half-integer with
    x - y/2 a nonnegative integer."""

    x: Fraction
    y: int

    def __post_init__(self):
        x = Fraction(self.x)
        object.__setattr__(self, "x", x)
        if self.y < 0:
            raise ValueError(f"y must be >= 0, got {self.y}")
        k = x - Fraction(self.y, 2)
        if k.denominator != 1 or k < 0:
            raise ValueError(f"({x}, {self.y}) is not a bricklayer vertex")

    @property
    def k(self) -> int:
        """Oriented-grid coordinate: (x, y) <-> (k, y) with x = k + y/2."""
        return int(self.x - Fraction(self.y, 2))

    @classmethod
    def from_grid(cls, k: int, y: int) -> "BrickId":
        return cls(Fraction(k) + Fraction(y, 2), y)


@dataclass(frozen=True)
class BrickConfig:
    """Brick width n and the metric exponent q in (1, inf].

    Operations that consult horizontal-edge openness need a nonempty
    window, i.e. 6*5^q < n^q for finite q, and raise otherwise; geometric
    operations (brick sets, the distance threshold and gap) work for any
    n.  Quarter-based edge sets additionally need 4 | n, enforced where
    they are built.
    """

    n: int
    q: float

    def __post_init__(self):
        if self.n < 2:
            raise ValueError(f"n must be >= 2, got {self.n}")
        if not self.q > 1:
            raise ValueError(f"q must lie in (1, inf], got {self.q}")

    @property
    def window_margin(self) -> float:
        """Horizontal edges are open iff U is in (margin, 1-margin)."""
        if self.q == math.inf:
            return self.n ** -2.0
        margin = 3.0 * (5.0 / self.n) ** self.q
        if margin >= 0.5:
            raise ValueError(
                f"openness window is empty for n={self.n}, q={self.q}: "
                "need 6*(5/n)^q < 1"
            )
        return margin

    @property
    def metric(self) -> Metric:
        return Metric(self.q)


@dataclass(frozen=True)
class Brick:
    """Vertex and edge sets of one brick.

    Sites (a, b) with a in {x*n, ..., x*n + n} and b in {2y, 2y+1, 2y+2};
    horizontal edges run along the two lower rows, left-vertical edges sit
    in the second column quarter between the lower rows, right-vertical
    edges in the third quarter between the upper rows.  No two vertical
    edges share a vertex, which makes all edge states within a brick
    independent.
    """

    id: BrickId
    n: int
    vertices: frozenset
    hor: tuple
    lver: tuple
    rver: tuple

    @property
    def edges(self) -> tuple:
        return self.hor + self.lver + self.rver


def _col0(brick_id: BrickId, n: int) -> int:
    c = brick_id.x * n
    if c.denominator != 1:
        raise ValueError(f"x*n must be integral; got x={brick_id.x}, n={n}")
    return int(c)


def brick_build(brick_id: BrickId, config: BrickConfig) -> Brick:
    """Materialise the vertex set and the three directed edge sets."""
    n = config.n
    if n % 4 != 0:
        raise ValueError(f"brick subdivision requires n divisible by 4, got {n}")
    c0 = _col0(brick_id, n)
    r0 = 2 * brick_id.y
    vertices = frozenset(
        (a, b) for a in range(c0, c0 + n + 1) for b in (r0, r0 + 1, r0 + 2)
    )
    hor = tuple(
        ((a, b), (a + 1, b))
        for b in (r0, r0 + 1)
        for a in range(c0, c0 + n)
    )
    lver = tuple(
        ((a, r0), (a, r0 + 1)) for a in range(c0 + n // 4, c0 + n // 2)
    )
    rver = tuple(
        ((a, r0 + 1), (a, r0 + 2)) for a in range(c0 + n // 2, c0 + 3 * n // 4)
    )
    return Brick(id=brick_id, n=n, vertices=vertices, hor=hor, lver=lver, rver=rver)


def edge_open(edge, field: LabelField, config: BrickConfig) -> bool:
    """Openness of one directed edge of the coupling.

    Horizontal ((a,b),(a+1,b)): source uniform inside the window.
    Vertical ((a,b),(a,b+1)): source uniform below the target uniform.
    """
    (a, b), (a2, b2) = edge
    if a2 == a + 1 and b2 == b:
        w = config.window_margin
        return w < field.uniform_at((a, b)) < 1.0 - w
    if a2 == a and b2 == b + 1:
        return field.uniform_at((a, b)) < field.uniform_at((a, b2))
    raise ValueError(f"not a brick edge: {edge}")


def brick_good(brick_id: BrickId, field: LabelField, config: BrickConfig) -> bool:
    """All horizontal edges open, at least one left-vertical open, and at
    least one right-vertical open."""
    brick = brick_build(brick_id, config)
    return (
        all(edge_open(e, field, config) for e in brick.hor)
        and any(edge_open(e, field, config) for e in brick.lver)
        and any(edge_open(e, field, config) for e in brick.rver)
    )


def goodness_probability(config: BrickConfig) -> float:
    """Closed form for P(brick is good):

        (1 - 2*margin)^(2n) * (1 - 2^(-n/4))^2,

    margin = 3*5^q/n^q for finite q and n^-2 for q = inf.
    """
    if config.n % 4 != 0:
        raise ValueError(f"goodness needs n divisible by 4, got {config.n}")
    w = config.window_margin
    n = config.n
    horizontal = math.exp(2 * n * math.log1p(-2.0 * w))
    vertical = (1.0 - 2.0 ** (-n / 4)) ** 2
    return horizontal * vertical


def compute_A(config: BrickConfig, scan_max: int = _A_SCAN_MAX) -> int:
    """Distance threshold A_q(n): the smallest a0 such that

        (1 + q/a)^(1/q) >= 1 + (1 - 5^q/n^q)/a

    holds for every a in [a0, scan_max].  The window is verified rather
    than assuming the inequality is monotone in a.
    """
    if config.q == math.inf:
        raise ValueError("the distance threshold applies to finite q only")
    if config.n <= 5:
        raise ValueError(f"need n > 5, got {config.n}")
    q = config.q
    eps = (5.0 / config.n) ** q
    a = np.arange(1, scan_max + 1, dtype=np.float64)
    # expm1/log1p keep precision when both sides are within 1e-6 of 1
    lhs = np.expm1(np.log1p(q / a) / q)
    holds = lhs >= (1.0 - eps) / a
    failures = np.nonzero(~holds)[0]
    if len(failures) == len(a):
        raise RuntimeError(f"inequality never holds for a <= {scan_max}")
    a0 = int(failures[-1]) + 2 if len(failures) else 1
    if a0 > scan_max:
        raise RuntimeError(f"no threshold found within scan window {scan_max}")
    return a0


@dataclass(frozen=True)
class GapCheckReport:
    ok: bool
    config: BrickConfig
    threshold: int
    bricks_checked: int
    sites_checked: int
    min_gap: float
    bound: float
    violations: tuple = ()


def distance_gap_check(config: BrickConfig, brick_range) -> GapCheckReport:
    """Verify, for every site (a, b) of every brick in ``brick_range``
    with a >= A_q(n), that a unit step right increases the l^q distance by
    more than 1 - 2*5^q/n^q.  Brick ids must have x >= 2.

    For q = inf there is no column threshold: below the diagonal the gap
    is exactly 1, so the check uses bound 1 - 2/n^2 at every column.
    """
    metric = config.metric
    if config.q == math.inf:
        a_min = 0
        bound = 1.0 - 2.0 * config.n**-2.0
    else:
        a_min = compute_A(config)
        bound = 1.0 - 2.0 * (5.0 / config.n) ** config.q
    violations = []
    min_gap = math.inf
    sites = 0
    bricks = 0
    for brick_id in brick_range:
        if brick_id.x < 2:
            raise ValueError(f"distance gap lemma needs x >= 2, got {brick_id.x}")
        c0 = _col0(brick_id, config.n)
        r0 = 2 * brick_id.y
        bricks += 1
        for a in range(c0, c0 + config.n + 1):
            if a < a_min:
                continue
            for b in (r0, r0 + 1, r0 + 2):
                gap = metric.norm((a + 1, b)) - metric.norm((a, b))
                sites += 1
                min_gap = min(min_gap, gap)
                if not gap > bound:
                    violations.append((a, b, gap))
    return GapCheckReport(
        ok=not violations,
        config=config,
        threshold=a_min,
        bricks_checked=bricks,
        sites_checked=sites,
        min_gap=min_gap,
        bound=bound,
        violations=tuple(violations),
    )


def _brick_ids_up_to(x_max: float):
    """All bricklayer vertices with x <= x_max, in grid order."""
    out = []
    for y in range(0, int(2 * x_max) + 1):
        k = 0
        while k + y / 2 <= x_max:
            out.append(BrickId.from_grid(k, y))
            k += 1
    return out


@dataclass(frozen=True)
class ImplicationReport:
    ok: bool
    theta: float
    samples: int
    horizontal_checked: int
    vertical_checked: int
    threshold: Optional[int]
    violations: tuple = ()


def open_implies_increasing_check(
    theta: float,
    config: BrickConfig,
    samples: int,
    seed: int = 0,
    x_max: float = 4.0,
) -> ImplicationReport:
    """Sampled verification that open edges carry increasing RMF labels.

    Requires theta in (1 - (5/n)^q, 1) for finite q and in (1 - n^-2, 1)
    for q = inf.  Horizontal edges are checked in eligible bricks (x >= 2
    and source column >= A_q(n)); vertical edges are checked everywhere,
    since U_bottom < U_top together with the weakly growing distance
    already forces the labels up.
    """
    if config.q == math.inf:
        lo = 1.0 - config.n**-2.0
        a_min = None
    else:
        lo = 1.0 - (5.0 / config.n) ** config.q
        a_min = compute_A(config)
    if not (lo < theta < 1.0):
        raise ValueError(f"theta must lie in ({lo}, 1) for n={config.n}, q={config.q}")
    metric = config.metric
    w = config.window_margin
    ids = [b for b in _brick_ids_up_to(x_max) if b.x >= 2]
    hor_checked = 0
    ver_checked = 0
    violations = []
    base = LabelField(seed)
    for s in range(samples):
        field = LabelField(base.key_of((0x6272, s)))
        for brick_id in ids:
            c0 = _col0(brick_id, config.n)
            r0 = 2 * brick_id.y
            arange = np.arange(c0, c0 + config.n + 1)
            for b in (r0, r0 + 1):  # rows carrying horizontal/vertical sources
                coords = np.stack([arange, np.full_like(arange, b)], axis=-1)
                u = field.uniform_array(coords)
                x_lab = u + theta * metric.norm_array(coords)
                # horizontal edges: sources are all but the last column
                src = slice(0, config.n)
                eligible = (u[src] > w) & (u[src] < 1.0 - w)
                if a_min is not None:
                    eligible = eligible & (arange[src] >= a_min)
                bad = eligible & ~(x_lab[1:] > x_lab[:-1])
                hor_checked += int(eligible.sum())
                if bad.any():
                    j = int(np.nonzero(bad)[0][0])
                    violations.append(("hor", int(arange[j]), b, s))
                up = np.stack([arange, np.full_like(arange, b + 1)], axis=-1)
                u_up = field.uniform_array(up)
                open_v = u < u_up
                x_up = u_up + theta * metric.norm_array(up)
                bad = open_v & ~(x_up > x_lab)
                ver_checked += int(open_v.sum())
                if bad.any():
                    j = int(np.nonzero(bad)[0][0])
                    violations.append(("ver", int(arange[j]), b, s))
    return ImplicationReport(
        ok=not violations,
        theta=theta,
        samples=samples,
        horizontal_checked=hor_checked,
        vertical_checked=ver_checked,
        threshold=a_min,
        violations=tuple(violations),
    )


# ---------------------------------------------------------------------------
# n-bricklayer percolation simulation


def _goodness_grid(field: LabelField, config: BrickConfig, depth: int) -> np.ndarray:
    """Boolean goodness of all bricks with x <= depth on the (k, y) grid,
    evaluated vectorised: rows y in [0, 2*depth], columns k in [0, depth]."""
    n = config.n
    w = config.window_margin
    ny, nk = 2 * depth + 1, depth + 1
    good = np.zeros((nk, ny), dtype=bool)
    idx = np.arange(n)
    for y in range(ny):
        ks = np.arange(0, nk)
        # x = k + y/2 <= depth  =>  k <= depth - y/2
        ks = ks[ks + y / 2 <= depth]
        if not len(ks):
            continue
        c0 = ks * n + (y * n) // 2  # x*n = k*n + y*n/2, integral since 2 | n
        r0 = 2 * y
        cols = c0[:, None] + idx[None, :]  # (B, n) source columns
        u_rows = []
        for db in range(3):
            coords = np.stack(
                [cols, np.full_like(cols, r0 + db)], axis=-1
            ).reshape(-1, 2)
            u_rows.append(field.uniform_array(coords).reshape(cols.shape))
        u0, u1, u2 = u_rows
        hor_ok = ((u0 > w) & (u0 < 1 - w)).all(axis=1) & ((u1 > w) & (u1 < 1 - w)).all(axis=1)
        lv = slice(n // 4, n // 2)
        rv = slice(n // 2, 3 * n // 4)
        lver_ok = (u0[:, lv] < u1[:, lv]).any(axis=1)
        rver_ok = (u1[:, rv] < u2[:, rv]).any(axis=1)
        good[ks, y] = hor_ok & lver_ok & rver_ok
    return good


def _reach_grid(good: np.ndarray, depth: int):
    """Oriented reachability over good bricks on the (k, y) grid, where
    brick edges (x,y)->(x+1,y) and (x,y)->(x+1/2,y+1) become grid steps
    (k,y)->(k+1,y) and (k,y)->(k,y+1)."""
    nk, ny = good.shape
    reach = np.zeros_like(good)
    for y in range(ny):
        for k in range(nk):
            if not good[k, y]:
                continue
            if k == 0 and y == 0:
                reach[k, y] = True
            else:
                prev = (k > 0 and reach[k - 1, y]) or (y > 0 and reach[k, y - 1])
                reach[k, y] = prev
    hits = [
        (k, y)
        for k in range(nk)
        for y in range(ny)
        if reach[k, y] and k + y / 2 >= depth
    ]
    return reach, hits


def _witness_brick_path(reach: np.ndarray, target) -> list:
    """Backtrack one directed path of good bricks from (0,0) to target."""
    k, y = target
    path = [(k, y)]
    while (k, y) != (0, 0):
        if k > 0 and reach[k - 1, y]:
            k -= 1
        else:
            y -= 1
        path.append((k, y))
    path.reverse()
    return path


def _witness_open_path(brick_path, config: BrickConfig, field: LabelField):
    """Explicit open-edge path through a directed chain of good bricks.

    Enters each brick on its bottom row within the first column quarter,
    walks right to an open left-vertical column, climbs, walks right to an
    open right-vertical column, climbs again (diagonal brick step) or just
    walks the bottom row through (horizontal brick step); finishes at the
    middle-right vertex of the last brick.
    """
    n = config.n

    def open_vertical(a, b):
        return field.uniform_at((a, b)) < field.uniform_at((a, b + 1))

    path = []
    k0, y0 = brick_path[0]
    pos = ((k0 * n) + (y0 * n) // 2, 2 * y0)  # bottom-left corner
    path.append(pos)

    def walk_right(pos, col):
        a, b = pos
        while a < col:
            a += 1
            path.append((a, b))
        return (a, b)

    def climb(pos):
        a, b = pos
        path.append((a, b + 1))
        return (a, b + 1)

    for i, (k, y) in enumerate(brick_path):
        c0 = k * n + (y * n) // 2
        r0 = 2 * y
        last = i == len(brick_path) - 1
        goes_up = (not last) and brick_path[i + 1][1] == y + 1
        if goes_up:
            lcols = [a for a in range(c0 + n // 4, c0 + n // 2) if open_vertical(a, r0)]
            rcols = [a for a in range(c0 + n // 2, c0 + 3 * n // 4) if open_vertical(a, r0 + 1)]
            if not lcols or not rcols:
                raise AssertionError(f"brick {(k, y)} on the witness path is not good")
            pos = walk_right(pos, lcols[0])
            pos = climb(pos)
            pos = walk_right(pos, rcols[0])
            pos = climb(pos)
        elif last:
            lcols = [a for a in range(c0 + n // 4, c0 + n // 2) if open_vertical(a, r0)]
            if not lcols:
                raise AssertionError(f"brick {(k, y)} on the witness path is not good")
            pos = walk_right(pos, lcols[0])
            pos = climb(pos)
            pos = walk_right(pos, c0 + n)  # middle-right vertex
        else:
            pos = walk_right(pos, c0 + n)  # shared corner with brick (k+1, y)
    return path


@dataclass(frozen=True)
class BricklayerResult:
    config: BrickConfig
    depth: int
    replicas: int
    percolating: int
    seed: int
    good_fraction: float
    witness_verified: int
    replica_records: tuple

    @property
    def frequency(self) -> float:
        return self.percolating / self.replicas

    @property
    def stderr(self) -> float:
        p = self.frequency
        return math.sqrt(p * (1.0 - p) / self.replicas)


def _rle(bits) -> list:
    """Run-length encode a boolean sequence as [first_value, run1, run2, ...]."""
    bits = list(bool(b) for b in bits)
    if not bits:
        return [False]
    runs = [bits[0]]
    count = 1
    for prev, cur in zip(bits, bits[1:]):
        if cur == prev:
            count += 1
        else:
            runs.append(count)
            count = 1
    runs.append(count)
    return runs


def simulate_bricklayer(
    config: BrickConfig,
    depth: int,
    replicas: int,
    seed: int = 0,
    keep_records: bool = False,
    field_factory=None,
) -> BricklayerResult:
    """Frequency of replicas with a directed path of good bricks from
    (0, 0) out to x >= depth.

    On every percolating replica the implied open-edge path is rebuilt
    from the witness brick chain and re-verified edge by edge against the
    coupling's openness rules.
    """
    if depth < 1 or replicas < 1:
        raise ValueError("depth and replicas must be >= 1")
    if config.n % 4 != 0:
        raise ValueError(f"bricks need n divisible by 4, got {config.n}")
    base = LabelField(seed)
    if field_factory is None:
        field_factory = lambda r: LabelField(base.key_of((0x626C, r)))
    percolating = 0
    verified = 0
    good_sum = 0
    brick_sum = 0
    records = []
    ks = np.arange(depth + 1)
    ys = np.arange(2 * depth + 1)
    valid = ks[:, None] + ys[None, :] / 2 <= depth
    for r in range(replicas):
        field = field_factory(r)
        good = _goodness_grid(field, config, depth)
        good_sum += int(good[valid].sum())
        brick_sum += int(valid.sum())
        reach, hits = _reach_grid(good, depth)
        perc = bool(hits)
        witness = None
        if perc:
            percolating += 1
            brick_path = _witness_brick_path(reach, hits[0])
            vertex_path = _witness_open_path(brick_path, config, field)
            _verify_open_path(vertex_path, config, field)
            verified += 1
            witness = {"bricks": brick_path, "start": vertex_path[0], "end": vertex_path[-1]}
        if keep_records:
            records.append(
                {
                    "replica": r,
                    "percolates": perc,
                    "good_rle": [_rle(good[:, y]) for y in range(good.shape[1])],
                    "witness": witness,
                }
            )
    return BricklayerResult(
        config=config,
        depth=depth,
        replicas=replicas,
        percolating=percolating,
        seed=seed,
        good_fraction=good_sum / brick_sum,
        witness_verified=verified,
        replica_records=tuple(records),
    )


def _verify_open_path(vertex_path, config: BrickConfig, field: LabelField):
    """Every consecutive pair must be an open oriented edge."""
    for u, v in zip(vertex_path, vertex_path[1:]):
        if not edge_open((u, v), field, config):
            raise AssertionError(f"witness edge {(u, v)} is not open")
