"""Scaling benchmark: friends-within query cost against n eligible friends.

For each n a fresh deployment holds one requester and n friends, each placed
strictly inside the threshold it grants the requester, with a query radius
larger than any in-square distance so no pre-filter triggers. Each repetition
re-issues the same query; wall-clock time around the request is the total
and the comparison protocol time comes from the shared ``CostMeter``.
"""
from __future__ import annotations

import csv
import io
import math
import statistics
import time
from dataclasses import dataclass

from ..distcmp import ComparisonParams
from ..meter import CostMeter
from .deployment import Deployment, role_rng
from .scenario import FRIEND_THRESHOLDS

CSV_HEADER = ("n", "total_ms_mean", "total_ms_std", "cmp_ms_mean", "cmp_ms_std", "cmp_share")
SQUARE = 10_000
RADIUS = 2 * SQUARE  # exceeds the square's diagonal


@dataclass
class BenchRow:
    n: int
    total_ms_mean: float
    total_ms_std: float
    cmp_ms_mean: float
    cmp_ms_std: float
    cmp_share: float

    def as_tuple(self) -> tuple:
        return (self.n, round(self.total_ms_mean, 3), round(self.total_ms_std, 3),
                round(self.cmp_ms_mean, 3), round(self.cmp_ms_std, 3), round(self.cmp_share, 4))


def _eligible_fleet(dep: Deployment, n: int, rng) -> str:
    """Register a requester plus ``n`` friends that all grant it access."""
    cx, cy = rng.randrange(100, SQUARE - 100), rng.randrange(100, SQUARE - 100)
    friends = {}
    spots = {}
    for k in range(n):
        fid = f"friend-{k:04d}"
        df = rng.choice(FRIEND_THRESHOLDS)
        # any offset with |dx|,|dy| <= (df-1)/sqrt(2) keeps the distance below df
        reach = math.isqrt((df - 1) ** 2 // 2)
        spots[fid] = (cx + rng.randint(-reach, reach), cy + rng.randint(-reach, reach), df)
        friends[fid] = rng.choice(FRIEND_THRESHOLDS)
    ds = min(1000, dep.params.i_max)  # unused by friend queries, but must be in range
    requester = dep.add_vehicle("requester", (cx, cy), friends, ds)
    for fid, (x, y, df) in spots.items():
        dep.add_vehicle(fid, (x, y), {"requester": df}, ds)
    requester.register(0)
    for fid in spots:
        dep.vehicles[fid].register(0)
    return "requester"


def bench_one(n: int, reps: int, *, paillier_bits: int, rsa_bits: int, i_max: int, ls_count: int = 2,
              seed: int = 0, dummy_count: int = 1) -> BenchRow:
    meter = CostMeter()
    with Deployment(ls_count=ls_count, params=ComparisonParams(i_max=i_max), paillier_bits=paillier_bits,
                    rsa_bits=rsa_bits, dummy_count=dummy_count, seed=f"{seed}/bench/{n}", backend="inproc",
                    timeout=None, meter=meter) as dep:
        requester = dep.vehicles[_eligible_fleet(dep, n, role_rng(seed, f"bench-fleet/{n}"))]
        totals, cmps = [], []
        for _ in range(reps):
            meter.reset()
            query = requester.query_friends_within(RADIUS)
            start = time.perf_counter()
            got = requester.request(query)
            totals.append((time.perf_counter() - start) * 1000)
            cmps.append(meter.total("compare") * 1000)
            if len(got) != n:
                raise AssertionError(f"bench fleet n={n}: expected {n} locations, got {len(got)}")
    total_mean = statistics.fmean(totals)
    cmp_mean = statistics.fmean(cmps)
    return BenchRow(n, total_mean, statistics.pstdev(totals), cmp_mean, statistics.pstdev(cmps),
                    cmp_mean / total_mean if total_mean else 0.0)


def bench(n_values, reps: int = 10, *, paillier_bits: int = 1024, rsa_bits: int = 1024, i_max: int = 1000,
          ls_count: int = 2, seed: int = 0, progress=None) -> list[BenchRow]:
    """One row per positive n. ``n == 0`` yields no row (there is nothing to
    time); an empty ``n_values`` raises ``ValueError``."""
    n_values = list(n_values)
    if not n_values:
        raise ValueError("n_values must be non-empty")
    if reps < 1:
        raise ValueError("reps must be at least 1")
    rows = []
    for n in n_values:
        if n < 0:
            raise ValueError(f"n must be non-negative, got {n}")
        if n == 0:
            continue
        row = bench_one(n, reps, paillier_bits=paillier_bits, rsa_bits=rsa_bits, i_max=i_max,
                        ls_count=ls_count, seed=seed)
        if progress:
            progress(row)
        rows.append(row)
    return rows


def to_csv(rows: list[BenchRow]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_HEADER)
    for row in rows:
        w.writerow(row.as_tuple())
    return buf.getvalue()


def linear_fit(rows: list[BenchRow]) -> tuple[float, float, float]:
    """Least-squares fit of total_ms_mean on n: (slope, intercept, R²)."""
    xs = [r.n for r in rows]
    ys = [r.total_ms_mean for r in rows]
    slope, intercept = statistics.linear_regression(xs, ys)
    return slope, intercept, statistics.correlation(xs, ys) ** 2
