"""Seeded Monte Carlo experiment runner with exact, order-free aggregation.

Each trial owns an RNG derived from (master seed, load index, trial index),
so results are independent of worker count and batching. All statistics
are integer sums (replica counts, loss counts); means and confidence
intervals are computed only when read, which keeps pooled results
bit-identical no matter how trials are chunked or merged.
"""

from __future__ import annotations

import dataclasses
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from math import sqrt

import numpy as np

from .decoder import peel_flat
from .protocol import FrameConfig, build_frame

Z95 = 1.959963984540054  # two-sided 95% normal quantile

SCHEME_STANDARD = "standard"
SCHEME_TWO_STEP = "two-step"
WORKERS_ENV = "IRSA_WORKERS"
DEFAULT_BATCH = 1024


def trial_rng(seed: int, g_index: int, trial: int) -> np.random.Generator:
    """Counter-style per-trial generator; never depends on worker layout."""
    ss = np.random.SeedSequence((seed, g_index, trial))
    return np.random.Generator(np.random.PCG64(ss))


@dataclass(frozen=True)
class SweepSpec:
    """A grid of Monte Carlo runs over channel loads and schemes."""

    config: FrameConfig
    loads: tuple
    trials: int
    seed: int
    schemes: tuple = (SCHEME_STANDARD, SCHEME_TWO_STEP)
    alphas: tuple = ()

    def __post_init__(self):
        if self.trials < 1:
            raise ValueError("at least one trial per point")
        if not self.loads or any(g <= 0 for g in self.loads):
            raise ValueError("loads must be positive")
        for scheme in self.schemes:
            if scheme not in (SCHEME_STANDARD, SCHEME_TWO_STEP):
                raise ValueError(f"unknown scheme {scheme!r}")
        if SCHEME_TWO_STEP in self.schemes and not self.alphas:
            raise ValueError("two-step runs need at least one alpha")

    def point_config(self, load: float, alpha=None) -> FrameConfig:
        return dataclasses.replace(self.config,
                                   m=int(round(load * self.config.n)),
                                   alpha=alpha)


@dataclass(frozen=True)
class LoadPointStats:
    """Aggregated statistics of one (scheme, alpha, load) grid point.

    Accumulators are exact integers over trials: ``k_sum`` totals the
    replicas transmitted, ``kf_sum`` those in the first frame part,
    ``lost_sum`` the undecoded users; ``*_sq`` hold per-trial squared
    totals for the variance. Loss is pooled per user, not per frame.
    """

    scheme: str
    alpha: int | None
    load: float
    n: int
    m: int
    seed: int
    p: float
    t_pkt: float
    trials: int
    users_total: int
    k_sum: int
    k_sq_sum: int
    kf_sum: int
    kf_sq_sum: int
    lost_sum: int
    lost_sq_sum: int

    @property
    def zero_users(self) -> bool:
        return self.users_total == 0

    def _mean_ci(self, total: int, sq: int) -> tuple:
        if self.zero_users:
            return 0.0, 0.0
        scale = self.p * self.t_pkt
        mean = total / self.users_total
        if self.trials < 2:
            return mean * scale, 0.0
        # per-trial per-user means; totals are ints so this is exact
        var = (sq / self.m**2 - self.trials * mean**2) / (self.trials - 1)
        return mean * scale, Z95 * sqrt(max(var, 0.0) / self.trials) * scale

    @property
    def energy_mean(self) -> float:
        return self._mean_ci(self.k_sum, self.k_sq_sum)[0]

    @property
    def energy_ci95(self) -> float:
        return self._mean_ci(self.k_sum, self.k_sq_sum)[1]

    @property
    def energy_first(self) -> float | None:
        if self.alpha is None:
            return None
        return self._mean_ci(self.kf_sum, self.kf_sq_sum)[0]

    @property
    def energy_first_ci95(self) -> float | None:
        if self.alpha is None:
            return None
        return self._mean_ci(self.kf_sum, self.kf_sq_sum)[1]

    @property
    def energy_second(self) -> float | None:
        if self.alpha is None:
            return None
        return self.energy_mean - self.energy_first

    @property
    def plr(self) -> float:
        if self.zero_users:
            return 0.0
        return self.lost_sum / self.users_total

    @property
    def plr_ci95(self) -> float:
        if self.zero_users or self.trials < 2:
            return 0.0
        mean = self.lost_sum / self.users_total
        var = (self.lost_sq_sum / self.m**2
               - self.trials * mean**2) / (self.trials - 1)
        return Z95 * sqrt(max(var, 0.0) / self.trials)

    @property
    def throughput(self) -> float:
        return self.load * (1.0 - self.plr)

    @property
    def eta(self) -> float:
        if self.zero_users or self.energy_mean <= 0:
            return 0.0
        return self.throughput / self.energy_mean


def merge(a: LoadPointStats, b: LoadPointStats) -> LoadPointStats:
    """Pool two partial results of the same grid point."""
    for name in ("scheme", "alpha", "load", "n", "m", "seed", "p", "t_pkt"):
        if getattr(a, name) != getattr(b, name):
            raise ValueError(f"cannot merge stats differing in {name}")
    sums = {name: getattr(a, name) + getattr(b, name)
            for name in ("trials", "users_total", "k_sum", "k_sq_sum",
                         "kf_sum", "kf_sq_sum", "lost_sum", "lost_sq_sum")}
    return dataclasses.replace(a, **sums)


def _stack_frames(config: FrameConfig, seed: int, g_index: int,
                  trials: range):
    """Generate one frame per trial and flatten them into global arrays."""
    users, slots, degrees = [], [], []
    n, m = config.n, config.m
    for i, t in enumerate(trials):
        g = build_frame(config, trial_rng(seed, g_index, t))
        users.append(g.edge_user + i * m)
        slots.append(g.edge_slot + i * n)
        degrees.append(g.degrees)
    cat = lambda parts: (np.concatenate(parts) if parts
                         else np.empty(0, dtype=np.int64))
    return cat(users), cat(slots), cat(degrees)


def _chunk_sums(config: FrameConfig, load: float, scheme: str, alpha,
                seed: int, g_index: int, trials: range) -> tuple:
    """Exact integer sums for a contiguous range of trials."""
    point = dataclasses.replace(config, m=int(round(load * config.n)),
                                alpha=alpha)
    n, m = point.n, point.m
    t_count = len(trials)
    if m == 0:
        for t in trials:
            build_frame(point, trial_rng(seed, g_index, t))
        return (t_count, 0, 0, 0, 0, 0, 0, 0)
    eu, es, degrees = _stack_frames(point, seed, g_index, trials)
    num_users = t_count * m
    if scheme == SCHEME_STANDARD:
        decoded, _ = peel_flat(eu, es, num_users, t_count * n, n)
        k = degrees
        kf = None
    else:
        local = es % n
        first_part = local < alpha
        first_decoded, _ = peel_flat(eu[first_part], es[first_part],
                                     num_users, t_count * n, n)
        f = np.bincount(eu[first_part], minlength=num_users).astype(np.int64)
        k = np.where(first_decoded, f, degrees)
        keep = first_part | ~first_decoded[eu]
        decoded, _ = peel_flat(eu[keep], es[keep], num_users, t_count * n, n)
        kf = f
    k_frame = k.reshape(t_count, m).sum(axis=1)
    lost_frame = m - decoded.reshape(t_count, m).sum(axis=1)
    sums = [t_count, num_users,
            int(k_frame.sum()), int((k_frame**2).sum())]
    if kf is None:
        sums += [0, 0]
    else:
        kf_frame = kf.reshape(t_count, m).sum(axis=1)
        sums += [int(kf_frame.sum()), int((kf_frame**2).sum())]
    sums += [int(lost_frame.sum()), int((lost_frame**2).sum())]
    return tuple(sums)


def _sum_worker(args) -> tuple:
    config, load, scheme, alpha, seed, g_index, start, count, batch = args
    acc = None
    for lo in range(start, start + count, batch):
        part = _chunk_sums(config, load, scheme, alpha, seed, g_index,
                           range(lo, min(lo + batch, start + count)))
        acc = part if acc is None else tuple(x + y for x, y in zip(acc, part))
    return acc


def default_workers() -> int:
    env = os.environ.get(WORKERS_ENV)
    if env:
        return max(1, int(env))
    return 1


def run_point(config: FrameConfig, load: float, trials: int, seed: int,
              scheme: str, alpha: int | None = None, g_index: int = 0,
              start_trial: int = 0, workers: int | None = None,
              batch: int = DEFAULT_BATCH) -> LoadPointStats:
    """Simulate one grid point over ``trials`` independent frames."""
    if scheme not in (SCHEME_STANDARD, SCHEME_TWO_STEP):
        raise ValueError(f"unknown scheme {scheme!r}")
    if scheme == SCHEME_TWO_STEP and alpha is None:
        raise ValueError("two-step runs need alpha")
    if scheme == SCHEME_STANDARD:
        alpha = None
    if trials < 1:
        raise ValueError("at least one trial")
    workers = default_workers() if workers is None else max(1, workers)
    if workers == 1:
        parts = [_sum_worker((config, load, scheme, alpha, seed, g_index,
                              start_trial, trials, batch))]
    else:
        jobs = []
        per = (trials + workers - 1) // workers
        for w in range(workers):
            lo = start_trial + w * per
            count = min(per, start_trial + trials - lo)
            if count > 0:
                jobs.append((config, load, scheme, alpha, seed, g_index,
                             lo, count, batch))
        with ProcessPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(_sum_worker, jobs))
    total = parts[0]
    for part in parts[1:]:
        total = tuple(x + y for x, y in zip(total, part))
    t_count, users_total, k, ksq, kf, kfsq, lost, lostsq = total
    return LoadPointStats(
        scheme=scheme, alpha=alpha, load=load, n=config.n,
        m=int(round(load * config.n)), seed=seed, p=config.p,
        t_pkt=config.t_pkt, trials=t_count, users_total=users_total,
        k_sum=k, k_sq_sum=ksq, kf_sum=kf, kf_sq_sum=kfsq,
        lost_sum=lost, lost_sq_sum=lostsq)


def run_sweep(spec: SweepSpec, workers: int | None = None) -> list:
    """One LoadPointStats per (scheme, alpha, load) combination.

    Frames depend only on (seed, load index, trial), so every scheme and
    alpha sees the identical frame sequence: paired comparison by design.
    """
    out = []
    for scheme in spec.schemes:
        alphas = spec.alphas if scheme == SCHEME_TWO_STEP else (None,)
        for alpha in alphas:
            for g_index, load in enumerate(spec.loads):
                out.append(run_point(spec.config, load, spec.trials, spec.seed,
                                     scheme, alpha=alpha, g_index=g_index,
                                     workers=workers))
    return out


def _paired_worker(args) -> int:
    config, load, alpha, seed, g_index, start, count, batch = args
    point = dataclasses.replace(config, m=int(round(load * config.n)),
                                alpha=alpha)
    n, m = point.n, point.m
    mismatches = 0
    for lo in range(start, start + count, batch):
        rng_range = range(lo, min(lo + batch, start + count))
        t_count = len(rng_range)
        eu, es, degrees = _stack_frames(point, seed, g_index, rng_range)
        num_users = t_count * m
        std, _ = peel_flat(eu, es, num_users, t_count * n, n)
        first_part = (es % n) < alpha
        first, _ = peel_flat(eu[first_part], es[first_part], num_users,
                             t_count * n, n)
        keep = first_part | ~first[eu]
        final, _ = peel_flat(eu[keep], es[keep], num_users, t_count * n, n)
        diff = (std != final).reshape(t_count, m)
        mismatches += int(diff.any(axis=1).sum())
    return mismatches


def paired_mismatches(config: FrameConfig, load: float, trials: int,
                      seed: int, alpha: int, g_index: int = 0,
                      workers: int | None = None,
                      batch: int = DEFAULT_BATCH) -> int:
    """Count frames where the two-step final decoded set differs from the
    standard full-frame decoded set on the identical frame."""
    workers = default_workers() if workers is None else max(1, workers)
    jobs = []
    per = (trials + workers - 1) // workers
    for w in range(workers):
        lo = w * per
        count = min(per, trials - lo)
        if count > 0:
            jobs.append((config, load, alpha, seed, g_index, lo, count, batch))
    if workers == 1:
        return sum(_paired_worker(j) for j in jobs)
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return sum(pool.map(_paired_worker, jobs))
