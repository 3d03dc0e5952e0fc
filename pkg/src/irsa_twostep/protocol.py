"""Domain types and random frame generation for irregular repetition slotted ALOHA.

A MAC frame has ``n`` slots shared by ``m`` active users. Each user draws a
replica count ``r`` from a degree distribution and places its replicas on a
uniformly random r-subset of the slots. Slots and users are indexed 0-based
internally; reporting layers convert to 1-based.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

COEFF_SUM_TOL = 1e-9


@dataclass(frozen=True)
class DegreeDistribution:
    """Probability mass over per-user replica counts, indexed by count."""

    coeffs: np.ndarray

    @property
    def r_max(self) -> int:
        """Largest replica count with nonzero mass."""
        nz = np.flatnonzero(self.coeffs > 0.0)
        return int(nz[-1]) if nz.size else 0

    @property
    def mean(self) -> float:
        """Expected replica count."""
        return float(np.arange(len(self.coeffs)) @ self.coeffs)

    def __len__(self) -> int:
        return len(self.coeffs)

    def __eq__(self, other) -> bool:
        return isinstance(other, DegreeDistribution) and np.array_equal(
            self.coeffs, other.coeffs
        )

    def __hash__(self):
        return hash(self.coeffs.tobytes())


def validate_distribution(coeffs, base: bool = False) -> DegreeDistribution:
    """Check a coefficient vector and wrap it as a DegreeDistribution.

    With ``base=True`` the vector must describe a transmit distribution,
    which carries no mass below two replicas. Derived first-part
    distributions may have mass at zero and one.
    """
    arr = np.asarray(coeffs, dtype=np.float64)
    if arr.ndim != 1 or arr.size == 0:
        raise ValueError("coefficient vector must be non-empty and 1-D")
    if np.any(arr < 0.0):
        raise ValueError("coefficients must be nonnegative")
    total = float(arr.sum())
    if abs(total - 1.0) > COEFF_SUM_TOL:
        raise ValueError(f"coefficients sum to {total!r}, expected 1")
    if base and np.any(arr[:2] > 0.0):
        raise ValueError("transmit distribution must have zero mass at r < 2")
    arr = arr / total  # remove the residual slack so the stored mass is exact
    arr.flags.writeable = False
    return DegreeDistribution(arr)


def sample_degree(dist: DegreeDistribution, rng: np.random.Generator) -> int:
    """Draw one replica count from ``dist``."""
    return int(rng.choice(len(dist.coeffs), p=dist.coeffs))


def place_replicas(r: int, n: int, rng: np.random.Generator) -> np.ndarray:
    """Uniformly random r-subset of the n slots, returned sorted.

    Every r-subset is equiprobable. Rejection sampling on r i.i.d. slot
    draws is used for small r (conditioning on distinctness leaves the
    subset uniform); a permutation prefix covers large r.
    """
    if not 0 <= r <= n:
        raise ValueError(f"replica count {r} outside [0, {n}]")
    if r == 0:
        return np.empty(0, dtype=np.int64)
    if r * r <= n:
        while True:
            draw = rng.integers(0, n, size=r)
            if len(set(draw.tolist())) == r:
                return np.sort(draw)
    return np.sort(rng.permutation(n)[:r])


@dataclass(frozen=True)
class FrameConfig:
    """Static parameters of one MAC frame ensemble."""

    n: int
    m: int
    dist: DegreeDistribution
    alpha: int | None = None
    p: float = 1.0
    t_pkt: float = 1.0

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("frame must have at least one slot")
        if self.m < 0:
            raise ValueError("active user count must be nonnegative")
        if self.dist.r_max > self.n:
            raise ValueError("distribution places more replicas than slots")
        if self.alpha is not None:
            if not 1 <= self.alpha <= self.n:
                raise ValueError(f"alpha {self.alpha} outside [1, {self.n}]")
            if self.alpha < self.dist.r_max:
                raise ValueError(
                    f"alpha {self.alpha} below max replica count {self.dist.r_max}"
                )
        if self.p <= 0 or self.t_pkt <= 0:
            raise ValueError("power and packet duration must be positive")

    @classmethod
    def from_load(cls, n: int, load: float, dist: DegreeDistribution, **kw) -> "FrameConfig":
        """Build a config with m = round(load * n) active users."""
        if load < 0:
            raise ValueError("load must be nonnegative")
        return cls(n=n, m=int(round(load * n)), dist=dist, **kw)

    @property
    def load(self) -> float:
        return self.m / self.n

    @property
    def energy_per_packet(self) -> float:
        return self.p * self.t_pkt


@dataclass(frozen=True)
class FrameGraph:
    """Bipartite user/slot incidence for one frame.

    Edges are stored flat in user-major order: ``edge_slot[user_ptr[u]:
    user_ptr[u+1]]`` are user u's slots, sorted. ``degrees[u]`` is the
    replica count u drew at frame start (still drawn for users that are
    later silenced).
    """

    n: int
    m: int
    degrees: np.ndarray
    edge_user: np.ndarray
    edge_slot: np.ndarray
    user_ptr: np.ndarray = field(repr=False)

    @classmethod
    def from_placements(cls, n: int, placements: list) -> "FrameGraph":
        """Build from an explicit per-user list of slot index collections."""
        m = len(placements)
        degrees = np.array([len(s) for s in placements], dtype=np.int64)
        user_ptr = np.zeros(m + 1, dtype=np.int64)
        np.cumsum(degrees, out=user_ptr[1:])
        edge_slot = np.concatenate(
            [np.sort(np.asarray(sorted(s), dtype=np.int64)) for s in placements]
        ) if m else np.empty(0, dtype=np.int64)
        edge_user = np.repeat(np.arange(m, dtype=np.int64), degrees)
        graph = cls(n=n, m=m, degrees=degrees, edge_user=edge_user,
                    edge_slot=edge_slot, user_ptr=user_ptr)
        graph.check()
        return graph

    def check(self):
        """Verify structural invariants; raises on violation."""
        if self.edge_slot.size:
            if self.edge_slot.min() < 0 or self.edge_slot.max() >= self.n:
                raise ValueError("slot index out of range")
        for u in range(self.m):
            slots = self.edge_slot[self.user_ptr[u]:self.user_ptr[u + 1]]
            if len(slots) != self.degrees[u]:
                raise ValueError(f"user {u} edge count differs from its degree")
            if np.any(np.diff(slots) <= 0):
                raise ValueError(f"user {u} has duplicate or unsorted slots")

    def placements(self, u: int) -> tuple:
        """Sorted slot indices of user u."""
        return tuple(self.edge_slot[self.user_ptr[u]:self.user_ptr[u + 1]].tolist())

    def occupancy(self) -> list:
        """Per-slot list of occupying users, reconstructible from placements."""
        occ = [[] for _ in range(self.n)]
        for u, s in zip(self.edge_user.tolist(), self.edge_slot.tolist()):
            occ[s].append(u)
        return occ

    @classmethod
    def from_occupancy(cls, occupancy: list, m: int) -> "FrameGraph":
        """Inverse of occupancy(): rebuild the graph from per-slot user lists."""
        placements = [[] for _ in range(m)]
        for s, users in enumerate(occupancy):
            for u in users:
                placements[u].append(s)
        return cls.from_placements(len(occupancy), placements)


def _batch_subsets(count: int, r: int, n: int, rng: np.random.Generator) -> np.ndarray:
    """(count, r) matrix of sorted uniform r-subsets of range(n)."""
    if r == 0:
        return np.empty((count, 0), dtype=np.int64)
    if r * r > n:
        rows = np.stack([np.sort(rng.permutation(n)[:r]) for _ in range(count)])
        return rows.astype(np.int64)
    draw = np.sort(rng.integers(0, n, size=(count, r)), axis=1)
    bad = np.flatnonzero((np.diff(draw, axis=1) == 0).any(axis=1))
    while bad.size:
        redo = np.sort(rng.integers(0, n, size=(bad.size, r)), axis=1)
        draw[bad] = redo
        bad = bad[(np.diff(redo, axis=1) == 0).any(axis=1)]
    return draw


def build_frame(config: FrameConfig, rng: np.random.Generator) -> FrameGraph:
    """Generate one random frame: draw degrees, place replicas uniformly."""
    m, n = config.m, config.n
    k = len(config.dist.coeffs)
    if config.dist.r_max == k - 1 and config.dist.coeffs[k - 1] == 1.0:
        degrees = np.full(m, k - 1, dtype=np.int64)  # point mass, no draw needed
    else:
        degrees = rng.choice(k, size=m, p=config.dist.coeffs).astype(np.int64)
    user_ptr = np.zeros(m + 1, dtype=np.int64)
    np.cumsum(degrees, out=user_ptr[1:])
    edge_slot = np.empty(user_ptr[-1], dtype=np.int64)
    for d in np.unique(degrees):
        if d == 0:
            continue
        users = np.flatnonzero(degrees == d)
        rows = _batch_subsets(users.size, int(d), n, rng)
        positions = user_ptr[users, None] + np.arange(d)[None, :]
        edge_slot[positions] = rows
    edge_user = np.repeat(np.arange(m, dtype=np.int64), degrees)
    return FrameGraph(n=n, m=m, degrees=degrees, edge_user=edge_user,
                      edge_slot=edge_slot, user_ptr=user_ptr)
