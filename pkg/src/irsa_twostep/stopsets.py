"""Stopping-set structures: the built-in catalog and an exhaustive enumerator.

A stopping set is a user/slot configuration in which every slot holds at
least two replicas, so peeling decodes nobody. Each structure is described
by its profile nu (users per replica count), slot count mu, user count
omega, and multiplicity c: the number of distinct placements of the
unordered user multiset on mu labelled slots, normalized so that the loss
approximation counts every labelled placement exactly once. Equivalently
c = mu! * prod_t nu_t! / |Aut|, with Aut the joint user/slot automorphism
group of the incidence structure.

The enumerator generates connected minimal structures: configurations
containing a smaller stopping set among a proper subset of their users are
compositions of simpler events and are left out of the catalog, matching
the built-in table's convention.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from math import comb, factorial

MAX_OMEGA = 6
MAX_MU = 5
MAX_DEGREE = 4


def _occupancy(structure) -> dict:
    occ = {}
    for slots in structure:
        for s in slots:
            occ[s] = occ.get(s, 0) + 1
    return occ


def is_stopping(structure) -> bool:
    """True iff every occupied slot holds at least two replicas.

    ``structure`` is a collection of per-user slot-index collections; a
    malformed structure (empty user, duplicate slots within a user) is
    rejected.
    """
    users = [tuple(sorted(slots)) for slots in structure]
    if not users:
        raise ValueError("structure has no users")
    for slots in users:
        if not slots:
            raise ValueError("structure contains a user with no replicas")
        if len(set(slots)) != len(slots):
            raise ValueError("user occupies the same slot twice")
        if any(s < 0 for s in slots):
            raise ValueError("negative slot index")
    return all(k >= 2 for k in _occupancy(users).values())


def canonical_form(structure) -> tuple:
    """Relabel-invariant key: identical iff structures are isomorphic.

    Minimizes the sorted user multiset over all slot permutations; users
    are unordered by construction. Desk scale only (slot count <= 6).
    """
    users = [frozenset(slots) for slots in structure]
    slots = sorted(set().union(*users)) if users else []
    if len(slots) > 6:
        raise ValueError("canonical form supported up to 6 slots")
    best = None
    for perm in itertools.permutations(range(len(slots))):
        relabel = {s: perm[i] for i, s in enumerate(slots)}
        key = tuple(sorted(tuple(sorted(relabel[s] for s in u)) for u in users))
        if best is None or key < best:
            best = key
    return best


def _connected(users) -> bool:
    if not users:
        return False
    seen = {0}
    frontier = [0]
    while frontier:
        i = frontier.pop()
        for j in range(len(users)):
            if j not in seen and users[i] & users[j]:
                seen.add(j)
                frontier.append(j)
    return len(seen) == len(users)


def _contains_smaller_stopping(users) -> bool:
    for size in range(2, len(users)):
        for subset in itertools.combinations(users, size):
            occ = _occupancy(subset)
            if all(k >= 2 for k in occ.values()):
                return True
    return False


def _automorphisms(users) -> int:
    """Count (slot permutation, user permutation) pairs preserving incidence."""
    slots = sorted(set().union(*users))
    count = 0
    base = sorted(tuple(sorted(u)) for u in users)
    mult = 1
    for _, group in itertools.groupby(base):
        mult *= factorial(len(list(group)))
    for perm in itertools.permutations(slots):
        relabel = dict(zip(slots, perm))
        mapped = sorted(tuple(sorted(relabel[s] for s in u)) for u in users)
        if mapped == base:
            count += mult
    return count


@dataclass(frozen=True)
class StoppingSet:
    """One stopping-set structure with its counting parameters."""

    sid: int
    profile: tuple
    mu: int
    omega: int
    c: int
    structure: tuple

    def __post_init__(self):
        if not is_stopping(self.structure):
            raise ValueError("structure has a singleton slot")
        degrees = sorted(len(u) for u in self.structure)
        prof = [0] * len(self.profile)
        for d in degrees:
            prof[d] += 1
        if tuple(prof) != tuple(self.profile):
            raise ValueError("profile does not match structure degrees")
        if sum(self.profile) != self.omega:
            raise ValueError("profile total differs from user count")
        if len(set().union(*map(frozenset, self.structure))) != self.mu:
            raise ValueError("slot count differs from structure")
        if sum(t * nu for t, nu in enumerate(self.profile)) < 2 * self.mu:
            raise ValueError("too few replicas to fill every slot twice")


def _make(sid, structure, c_expected=None) -> StoppingSet:
    users = [frozenset(u) for u in structure]
    slots = set().union(*users)
    degrees = [len(u) for u in users]
    profile = [0] * (max(degrees) + 1)
    for d in degrees:
        profile[d] += 1
    c = factorial(len(slots)) * _prod(factorial(nu) for nu in profile)
    aut = _automorphisms(users)
    if c % aut:
        raise ValueError("non-integer multiplicity")
    c //= aut
    if c_expected is not None and c != c_expected:
        raise ValueError(f"structure multiplicity {c} != expected {c_expected}")
    return StoppingSet(sid=sid, profile=_pad(profile, 4), mu=len(slots),
                       omega=len(users), c=c,
                       structure=canonical_form(structure))


def _prod(values) -> int:
    out = 1
    for v in values:
        out *= v
    return out


def _pad(profile, width) -> tuple:
    return tuple(profile) + (0,) * max(0, width - len(profile))


# Reference catalog: the 22 connected minimal stopping structures with up
# to 5 users, 4 slots, and degree <= 3. Multiplicities are re-derived from
# the structures at load time and must agree with the recorded values.
_BUILTIN = [
    (1, [(0,), (0,)], 1),
    (2, [(0, 1), (0, 1)], 1),
    (3, [(0,), (1,), (0, 1)], 2),
    (4, [(0, 1, 2), (0, 1, 2)], 1),
    (5, [(2,), (0, 1), (0, 1, 2)], 3),
    (6, [(0, 1), (0, 2), (1, 2)], 6),
    (7, [(0, 1), (0, 2), (0, 1, 2)], 6),
    (8, [(0,), (1,), (2,), (0, 1, 2)], 6),
    (9, [(1,), (2,), (0, 1), (0, 2)], 12),
    (10, [(2, 3), (0, 1, 2), (0, 1, 3)], 12),
    (11, [(0, 1, 2), (0, 1, 3), (0, 2, 3)], 24),
    (12, [(2,), (3,), (0, 1, 2), (0, 1, 3)], 24),
    (13, [(2,), (0, 3), (1, 3), (0, 1, 2)], 24),
    (14, [(3,), (0, 3), (1, 2), (0, 1, 2)], 24),
    (15, [(3,), (0, 2), (0, 1, 2), (0, 1, 3)], 48),
    (16, [(0, 3), (1, 3), (2, 3), (0, 1, 2)], 24),
    (17, [(0, 1), (1, 2), (2, 3), (0, 3)], 72),
    (18, [(0, 3), (1, 3), (0, 2), (0, 1, 2)], 144),
    (19, [(0, 2), (1, 3), (0, 1, 2), (0, 1, 3)], 48),
    (20, [(0, 2), (0, 3), (0, 1, 2), (0, 1, 3)], 48),
    (21, [(1,), (2,), (3,), (0, 3), (0, 1, 2)], 72),
    (22, [(0,), (3,), (0, 1), (1, 2), (2, 3)], 144),
]


def builtin_catalog() -> list:
    """The 22 reference stopping sets for degree-3 systems."""
    return [_make(sid, structure, c) for sid, structure, c in _BUILTIN]


def enumerate_stopping_sets(max_omega: int, max_mu: int,
                            max_degree: int) -> list:
    """Exhaustively enumerate connected minimal stopping structures.

    Generates every non-isomorphic structure with 2..max_omega users on
    1..max_mu slots, user degrees in 1..max_degree, every slot holding at
    least two replicas, and no smaller stopping set among a proper subset
    of the users. Bounds are capped at desk scale.
    """
    if not 2 <= max_omega <= MAX_OMEGA:
        raise ValueError(f"max_omega must be in [2, {MAX_OMEGA}]")
    if not 1 <= max_mu <= MAX_MU:
        raise ValueError(f"max_mu must be in [1, {MAX_MU}]")
    if not 1 <= max_degree <= MAX_DEGREE:
        raise ValueError(f"max_degree must be in [1, {MAX_DEGREE}]")
    found = {}
    for mu in range(1, max_mu + 1):
        pool = [frozenset(c) for size in range(1, min(max_degree, mu) + 1)
                for c in itertools.combinations(range(mu), size)]
        for omega in range(2, max_omega + 1):
            for combo in itertools.combinations_with_replacement(pool, omega):
                occ = _occupancy(combo)
                if len(occ) != mu or any(k < 2 for k in occ.values()):
                    continue
                users = list(combo)
                if not _connected(users):
                    continue
                if _contains_smaller_stopping(users):
                    continue
                key = canonical_form(users)
                if key not in found:
                    found[key] = users
    width = max(max_degree + 1, 4)
    sets = []
    for key in sorted(found, key=lambda k: (len(k), _sort_key(k), k)):
        users = found[key]
        ss = _make(0, users, None)
        sets.append(StoppingSet(sid=len(sets) + 1,
                                profile=_pad(ss.profile, width), mu=ss.mu,
                                omega=ss.omega, c=ss.c, structure=ss.structure))
    return sets


def _sort_key(key) -> tuple:
    mu = len(set(s for u in key for s in u))
    degrees = sorted(len(u) for u in key)
    return (mu, len(key), degrees)


def save_catalog(path, catalog):
    """Write a catalog as plain text records, one stopping set each."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("# stopping-set catalog\n")
        for s in catalog:
            fh.write(f"set {s.sid}\n")
            fh.write(f"profile {' '.join(str(v) for v in s.profile)}\n")
            fh.write(f"slots {s.mu}\n")
            fh.write(f"users {s.omega}\n")
            fh.write(f"multiplicity {s.c}\n")
            for u in s.structure:
                fh.write(f"user {' '.join(str(v) for v in u)}\n")
            fh.write("end\n")


def load_catalog(path) -> list:
    """Read a catalog written by save_catalog."""
    sets = []
    current = None
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            word, _, rest = line.partition(" ")
            if word == "set":
                if current is not None:
                    raise ValueError(f"line {lineno}: nested set record")
                current = {"sid": int(rest), "users": []}
            elif current is None:
                raise ValueError(f"line {lineno}: field outside a set record")
            elif word == "profile":
                current["profile"] = tuple(int(v) for v in rest.split())
            elif word == "slots":
                current["mu"] = int(rest)
            elif word == "users":
                current["omega"] = int(rest)
            elif word == "multiplicity":
                current["c"] = int(rest)
            elif word == "user":
                current["users"].append(tuple(int(v) for v in rest.split()))
            elif word == "end":
                sets.append(StoppingSet(
                    sid=current["sid"], profile=current["profile"],
                    mu=current["mu"], omega=current["omega"], c=current["c"],
                    structure=canonical_form(current["users"])))
                current = None
            else:
                raise ValueError(f"line {lineno}: unknown field {word!r}")
    if current is not None:
        raise ValueError("unterminated set record")
    return sets


def compare_catalogs(reference, candidate) -> dict:
    """Row-by-row diff of two catalogs keyed on canonical structure.

    Returns matched pairs, entries whose multiplicities disagree, and the
    entries present on only one side.
    """
    ref = {s.structure: s for s in reference}
    cand = {s.structure: s for s in candidate}
    matched, mismatched = [], []
    for key in ref.keys() & cand.keys():
        pair = (ref[key], cand[key])
        if ref[key].c == cand[key].c:
            matched.append(pair)
        else:
            mismatched.append(pair)
    missing = [ref[k] for k in ref.keys() - cand.keys()]
    extra = [cand[k] for k in cand.keys() - ref.keys()]
    order = lambda s: s.sid
    return {"matched": sorted(matched, key=lambda p: p[0].sid),
            "mismatched": sorted(mismatched, key=lambda p: p[0].sid),
            "missing": sorted(missing, key=order),
            "extra": sorted(extra, key=order)}
