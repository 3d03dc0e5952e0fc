"""Iterative interference-cancellation decoding on frame graphs.

Decoding peels the bipartite user/slot graph: a slot holding exactly one
replica is decodable, and cancelling the decoded user's replicas may expose
further singleton slots. Collisions are destructive and cancellation is
ideal. One iteration processes every singleton slot currently present, so
the fixpoint is reached in at most ``n`` iterations.

The two-step variant decodes once after the first ``alpha`` slots,
broadcasts a per-slot feedback bitmap, and silences the users already
decoded for the rest of the frame.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .protocol import FrameGraph


def _ragged_take(ptr: np.ndarray, items: np.ndarray) -> np.ndarray:
    """Indices ptr[i]..ptr[i+1] for every i in items, concatenated."""
    counts = ptr[items + 1] - ptr[items]
    total = int(counts.sum())
    if total == 0:
        return np.empty(0, dtype=np.int64)
    excl = np.concatenate(([0], np.cumsum(counts)[:-1]))
    return np.repeat(ptr[items] - excl, counts) + np.arange(total, dtype=np.int64)


def peel_flat(edge_user: np.ndarray, edge_slot: np.ndarray, num_users: int,
              num_slots: int, max_iters: int) -> tuple[np.ndarray, int]:
    """Peel an edge list to its fixpoint.

    Returns (decoded boolean mask over users, iteration count). Users and
    slots may span many independent frames; the result is identical to
    peeling each frame alone.
    """
    order = np.argsort(edge_user, kind="stable")
    es = edge_slot[order]
    counts = np.bincount(edge_user, minlength=num_users).astype(np.int64)
    ptr = np.zeros(num_users + 1, dtype=np.int64)
    np.cumsum(counts, out=ptr[1:])

    cnt = np.bincount(edge_slot, minlength=num_slots).astype(np.int64)
    # user ids are exact in float64 up to 2**53, far above any frame batch
    usum = np.bincount(edge_slot, weights=edge_user,
                       minlength=num_slots).astype(np.int64)
    decoded = np.zeros(num_users, dtype=bool)
    frontier = np.flatnonzero(cnt == 1)
    iters = 0
    while frontier.size and iters < max_iters:
        frontier = frontier[cnt[frontier] == 1]
        if not frontier.size:
            break
        iters += 1
        newly = np.unique(usum[frontier])
        newly = newly[~decoded[newly]]
        decoded[newly] = True
        hit = es[_ragged_take(ptr, newly)]
        np.subtract.at(cnt, hit, 1)
        np.subtract.at(usum, hit, np.repeat(newly, counts[newly]))
        frontier = np.unique(hit[cnt[hit] == 1])
    return decoded, iters


@dataclass(frozen=True)
class DecodeOutcome:
    """Fixpoint of one peeling run."""

    decoded: frozenset
    iterations: int
    residual: dict
    slot_limit: int
    decoded_mask: np.ndarray = field(repr=False)

    @property
    def residual_users(self) -> frozenset:
        return frozenset(self.residual)


def peel(graph: FrameGraph, slot_limit: int | None = None,
         max_iters: int | None = None) -> DecodeOutcome:
    """Peel one frame, using only replicas in slots below ``slot_limit``.

    Replicas at or beyond the limit have not been transmitted yet and
    cannot be cancelled, so they take no part in the decoding.
    """
    if slot_limit is None:
        slot_limit = graph.n
    if not 1 <= slot_limit <= graph.n:
        raise ValueError(f"slot limit {slot_limit} outside [1, {graph.n}]")
    if max_iters is None:
        max_iters = graph.n
    keep = graph.edge_slot < slot_limit
    decoded_mask, iters = peel_flat(graph.edge_user[keep], graph.edge_slot[keep],
                                    graph.m, slot_limit, max_iters)
    residual = {}
    for u in np.flatnonzero(~decoded_mask).tolist():
        slots = graph.edge_slot[graph.user_ptr[u]:graph.user_ptr[u + 1]]
        residual[u] = tuple(slots[slots < slot_limit].tolist())
    return DecodeOutcome(decoded=frozenset(np.flatnonzero(decoded_mask).tolist()),
                         iterations=iters, residual=residual,
                         slot_limit=slot_limit, decoded_mask=decoded_mask)


def run_standard(graph: FrameGraph) -> DecodeOutcome:
    """Decode a full frame: every user transmits all of its replicas."""
    return peel(graph, slot_limit=graph.n, max_iters=graph.n)


def feedback_bitmap(outcome: DecodeOutcome, alpha: int) -> np.ndarray:
    """Per-slot success bitmap broadcast after the first decoding step.

    Bit i is 1 iff every replica originally placed in slot i belongs to a
    decoded user; empty slots read 1 (no node ever inspects them). A node
    recovers its own status from the bits at its first-part replica
    positions.
    """
    if outcome.slot_limit != alpha:
        raise ValueError("outcome was not produced with slot_limit == alpha")
    bits = np.ones(alpha, dtype=np.uint8)
    for slots in outcome.residual.values():
        bits[list(slots)] = 0
    return bits


def pack_feedback(bits: np.ndarray) -> str:
    """Serialize a feedback bitmap as hex: bit i <-> slot i, little-endian
    within bytes, zero-padded to a byte boundary."""
    return np.packbits(np.asarray(bits, dtype=np.uint8),
                       bitorder="little").tobytes().hex()


def unpack_feedback(hexstr: str, alpha: int) -> np.ndarray:
    """Inverse of pack_feedback for a bitmap of known length."""
    raw = np.frombuffer(bytes.fromhex(hexstr), dtype=np.uint8)
    bits = np.unpackbits(raw, bitorder="little")
    if bits.size < alpha or bits[alpha:].any():
        raise ValueError("hex string does not hold an alpha-bit bitmap")
    return bits[:alpha]


@dataclass(frozen=True)
class TwoStepOutcome:
    """Per-frame record of the two-step decoding protocol."""

    first_decoded: frozenset
    feedback: np.ndarray
    final_decoded: frozenset
    energy_first: float
    energy_second: float
    feedback_bits: int
    k_array: np.ndarray = field(repr=False)
    first_mask: np.ndarray = field(repr=False)
    final_mask: np.ndarray = field(repr=False)

    @property
    def k_per_user(self) -> dict:
        return {u: int(k) for u, k in enumerate(self.k_array)}

    @property
    def energy(self) -> float:
        return self.energy_first + self.energy_second


def run_two_step(graph: FrameGraph, alpha: int, p: float = 1.0,
                 t_pkt: float = 1.0) -> TwoStepOutcome:
    """Run the two-step protocol on one frame.

    Step one peels the first ``alpha`` slots; the feedback bitmap then
    tells each decoded user to stop, so only undecoded users transmit
    their remaining replicas before the final full-frame decoding. A user
    decoded at step one transmits K = (replicas below alpha); any other
    user transmits its full drawn count.
    """
    first = peel(graph, slot_limit=alpha, max_iters=graph.n)
    bits = feedback_bitmap(first, alpha)

    in_first_part = graph.edge_slot < alpha
    first_counts = np.bincount(graph.edge_user[in_first_part],
                               minlength=graph.m).astype(np.int64)
    k = np.where(first.decoded_mask, first_counts, graph.degrees)

    keep = in_first_part | ~first.decoded_mask[graph.edge_user]
    final_mask, _ = peel_flat(graph.edge_user[keep], graph.edge_slot[keep],
                              graph.m, graph.n, graph.n)

    e = p * t_pkt
    total_energy = float(k.sum()) * e
    energy_first = float(first_counts.sum()) * e
    return TwoStepOutcome(
        first_decoded=first.decoded,
        feedback=bits,
        final_decoded=frozenset(np.flatnonzero(final_mask).tolist()),
        energy_first=energy_first,
        energy_second=total_energy - energy_first,
        feedback_bits=alpha,
        k_array=k,
        first_mask=first.decoded_mask,
        final_mask=final_mask,
    )
