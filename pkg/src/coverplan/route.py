"""Viewpoint sequencing: open-tour construction and cluster refinement.

The pipeline is: nearest-neighbor tour plus 2-opt and Or-opt improvement,
grouping of the tour into contiguous same-segment clusters, absorption of
undersized clusters into same-segment neighbors, and a final intra-cluster
reordering that keeps the cluster order fixed.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from .viewpoints import Viewpoint

_EPS = 1e-12


@dataclass
class Tour:
    order: list[int]
    length: float
    open: bool = True


@dataclass
class Cluster:
    id: int
    segment_id: int
    member_ids: list[int]

    @property
    def entry_id(self) -> int:
        return self.member_ids[0]

    @property
    def exit_id(self) -> int:
        return self.member_ids[-1]


def _positions(viewpoints: list[Viewpoint]) -> dict[int, np.ndarray]:
    return {vp.id: vp.position for vp in viewpoints}


def path_length(ids, positions: dict[int, np.ndarray]) -> float:
    total = 0.0
    for a, b in zip(ids, ids[1:]):
        total += float(np.linalg.norm(positions[a] - positions[b]))
    return total


def solve_tsp(viewpoints: list[Viewpoint], start) -> Tour:
    """Open inspection tour over viewpoint positions.

    Construction is nearest neighbor from the viewpoint closest to the start
    position; improvement alternates first-improvement 2-opt and Or-opt
    (runs of 1 to 3, forward or reversed) sweeps until neither finds a
    better tour, wrapped in a fixed number of deterministic double-bridge
    restarts to shake off poor local optima.  The first viewpoint stays
    pinned.  Deterministic for a fixed input order.
    """
    if not viewpoints:
        return Tour([], 0.0)
    start = np.asarray(start, dtype=float)
    pos = np.array([vp.position for vp in viewpoints])
    ids = [vp.id for vp in viewpoints]
    n = len(ids)
    if n == 1:
        return Tour([ids[0]], 0.0)

    dist = np.linalg.norm(pos[:, None, :] - pos[None, :, :], axis=2)
    first = int(np.argmin(np.linalg.norm(pos - start[None, :], axis=1)))

    order = [first]
    remaining = set(range(n)) - {first}
    while remaining:
        last = order[-1]
        nxt = min(remaining, key=lambda j: (dist[last, j], j))
        order.append(nxt)
        remaining.discard(nxt)

    order = _improve_two_opt_or_opt(order, dist)
    best = list(order)
    best_len = _tour_length(best, dist)

    rounds = 24 if n <= 16 else 12
    seed = 0x9E3779B9
    for round_idx in range(rounds):
        if n < 5:
            break
        seed = (seed * 6364136223846793005 + 1442695040888963407) % (1 << 64)
        shaken = _double_bridge(best, seed)
        shaken = _improve_two_opt_or_opt(shaken, dist)
        shaken_len = _tour_length(shaken, dist)
        if shaken_len < best_len - _EPS:
            best, best_len = shaken, shaken_len

    tour_ids = [ids[i] for i in best]
    return Tour(tour_ids, best_len)


def _double_bridge(order: list[int], seed: int) -> list[int]:
    """Classic 4-segment reconnection; the pinned first stop never moves."""
    n = len(order)
    cuts = sorted({1 + (seed >> shift) % (n - 1) for shift in (0, 20, 40)})
    while len(cuts) < 3:
        cuts.append(min(cuts[-1] + 1, n - 1))
        cuts = sorted(set(cuts))
        if cuts[-1] >= n:
            return list(order)
    a, b, c = cuts[:3]
    return order[:a] + order[b:c] + order[a:b] + order[c:]


def _tour_length(order: list[int], dist: np.ndarray) -> float:
    return float(sum(dist[a, b] for a, b in zip(order, order[1:])))


def _improve_two_opt_or_opt(order: list[int], dist: np.ndarray) -> list[int]:
    improved = True
    while improved:
        improved = False
        if _two_opt_pass(order, dist):
            improved = True
        if _or_opt_pass(order, dist):
            improved = True
    return order


def _two_opt_pass(order: list[int], dist: np.ndarray) -> bool:
    """First-improvement reversal sweep; the path start stays fixed."""
    n = len(order)
    any_gain = False
    restart = True
    while restart:
        restart = False
        for i in range(1, n - 1):
            for j in range(i + 1, n):
                before = dist[order[i - 1], order[i]]
                after = dist[order[i - 1], order[j]]
                if j < n - 1:
                    before += dist[order[j], order[j + 1]]
                    after += dist[order[i], order[j + 1]]
                if after < before - _EPS:
                    order[i:j + 1] = reversed(order[i:j + 1])
                    any_gain = True
                    restart = True
                    break
            if restart:
                break
    return any_gain


def _or_opt_pass(order: list[int], dist: np.ndarray) -> bool:
    """Relocate runs of 1-3 consecutive stops, forward or reversed,
    first improvement."""
    n = len(order)
    any_gain = False
    restart = True
    while restart:
        restart = False
        for run in (1, 2, 3):
            for i in range(1, n - run + 1):
                seg = order[i:i + run]
                prev_node = order[i - 1]
                removal = dist[prev_node, seg[0]]
                if i + run < n:
                    removal += dist[seg[-1], order[i + run]]
                    removal -= dist[prev_node, order[i + run]]
                rest = order[:i] + order[i + run:]
                for insert in range(1, len(rest) + 1):
                    for flipped in (False, True):
                        cand = seg[::-1] if flipped else seg
                        if insert == i and not flipped:
                            continue
                        gain_add = dist[rest[insert - 1], cand[0]]
                        if insert < len(rest):
                            gain_add += dist[cand[-1], rest[insert]]
                            gain_add -= dist[rest[insert - 1], rest[insert]]
                        if gain_add < removal - _EPS:
                            order[:] = rest[:insert] + cand + rest[insert:]
                            any_gain = True
                            restart = True
                            break
                    if restart:
                        break
                if restart:
                    break
            if restart:
                break
    return any_gain


def brute_force_open_tour(positions: np.ndarray, start) -> tuple[list[int], float]:
    """Exact open tour by enumerating all (n-1)! orders after the fixed
    nearest-to-start first stop.  Exponential; intended as a test oracle."""
    pos = np.asarray(positions, dtype=float)
    n = len(pos)
    start = np.asarray(start, dtype=float)
    first = int(np.argmin(np.linalg.norm(pos - start[None, :], axis=1)))
    rest = [i for i in range(n) if i != first]
    if not rest:
        return [first], 0.0
    dist = np.linalg.norm(pos[:, None, :] - pos[None, :, :], axis=2)
    perms = np.array(list(itertools.permutations(rest)), dtype=np.int64)
    lengths = dist[first, perms[:, 0]]
    for col in range(perms.shape[1] - 1):
        lengths = lengths + dist[perms[:, col], perms[:, col + 1]]
    best = int(np.argmin(lengths))
    return [first] + perms[best].tolist(), float(lengths[best])


# ---------- cluster pipeline ----------


def remap_clusters(tour: Tour, viewpoints: list[Viewpoint]) -> list[Cluster]:
    """Group the tour into maximal runs of same-segment viewpoints."""
    seg_of = {vp.id: vp.segment_id for vp in viewpoints}
    clusters: list[Cluster] = []
    for vid in tour.order:
        seg = seg_of[vid]
        if clusters and clusters[-1].segment_id == seg:
            clusters[-1].member_ids.append(vid)
        else:
            clusters.append(Cluster(len(clusters), seg, [vid]))
    return clusters


def _endpoint_distance(a: Cluster, b: Cluster,
                       positions: dict[int, np.ndarray]) -> float:
    ends_a = (positions[a.entry_id], positions[a.exit_id])
    ends_b = (positions[b.entry_id], positions[b.exit_id])
    return min(float(np.linalg.norm(pa - pb)) for pa in ends_a for pb in ends_b)


def merge_outliers(clusters: list[Cluster], viewpoints: list[Viewpoint],
                   tau_max: int, require_adjacency: bool = False) -> list[Cluster]:
    """Absorb undersized clusters into same-segment clusters.

    The size threshold sweeps 1..tau_max; at each value, clusters smaller
    than the threshold merge into the nearest same-segment cluster measured
    between entry/exit endpoints.  Sequence-adjacent candidates win distance
    ties (or are required outright with require_adjacency).  Absorbed members
    attach at the receiver's nearer end, oriented so the run stays contiguous.
    """
    positions = _positions(viewpoints)
    work = [Cluster(c.id, c.segment_id, list(c.member_ids)) for c in clusters]
    for tau in range(1, tau_max + 1):
        work = _merge_pass(work, positions, tau, require_adjacency)
    for i, cluster in enumerate(work):
        cluster.id = i
    return work


def _merge_pass(clusters: list[Cluster], positions: dict[int, np.ndarray],
                tau: int, require_adjacency: bool) -> list[Cluster]:
    progress = True
    while progress:
        progress = False
        for i, small in enumerate(clusters):
            if len(small.member_ids) >= tau:
                continue
            candidates = [
                (j, other) for j, other in enumerate(clusters)
                if j != i and other.segment_id == small.segment_id
                and (not require_adjacency or abs(j - i) == 1)]
            if not candidates:
                continue
            scored = []
            for j, other in candidates:
                d = _endpoint_distance(small, other, positions)
                adjacent = 0 if abs(j - i) == 1 else 1
                scored.append((d, adjacent, j))
            scored.sort()
            target_idx = scored[0][2]
            _absorb(clusters[target_idx], small, positions)
            clusters.pop(i)
            progress = True
            break
    return clusters


def _absorb(receiver: Cluster, absorbed: Cluster,
            positions: dict[int, np.ndarray]):
    """Attach absorbed members at the receiver end nearest to them."""
    r_entry = positions[receiver.entry_id]
    r_exit = positions[receiver.exit_id]
    a_entry = positions[absorbed.entry_id]
    a_exit = positions[absorbed.exit_id]

    options = [
        (float(np.linalg.norm(a_exit - r_entry)), 0, "prepend", False),
        (float(np.linalg.norm(a_entry - r_entry)), 1, "prepend", True),
        (float(np.linalg.norm(a_entry - r_exit)), 2, "append", False),
        (float(np.linalg.norm(a_exit - r_exit)), 3, "append", True),
    ]
    options.sort(key=lambda o: (o[0], o[1]))
    _, _, side, flip = options[0]
    members = list(absorbed.member_ids)
    if flip:
        members.reverse()
    if side == "prepend":
        receiver.member_ids = members + receiver.member_ids
    else:
        receiver.member_ids = receiver.member_ids + members


# ---------- intra-cluster reordering ----------


def _cluster_orderings(member_ids: list[int],
                       positions: dict[int, np.ndarray]) -> list[tuple]:
    """Candidate (first, last, intra_length, order) tuples for one cluster.

    Exhaustive for clusters of up to 8 members.  Larger clusters fall back
    to the original order, its reverse, and a 2-opt-improved nearest-neighbor
    chain from every possible entry member.
    """
    n = len(member_ids)
    if n == 1:
        only = member_ids[0]
        return [(only, only, 0.0, tuple(member_ids))]

    pts = np.array([positions[m] for m in member_ids])
    dist = np.linalg.norm(pts[:, None, :] - pts[None, :, :], axis=2)

    candidates: dict[tuple[int, int], tuple[float, tuple]] = {}

    def offer(order_idx: tuple[int, ...]):
        intra = float(sum(dist[a, b] for a, b in zip(order_idx, order_idx[1:])))
        key = (order_idx[0], order_idx[-1])
        cur = candidates.get(key)
        if cur is None or intra < cur[0] - _EPS:
            candidates[key] = (intra, order_idx)

    if n <= 8:
        for perm in itertools.permutations(range(n)):
            offer(perm)
    else:
        offer(tuple(range(n)))
        offer(tuple(reversed(range(n))))
        for entry in range(n):
            chain = [entry]
            left = set(range(n)) - {entry}
            while left:
                last = chain[-1]
                nxt = min(left, key=lambda j: (dist[last, j], j))
                chain.append(nxt)
                left.discard(nxt)
            _two_opt_pass(chain, dist)
            offer(tuple(chain))

    out = []
    for (first, last), (intra, order_idx) in sorted(candidates.items()):
        order = tuple(member_ids[i] for i in order_idx)
        out.append((member_ids[first], member_ids[last], intra, order))
    return out


def local_reorder(clusters: list[Cluster], viewpoints: list[Viewpoint],
                  start) -> list[int]:
    """Reorder members inside each cluster, keeping the cluster order.

    Minimizes the total of entry-connection distances plus intra-cluster
    path lengths by dynamic programming over per-cluster candidate orderings
    keyed on their first and last member.  The original ordering is always a
    candidate, so the result is never longer than the input sequence.
    """
    if not clusters:
        return []
    positions = _positions(viewpoints)
    start = np.asarray(start, dtype=float)

    per_cluster = [_cluster_orderings(c.member_ids, positions) for c in clusters]

    # states: map exit member -> (cost, orders tuple so far)
    states: dict[int, tuple[float, tuple]] = {-1: (0.0, ())}
    prev_points = {-1: start}
    for options in per_cluster:
        new_states: dict[int, tuple[float, tuple]] = {}
        new_points = {}
        for first, last, intra, order in options:
            p_first = positions[first]
            for exit_member, (cost, orders) in states.items():
                entry_d = float(np.linalg.norm(prev_points[exit_member] - p_first))
                total = cost + entry_d + intra
                cur = new_states.get(last)
                if cur is None or total < cur[0] - _EPS:
                    new_states[last] = (total, orders + (order,))
                    new_points[last] = positions[last]
        states = new_states
        prev_points = new_points

    best_exit = min(states, key=lambda m: (states[m][0], m))
    orders = states[best_exit][1]
    result: list[int] = []
    for order in orders:
        result.extend(order)
    return result


def plan_route(viewpoints: list[Viewpoint], start, tau_max: int,
               require_adjacency: bool = False) -> tuple[list[int], dict]:
    """Full sequencing pipeline; returns the visit order plus diagnostics."""
    positions = _positions(viewpoints)
    tour = solve_tsp(viewpoints, start)
    clusters = remap_clusters(tour, viewpoints)
    merged = merge_outliers(clusters, viewpoints, tau_max, require_adjacency)
    merged_order = [vid for c in merged for vid in c.member_ids]
    final = local_reorder(merged, viewpoints, start)
    diagnostics = {
        "tour_length_m": tour.length,
        "merged_length_m": path_length(merged_order, positions),
        "final_length_m": path_length(final, positions),
        "n_clusters": len(merged),
        "cluster_sizes": [len(c.member_ids) for c in merged],
    }
    return final, diagnostics
