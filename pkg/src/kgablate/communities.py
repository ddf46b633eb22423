"""Seeded Leiden community detection over undirected weighted graphs.

Runs the three classic phases (queue-based local moving, refinement
restricted to singleton moves, aggregation) until nothing changes.
Every iteration order is either seeded or sorted, so a fixed seed gives
an identical partition on every run and machine.
"""
from __future__ import annotations

import random
from collections import defaultdict, deque
from typing import Iterable, Sequence

_EPS = 1e-12

Edge = tuple[str, str]


class _MetaGraph:
    """Aggregated working graph; node i carries a set of original ids."""

    def __init__(self, members: list[tuple[str, ...]],
                 neighbors: list[dict[int, float]], selfw: list[float]):
        self.members = members
        self.neighbors = neighbors
        self.selfw = selfw
        self.n = len(members)
        self.k = [sum(nb.values()) + 2.0 * selfw[i]
                  for i, nb in enumerate(neighbors)]
        self.m = sum(self.k) / 2.0

    @classmethod
    def from_edges(cls, nodes: Sequence[str],
                   edges: Iterable[Edge]) -> "_MetaGraph":
        order = sorted(set(nodes))
        pos = {v: i for i, v in enumerate(order)}
        neighbors: list[dict[int, float]] = [dict() for _ in order]
        selfw = [0.0] * len(order)
        for u, v in edges:
            iu, iv = pos[u], pos[v]
            if iu == iv:
                selfw[iu] += 1.0
            else:
                neighbors[iu][iv] = neighbors[iu].get(iv, 0.0) + 1.0
                neighbors[iv][iu] = neighbors[iv].get(iu, 0.0) + 1.0
        # sort adjacency keys so later iteration is order-independent
        neighbors = [dict(sorted(nb.items())) for nb in neighbors]
        return cls([(v,) for v in order], neighbors, selfw)


def _local_move(g: _MetaGraph, assignment: list[int], resolution: float,
                rng: random.Random) -> bool:
    """Queue-based local moving; mutates assignment, returns whether
    anything moved. Only positive-gain moves are taken, so the
    partition's modularity never decreases."""
    comm_degree: dict[int, float] = defaultdict(float)
    for i, c in enumerate(assignment):
        comm_degree[c] += g.k[i]
    next_label = max(assignment) + 1 if assignment else 0
    order = list(range(g.n))
    rng.shuffle(order)
    queue = deque(order)
    queued = set(order)
    moved = False
    two_m = 2.0 * g.m
    while queue:
        i = queue.popleft()
        queued.discard(i)
        a = assignment[i]
        comm_degree[a] -= g.k[i]
        link: dict[int, float] = defaultdict(float)
        for j, w in g.neighbors[i].items():
            link[assignment[j]] += w
        best_c = a
        best_score = link.get(a, 0.0) - resolution * g.k[i] * comm_degree[a] / two_m
        if 0.0 > best_score + _EPS:
            best_c, best_score = -1, 0.0  # -1 = fresh singleton community
        for c in sorted(link):
            if c == a:
                continue
            score = link[c] - resolution * g.k[i] * comm_degree[c] / two_m
            if score > best_score + _EPS:
                best_c, best_score = c, score
        if best_c == -1:
            best_c = next_label
            next_label += 1
        comm_degree[best_c] += g.k[i]
        if best_c != a:
            assignment[i] = best_c
            moved = True
            for j in g.neighbors[i]:
                if assignment[j] != best_c and j not in queued:
                    queue.append(j)
                    queued.add(j)
    return moved


def _refine(g: _MetaGraph, communities: list[list[int]], resolution: float,
            rng: random.Random) -> list[list[int]]:
    """Split each community into well-merged sub-communities. Nodes
    start as singletons and only singleton nodes may merge, always
    within their own community and only on positive gain."""
    sub = list(range(g.n))
    sub_degree = list(g.k)
    sub_size = [1] * g.n
    two_m = 2.0 * g.m
    for comm in communities:
        if len(comm) < 2:
            continue
        order = sorted(comm)
        rng.shuffle(order)
        inside = set(comm)
        for i in order:
            if sub_size[sub[i]] > 1:
                continue
            link: dict[int, float] = defaultdict(float)
            for j, w in g.neighbors[i].items():
                if j in inside and sub[j] != sub[i]:
                    link[sub[j]] += w
            best_s, best_score = sub[i], 0.0
            for s in sorted(link):
                score = link[s] - resolution * g.k[i] * sub_degree[s] / two_m
                if score > best_score + _EPS:
                    best_s, best_score = s, score
            if best_s != sub[i]:
                sub_degree[sub[i]] -= g.k[i]
                sub_size[sub[i]] -= 1
                sub[i] = best_s
                sub_degree[best_s] += g.k[i]
                sub_size[best_s] += 1
    grouped: dict[int, list[int]] = defaultdict(list)
    for i, s in enumerate(sub):
        grouped[s].append(i)
    return sorted(grouped.values(), key=lambda ns: g.members[ns[0]][0])


def _aggregate(g: _MetaGraph, refined: list[list[int]],
               assignment: list[int]) -> tuple[_MetaGraph, list[int]]:
    """Collapse each refined sub-community to one node; the incoming
    local-move communities become the initial assignment."""
    node_to_meta = {}
    members: list[tuple[str, ...]] = []
    for mi, group in enumerate(refined):
        for i in group:
            node_to_meta[i] = mi
        merged = tuple(sorted(x for i in group for x in g.members[i]))
        members.append(merged)
    neighbors: list[dict[int, float]] = [dict() for _ in refined]
    selfw = [0.0] * len(refined)
    for i in range(g.n):
        mi = node_to_meta[i]
        selfw[mi] += g.selfw[i]
        for j, w in g.neighbors[i].items():
            if i < j:
                mj = node_to_meta[j]
                if mi == mj:
                    selfw[mi] += w
                else:
                    neighbors[mi][mj] = neighbors[mi].get(mj, 0.0) + w
                    neighbors[mj][mi] = neighbors[mj].get(mi, 0.0) + w
    neighbors = [dict(sorted(nb.items())) for nb in neighbors]
    # dense community relabel, stable under sorted original ids
    comm_of_meta = [assignment[group[0]] for group in refined]
    relabel: dict[int, int] = {}
    new_assignment = []
    for c in comm_of_meta:
        if c not in relabel:
            relabel[c] = len(relabel)
        new_assignment.append(relabel[c])
    return _MetaGraph(members, neighbors, selfw), new_assignment


def _grouped(assignment: list[int]) -> list[list[int]]:
    groups: dict[int, list[int]] = defaultdict(list)
    for i, c in enumerate(assignment):
        groups[c].append(i)
    return list(groups.values())


def leiden_partition(nodes: Sequence[str], edges: Iterable[Edge],
                     seed: int = 0,
                     resolution: float = 1.0) -> list[frozenset[str]]:
    """Partition `nodes`, returned sorted by smallest member id.

    Edges are unweighted pairs over node ids; parallel edges add weight.
    An edgeless graph comes back as all singletons.
    """
    if resolution <= 0:
        raise ValueError("resolution must be positive")
    node_list = sorted(set(nodes))
    if not node_list:
        return []
    edge_list = [e for e in edges]
    if not edge_list:
        return [frozenset({v}) for v in node_list]
    rng = random.Random(seed)
    g = _MetaGraph.from_edges(node_list, edge_list)
    assignment = list(range(g.n))
    while True:
        moved = _local_move(g, assignment, resolution, rng)
        communities = _grouped(assignment)
        if len(communities) == g.n:
            break
        refined = _refine(g, communities, resolution, rng)
        if len(refined) == g.n and not moved:
            break
        if len(refined) == g.n:
            continue
        g, assignment = _aggregate(g, refined, assignment)
    partition = [frozenset(x for i in comm for x in g.members[i])
                 for comm in _grouped(assignment)]
    return sorted(partition, key=lambda s: min(s))


def modularity(nodes: Sequence[str], edges: Iterable[Edge],
               partition: Iterable[Iterable[str]],
               resolution: float = 1.0) -> float:
    """Q = sum_c [L_c/m - resolution * (d_c / 2m)^2].

    Self-loops count once toward m and L_c, twice toward degree.
    """
    comm_of: dict[str, int] = {}
    for ci, comm in enumerate(partition):
        for v in comm:
            comm_of[v] = ci
    degree: dict[str, float] = {v: 0.0 for v in nodes}
    m = 0.0
    intra: dict[int, float] = defaultdict(float)
    for u, v in edges:
        m += 1.0
        degree[u] += 1.0
        degree[v] += 1.0
        if comm_of[u] == comm_of[v]:
            intra[comm_of[u]] += 1.0
    if m == 0.0:
        return 0.0
    comm_degree: dict[int, float] = defaultdict(float)
    for v, d in degree.items():
        comm_degree[comm_of[v]] += d
    q = 0.0
    for ci in comm_degree:
        q += intra.get(ci, 0.0) / m - resolution * (comm_degree[ci] / (2.0 * m)) ** 2
    return q


def singleton_modularity(nodes: Sequence[str], edges: Iterable[Edge],
                         resolution: float = 1.0) -> float:
    return modularity(nodes, edges, [{v} for v in nodes], resolution)
