"""Linking clusters across consecutive timesteps into storm events.

Clusters at t and t+1 are linked when they overlap enough (overlap-link), or,
for clusters at t left without any overlap-link, when their centers of
gravity are close and their areas comparable (proximity-link). Links may be
many-to-many; an event is a connected component of the resulting graph, so
splits and mergers stay inside one event.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConsistencyError


@dataclass(frozen=True)
class TrackParams:
    overlap_tau: float = 0.3
    dist_max_km: float = 120.0
    area_ratio_max: float = 4.0


@dataclass(frozen=True)
class Link:
    t: int
    a: int
    b: int
    score: float
    kind: str  # "overlap" or "proximity"


def overlap_counts(idx_a, lab_a, idx_b, lab_b) -> dict:
    """Shared-cell counts ``{(a, b): n}`` between two labeled, sorted cell sets."""
    if len(idx_a) == 0 or len(idx_b) == 0:
        return {}
    _, ia, ib = np.intersect1d(idx_a, idx_b, assume_unique=True, return_indices=True)
    if ia.size == 0:
        return {}
    la = np.asarray(lab_a, dtype=np.int64)[ia]
    lb = np.asarray(lab_b, dtype=np.int64)[ib]
    span = int(lb.max()) + 1
    keys, counts = np.unique(la * span + lb, return_counts=True)
    return {(int(k // span), int(k % span)): int(c) for k, c in zip(keys, counts)}


def _flatten(clusters):
    if not clusters:
        return np.empty(0, np.int64), np.empty(0, np.int64)
    idx = np.concatenate([c.cells for c in clusters])
    lab = np.concatenate([np.full(len(c.cells), c.id, dtype=np.int64) for c in clusters])
    order = np.argsort(idx, kind="stable")
    return idx[order], lab[order]


def _timestep_of(clusters):
    ts = {c.timestep for c in clusters}
    if len(ts) > 1:
        raise ValueError(f"clusters span several timesteps: {sorted(ts)}")
    return ts.pop() if ts else None


def link_clusters(clusters_t, clusters_t1, params: TrackParams = TrackParams(), *, _arrays=None) -> list[Link]:
    """Links from clusters at t to clusters at t+1, sorted by ``(a, b)``."""
    t = _timestep_of(clusters_t)
    t1 = _timestep_of(clusters_t1)
    if t is not None and t1 is not None and t1 != t + 1:
        raise ValueError(f"clusters are not from adjacent timesteps ({t} -> {t1})")
    if not clusters_t or not clusters_t1:
        return []
    if _arrays is None:
        idx_a, lab_a = _flatten(clusters_t)
        idx_b, lab_b = _flatten(clusters_t1)
    else:
        idx_a, lab_a, idx_b, lab_b = _arrays
    shared = overlap_counts(idx_a, lab_a, idx_b, lab_b)
    size_a = {c.id: c.n_cells for c in clusters_t}
    size_b = {c.id: c.n_cells for c in clusters_t1}

    links = []
    linked = set()
    for (a, b), n in shared.items():
        score = n / min(size_a[a], size_b[b])
        if score >= params.overlap_tau:
            links.append(Link(t, a, b, score, "overlap"))
            linked.add(a)

    unlinked = [c for c in clusters_t if c.id not in linked]
    if unlinked:
        cb = np.array([c.centroid_km for c in clusters_t1])
        nb = np.array([c.n_cells for c in clusters_t1], dtype=np.float64)
        ids_b = [c.id for c in clusters_t1]
        for ca in unlinked:
            xa, ya = ca.centroid_km
            dist = np.hypot(cb[:, 0] - xa, cb[:, 1] - ya)
            ratio = np.maximum(nb, ca.n_cells) / np.minimum(nb, ca.n_cells)
            for j in np.flatnonzero((dist <= params.dist_max_km) & (ratio <= params.area_ratio_max)):
                b = ids_b[j]
                n = shared.get((ca.id, b), 0)
                links.append(Link(t, ca.id, b, n / min(ca.n_cells, size_b[b]), "proximity"))
    links.sort(key=lambda lk: (lk.a, lk.b))
    return links


def link_frames(frame_t, frame_t1, params: TrackParams = TrackParams()) -> list[Link]:
    """:func:`link_clusters` using the compact arrays already held by two Frames."""
    if frame_t1.timestep != frame_t.timestep + 1:
        raise ValueError(f"frames are not adjacent ({frame_t.timestep} -> {frame_t1.timestep})")
    return link_clusters(
        frame_t.clusters, frame_t1.clusters, params,
        _arrays=(frame_t.idx, frame_t.labels, frame_t1.idx, frame_t1.labels),
    )


class UnionFind:
    def __init__(self, n):
        self.parent = list(range(n))

    def find(self, x):
        root = x
        while self.parent[root] != root:
            root = self.parent[root]
        while self.parent[x] != root:
            self.parent[x], x = root, self.parent[x]
        return root

    def union(self, a, b):
        ra, rb = self.find(a), self.find(b)
        if ra != rb:
            if ra < rb:
                self.parent[rb] = ra
            else:
                self.parent[ra] = rb


@dataclass(eq=False)
class StormEvent:
    event_id: int
    clusters: dict  # timestep -> list of Cluster, ordered by cluster id
    t_first: int
    t_last: int
    n_merges: int = 0
    n_splits: int = 0
    lineage: list = field(default_factory=list)

    @property
    def n_timesteps(self) -> int:
        return self.t_last - self.t_first + 1

    @property
    def cluster_ids(self) -> dict:
        return {t: tuple(c.id for c in cs) for t, cs in self.clusters.items()}

    def cells(self, t) -> np.ndarray:
        cs = self.clusters[t]
        if len(cs) == 1:
            return cs[0].cells
        return np.sort(np.concatenate([c.cells for c in cs]))

    def values(self, t) -> np.ndarray:
        cs = self.clusters[t]
        order = np.argsort(np.concatenate([c.cells for c in cs]), kind="stable")
        return np.concatenate([c.values for c in cs])[order]


def assemble_events(clusters, links) -> list[StormEvent]:
    """Connected components of the cluster/link graph, as StormEvents.

    ``clusters`` is any iterable of Cluster (or of Frames). Event ids follow
    the first timestep, then the smallest cell index at that timestep.
    """
    nodes = []
    for item in clusters:
        if hasattr(item, "clusters") and not hasattr(item, "cells"):
            nodes.extend(item.clusters)
        else:
            nodes.append(item)
    nodes.sort(key=lambda c: (c.timestep, c.id))
    key_to_pos = {}
    for pos, c in enumerate(nodes):
        key = (c.timestep, c.id)
        if key in key_to_pos:
            raise ConsistencyError(f"duplicate cluster {key}")
        key_to_pos[key] = pos

    uf = UnionFind(len(nodes))
    out_deg = {}
    in_deg = {}
    for lk in links:
        try:
            pa = key_to_pos[(lk.t, lk.a)]
            pb = key_to_pos[(lk.t + 1, lk.b)]
        except KeyError as exc:
            raise ConsistencyError(f"link {lk} references unknown cluster {exc.args[0]}") from None
        uf.union(pa, pb)
        out_deg.setdefault(pa, set()).add(pb)
        in_deg.setdefault(pb, set()).add(pa)

    groups = {}
    for pos in range(len(nodes)):
        groups.setdefault(uf.find(pos), []).append(pos)

    def sort_key(members):
        t0 = nodes[members[0]].timestep
        first_cell = min(int(nodes[p].cells[0]) for p in members if nodes[p].timestep == t0)
        return (t0, first_cell)

    ordered = sorted((sorted(m) for m in groups.values()), key=sort_key)
    events = []
    for eid, members in enumerate(ordered, start=1):
        by_t = {}
        lineage = []
        n_merge = n_split = 0
        for p in members:
            c = nodes[p]
            by_t.setdefault(c.timestep, []).append(c)
            if len(out_deg.get(p, ())) > 1:
                n_split += 1
                kids = tuple(sorted(nodes[q].id for q in out_deg[p]))
                lineage.append(("split", c.timestep, c.id, kids))
            if len(in_deg.get(p, ())) > 1:
                n_merge += 1
                parents = tuple(sorted(nodes[q].id for q in in_deg[p]))
                lineage.append(("merge", c.timestep, c.id, parents))
        ts = sorted(by_t)
        if ts[-1] - ts[0] + 1 != len(ts):
            raise ConsistencyError(f"event {eid} has a gap in its timesteps")
        events.append(StormEvent(eid, {t: by_t[t] for t in ts}, ts[0], ts[-1], n_merge, n_split, lineage))
    return events


def track_frames(frames, params: TrackParams = TrackParams()):
    """Link every adjacent frame pair and assemble events; returns ``(events, links)``."""
    links = []
    for fa, fb in zip(frames[:-1], frames[1:]):
        links.extend(link_frames(fa, fb, params))
    return assemble_events(frames, links), links


def event_total_mm(event: StormEvent) -> float:
    return math.fsum(c.total_mm for cs in event.clusters.values() for c in cs)
