"""Electrical zones by spectral clustering of the branch admittance graph.

The weighted adjacency (plus self-loops) is scaled to a symmetric doubly
stochastic matrix with Sinkhorn-Knopp. Its leading eigenvectors embed the
buses, k-means partitions the embedding, and the mean silhouette picks the
number of zones.
"""

from __future__ import annotations

import logging
from collections import deque
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np
from scipy.optimize import linear_sum_assignment

from .network import NetworkModel, phase_impedance

logger = logging.getLogger(__name__)

SINKHORN_TOL = 1e-12
SINKHORN_MAX_ITER = 10_000
RESTARTS = 20
BETA_FRACTION = 0.4


class ClusteringError(RuntimeError):
    pass


@dataclass(frozen=True)
class Zoning:
    """Partition of the buses into zones 1..C with per-zone rosters."""

    labels: Mapping[int, int]
    n_zones: int
    silhouette: float = float("nan")
    references: Mapping[int, tuple[int, ...]] = field(default_factory=dict)
    consumers: Mapping[int, tuple[int, ...]] = field(default_factory=dict)

    def nodes(self, zone: int) -> list[int]:
        return sorted(b for b, z in self.labels.items() if z == zone)

    def counts(self, zone: int) -> dict:
        return {"N": len(self.nodes(zone)), "M": len(self.references.get(zone, ())),
                "L": len(self.consumers.get(zone, ()))}

    def flagged(self) -> list[int]:
        """Zones with consumers but no reference meter."""
        return [c for c in range(1, self.n_zones + 1)
                if self.consumers.get(c) and not self.references.get(c)]

    def to_json(self) -> dict:
        return {str(b): z for b, z in sorted(self.labels.items())}


def edge_weights(net: NetworkModel, mode: str = "admittance") -> list[tuple[int, int, float]]:
    """(from, to, weight) per branch with 0-based bus indices.

    ``admittance`` weighs an edge by the Frobenius norm of the inverse of its
    3x3 phase impedance; ``incidence`` gives every edge weight 1. Switches get
    the largest weight present.
    """
    out = []
    for br in net.branches:
        if br.is_switch:
            out.append((br.from_bus - 1, br.to_bus - 1, None))
        elif mode == "incidence":
            out.append((br.from_bus - 1, br.to_bus - 1, 1.0))
        elif mode == "admittance":
            y = np.linalg.inv(phase_impedance(br, "eq1"))
            out.append((br.from_bus - 1, br.to_bus - 1, float(np.linalg.norm(y))))
        else:
            raise ValueError(f"unknown edge weighting {mode!r}")
    top = max((w for *_, w in out if w is not None), default=1.0)
    return [(f, t, top if w is None else w) for f, t, w in out]


def sinkhorn_symmetric(a, tol: float = SINKHORN_TOL, max_iter: int = SINKHORN_MAX_ITER) -> np.ndarray:
    """Symmetric doubly stochastic scaling D A D of a symmetric non-negative matrix."""
    a = np.asarray(a, dtype=float)
    if not np.allclose(a, a.T):
        raise ValueError("matrix must be symmetric")
    d = 1.0 / np.sqrt(a.sum(axis=1))
    for _ in range(max_iter):
        d = np.sqrt(d / (a @ d))
        p = d[:, None] * a * d[None, :]
        if np.abs(p.sum(axis=1) - 1.0).max() < tol:
            return 0.5 * (p + p.T)
    raise ClusteringError(f"Sinkhorn scaling did not converge in {max_iter} iterations")


def build_double_stochastic(net: NetworkModel, weights: str = "admittance",
                            self_loops: bool = True) -> np.ndarray:
    """Doubly stochastic N x N matrix of the bus graph.

    Self-loops carry each bus's weighted degree, which keeps the spectrum in
    [0, 1].
    """
    n = net.n_buses
    a = np.zeros((n, n))
    for f, t, w in edge_weights(net, weights):
        a[f, t] += w
        a[t, f] += w
    # rescale so the widest admittance spreads do not stall the iteration
    a /= a.max()
    if self_loops:
        a[np.diag_indices(n)] += a.sum(axis=1)
    if np.any(a.sum(axis=1) == 0):
        raise ClusteringError("graph has isolated buses")
    return sinkhorn_symmetric(a)


def spectral_embedding(matrix, n_components: int) -> np.ndarray:
    """Eigenvectors of the ``n_components`` largest eigenvalues, as columns (N x C).

    Each column's sign is fixed so its largest-magnitude entry is positive.
    """
    m = np.asarray(matrix, dtype=float)
    if not 1 <= n_components <= m.shape[0]:
        raise ValueError(f"need 1 <= C <= N, got C={n_components}, N={m.shape[0]}")
    try:
        vals, vecs = np.linalg.eigh(0.5 * (m + m.T))
    except np.linalg.LinAlgError as exc:
        raise ClusteringError(f"eigen-decomposition failed: {exc}") from exc
    order = np.argsort(vals)[::-1][:n_components]
    emb = vecs[:, order]
    pivot = np.argmax(np.abs(emb), axis=0)
    signs = np.sign(emb[pivot, np.arange(n_components)])
    signs[signs == 0] = 1
    return emb * signs


def _kmeans_pp(points, k, rng):
    n = len(points)
    centers = [points[rng.integers(n)]]
    d2 = ((points - centers[0]) ** 2).sum(axis=1)
    for _ in range(1, k):
        total = d2.sum()
        if total <= 0:
            centers.append(points[rng.integers(n)])
        else:
            centers.append(points[rng.choice(n, p=d2 / total)])
        d2 = np.minimum(d2, ((points - centers[-1]) ** 2).sum(axis=1))
    return np.array(centers)


def lloyd(points, k: int, rng: np.random.Generator, max_iter: int = 300):
    """One k-means++ seeded Lloyd run. Returns (labels, wcss, wcss history)."""
    centers = _kmeans_pp(points, k, rng)
    history = []
    labels = None
    for _ in range(max_iter):
        d2 = ((points[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
        new = np.argmin(d2, axis=1)
        # refill empty clusters with the point farthest from its centre
        for c in range(k):
            if not np.any(new == c):
                far = np.argmax(d2[np.arange(len(points)), new])
                new[far] = c
        wcss = float(((points - centers[new]) ** 2).sum())
        history.append(wcss)
        if labels is not None and np.array_equal(new, labels):
            break
        labels = new
        centers = np.array([points[labels == c].mean(axis=0) for c in range(k)])
    wcss = float(((points - centers[labels]) ** 2).sum())
    history.append(wcss)
    return labels, wcss, history


def kmeans(points, n_clusters: int, restarts: int = RESTARTS, seed: int = 0, threads: int = 1) -> np.ndarray:
    """Best-of-``restarts`` k-means labels (lowest within-cluster sum of squares)."""
    pts = np.asarray(points, dtype=float)
    if pts.ndim == 1:
        pts = pts[:, None]
    if n_clusters > len(pts):
        raise ValueError(f"cannot form {n_clusters} clusters from {len(pts)} points")
    if n_clusters < 1:
        raise ValueError("need at least one cluster")
    seeds = np.random.SeedSequence(seed).spawn(restarts)

    def run(ss):
        return lloyd(pts, n_clusters, np.random.default_rng(ss))

    if threads > 1:
        with ThreadPoolExecutor(threads) as pool:
            runs = list(pool.map(run, seeds))
    else:
        runs = [run(ss) for ss in seeds]
    best = min(range(len(runs)), key=lambda r: (runs[r][1], r))
    return canonical_labels(runs[best][0])


def canonical_labels(labels) -> np.ndarray:
    """Relabel 0..k-1 in order of first appearance."""
    labels = np.asarray(labels)
    _, first = np.unique(labels, return_index=True)
    order = labels[np.sort(first)]
    remap = {old: new for new, old in enumerate(order)}
    return np.array([remap[v] for v in labels], dtype=int)


def silhouette_mean(points, labels) -> float:
    """Mean silhouette with Euclidean distances; points in singleton clusters score 0."""
    pts = np.asarray(points, dtype=float)
    if pts.ndim == 1:
        pts = pts[:, None]
    labels = np.asarray(labels)
    uniq = np.unique(labels)
    if len(uniq) < 2:
        raise ValueError("silhouette is undefined for a single cluster")
    dist = np.sqrt(((pts[:, None, :] - pts[None, :, :]) ** 2).sum(axis=2))
    scores = np.zeros(len(pts))
    for i in range(len(pts)):
        own = labels == labels[i]
        if own.sum() == 1:
            continue
        a = dist[i, own].sum() / (own.sum() - 1)
        b = min(dist[i, labels == c].mean() for c in uniq if c != labels[i])
        m = max(a, b)
        scores[i] = 0.0 if m == 0 else (b - a) / m
    return float(scores.mean())


def cluster_network(net: NetworkModel, n_zones: int, seed: int = 0, weights: str = "admittance",
                    restarts: int = RESTARTS, threads: int = 1) -> tuple[np.ndarray, float]:
    """Zone labels 1..C per bus (index k is bus k+1) and their mean silhouette."""
    emb = spectral_embedding(build_double_stochastic(net, weights), n_zones)
    labels = kmeans(emb, n_zones, restarts, seed, threads)
    score = silhouette_mean(emb, labels) if n_zones > 1 else float("nan")
    return labels + 1, score


def select_cluster_count(net: NetworkModel, cluster_range: Iterable[int], seed: int = 0,
                         override: int | None = None, weights: str = "admittance",
                         restarts: int = RESTARTS, threads: int = 1) -> tuple[int, dict[int, float]]:
    """Silhouette curve over ``cluster_range``; the argmax (smallest C on ties) unless overridden."""
    cs = sorted(set(int(c) for c in cluster_range))
    if not cs:
        raise ValueError("empty cluster range")
    ds = build_double_stochastic(net, weights)
    curve = {}
    for c in cs:
        emb = spectral_embedding(ds, c)
        labels = kmeans(emb, c, restarts, seed, threads)
        curve[c] = silhouette_mean(emb, labels) if c > 1 else float("nan")
    if override is not None:
        return int(override), curve
    best = max(cs, key=lambda c: (np.nan_to_num(curve[c], nan=-np.inf), -c))
    return best, curve


def partition_stability(points, n_clusters: int, trials: int = 100, seed: int = 0,
                        restarts: int = 1) -> float:
    """Fraction of k-means trials whose partition matches the first trial up to relabelling."""
    pts = np.asarray(points, dtype=float)
    seeds = np.random.SeedSequence(seed).generate_state(trials)
    ref = None
    same = 0
    for s in seeds:
        lab = kmeans(pts, n_clusters, restarts, int(s))
        if ref is None:
            ref = lab
            same += 1
            continue
        same += matched_agreement(ref, lab) == len(lab)
    return same / trials


def matched_agreement(a, b) -> int:
    """Number of points on which two labelings agree under the best label permutation."""
    a = np.asarray(a)
    b = np.asarray(b)
    ua, ia = np.unique(a, return_inverse=True)
    ub, ib = np.unique(b, return_inverse=True)
    conf = np.zeros((len(ua), len(ub)), dtype=int)
    np.add.at(conf, (ia, ib), 1)
    rows, cols = linear_sum_assignment(-conf)
    return int(conf[rows, cols].sum())


def zone_stability(net: NetworkModel, n_zones: int, trials: int = 100, seed: int = 0,
                   weights: str = "admittance", restarts: int = 1) -> float:
    emb = spectral_embedding(build_double_stochastic(net, weights), n_zones)
    return partition_stability(emb, n_zones, trials, seed, restarts)


def build_zoning(net: NetworkModel, labels, silhouette: float = float("nan"),
                 references: Sequence[int] | None = None,
                 consumers: Sequence[int] | None = None) -> Zoning:
    """Attach rosters: reference buses and single-phase device indices per zone."""
    labels = np.asarray(labels)
    lab = {k + 1: int(z) for k, z in enumerate(labels)}
    n_zones = int(labels.max())
    refs = net.references if references is None else references
    devs = net.single_phase_devices() if consumers is None else consumers
    ref_roster = {c: tuple(r for r in refs if lab[r] == c) for c in range(1, n_zones + 1)}
    cons_roster = {c: tuple(k for k in devs if lab[net.devices[k].bus_id] == c) for c in range(1, n_zones + 1)}
    z = Zoning(lab, n_zones, silhouette, ref_roster, cons_roster)
    if z.flagged():
        logger.warning("zones without a reference meter: %s", z.flagged())
    return z


def zone_beta(magnitudes, zoning: Zoning, fraction: float = BETA_FRACTION) -> dict[int, float]:
    """Salient-feature threshold per zone: ``fraction`` x the widest voltage swing in the zone.

    ``magnitudes`` is a (T, N, 3) array or a ``VoltagePanel``.
    """
    v = np.asarray(getattr(magnitudes, "magnitudes", magnitudes), dtype=float)
    out = {}
    for c in range(1, zoning.n_zones + 1):
        cols = [b - 1 for b in zoning.nodes(c) if b - 1 < v.shape[1]]
        if not cols or v.shape[0] == 0:
            raise ValueError(f"zone {c} has no voltage series")
        sub = v[:, cols, :]
        out[c] = float(fraction * (sub.max(axis=0) - sub.min(axis=0)).max())
    return out


def zone_adjacency(zoning: Zoning, net: NetworkModel) -> dict[int, set[int]]:
    adj = {c: set() for c in range(1, zoning.n_zones + 1)}
    for br in net.branches:
        a, b = zoning.labels[br.from_bus], zoning.labels[br.to_bus]
        if a != b:
            adj[a].add(b)
            adj[b].add(a)
    return adj


def zone_level_map(zoning: Zoning, net: NetworkModel) -> dict[int, list[list[int]]]:
    """Per zone, the breadth-first rings of zones: [L0, L1, L2, ...].

    Zones that cannot be reached are simply absent from every ring.
    """
    adj = zone_adjacency(zoning, net)
    levels = {}
    for c in adj:
        dist = {c: 0}
        queue = deque([c])
        while queue:
            u = queue.popleft()
            for v in sorted(adj[u]):
                if v not in dist:
                    dist[v] = dist[u] + 1
                    queue.append(v)
        depth = max(dist.values())
        levels[c] = [sorted(z for z, d in dist.items() if d == k) for k in range(depth + 1)]
    return levels
