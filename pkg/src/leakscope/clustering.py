"""Observation-class discovery under cannot-link constraints.

Two functional observations may share a class only when their distance is
within the indistinguishability tolerance eps; pairs farther apart are
cannot-link pairs.  The hierarchical path builds one complete-link dendrogram
and returns the smallest cut separating all cannot-link pairs; the
constrained k-means path re-runs COP-k-means for growing k.  A scalar
per-public baseline ignores the functional structure entirely.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InfeasibleClusteringError, UnsupportedNormError
from .fda import (
    DistanceSpec,
    FunctionalCurve,
    distance_grid,
    fit_curve,
    grid_distance_matrix,
    sample_curves,
    simpson_weights,
)


def cannot_links(D: np.ndarray, eps: float) -> set:
    """Unordered index pairs with D[i][j] > eps; the boundary is linkable."""
    ii, jj = np.nonzero(np.triu(D > eps, 1))
    return {(int(i), int(j)) for i, j in zip(ii, jj)}


@dataclass
class ClusterResult:
    k: int
    assignment: np.ndarray          # index -> cluster id in [0, k)
    centroids: list                 # k FunctionalCurve values (may be empty)
    algorithm: str
    epsilon: float
    spec: DistanceSpec

    def members(self, cluster_id: int) -> np.ndarray:
        return np.flatnonzero(self.assignment == cluster_id)


# ---------------------------------------------------------------------------
# complete-link dendrogram

def complete_link_merges(D: np.ndarray) -> list:
    """Merge sequence (min_member_a, min_member_b, distance), a < b.

    Merge order: smallest complete-link distance first; ties broken by the
    smaller (then the larger) minimum member index of the two clusters.
    Zero-distance items have bit-identical matrix rows, so they are absorbed
    group-by-group up front, which keeps heavily duplicated inputs (constant
    aux curves) quadratic instead of cubic.
    """
    n = D.shape[0]
    if n <= 1:
        return []
    groups: dict = {}
    for i in range(n):
        groups.setdefault(D[i].tobytes(), []).append(i)
    merges = []
    for g in sorted(groups.values(), key=min):
        g = sorted(g)
        for x in g[1:]:
            merges.append((g[0], x, 0.0))

    reps = sorted(min(g) for g in groups.values())
    m = len(reps)
    if m == 1:
        return merges
    C = D[np.ix_(reps, reps)].astype(float, copy=True)
    np.fill_diagonal(C, np.inf)
    minmem = np.array(reps)
    active = np.ones(m, dtype=bool)
    INF = np.inf

    def best_partner(i):
        row = C[i]
        mn = row.min()
        js = np.flatnonzero(row == mn)
        lo = np.minimum(minmem[i], minmem[js])
        hi = np.maximum(minmem[i], minmem[js])
        best = js[np.lexsort((hi, lo))[0]]
        return mn, best

    rowval = np.empty(m)
    rowarg = np.empty(m, dtype=int)
    for i in range(m):
        rowval[i], rowarg[i] = best_partner(i)

    for _ in range(m - 1):
        act = np.flatnonzero(active)
        mm_self = minmem[act]
        mm_other = minmem[rowarg[act]]
        lo = np.minimum(mm_self, mm_other)
        hi = np.maximum(mm_self, mm_other)
        i = act[np.lexsort((hi, lo, rowval[act]))[0]]
        j = rowarg[i]
        a, b = (i, j) if minmem[i] < minmem[j] else (j, i)
        merges.append((int(minmem[a]), int(minmem[b]), float(C[a, b])))

        newrow = np.maximum(C[a], C[b])
        C[a] = newrow
        C[:, a] = newrow
        C[a, a] = INF
        C[b, :] = INF
        C[:, b] = INF
        active[b] = False
        rowval[b] = INF
        if active.sum() == 1:
            break
        # complete-link distances only grow, so cached row minima stay valid
        # unless the row pointed at a merged slot or now ties with slot a
        # (whose min member index may have improved the tie-break key)
        stale = active & ((rowarg == a) | (rowarg == b) | (C[:, a] == rowval))
        stale[a] = True
        for i2 in np.flatnonzero(stale):
            rowval[i2], rowarg[i2] = best_partner(i2)
    return merges


class _UnionFind:
    def __init__(self, n):
        self.parent = list(range(n))

    def find(self, x):
        p = self.parent
        while p[x] != x:
            p[x] = p[p[x]]
            x = p[x]
        return x

    def union(self, a, b):
        ra, rb = self.find(a), self.find(b)
        if ra != rb:
            self.parent[rb] = ra


def _cut_assignment(merges, n, k):
    """Cluster ids after the first n-k merges, numbered by smallest member."""
    uf = _UnionFind(n)
    for (a, b, _d) in merges[: n - k]:
        uf.union(a, b)
    label: dict = {}
    assignment = np.empty(n, dtype=int)
    for i in range(n):
        r = uf.find(i)
        if r not in label:
            label[r] = len(label)
        assignment[i] = label[r]
    return assignment


def _violated_pairs(merges, n, k, u_arr, v_arr):
    labels = _cut_assignment(merges, n, k)
    return labels[u_arr] == labels[v_arr]


def hierarchical_cluster(D: np.ndarray, K: int, eps: float) -> ClusterResult:
    """Smallest dendrogram cut k <= K separating all cannot-link pairs."""
    n = D.shape[0]
    if not 1 <= K <= n:
        raise ValueError(f"K must be in [1, {n}], got {K}")
    links = sorted(cannot_links(D, eps))
    merges = complete_link_merges(D)
    if links:
        u_arr = np.array([p[0] for p in links])
        v_arr = np.array([p[1] for p in links])
        # a larger cut only refines the partition, so feasibility is monotone
        # in k and the smallest feasible cut can be binary-searched
        lo, hi = 2, n
        while lo < hi:
            mid = (lo + hi) // 2
            if _violated_pairs(merges, n, mid, u_arr, v_arr).any():
                lo = mid + 1
            else:
                hi = mid
        k = lo
    else:
        k = 1
    if k > K:
        bad = _violated_pairs(merges, n, K, u_arr, v_arr)
        violating = links[int(np.flatnonzero(bad)[0])]
        raise InfeasibleClusteringError(
            f"no cut with k <= {K} separates all cannot-link pairs "
            f"(needs k = {k}); smallest violating pair at K={K}: {violating}",
            pair=violating,
        )
    return ClusterResult(
        k=k,
        assignment=_cut_assignment(merges, n, k),
        centroids=[],
        algorithm="hierarchical",
        epsilon=eps,
        spec=None,
    )


# ---------------------------------------------------------------------------
# COP-k-means

def _farthest_point_init(X: np.ndarray, k: int, seed: int) -> np.ndarray:
    rng = np.random.default_rng(seed)
    first = int(rng.integers(len(X)))
    chosen = [first]
    d2 = ((X - X[first]) ** 2).sum(axis=1)
    for _ in range(k - 1):
        # ties -> lowest index (argmax returns the first maximum)
        nxt = int(np.argmax(d2))
        chosen.append(nxt)
        d2 = np.minimum(d2, ((X - X[nxt]) ** 2).sum(axis=1))
    return X[chosen].copy()


def _cop_kmeans_run(X, adj, k, seed, max_iter=100):
    """One COP-k-means run; returns assignment or None if it fails."""
    n = len(X)
    centers = _farthest_point_init(X, k, seed)
    assignment = np.full(n, -1, dtype=int)
    for _ in range(max_iter):
        prev = assignment.copy()
        members: list = [[] for _ in range(k)]
        assignment = np.full(n, -1, dtype=int)
        for i in range(n):
            d2 = ((centers - X[i]) ** 2).sum(axis=1)
            placed = False
            for c in np.lexsort((np.arange(k), d2)):
                linked = adj.get(i, ())
                if any(assignment[j] == c for j in linked):
                    continue
                assignment[i] = c
                members[c].append(i)
                placed = True
                break
            if not placed:
                return None
        if any(not ms for ms in members):
            return None
        if np.array_equal(assignment, prev):
            break
        centers = np.vstack([X[ms].mean(axis=0) for ms in members])
    return assignment


def constrained_kmeans(vectors: np.ndarray, links: set, K: int, seed: int) -> ClusterResult:
    """First k <= K whose COP-k-means run converges without violating links."""
    X = np.asarray(vectors, dtype=float)
    n = len(X)
    if not 1 <= K <= n:
        raise ValueError(f"K must be in [1, {n}], got {K}")
    adj: dict = {}
    for (u, v) in links:
        adj.setdefault(u, []).append(v)
        adj.setdefault(v, []).append(u)
    for k in range(1, K + 1):
        assignment = _cop_kmeans_run(X, adj, k, seed)
        if assignment is None:
            continue
        relabel = _relabel_by_first_member(assignment)
        return ClusterResult(
            k=int(relabel.max()) + 1,
            assignment=relabel,
            centroids=[],
            algorithm="constrained-kmeans",
            epsilon=float("nan"),
            spec=None,
        )
    smallest = min(sorted(links)) if links else None
    raise InfeasibleClusteringError(
        f"COP-k-means found no feasible clustering with k <= {K}", pair=smallest
    )


def _relabel_by_first_member(assignment: np.ndarray) -> np.ndarray:
    label: dict = {}
    out = np.empty_like(assignment)
    for i, c in enumerate(assignment):
        if c not in label:
            label[c] = len(label)
        out[i] = label[c]
    return out


# ---------------------------------------------------------------------------
# functional clustering driver

def kmeans_embedding(curves, spec: DistanceSpec) -> np.ndarray:
    """Derivative samples scaled so Euclidean distance matches d_{i,2}."""
    V = sample_curves(curves, spec)
    domain = curves[0].domain
    gn = spec.effective_grid_n
    w = simpson_weights(gn) * ((domain[1] - domain[0]) / gn)
    return V * np.sqrt(w)


def _centroid_basis(curves):
    basis = curves[0].basis
    for c in curves[1:]:
        if c.basis != basis and c.basis.n_basis > basis.n_basis:
            basis = c.basis
    return basis


def attach_centroids(result: ClusterResult, curves, spec: DistanceSpec):
    """Per-cluster centroid: members sampled on the grid, averaged, refit."""
    grid = distance_grid(curves[0].domain, spec)
    value_spec = DistanceSpec(deriv_order=0, norm=2, grid_n=spec.grid_n)
    V = sample_curves(curves, value_spec)
    centroids = []
    for c in range(result.k):
        members = result.members(c)
        mean = V[members].mean(axis=0)
        basis = _centroid_basis([curves[i] for i in members])
        centroids.append(fit_curve(np.column_stack([grid, mean]), basis))
    result.centroids = centroids
    return result


def cluster_curves(curves, K, spec: DistanceSpec, eps: float,
                   algo: str = "hierarchical", seed: int = 0) -> ClusterResult:
    """Cluster arbitrary curves (timing or auxiliary) under cannot-links."""
    n = len(curves)
    if n == 0:
        raise ValueError("need at least one curve")
    K = n if K is None else min(K, n)
    V = sample_curves(curves, spec)
    D = grid_distance_matrix(V, curves[0].domain, spec)
    if algo == "hierarchical":
        result = hierarchical_cluster(D, K, eps)
    elif algo == "constrained-kmeans":
        if spec.norm != 2:
            raise UnsupportedNormError(
                "constrained k-means requires the 2-norm (Euclidean embedding)"
            )
        links = cannot_links(D, eps)
        result = constrained_kmeans(kmeans_embedding(curves, spec), links, K, seed)
    else:
        raise ValueError(f"unknown algorithm {algo!r}")
    result.epsilon = eps
    result.spec = spec
    return attach_centroids(result, curves, spec)


def fd_clustering(hypertraces, K, spec: DistanceSpec, eps: float,
                  algo: str = "hierarchical", seed: int = 0) -> ClusterResult:
    """Cluster the timing curves of the hyper-traces."""
    return cluster_curves(
        [h.timing_curve for h in hypertraces], K, spec, eps, algo=algo, seed=seed
    )


def nonfunctional_cluster(traces, eps: float) -> int:
    """Scalar per-public clustering; the largest k over all public values."""
    by_public: dict = {}
    for rec in traces.records:
        by_public.setdefault(rec.public, {}).setdefault(rec.secret, []).append(rec.time)
    best = 1
    for y in sorted(by_public):
        per_secret = by_public[y]
        vals = np.array(
            [np.sort(np.asarray(ts, dtype=float)).sum() / len(ts)
             for _, ts in sorted(per_secret.items())]
        )
        D = np.abs(vals[:, None] - vals[None, :])
        k = hierarchical_cluster(D, len(vals), eps).k
        best = max(best, k)
    return best


def greedy_clique_bound(links: set, n: int) -> int:
    """Greedy clique size in the cannot-link graph: a lower bound on k."""
    if not links:
        return 1
    adj = {i: set() for i in range(n)}
    for (u, v) in links:
        adj[u].add(v)
        adj[v].add(u)
    order = sorted(adj, key=lambda i: (-len(adj[i]), i))
    clique: set = set()
    for cand in order:
        if clique <= adj[cand]:
            clique.add(cand)
    return max(len(clique), 1)
