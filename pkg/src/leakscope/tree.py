"""Explain timing clusters with decision trees over auxiliary variables.

Auxiliary curves are first made categorical by clustering them with the same
functional machinery as the timing curves (curves that are all constant stay
numeric so threshold splits remain possible).  A CART-style tree then maps a
secret's auxiliary labels to its timing-cluster id.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .clustering import ClusterResult, cluster_curves
from .errors import LeakscopeError
from .fda import DistanceSpec, distance, distance_grid, sample_curves


@dataclass
class AuxFeature:
    """One auxiliary variable, categorical (label per secret) or numeric."""

    name: str
    kind: str                            # "categorical" | "numeric"
    values: np.ndarray                   # label ids or constant values, per secret
    label_forms: dict = field(default_factory=dict)   # label id -> printable form
    clusters: ClusterResult | None = None

    def value_desc(self, v) -> str:
        if self.kind == "numeric":
            return f"{v:g}"
        form = self.label_forms.get(int(v))
        return f"{int(v)}" if form is None else f"{int(v)} [{form}]"


def _linear_form(curve, tol=1e-6):
    """Printable a + b*y form when the curve is linear to within tol."""
    value_spec = DistanceSpec(deriv_order=0, norm=2, grid_n=64)
    grid = distance_grid(curve.domain, value_spec)
    vals = sample_curves([curve], value_spec)[0]
    b, a = np.polyfit(grid, vals, 1)
    if np.abs(a + b * grid - vals).max() >= tol:
        return None

    def num(x):
        return f"{round(x):d}" if abs(x - round(x)) < 1e-9 else f"{x:g}"

    if abs(b) < 1e-12:
        return num(a)
    slope = f"{num(b)}*y"
    if abs(a) < 1e-9:
        return slope
    return f"{num(a)} + {slope}"


def label_aux(hypertraces, aux_index: int, eps_aux: float, K: int | None,
              spec: DistanceSpec, name: str | None = None) -> AuxFeature:
    """Categorical labels for one aux variable via hierarchical clustering.

    If every curve is constant (value range < 1e-9) the variable is numeric
    and the constant values are used directly.
    """
    curves = [h.aux_curves[aux_index] for h in hypertraces]
    name = name if name is not None else f"aux{aux_index}"
    value_spec = DistanceSpec(deriv_order=0, norm=2, grid_n=spec.grid_n)
    V = sample_curves(curves, value_spec)
    ranges = V.max(axis=1) - V.min(axis=1)
    if np.all(ranges < 1e-9):
        return AuxFeature(name=name, kind="numeric", values=V.mean(axis=1))
    result = cluster_curves(curves, K, spec, eps_aux, algo="hierarchical")
    forms = {}
    for c in range(result.k):
        first = int(result.members(c)[0])
        form = _linear_form(curves[first])
        if form is not None:
            forms[c] = form
    return AuxFeature(
        name=name,
        kind="categorical",
        values=result.assignment.astype(float),
        label_forms=forms,
        clusters=result,
    )


# ---------------------------------------------------------------------------
# CART

@dataclass(frozen=True)
class LabeledRow:
    secret: tuple
    labels: tuple        # one value per auxiliary feature
    target: int          # timing-cluster id


@dataclass
class TreeNode:
    feature: int
    test: tuple                      # ("eq", label) or ("le", threshold)
    yes: "TreeNode | TreeLeaf"
    no: "TreeNode | TreeLeaf"


@dataclass
class TreeLeaf:
    cluster_id: int
    histogram: dict


@dataclass
class DecisionTree:
    root: "TreeNode | TreeLeaf"
    feature_kinds: tuple
    feature_names: tuple

    @property
    def height(self) -> int:
        def h(node):
            if isinstance(node, TreeLeaf):
                return 0
            return 1 + max(h(node.yes), h(node.no))

        return h(self.root)

    @property
    def leaf_count(self) -> int:
        def c(node):
            if isinstance(node, TreeLeaf):
                return 1
            return c(node.yes) + c(node.no)

        return c(self.root)


def _gini_of(targets: np.ndarray) -> float:
    counts = np.bincount(targets)
    n = len(targets)
    return float(1.0 - ((counts / n) ** 2).sum())


def _majority(targets: np.ndarray) -> tuple:
    counts = np.bincount(targets)
    present = np.flatnonzero(counts)
    # highest count wins; count ties go to the lowest cluster id
    best = present[np.argmax(counts[present])]
    hist = {int(t): int(counts[t]) for t in present}
    return int(best), hist


def _apply(test, value) -> bool:
    op, ref = test
    if op == "eq":
        return value == ref
    return value <= ref


def learn_tree(rows, max_depth: int | None = None, min_leaf: int = 1,
               feature_kinds=None, feature_names=None) -> DecisionTree:
    """Greedy CART induction with Gini impurity decrease.

    Candidate splits: label equality for categorical features, midpoints
    between consecutive distinct values for numeric ones.  Ties in impurity
    decrease keep the lowest feature index, then the lowest label/threshold.
    """
    if not rows:
        raise ValueError("cannot learn a tree from zero rows")
    arity = len(rows[0].labels)
    if any(len(r.labels) != arity for r in rows):
        raise ValueError("rows have inconsistent feature arity")
    kinds = tuple(feature_kinds) if feature_kinds is not None else ("categorical",) * arity
    names = tuple(feature_names) if feature_names is not None else tuple(
        f"aux{i}" for i in range(arity)
    )
    L = np.array([r.labels for r in rows], dtype=float)
    T = np.array([r.target for r in rows], dtype=int)

    def best_split(idx):
        t = T[idx]
        n = len(idx)
        parent = _gini_of(t)
        best = None
        best_gain = 0.0
        for f in range(arity):
            col = L[idx, f]
            vals = np.unique(col)
            if kinds[f] == "categorical":
                cands = [("eq", float(v)) for v in vals]
            else:
                cands = [("le", float((a + b) / 2.0)) for a, b in zip(vals, vals[1:])]
            for test in cands:
                mask = col == test[1] if test[0] == "eq" else col <= test[1]
                ny = int(mask.sum())
                nn = n - ny
                if ny < min_leaf or nn < min_leaf:
                    continue
                gain = parent - (
                    ny / n * _gini_of(t[mask]) + nn / n * _gini_of(t[~mask])
                )
                # strict improvement keeps the first candidate on ties, and
                # candidates are enumerated in canonical ascending order
                if gain > best_gain:
                    best_gain = gain
                    best = (f, test, idx[mask], idx[~mask])
        return best

    def grow(idx, depth):
        t = T[idx]
        if len(np.unique(t)) == 1 or (max_depth is not None and depth >= max_depth):
            cid, hist = _majority(t)
            return TreeLeaf(cluster_id=cid, histogram=hist)
        found = best_split(idx)
        if found is None:
            cid, hist = _majority(t)
            return TreeLeaf(cluster_id=cid, histogram=hist)
        f, test, yes_idx, no_idx = found
        return TreeNode(
            feature=f, test=test, yes=grow(yes_idx, depth + 1), no=grow(no_idx, depth + 1)
        )

    root = grow(np.arange(len(rows)), 0)
    return DecisionTree(root=root, feature_kinds=kinds, feature_names=names)


def predict(tree: DecisionTree, labels) -> int:
    """Route one secret's feature values to a leaf; unseen labels fail the
    equality test and follow the inequality branch."""
    node = tree.root
    while isinstance(node, TreeNode):
        node = node.yes if _apply(node.test, labels[node.feature]) else node.no
    return node.cluster_id


def cross_validate(rows, folds: int = 20, seed: int = 0,
                   feature_kinds=None) -> float:
    """Mean held-out accuracy over seeded-shuffle contiguous folds."""
    n = len(rows)
    if folds > n:
        raise ValueError(f"folds ({folds}) exceed row count ({n})")
    rng = np.random.default_rng(seed)
    perm = rng.permutation(n)
    parts = np.array_split(perm, folds)
    accs = []
    for part in parts:
        held = set(int(i) for i in part)
        train = [rows[i] for i in range(n) if i not in held]
        tree = learn_tree(train, feature_kinds=feature_kinds)
        hit = sum(1 for i in held if predict(tree, rows[i].labels) == rows[i].target)
        accs.append(hit / len(held))
    return float(np.mean(accs))


# ---------------------------------------------------------------------------
# discriminant

@dataclass
class Discriminant:
    """Cluster centroids plus the decision tree that routes secrets to them."""

    clusters: ClusterResult
    tree: DecisionTree | None
    features: list
    rows: list

    @property
    def size(self) -> int:
        return self.clusters.k


def discriminant_error(hypertraces, disc: Discriminant, spec: DistanceSpec) -> float:
    """Mean distance between each timing curve and its predicted centroid."""
    by_secret = {row.secret: row for row in disc.rows}
    total = 0.0
    for h in hypertraces:
        row = by_secret.get(h.secret)
        if row is None:
            raise LeakscopeError(
                f"secret {h.secret} has no labeled row in the discriminant"
            )
        if disc.tree is not None:
            cid = predict(disc.tree, row.labels)
        else:
            cid = 0
        total += distance(h.timing_curve, disc.clusters.centroids[cid], spec)
    return total / len(hypertraces)


# ---------------------------------------------------------------------------
# rendering

def _test_desc(tree: DecisionTree, node: TreeNode, features=None) -> str:
    name = tree.feature_names[node.feature]
    op, ref = node.test
    if op == "eq":
        desc = None
        if features is not None:
            desc = features[node.feature].value_desc(ref)
        else:
            desc = f"{ref:g}" if isinstance(ref, float) else str(ref)
        return f"{name} = {desc}"
    return f"{name} <= {ref:g}"


def render_text(tree: DecisionTree, features=None) -> str:
    lines = []

    def walk(node, indent, prefix):
        pad = "  " * indent
        if isinstance(node, TreeLeaf):
            support = sum(node.histogram.values())
            lines.append(f"{pad}{prefix}cluster {node.cluster_id} (support {support})")
            return
        lines.append(f"{pad}{prefix}{_test_desc(tree, node, features)}")
        walk(node.yes, indent + 1, "yes: ")
        walk(node.no, indent + 1, "no:  ")

    walk(tree.root, 0, "")
    return "\n".join(lines) + "\n"


def render_dot(tree: DecisionTree, features=None) -> str:
    lines = ["digraph discriminant {", "  node [shape=box];"]
    counter = [0]

    def walk(node):
        my_id = counter[0]
        counter[0] += 1
        if isinstance(node, TreeLeaf):
            support = sum(node.histogram.values())
            lines.append(
                f'  n{my_id} [label="cluster {node.cluster_id}\\nsupport {support}"];'
            )
            return my_id
        lines.append(f'  n{my_id} [label="{_test_desc(tree, node, features)}"];')
        yid = walk(node.yes)
        nid = walk(node.no)
        lines.append(f'  n{my_id} -> n{yid} [label="yes"];')
        lines.append(f'  n{my_id} -> n{nid} [label="no"];')
        return my_id

    walk(tree.root)
    lines.append("}")
    return "\n".join(lines) + "\n"
