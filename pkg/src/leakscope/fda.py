"""B-spline curve fitting and p-norm distances between curve derivatives.

Timing observations for one secret are fitted as a clamped B-spline over the
public-input domain.  Distances between two fitted curves compare their i-th
derivatives under an L^p norm; for i >= 1 this ignores constant timing offsets.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import BSpline

from .errors import BasisError, DomainError, UnderDeterminedError

DEFAULT_ORDER = 4
DEFAULT_GRID_N = 512
INF = float("inf")


def default_n_basis(n_points: int, order: int = DEFAULT_ORDER) -> int:
    """Basis size for a fit over n_points distinct sample positions.

    Keeps a smoothing margin of at least a quarter of the points and never
    fewer than 11, so measurement noise averages out at small sample counts
    while single-sample features (one-point steps) stay resolvable at larger
    ones.  Floors at `order` (the minimum representable basis).
    """
    margin = max(-(-n_points // 4), 11)
    return max(order, n_points - margin)


@dataclass(frozen=True)
class BasisSpec:
    """Clamped B-spline basis over a fixed public-input domain."""

    order: int
    n_basis: int
    domain: tuple[float, float]
    knots: np.ndarray

    def __post_init__(self):
        if len(self.knots) - self.order != self.n_basis:
            raise ValueError("knot count must equal n_basis + order")

    def __eq__(self, other):
        if not isinstance(other, BasisSpec):
            return NotImplemented
        return (
            self.order == other.order
            and self.n_basis == other.n_basis
            and self.domain == other.domain
            and np.array_equal(self.knots, other.knots)
        )

    def __hash__(self):
        return hash((self.order, self.n_basis, self.domain, self.knots.tobytes()))


def make_basis(domain, n_basis: int, order: int = DEFAULT_ORDER) -> BasisSpec:
    """Uniform clamped knot vector: endpoints repeated `order` times."""
    lo, hi = float(domain[0]), float(domain[1])
    if order < 2:
        raise BasisError(f"order must be >= 2, got {order}")
    if n_basis < order:
        raise BasisError(f"n_basis must be >= order ({order}), got {n_basis}")
    if not lo < hi:
        raise BasisError(f"domain must satisfy lo < hi, got [{lo}, {hi}]")
    n_interior = n_basis - order
    interior = np.linspace(lo, hi, n_interior + 2)[1:-1]
    knots = np.concatenate([np.full(order, lo), interior, np.full(order, hi)])
    return BasisSpec(order=order, n_basis=n_basis, domain=(lo, hi), knots=knots)


def default_basis(domain, n_points: int, order: int = DEFAULT_ORDER) -> BasisSpec:
    return make_basis(domain, default_n_basis(n_points, order), order)


@dataclass(frozen=True)
class FunctionalCurve:
    """A fitted curve: linear combination of the basis functions."""

    basis: BasisSpec
    coefficients: np.ndarray

    @property
    def domain(self) -> tuple[float, float]:
        return self.basis.domain

    def to_record(self) -> dict:
        return {
            "order": self.basis.order,
            "knots": [float(t) for t in self.basis.knots],
            "coefficients": [float(c) for c in self.coefficients],
        }


def curve_from_record(rec: dict) -> FunctionalCurve:
    knots = np.asarray(rec["knots"], dtype=float)
    order = int(rec["order"])
    basis = BasisSpec(
        order=order,
        n_basis=len(knots) - order,
        domain=(float(knots[0]), float(knots[-1])),
        knots=knots,
    )
    return FunctionalCurve(basis=basis, coefficients=np.asarray(rec["coefficients"], dtype=float))


def fit_curve(points, basis: BasisSpec) -> FunctionalCurve:
    """Least-squares fit; minimum-norm solution if the design is rank-deficient."""
    pts = np.asarray(points, dtype=float)
    if pts.ndim != 2 or pts.shape[1] != 2:
        raise ValueError("points must be (y, v) pairs")
    y, v = pts[:, 0], pts[:, 1]
    lo, hi = basis.domain
    if np.any(y < lo) or np.any(y > hi):
        raise DomainError(f"sample positions outside domain [{lo}, {hi}]")
    if len(np.unique(y)) < basis.n_basis:
        raise UnderDeterminedError(
            f"need >= {basis.n_basis} distinct sample positions, got {len(np.unique(y))}"
        )
    design = BSpline.design_matrix(y, basis.knots, basis.order - 1).toarray()
    coef, *_ = np.linalg.lstsq(design, v, rcond=None)
    return FunctionalCurve(basis=basis, coefficients=coef)


def eval_curve(curve: FunctionalCurve, y, deriv_order: int = 0):
    """Evaluate the deriv_order-th derivative at y (scalar or array).

    Derivatives beyond the polynomial degree are exactly zero, not an error.
    """
    arr = np.asarray(y, dtype=float)
    lo, hi = curve.domain
    if np.any(arr < lo) or np.any(arr > hi):
        raise DomainError(f"evaluation outside domain [{lo}, {hi}]")
    if deriv_order >= curve.basis.order:
        out = np.zeros_like(arr)
        return float(out) if np.isscalar(y) or arr.ndim == 0 else out
    spline = BSpline(curve.basis.knots, curve.coefficients, curve.basis.order - 1)
    out = spline(arr, nu=deriv_order)
    return float(out) if np.isscalar(y) or arr.ndim == 0 else out


@dataclass(frozen=True)
class DistanceSpec:
    """Which derivative to compare (i) and under which p-norm."""

    deriv_order: int = 0
    norm: float = INF
    grid_n: int = DEFAULT_GRID_N

    def __post_init__(self):
        if self.deriv_order not in (0, 1, 2):
            raise ValueError(f"deriv_order must be 0, 1 or 2, got {self.deriv_order}")
        if self.norm not in (1, 2, INF):
            raise ValueError(f"norm must be 1, 2 or inf, got {self.norm}")
        if self.grid_n < 16:
            raise ValueError(f"grid_n must be >= 16, got {self.grid_n}")

    @property
    def effective_grid_n(self) -> int:
        # composite Simpson needs an even interval count
        return self.grid_n + (self.grid_n % 2)

    def label(self) -> str:
        p = "inf" if self.norm == INF else str(int(self.norm))
        return f"d_{{{self.deriv_order},{p}}}"


def simpson_weights(grid_n: int) -> np.ndarray:
    """Composite Simpson weights for grid_n (even) intervals, without the step."""
    w = np.ones(grid_n + 1)
    w[1:-1:2] = 4.0
    w[2:-1:2] = 2.0
    return w / 3.0


def distance_grid(domain, spec: DistanceSpec) -> np.ndarray:
    n = spec.effective_grid_n
    return np.linspace(domain[0], domain[1], n + 1)


def sample_curves(curves, spec: DistanceSpec) -> np.ndarray:
    """Derivative samples of every curve on the spec grid, as rows.

    Curves sharing a basis are evaluated in one batched spline call.
    """
    if not curves:
        return np.empty((0, 0))
    domain = curves[0].domain
    grid = distance_grid(domain, spec)
    out = np.empty((len(curves), len(grid)))
    by_basis: dict = {}
    for idx, c in enumerate(curves):
        if c.domain != domain:
            raise DomainError("curves must share one public-input domain")
        by_basis.setdefault(c.basis, []).append(idx)
    for basis, idxs in by_basis.items():
        if spec.deriv_order >= basis.order:
            out[idxs] = 0.0
            continue
        coef = np.column_stack([curves[i].coefficients for i in idxs])
        spline = BSpline(basis.knots, coef, basis.order - 1)
        out[idxs] = spline(grid, nu=spec.deriv_order).T
    return out


def _norms(diffs: np.ndarray, spec: DistanceSpec, width: float) -> np.ndarray:
    """Row-wise d_{i,p} norms of sampled differences (absolute value inside)."""
    a = np.abs(diffs)
    if spec.norm == INF:
        return a.max(axis=-1)
    n = spec.effective_grid_n
    h = width / n
    w = simpson_weights(n) * h
    return (a ** spec.norm @ w) ** (1.0 / spec.norm)


def distance(a: FunctionalCurve, b: FunctionalCurve, spec: DistanceSpec) -> float:
    if a.domain != b.domain:
        raise DomainError("curves must share one public-input domain")
    va, vb = sample_curves([a, b], spec)
    width = a.domain[1] - a.domain[0]
    return float(_norms((va - vb)[None, :], spec, width)[0])


def distance_matrix(curves, spec: DistanceSpec) -> np.ndarray:
    """Symmetric pairwise distance matrix; each entry computed once and mirrored."""
    if len(curves) == 0:
        raise ValueError("need at least one curve")
    V = sample_curves(curves, spec)
    return grid_distance_matrix(V, curves[0].domain, spec)


def grid_distance_matrix(V: np.ndarray, domain, spec: DistanceSpec) -> np.ndarray:
    """distance_matrix over pre-sampled derivative rows (one row per curve).

    The 2-norm path uses a Gram-matrix expansion; the result is mirrored from
    the upper triangle so exact symmetry holds either way.
    """
    n = V.shape[0]
    width = domain[1] - domain[0]
    if spec.norm == 2 and n > 64:
        gn = spec.effective_grid_n
        w = simpson_weights(gn) * (width / gn)
        Vw = V * np.sqrt(w)
        G = Vw @ Vw.T
        sq = np.diag(G)
        D2 = np.maximum(sq[:, None] + sq[None, :] - 2.0 * G, 0.0)
        D = np.sqrt(D2)
        D = np.triu(D, 1)
        return D + D.T
    D = np.zeros((n, n))
    for i in range(n - 1):
        D[i, i + 1 :] = _norms(V[i + 1 :] - V[i], spec, width)
    return D + D.T
