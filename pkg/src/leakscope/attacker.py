"""Remote attacker simulation and leakage quantification.

The attacker holds the clustering result from an offline profiling phase.
At attack time it samples the victim over the network, so every observed
time carries an unknown constant offset (queueing, propagation).  Matching
is therefore done under a derivative distance: constants vanish under
differentiation, and the fitted spline reproduces an added constant exactly,
so the offset cannot influence the derivative comparison.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .clustering import ClusterResult
from .errors import ThreatModelError
from .fda import DistanceSpec, default_n_basis, distance, fit_curve, make_basis

__all__ = [
    "RemoteObservation",
    "MatchResult",
    "match_remote",
    "leakage_bits",
    "kd_bound",
]


@dataclass(frozen=True)
class RemoteObservation:
    """Timing samples collected over the network.

    samples                  sequence of (public value, observed seconds)
    assumed_offset_unknown   documents that observed times include an
                             unknown constant shift the matcher must ignore
    """

    samples: tuple
    assumed_offset_unknown: bool = True

    def publics(self) -> np.ndarray:
        return np.array([y for y, _ in self.samples], dtype=float)

    def times(self) -> np.ndarray:
        return np.array([t for _, t in self.samples], dtype=float)


@dataclass(frozen=True)
class MatchResult:
    """Outcome of matching one observation against the cluster centroids.

    ambiguous is set when the two smallest centroid distances differ by
    less than the clustering epsilon, meaning the observation cannot be
    attributed to a single cluster at the resolution the clustering itself
    used.
    """

    cluster_id: int
    distances: np.ndarray
    ambiguous: bool

    def __iter__(self):
        # allows  cid, dists = match_remote(...)
        return iter((self.cluster_id, self.distances))


def match_remote(obs: RemoteObservation, clusters: ClusterResult,
                 spec: DistanceSpec, member_curves=None) -> MatchResult:
    """Fit the observation and return the nearest cluster under ``spec``.

    Requires spec.deriv_order >= 1: with order 0 the unknown network offset
    shifts every distance and the match is meaningless.  Ties in distance go
    to the lowest cluster id.  When ``member_curves`` (curves indexed like
    clusters.assignment) is given, matching is against the nearest member
    instead of the centroid; per-cluster distances are then minima over
    members.
    """
    if spec.deriv_order < 1:
        raise ThreatModelError(
            "remote matching needs deriv_order >= 1; a constant network "
            "offset makes order-0 distances uninformative"
        )
    if clusters.centroids is None or len(clusters.centroids) == 0:
        raise ValueError("cluster result carries no centroids to match against")
    domain = clusters.centroids[0].domain
    ys = obs.publics()
    ts = obs.times()
    basis = make_basis(
        domain,
        default_n_basis(len(np.unique(ys))),
        order=clusters.centroids[0].basis.order,
    )
    curve = fit_curve(np.column_stack([ys, ts]), basis)

    if member_curves is None:
        dists = np.array(
            [distance(curve, c, spec) for c in clusters.centroids], dtype=float
        )
    else:
        dists = np.full(clusters.k, np.inf)
        for idx, mc in enumerate(member_curves):
            cid = int(clusters.assignment[idx])
            d = distance(curve, mc, spec)
            if d < dists[cid]:
                dists[cid] = d
    best = int(np.argmin(dists))  # argmin returns the first, lowest id
    if len(dists) > 1:
        two = np.sort(dists)[:2]
        ambiguous = bool(two[1] - two[0] < clusters.epsilon)
    else:
        ambiguous = False
    return MatchResult(cluster_id=best, distances=dists, ambiguous=ambiguous)


def leakage_bits(k: int) -> float:
    """Bits revealed by distinguishing k functional observation classes."""
    if k < 1:
        raise ValueError("cluster count must be at least 1")
    return math.log2(k)


def kd_bound(k: int, n: int) -> float:
    """Upper bound on leaked bits from k classes over n measurements."""
    if k < 1:
        raise ValueError("cluster count must be at least 1")
    if n < 0:
        raise ValueError("measurement count must be non-negative")
    return k * math.log2(n + 1)
