"""Timing side channel mitigation transforms.

Two schemes operate on observed execution times: fixed-step quantization,
which rounds every time up to a multiple of a slot width, and a doubling
scheme that predicts the next release time and doubles its slot spacing
whenever the prediction falls too far behind the actual computation.  Both
only ever delay a response, never shorten it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .traces import ExecutionTrace, TraceSet

__all__ = [
    "quantize",
    "DoubleScheme",
    "double_scheme",
    "MitigationScheme",
    "mitigate_traces",
]


def quantize(t: float, q: float) -> float:
    """Round time ``t`` up to the smallest positive multiple of ``q``.

    Times at or below ``q`` all release at ``q`` itself, so the output is
    never zero and never earlier than the input.
    """
    if q <= 0:
        raise ValueError("slot width q must be positive")
    if t < 0:
        raise ValueError("execution time must be non-negative")
    return q * max(1.0, math.ceil(t / q))


@dataclass
class DoubleScheme:
    """Stateful predictive mitigation with doubling slot spacing.

    Epoch ``N`` releases at times ``t_N + i * 2**N`` for slot indexes
    ``i >= 0``.  Each observed time goes out at the earliest slot not
    preceding it; when the required slot index exceeds the per-epoch budget
    the scheme advances an epoch, doubling the spacing and re-anchoring the
    epoch start at the smallest multiple of the new spacing covering the
    current time.
    """

    t0: float = 4.0
    budget: int = 64
    epoch: int = field(default=0, init=False)
    start: float = field(default=None, init=False)

    def __post_init__(self):
        if self.t0 <= 0:
            raise ValueError("first epoch start t0 must be positive")
        self.start = float(self.t0)

    def release(self, t: float) -> float:
        if t < 0:
            raise ValueError("execution time must be non-negative")
        spacing = 2.0 ** self.epoch
        slot = max(0, math.ceil((t - self.start) / spacing))
        if slot <= self.budget:
            return self.start + slot * spacing
        self.epoch += 1
        spacing = 2.0 ** self.epoch
        self.start = spacing * math.ceil(t / spacing)
        return self.start


def double_scheme(times, t0: float = 4.0, budget: int = 64) -> np.ndarray:
    """Run a fresh :class:`DoubleScheme` over a time sequence."""
    state = DoubleScheme(t0=t0, budget=budget)
    return np.array([state.release(float(t)) for t in times], dtype=float)


@dataclass(frozen=True)
class MitigationScheme:
    """Configuration selecting one mitigation transform.

    kind   "quantize" or "double-scheme"
    q      slot width in seconds (quantize only)
    t0     first epoch start in seconds (double-scheme only)
    """

    kind: str
    q: float = 1.0
    t0: float = 4.0

    def __post_init__(self):
        if self.kind not in ("quantize", "double-scheme"):
            raise ValueError(f"unknown mitigation kind: {self.kind!r}")
        if self.q <= 0:
            raise ValueError("slot width q must be positive")
        if self.t0 <= 0:
            raise ValueError("first epoch start t0 must be positive")


def mitigate_traces(traces: TraceSet, scheme: MitigationScheme) -> TraceSet:
    """Apply a mitigation scheme to every trace, leaving everything but the
    time untouched.

    Quantization is memoryless and applies per trace.  The doubling scheme
    is stateful: each secret gets a fresh scheme instance and consumes its
    traces in ascending public-value order (stable for duplicate publics),
    modeling one mitigated session per secret.
    """
    if scheme.kind == "quantize":
        new_times = [quantize(tr.time, scheme.q) for tr in traces.records]
    else:
        by_secret: dict = {}
        for pos, tr in enumerate(traces.records):
            by_secret.setdefault(tr.secret, []).append(pos)
        new_times = [0.0] * len(traces.records)
        for secret in sorted(by_secret):
            positions = by_secret[secret]
            # stable sort keeps file order among equal publics
            order = sorted(positions, key=lambda p: traces.records[p].public)
            state = DoubleScheme(t0=scheme.t0)
            for p in order:
                new_times[p] = state.release(traces.records[p].time)
    records = [
        ExecutionTrace(secret=tr.secret, public=tr.public, aux=tr.aux, time=new_times[pos])
        for pos, tr in enumerate(traces.records)
    ]
    return TraceSet(
        secret_dim=traces.secret_dim,
        public_dim=traces.public_dim,
        aux_names=list(traces.aux_names),
        records=records,
        secret_names=list(traces.secret_names),
        public_name=traces.public_name,
        time_name=traces.time_name,
    )
