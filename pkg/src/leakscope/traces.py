"""Execution traces, trace-file ingestion, and per-secret functional observations.

A trace row is (secret vector, scalar public input, aux counter values, time).
Hyper-traces aggregate all rows of one secret into fitted curves over the
public input: one timing curve plus one curve per auxiliary variable.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import BSpline

from .errors import (
    AuxDeterminismError,
    DimensionError,
    DomainError,
    ParseError,
    UnderDeterminedError,
)
from .fda import BasisSpec, FunctionalCurve, default_basis


@dataclass(frozen=True)
class ExecutionTrace:
    secret: tuple        # n secret components
    public: float        # scalar public input (public_dim is fixed at 1)
    aux: tuple           # r auxiliary counter values
    time: float          # seconds


@dataclass
class TraceSet:
    secret_dim: int
    public_dim: int
    aux_names: list
    records: list
    secret_names: list = field(default_factory=list)
    public_name: str = "y"
    time_name: str = "t"

    def __post_init__(self):
        if self.public_dim != 1:
            raise DimensionError(
                f"only scalar public inputs are supported, got dimension {self.public_dim}"
            )
        if not self.secret_names:
            self.secret_names = [f"s{i}" if self.secret_dim > 1 else "s"
                                 for i in range(self.secret_dim)]

    def distinct_secrets(self) -> list:
        return sorted({r.secret for r in self.records})

    def distinct_publics(self) -> np.ndarray:
        return np.unique([r.public for r in self.records])


@dataclass(frozen=True)
class HyperTrace:
    secret: tuple
    aux_curves: tuple          # r FunctionalCurve values
    timing_curve: FunctionalCurve
    sample_count: int


def _validate(ts: TraceSet):
    seen = {}
    for r in ts.records:
        if len(r.secret) != ts.secret_dim or len(r.aux) != len(ts.aux_names):
            raise ParseError("record arity does not match declared columns")
        if not np.isfinite(r.time) or r.time < 0:
            raise ParseError(f"time must be finite and >= 0, got {r.time}")
        key = (r.secret, r.public)
        if key in seen:
            if seen[key] != r.aux:
                raise AuxDeterminismError(r.secret, r.public)
        else:
            seen[key] = r.aux
    return ts


def _parse_header(line: str, line_no: int):
    secret_names, aux_names = [], []
    public_name = time_name = None
    public_count = 0
    for col in line.strip().split(","):
        role, _, name = col.partition(":")
        role = role.strip()
        name = name.strip()
        if not name:
            raise ParseError(f"column {col!r} lacks a name", line_no)
        if role == "secret":
            secret_names.append(name)
        elif role == "public":
            public_count += 1
            public_name = name
        elif role == "aux":
            aux_names.append(name)
        elif role == "time":
            time_name = name
        else:
            raise ParseError(f"unknown column role {role!r}", line_no)
    if not secret_names or public_count == 0 or time_name is None:
        raise ParseError("header needs secret:, public: and time: columns", line_no)
    if public_count != 1:
        raise DimensionError(
            f"only scalar public inputs are supported, got {public_count} public columns"
        )
    return secret_names, public_name, aux_names, time_name


def _load_delimited(path) -> TraceSet:
    with open(path, "r", encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    if not lines:
        raise ParseError("empty trace file", 1)
    secret_names, public_name, aux_names, time_name = _parse_header(lines[0], 1)
    n, r = len(secret_names), len(aux_names)
    ncols = n + 1 + r + 1
    records = []
    for line_no, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        parts = line.split(",")
        if len(parts) != ncols:
            raise ParseError(f"expected {ncols} values, got {len(parts)}", line_no)
        try:
            vals = [float(p) for p in parts]
        except ValueError as exc:
            raise ParseError(str(exc), line_no) from None
        records.append(
            ExecutionTrace(
                secret=tuple(vals[:n]),
                public=vals[n],
                aux=tuple(vals[n + 1 : n + 1 + r]),
                time=vals[-1],
            )
        )
    return TraceSet(
        secret_dim=n,
        public_dim=1,
        aux_names=aux_names,
        records=records,
        secret_names=secret_names,
        public_name=public_name,
        time_name=time_name,
    )


def _load_structured(path) -> TraceSet:
    with open(path, "r", encoding="utf-8") as fh:
        try:
            data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ParseError(f"invalid structured-record file: {exc}") from None
    if not isinstance(data, list) or not data:
        raise ParseError("structured-record file must be a non-empty array")
    first = data[0]
    aux_names = list(first.get("aux", {}).keys())
    n = len(first["secret"])
    records = []
    for i, obj in enumerate(data):
        try:
            secret = tuple(float(v) for v in obj["secret"])
            public = float(obj["public"])
            aux = tuple(float(obj.get("aux", {})[name]) for name in aux_names)
            time = float(obj["time"])
        except (KeyError, TypeError, ValueError) as exc:
            raise ParseError(f"record {i}: {exc}") from None
        if len(secret) != n or len(obj.get("aux", {})) != len(aux_names):
            raise ParseError(f"record {i}: arity differs from first record")
        records.append(ExecutionTrace(secret=secret, public=public, aux=aux, time=time))
    return TraceSet(secret_dim=n, public_dim=1, aux_names=aux_names, records=records)


def load_traces(path, format: str | None = None) -> TraceSet:
    """Read a trace file; format is sniffed from the first byte when omitted."""
    if format is None:
        with open(path, "r", encoding="utf-8") as fh:
            head = fh.read(1)
        format = "structured-records" if head == "[" else "delimited-text"
    if format == "delimited-text":
        ts = _load_delimited(path)
    elif format == "structured-records":
        ts = _load_structured(path)
    else:
        raise ValueError(f"unknown trace format {format!r}")
    return _validate(ts)


def save_traces(ts: TraceSet, path, format: str = "delimited-text"):
    """Write a trace file; floats use shortest round-trip repr."""
    if format == "delimited-text":
        cols = (
            [f"secret:{nm}" for nm in ts.secret_names]
            + [f"public:{ts.public_name}"]
            + [f"aux:{nm}" for nm in ts.aux_names]
            + [f"time:{ts.time_name}"]
        )
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(",".join(cols) + "\n")
            for r in ts.records:
                vals = list(r.secret) + [r.public] + list(r.aux) + [r.time]
                fh.write(",".join(repr(float(v)) for v in vals) + "\n")
    elif format == "structured-records":
        data = [
            {
                "secret": [float(v) for v in r.secret],
                "public": float(r.public),
                "aux": {nm: float(v) for nm, v in zip(ts.aux_names, r.aux)},
                "time": float(r.time),
            }
            for r in ts.records
        ]
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(data, fh, indent=1)
            fh.write("\n")
    else:
        raise ValueError(f"unknown trace format {format!r}")


def _stable_mean(values) -> float:
    # sort before summing so aggregation is invariant to record order
    arr = np.sort(np.asarray(values, dtype=float))
    return float(arr.sum() / len(arr))


def build_hypertraces(ts: TraceSet, basis: BasisSpec | None = None) -> list:
    """One HyperTrace per distinct secret; duplicate samples are mean-averaged.

    All curves share the given basis (default: the package basis policy over
    the full public range of the trace set).
    """
    if not ts.records:
        raise ValueError("trace set has no records")
    publics = ts.distinct_publics()
    if basis is None:
        basis = default_basis((publics[0], publics[-1]), len(publics))

    by_secret: dict = {}
    for rec in ts.records:
        by_secret.setdefault(rec.secret, {}).setdefault(rec.public, []).append(rec)

    # secrets usually share one public grid, so the design matrix is cached and
    # the timing + aux columns of a secret are fitted in a single lstsq call
    design_cache: dict = {}

    def fit_columns(ys, cols):
        lo, hi = basis.domain
        if ys[0] < lo or ys[-1] > hi:
            raise DomainError(f"sample positions outside domain [{lo}, {hi}]")
        key = ys.tobytes()
        if key not in design_cache:
            design_cache[key] = BSpline.design_matrix(
                ys, basis.knots, basis.order - 1
            ).toarray()
        coef, *_ = np.linalg.lstsq(design_cache[key], cols, rcond=None)
        return coef

    r = len(ts.aux_names)
    out = []
    for secret in sorted(by_secret):
        per_public = by_secret[secret]
        ys = np.array(sorted(per_public))
        if len(ys) < basis.n_basis:
            raise UnderDeterminedError(
                f"secret {secret} has {len(ys)} distinct publics, need >= {basis.n_basis}"
            )
        times = np.array([_stable_mean([rec.time for rec in per_public[y]]) for y in ys])
        sample_count = sum(len(per_public[y]) for y in ys)
        aux_cols = [np.array([per_public[y][0].aux[j] for y in ys]) for j in range(r)]
        coef = fit_columns(ys, np.column_stack([times] + aux_cols))
        out.append(
            HyperTrace(
                secret=secret,
                aux_curves=tuple(
                    FunctionalCurve(basis=basis, coefficients=coef[:, 1 + j])
                    for j in range(r)
                ),
                timing_curve=FunctionalCurve(basis=basis, coefficients=coef[:, 0]),
                sample_count=sample_count,
            )
        )
    return out


def secret_id(secret: tuple) -> str:
    """Stable printable id for a secret vector (integral floats print as ints)."""
    parts = []
    for v in secret:
        parts.append(repr(int(v)) if float(v) == int(v) else repr(float(v)))
    return "|".join(parts)
