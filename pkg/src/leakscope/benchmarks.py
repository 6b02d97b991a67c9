"""Deterministic synthetic trace generators.

Each generator kind mirrors a small program whose running time depends on a
secret and one public input: parity arms with distinct sleeps, threshold
comparisons, guessing loops, complexity-switching branch/loop nests, string
comparison with an early length exit, and square-and-multiply modular
exponentiation.  Times follow a closed-form base model plus optional
Gaussian noise; auxiliary counters (branch indicators, loop iteration
counts) are emitted noise-free.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field

import numpy as np

from .errors import GenerationError
from .traces import ExecutionTrace, TraceSet

__all__ = [
    "BenchModel",
    "generate",
    "default_branch_secrets",
    "default_jetty_secrets",
    "default_grid",
    "BRANCH_THRESHOLDS",
    "BENCH_KINDS",
]

# secret bands for the branch/loop nest; band b covers [lo_b, hi_b)
BRANCH_THRESHOLDS = (100.0, 195.0, 290.0, 400.0)

_DEFAULTS = {
    "zigzag": {},
    "process-bid": {"t_fast": 0.001, "t_record": 0.002},
    "guess-secret-1": {"t_low": 0.001, "t_high": 0.002},
    "guess-secret-2": {},
    "branch-loop": {"variants": 1, "unit": 0.001},
    "strcmp-jetty": {"a": 0.0005, "b": 0.005},
    "modpow-gabfeed": {"a": 1.0, "b": 0.06},
}

BENCH_KINDS = tuple(_DEFAULTS)


@dataclass
class BenchModel:
    """One synthetic benchmark: kind, per-kind parameters, noise, seed.

    ``kind`` accepts the plain name or the parenthesized variant form
    "branch-loop(3)", which sets the ``variants`` parameter.
    """

    kind: str
    params: dict = field(default_factory=dict)
    noise_sigma: float = 0.0001
    seed: int = 0

    def __post_init__(self):
        m = re.fullmatch(r"branch-loop\((\d+)\)", self.kind)
        if m:
            self.kind = "branch-loop"
            self.params.setdefault("variants", int(m.group(1)))
        if self.kind not in _DEFAULTS:
            raise GenerationError(
                f"unknown benchmark kind {self.kind!r}; expected one of {sorted(_DEFAULTS)}"
            )
        if self.noise_sigma < 0:
            raise GenerationError("noise_sigma must be >= 0")
        merged = dict(_DEFAULTS[self.kind])
        unknown = set(self.params) - set(merged)
        if unknown:
            raise GenerationError(
                f"unknown parameters for {self.kind}: {sorted(unknown)}"
            )
        merged.update(self.params)
        self.params = merged
        for key, value in self.params.items():
            if key == "variants":
                if int(value) != value or value < 1:
                    raise GenerationError("variants must be a positive integer")
                self.params[key] = int(value)
            elif value <= 0 and key not in ("a",):
                raise GenerationError(f"parameter {key} must be positive")


def _require_integral(value: float, what: str) -> int:
    if float(value) != int(value):
        raise GenerationError(f"{what} must be an integer, got {value}")
    return int(value)


def _branch_arm(s: float) -> int:
    if not 0 <= s < BRANCH_THRESHOLDS[-1]:
        raise GenerationError(
            f"branch-loop secret must lie in [0, {BRANCH_THRESHOLDS[-1]:g}), got {s}"
        )
    for arm, hi in enumerate(BRANCH_THRESHOLDS):
        if s < hi:
            return arm
    raise AssertionError("unreachable")


def _kind_spec(model: BenchModel):
    """Return (secret_names, public_name, aux_names, base_fn) for the kind.

    base_fn(secret_tuple, y) -> (seconds, aux tuple); aux is noise-free.
    """
    p = model.params
    kind = model.kind

    if kind == "zigzag":
        def base(s, y):
            sv = _require_integral(s[0], "zigzag secret")
            yv = _require_integral(y, "zigzag public")
            if sv % 2 == 0:
                t = 0.003 if yv % 2 == 0 else 0.001
                aux = (float(yv % 2 == 0), float(yv % 2 == 1), 0.0)
            else:
                t = 0.002
                aux = (0.0, 0.0, 1.0)
            return t, aux
        return ["secret"], "low", ["bb_sleep3", "bb_sleep1", "bb_sleep2"], base

    if kind == "process-bid":
        t_fast, t_record = p["t_fast"], p["t_record"]
        def base(s, y):
            if y < s[0]:
                return t_fast, (0.0,)
            return t_fast + t_record, (1.0,)
        return ["secret"], "offer", ["bb_record_bid"], base

    if kind == "guess-secret-1":
        t_low, t_high = p["t_low"], p["t_high"]
        def base(s, y):
            hit = y <= s[0]
            return (t_low if hit else t_high), (float(hit),)
        return ["secret"], "low", ["bb_guess_le"], base

    if kind == "guess-secret-2":
        arms_hit = (0.001, 0.010, 1.0)
        arms_miss = (0.001, 0.100, 1.0)
        def base(s, y):
            yv = _require_integral(y, "guess-secret-2 public")
            t_arm = yv % 3 + 1
            hit = y <= s[0]
            arms = arms_hit if hit else arms_miss
            return arms[t_arm - 1], (float(hit), float(t_arm))
        return ["secret"], "low", ["bb_guess_le", "t_arm"], base

    if kind == "branch-loop":
        variants, unit = p["variants"], p["unit"]
        def base(s, y):
            sv, j = s
            jv = _require_integral(j, "branch-loop variant")
            if not 1 <= jv <= variants:
                raise GenerationError(
                    f"variant must lie in 1..{variants}, got {jv}"
                )
            if y < 1:
                raise GenerationError(f"branch-loop public must be >= 1, got {y}")
            arm = _branch_arm(sv)
            work = (math.log2(y), y, y * math.log2(y), y * y)[arm]
            iters = jv * work
            aux = [0.0, 0.0, 0.0, 0.0]
            aux[arm] = iters
            return unit * iters, tuple(aux)
        return (["secret", "variant"], "N",
                ["bb_arm_log", "bb_arm_linear", "bb_arm_nlogn", "bb_arm_quad"], base)

    if kind == "strcmp-jetty":
        a, b = p["a"], p["b"]
        def base(s, y):
            length, _rep = s
            if length < 1:
                raise GenerationError(f"secret length must be >= 1, got {length}")
            if y < 0:
                raise GenerationError(f"public length must be >= 0, got {y}")
            count = float(min(length, y))
            return a + b * count, (count, 1.0)
        return (["length", "replica"], "y",
                ["stringEquals_bblock_118", "bb_setup"], base)

    if kind == "modpow-gabfeed":
        a, b = p["a"], p["b"]
        def base(s, y):
            sv = _require_integral(s[0], "modpow secret")
            yv = _require_integral(y, "modpow public")
            if sv < 1 or yv < 1:
                raise GenerationError("modpow secret and public must be >= 1")
            pc = bin(sv).count("1")
            bl = yv.bit_length()
            return a + b * pc * bl, (float(pc - 1) * y,)
        return ["secret"], "y", ["standardMultiply_bblock_18"], base

    raise AssertionError("unreachable")


def generate(model: BenchModel, secrets, publics) -> TraceSet:
    """Produce one trace per (secret, public) pair from the base model.

    time(s, y) = base(s, y) + Gaussian(0, noise_sigma), drawn from a stream
    seeded by (model.seed, secret position) so that per-secret generation
    order never changes the output.  Repeated publics yield independent
    noisy measurements of the same cell.  Aux values carry no noise.
    """
    if len(secrets) == 0 or len(publics) == 0:
        raise GenerationError("secrets and publics must be non-empty")
    secret_names, public_name, aux_names, base_fn = _kind_spec(model)
    dim = len(secret_names)
    records = []
    for si, raw in enumerate(secrets):
        s = tuple(raw) if isinstance(raw, (tuple, list, np.ndarray)) else (raw,)
        if len(s) != dim:
            raise GenerationError(
                f"{model.kind} secrets have {dim} component(s), got {len(s)}"
            )
        s = tuple(float(v) for v in s)
        rng = np.random.default_rng([model.seed, si]) if model.noise_sigma > 0 else None
        for y in publics:
            yv = float(y)
            t, aux = base_fn(s, yv)
            if rng is not None:
                t = max(0.0, t + rng.normal(0.0, model.noise_sigma))
            records.append(ExecutionTrace(secret=s, public=yv, aux=aux, time=float(t)))
    return TraceSet(
        secret_dim=dim,
        public_dim=1,
        aux_names=list(aux_names),
        records=records,
        secret_names=list(secret_names),
        public_name=public_name,
        time_name="t",
    )


def default_branch_secrets(n_secrets: int, variants: int = 1):
    """Spread n_secrets evenly over the 4 bands x variants grid.

    Within a band, secret values are evenly spaced floats below the band's
    threshold; every variant reuses the same value set.
    """
    if n_secrets < 1:
        raise GenerationError("need at least one secret")
    cells = 4 * variants
    per_cell, extra = divmod(n_secrets, cells)
    out = []
    cell = 0
    los = (0.0,) + BRANCH_THRESHOLDS[:-1]
    for band in range(4):
        lo, hi = los[band], BRANCH_THRESHOLDS[band]
        for j in range(1, variants + 1):
            count = per_cell + (1 if cell < extra else 0)
            cell += 1
            for v in np.linspace(lo, hi, count, endpoint=False):
                out.append((float(v), float(j)))
    return out


def default_jetty_secrets(n_lengths: int, replicas: int = 5):
    """Secrets (length, replica): several distinct strings per length."""
    if n_lengths < 1 or replicas < 1:
        raise GenerationError("need at least one length and one replica")
    return [
        (float(length), float(rep))
        for length in range(1, n_lengths + 1)
        for rep in range(replicas)
    ]


def default_grid(kind: str, n_secrets: int, n_publics: int, params: dict | None = None):
    """Canonical (secrets, publics) lists for a kind, for CLI convenience."""
    params = params or {}
    if n_secrets < 1 or n_publics < 1:
        raise GenerationError("secret and public counts must be positive")
    if kind.startswith("branch-loop"):
        variants = params.get("variants", 1)
        m = re.fullmatch(r"branch-loop\((\d+)\)", kind)
        if m:
            variants = int(m.group(1))
        secrets = default_branch_secrets(n_secrets, variants)
        publics = [50.0 * i for i in range(1, n_publics + 1)]
    elif kind == "strcmp-jetty":
        replicas = 5 if n_secrets >= 5 else 1
        secrets = default_jetty_secrets(max(1, n_secrets // replicas), replicas)
        publics = list(range(1, n_publics + 1))
    elif kind == "modpow-gabfeed":
        secrets = list(range(1, n_secrets + 1))
        publics = list(range(1, n_publics + 1))
    elif kind == "process-bid":
        secrets = list(range(1, n_secrets + 1))
        publics = list(range(n_publics))
    else:
        secrets = list(range(n_secrets))
        publics = list(range(n_publics))
    return secrets, publics
