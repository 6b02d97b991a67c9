"""End-to-end leak discovery: traces in, clusters + discriminant + report out.

Stage order: load (or generate) -> optional mitigation -> per-secret curve
fitting -> constrained clustering of timing curves -> aux labeling, decision
tree, cross-validation -> report bundle.  A single-cluster outcome means the
inputs are indistinguishable at the requested resolution, so discriminant
learning is skipped and the report records that instead of a tree.
"""

from __future__ import annotations

import json
import math
import os
import time
from dataclasses import dataclass, field

import numpy as np

from .attacker import kd_bound, leakage_bits
from .benchmarks import BenchModel, default_grid, generate
from .clustering import ClusterResult, fd_clustering
from .errors import PipelineStageError
from .fda import INF, DistanceSpec
from .mitigation import MitigationScheme, mitigate_traces
from .plots import write_curves_csv, write_curves_svg
from .traces import TraceSet, build_hypertraces, load_traces, secret_id
from .tree import (
    Discriminant,
    LabeledRow,
    cross_validate,
    label_aux,
    learn_tree,
    render_dot,
    render_text,
)

__all__ = [
    "NONINTERFERENCE_NOTE",
    "PipelineConfig",
    "PipelineReport",
    "render_json",
    "run_pipeline",
    "write_bundle",
    "secret_id",
]

NONINTERFERENCE_NOTE = "noninterference holds for the given inputs"


@dataclass
class PipelineConfig:
    """Everything one analysis run needs.

    Exactly one of ``input_path`` (a trace file) or ``model`` (a synthetic
    benchmark) must be given.  With a model, explicit ``secrets``/``publics``
    lists override the canonical grid of ``n_secrets`` x ``n_publics``.
    ``eps_aux`` defaults to ``eps``; ``max_clusters`` of None means one
    cluster per secret is allowed.
    """

    input_path: str | None = None
    model: BenchModel | None = None
    secrets: list | None = None
    publics: list | None = None
    n_secrets: int = 20
    n_publics: int = 20
    eps: float = 0.001
    eps_aux: float | None = None
    deriv_order: int = 1
    norm: float = 2.0
    grid_n: int = 512
    max_clusters: int | None = None
    algorithm: str = "hierarchical"
    cv_folds: int = 20
    mitigation: MitigationScheme | None = None
    seed: int = 0
    out_dir: str | None = None

    def __post_init__(self):
        if (self.input_path is None) == (self.model is None):
            raise ValueError("provide exactly one of input_path or model")
        if self.eps <= 0:
            raise ValueError("eps must be positive")
        if self.eps_aux is not None and self.eps_aux <= 0:
            raise ValueError("eps_aux must be positive")
        if self.max_clusters is not None and self.max_clusters < 1:
            raise ValueError("max_clusters must be >= 1")
        if self.cv_folds < 2:
            raise ValueError("cv_folds must be >= 2")

    def distance_spec(self) -> DistanceSpec:
        return DistanceSpec(
            deriv_order=self.deriv_order, norm=self.norm, grid_n=self.grid_n
        )

    def aux_eps(self) -> float:
        return self.eps if self.eps_aux is None else self.eps_aux


@dataclass
class PipelineReport:
    config: PipelineConfig
    traces: TraceSet
    hypertraces: list
    clusters: ClusterResult
    discriminant: Discriminant | None
    accuracy: float | None
    leakage_bits: float
    kd_bound: float
    note: str | None
    timings: dict
    report: dict
    files: dict = field(default_factory=dict)


def _spec_record(spec: DistanceSpec) -> dict:
    norm = "inf" if spec.norm == INF else float(spec.norm)
    return {"deriv_order": spec.deriv_order, "norm": norm, "grid_n": spec.grid_n}


def render_json(value, indent: int = 0) -> str:
    """JSON with every finite float at fixed 9-digit precision.

    Fixed-width floats make rendered reports byte-comparable across runs
    that produced the same numbers.
    """
    pad = " " * indent
    if isinstance(value, dict):
        if not value:
            return "{}"
        items = [
            f'{pad}  {json.dumps(str(k))}: {render_json(v, indent + 2)}'
            for k, v in value.items()
        ]
        return "{\n" + ",\n".join(items) + f"\n{pad}}}"
    if isinstance(value, (list, tuple)):
        if len(value) == 0:
            return "[]"
        items = [f"{pad}  {render_json(v, indent + 2)}" for v in value]
        return "[\n" + ",\n".join(items) + f"\n{pad}]"
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        v = float(value)
        if math.isinf(v) or math.isnan(v):
            return json.dumps(str(v))
        return f"{v:.9f}"
    if value is None:
        return "null"
    return json.dumps(value)


def run_pipeline(config: PipelineConfig) -> PipelineReport:
    """Execute every stage; write the report bundle when out_dir is set."""
    timings: dict = {}

    def stage(name, fn):
        t0 = time.perf_counter()
        try:
            out = fn()
        except Exception as exc:
            raise PipelineStageError(name, exc) from exc
        timings[name] = time.perf_counter() - t0
        return out

    def _load():
        if config.input_path is not None:
            return load_traces(config.input_path)
        secrets, publics = config.secrets, config.publics
        if secrets is None or publics is None:
            gs, gp = default_grid(
                config.model.kind, config.n_secrets, config.n_publics,
                config.model.params,
            )
            secrets = gs if secrets is None else secrets
            publics = gp if publics is None else publics
        return generate(config.model, secrets, publics)

    traces = stage("load", _load)
    if config.mitigation is not None:
        traces = stage("mitigate", lambda: mitigate_traces(traces, config.mitigation))

    hypertraces = stage("hypertraces", lambda: build_hypertraces(traces))
    spec = config.distance_spec()
    clusters = stage(
        "clustering",
        lambda: fd_clustering(
            hypertraces, config.max_clusters, spec, config.eps,
            algo=config.algorithm, seed=config.seed,
        ),
    )

    note = None
    discriminant = None
    accuracy = None
    if clusters.k == 1:
        note = NONINTERFERENCE_NOTE
        timings["discriminant"] = 0.0
    else:
        def _discriminant():
            aux_spec = DistanceSpec(deriv_order=0, norm=2, grid_n=config.grid_n)
            features = [
                label_aux(hypertraces, j, config.aux_eps(), None, aux_spec,
                          name=traces.aux_names[j])
                for j in range(len(traces.aux_names))
            ]
            rows = [
                LabeledRow(
                    secret=h.secret,
                    labels=tuple(float(f.values[i]) for f in features),
                    target=int(clusters.assignment[i]),
                )
                for i, h in enumerate(hypertraces)
            ]
            kinds = [f.kind for f in features]
            tree = learn_tree(rows, feature_kinds=kinds,
                              feature_names=[f.name for f in features])
            folds = min(config.cv_folds, len(rows))
            acc = cross_validate(rows, folds=folds, seed=config.seed,
                                 feature_kinds=kinds)
            return Discriminant(clusters=clusters, tree=tree, features=features,
                                rows=rows), acc

        discriminant, accuracy = stage("discriminant", _discriminant)

    n_publics = len(traces.distinct_publics())
    leak = leakage_bits(clusters.k)
    kd = kd_bound(clusters.k, n_publics)

    report = {
        "k": clusters.k,
        "eps": config.eps,
        "eps_aux": config.aux_eps(),
        "spec": _spec_record(spec),
        "algorithm": clusters.algorithm,
        "n_secrets": len(hypertraces),
        "n_publics": n_publics,
        "accuracy": accuracy,
        "tree_height": None if discriminant is None else discriminant.tree.height,
        "leaf_count": None if discriminant is None else discriminant.tree.leaf_count,
        "leakage_bits": leak,
        "kd_bound": kd,
        "note": note,
        "timings": timings,
    }

    out = PipelineReport(
        config=config,
        traces=traces,
        hypertraces=hypertraces,
        clusters=clusters,
        discriminant=discriminant,
        accuracy=accuracy,
        leakage_bits=leak,
        kd_bound=kd,
        note=note,
        timings=timings,
        report=report,
    )
    if config.out_dir is not None:
        write_bundle(out, config.out_dir)
    return out


def write_bundle(result: PipelineReport, out_dir) -> dict:
    """Write the full report bundle; returns {artifact name: path}."""
    os.makedirs(out_dir, exist_ok=True)
    files = {}

    def path_of(name):
        p = os.path.join(out_dir, name)
        files[name] = p
        return p

    with open(path_of("clusters.csv"), "w", encoding="utf-8") as fh:
        fh.write("secret,cluster\n")
        for idx, h in enumerate(result.hypertraces):
            fh.write(f"{secret_id(h.secret)},{int(result.clusters.assignment[idx])}\n")

    centroid_records = [
        {"cluster": c, **curve.to_record()}
        for c, curve in enumerate(result.clusters.centroids)
    ]
    with open(path_of("centroids.json"), "w", encoding="utf-8") as fh:
        fh.write(render_json({
            "eps": result.config.eps,
            "spec": _spec_record(result.clusters.spec),
            "centroids": centroid_records,
        }))
        fh.write("\n")

    if result.discriminant is not None:
        with open(path_of("tree.txt"), "w", encoding="utf-8") as fh:
            fh.write(render_text(result.discriminant.tree, result.discriminant.features))
        with open(path_of("tree.dot"), "w", encoding="utf-8") as fh:
            fh.write(render_dot(result.discriminant.tree, result.discriminant.features))

    with open(path_of("report.json"), "w", encoding="utf-8") as fh:
        fh.write(render_json(result.report))
        fh.write("\n")

    write_curves_csv(result.hypertraces, result.clusters, path_of("curves.csv"))
    write_curves_svg(result.hypertraces, result.clusters, path_of("curves.svg"))
    result.files = files
    return files
