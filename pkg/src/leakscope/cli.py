"""Command-line entry points.

Subcommands:
  generate   write a synthetic benchmark trace file
  analyze    run the full discovery pipeline and write a report bundle
  mitigate   rewrite a trace file through a mitigation scheme
  match      assign a remote observation file to stored cluster centroids
  report     pretty-print a previously written report.json

Exit status: 0 success, 2 infeasible clustering under the given bound,
3 malformed input or arguments, 1 anything else.
"""

from __future__ import annotations

import argparse
import json
import sys

import numpy as np

from .attacker import RemoteObservation, kd_bound, leakage_bits, match_remote
from .benchmarks import BENCH_KINDS, BenchModel, default_grid, generate
from .clustering import ClusterResult
from .errors import (
    AuxDeterminismError,
    BasisError,
    DimensionError,
    DomainError,
    GenerationError,
    InfeasibleClusteringError,
    LeakscopeError,
    ParseError,
    PipelineStageError,
    ThreatModelError,
    UnderDeterminedError,
    UnsupportedNormError,
)
from .fda import INF, DistanceSpec, curve_from_record
from .mitigation import MitigationScheme, mitigate_traces
from .pipeline import PipelineConfig, render_json, run_pipeline
from .traces import load_traces, save_traces

EXIT_OK = 0
EXIT_INFEASIBLE = 2
EXIT_INPUT = 3

_INPUT_ERRORS = (
    ParseError,
    DimensionError,
    AuxDeterminismError,
    GenerationError,
    ThreatModelError,
    DomainError,
    UnderDeterminedError,
    UnsupportedNormError,
    BasisError,
    FileNotFoundError,
    IsADirectoryError,
    json.JSONDecodeError,
    ValueError,
)


class _Parser(argparse.ArgumentParser):
    """argparse exits with 2 on bad flags; remap to the input-error status."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_INPUT, f"{self.prog}: error: {message}\n")


def _norm_value(text: str) -> float:
    if text in ("inf", "Inf", "INF", "infinity"):
        return INF
    return float(text)


def _parse_params(pairs) -> dict:
    out = {}
    for pair in pairs or []:
        key, sep, value = pair.partition("=")
        if not sep:
            raise GenerationError(f"--param expects key=value, got {pair!r}")
        out[key] = float(value)
    return out


def _add_model_flags(p: argparse.ArgumentParser):
    p.add_argument("--kind", choices=[*BENCH_KINDS,
                                      *(f"branch-loop({i})" for i in range(1, 7))],
                   help="synthetic benchmark kind")
    p.add_argument("--secrets", type=int, default=100, help="secret count")
    p.add_argument("--publics", type=int, default=100, help="public input count")
    p.add_argument("--noise", type=float, default=0.0001,
                   help="timing noise sigma in seconds")
    p.add_argument("--param", action="append", metavar="KEY=VALUE",
                   help="model parameter override (repeatable)")


def _add_spec_flags(p: argparse.ArgumentParser):
    p.add_argument("--eps", type=float, default=0.001,
                   help="indistinguishability bound on the timing distance")
    p.add_argument("--eps-aux", type=float, default=None,
                   help="bound for aux-curve labeling (default: --eps)")
    p.add_argument("--deriv-order", type=int, default=1, choices=(0, 1, 2),
                   help="derivative compared by the distance")
    p.add_argument("--norm", type=_norm_value, default=2.0,
                   help="p of the p-norm: 1, 2 or inf")
    p.add_argument("--grid-n", type=int, default=512,
                   help="integration grid intervals")
    p.add_argument("--max-clusters", type=int, default=None,
                   help="largest cluster count to try (default: one per secret)")
    p.add_argument("--algo", default="hierarchical",
                   choices=("hierarchical", "constrained-kmeans"))
    p.add_argument("--folds", type=int, default=20, help="cross-validation folds")


def build_parser() -> argparse.ArgumentParser:
    top = _Parser(
        prog="leakscope",
        description="Discover functional timing side channels in execution traces.",
    )
    sub = top.add_subparsers(dest="command", required=True, parser_class=_Parser)

    g = sub.add_parser("generate", help="write a synthetic trace file")
    _add_model_flags(g)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out", required=True, help="output trace file")
    g.add_argument("--format", default="delimited-text",
                   choices=("delimited-text", "structured-records"))

    a = sub.add_parser("analyze", help="run the discovery pipeline")
    a.add_argument("input", nargs="?", default=None, help="trace file to analyze")
    _add_model_flags(a)
    _add_spec_flags(a)
    a.add_argument("--mitigate", default=None, choices=("quantize", "double-scheme"),
                   help="apply a mitigation scheme before analysis")
    a.add_argument("--q", type=float, default=4.5, help="quantize slot width")
    a.add_argument("--t0", type=float, default=4.0, help="double-scheme first epoch start")
    a.add_argument("--seed", type=int, default=0)
    a.add_argument("--out", default="leakscope-out", help="report bundle directory")

    m = sub.add_parser("mitigate", help="rewrite trace times through a scheme")
    m.add_argument("input", help="trace file to transform")
    m.add_argument("--scheme", required=True, choices=("quantize", "double-scheme"))
    m.add_argument("--q", type=float, default=4.5, help="quantize slot width")
    m.add_argument("--t0", type=float, default=4.0, help="double-scheme first epoch start")
    m.add_argument("--out", required=True, help="output trace file")
    m.add_argument("--format", default="delimited-text",
                   choices=("delimited-text", "structured-records"))

    mt = sub.add_parser("match", help="match a remote observation to clusters")
    mt.add_argument("--clusters", required=True,
                    help="centroids.json from a previous analyze run")
    mt.add_argument("--obs", required=True,
                    help="observation file: JSON samples or 'y,t' lines")
    mt.add_argument("--eps", type=float, default=None,
                    help="ambiguity bound (default: value stored with the clusters)")
    mt.add_argument("--deriv-order", type=int, default=1, choices=(0, 1, 2))
    mt.add_argument("--norm", type=_norm_value, default=2.0)
    mt.add_argument("--grid-n", type=int, default=512)

    r = sub.add_parser("report", help="pretty-print report.json from a bundle")
    r.add_argument("bundle", help="report bundle directory or report.json path")
    return top


def _model_from_args(args) -> BenchModel:
    if args.kind is None:
        raise GenerationError("either a trace file or --kind is required")
    return BenchModel(kind=args.kind, params=_parse_params(args.param),
                      noise_sigma=args.noise, seed=args.seed)


def _cmd_generate(args) -> int:
    model = _model_from_args(args)
    secrets, publics = default_grid(model.kind, args.secrets, args.publics, model.params)
    ts = generate(model, secrets, publics)
    save_traces(ts, args.out, format=args.format)
    print(f"wrote {len(ts.records)} traces ({len(secrets)} secrets x "
          f"{len(publics)} publics) to {args.out}")
    return EXIT_OK


def _cmd_analyze(args) -> int:
    mitigation = None
    if args.mitigate is not None:
        mitigation = MitigationScheme(kind=args.mitigate, q=args.q, t0=args.t0)
    config = PipelineConfig(
        input_path=args.input,
        model=None if args.input is not None else _model_from_args(args),
        n_secrets=args.secrets,
        n_publics=args.publics,
        eps=args.eps,
        eps_aux=args.eps_aux,
        deriv_order=args.deriv_order,
        norm=args.norm,
        grid_n=args.grid_n,
        max_clusters=args.max_clusters,
        algorithm=args.algo,
        cv_folds=args.folds,
        mitigation=mitigation,
        seed=args.seed,
        out_dir=args.out,
    )
    result = run_pipeline(config)
    print(f"clusters: {result.clusters.k}")
    print(f"leakage_bits: {result.leakage_bits:.4f}")
    if result.note is not None:
        print(result.note)
    else:
        print(f"cv_accuracy: {100.0 * result.accuracy:.1f}%")
        print(f"tree: height {result.discriminant.tree.height}, "
              f"{result.discriminant.tree.leaf_count} leaves")
    print(f"report bundle: {args.out}")
    return EXIT_OK


def _cmd_mitigate(args) -> int:
    scheme = MitigationScheme(kind=args.scheme, q=args.q, t0=args.t0)
    ts = load_traces(args.input)
    out = mitigate_traces(ts, scheme)
    save_traces(out, args.out, format=args.format)
    print(f"wrote {len(out.records)} mitigated traces to {args.out}")
    return EXIT_OK


def _load_observation(path) -> RemoteObservation:
    with open(path, "r", encoding="utf-8") as fh:
        text = fh.read()
    stripped = text.lstrip()
    if stripped.startswith("[") or stripped.startswith("{"):
        data = json.loads(text)
        samples = data["samples"] if isinstance(data, dict) else data
        pairs = [(float(y), float(t)) for y, t in samples]
    else:
        pairs = []
        for line_no, line in enumerate(text.splitlines(), start=1):
            line = line.strip()
            if not line or line.lower().replace(" ", "") in ("y,t",):
                continue
            cells = line.split(",")
            if len(cells) != 2:
                raise ParseError("observation rows must be 'y,t'", line_no)
            pairs.append((float(cells[0]), float(cells[1])))
    if not pairs:
        raise ParseError("observation file holds no samples")
    return RemoteObservation(samples=tuple(pairs))


def _load_clusters(path, eps_override, spec: DistanceSpec) -> ClusterResult:
    with open(path, "r", encoding="utf-8") as fh:
        data = json.load(fh)
    centroids = [curve_from_record(rec) for rec in data["centroids"]]
    eps = data.get("eps") if eps_override is None else eps_override
    if eps is None:
        raise ParseError("cluster file lacks eps; pass --eps")
    return ClusterResult(
        k=len(centroids),
        assignment=np.arange(len(centroids)),
        centroids=centroids,
        algorithm="loaded",
        epsilon=float(eps),
        spec=spec,
    )


def _cmd_match(args) -> int:
    spec = DistanceSpec(deriv_order=args.deriv_order, norm=args.norm,
                        grid_n=args.grid_n)
    clusters = _load_clusters(args.clusters, args.eps, spec)
    obs = _load_observation(args.obs)
    result = match_remote(obs, clusters, spec)
    record = {
        "cluster_id": result.cluster_id,
        "ambiguous": result.ambiguous,
        "distances": [float(d) for d in result.distances],
        "leakage_bits": leakage_bits(clusters.k),
        "kd_bound": kd_bound(clusters.k, len(obs.samples)),
    }
    print(render_json(record))
    return EXIT_OK


def _cmd_report(args) -> int:
    path = args.bundle
    if not path.endswith(".json"):
        path = f"{path.rstrip('/')}/report.json"
    with open(path, "r", encoding="utf-8") as fh:
        rep = json.load(fh)
    spec = rep.get("spec", {})
    print(f"clusters (k):    {rep.get('k')}")
    print(f"eps:             {rep.get('eps')}")
    print(f"distance:        deriv_order={spec.get('deriv_order')} "
          f"norm={spec.get('norm')} grid_n={spec.get('grid_n')}")
    print(f"algorithm:       {rep.get('algorithm')}")
    print(f"secrets/publics: {rep.get('n_secrets')}/{rep.get('n_publics')}")
    if rep.get("note"):
        print(f"note:            {rep['note']}")
    if rep.get("accuracy") is not None:
        print(f"cv accuracy:     {100.0 * rep['accuracy']:.1f}%")
        print(f"tree:            height {rep.get('tree_height')}, "
              f"{rep.get('leaf_count')} leaves")
    print(f"leakage bits:    {rep.get('leakage_bits')}")
    print(f"kd bound:        {rep.get('kd_bound')}")
    timings = rep.get("timings", {})
    for name, seconds in timings.items():
        print(f"  {name:<14} {float(seconds):.3f}s")
    return EXIT_OK


_COMMANDS = {
    "generate": _cmd_generate,
    "analyze": _cmd_analyze,
    "mitigate": _cmd_mitigate,
    "match": _cmd_match,
    "report": _cmd_report,
}


def _exit_code_for(exc: BaseException) -> int:
    if isinstance(exc, PipelineStageError):
        return _exit_code_for(exc.cause)
    if isinstance(exc, InfeasibleClusteringError):
        return EXIT_INFEASIBLE
    if isinstance(exc, _INPUT_ERRORS):
        return EXIT_INPUT
    return 1


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except (LeakscopeError, OSError, ValueError, KeyError) as exc:
        print(f"leakscope {args.command}: {exc}", file=sys.stderr)
        return _exit_code_for(exc)


if __name__ == "__main__":
    sys.exit(main())
