"""End-to-end pipeline, report bundle, and command-line interface."""

import json
import math

import numpy as np
import pytest

from leakscope import (
    BenchModel,
    InfeasibleClusteringError,
    MitigationScheme,
    NONINTERFERENCE_NOTE,
    ParseError,
    PipelineConfig,
    PipelineStageError,
    UnsupportedNormError,
    eval_curve,
    generate,
    render_json,
    run_pipeline,
    save_traces,
)
from leakscope.cli import main
from leakscope.fda import INF, curve_from_record

REPORT_KEYS = [
    "k", "eps", "eps_aux", "spec", "algorithm", "n_secrets", "n_publics",
    "accuracy", "tree_height", "leaf_count", "leakage_bits", "kd_bound",
    "note", "timings",
]


def zigzag_config(**overrides):
    kw = dict(
        model=BenchModel("zigzag", noise_sigma=0.0, seed=1),
        n_secrets=10,
        n_publics=20,
    )
    kw.update(overrides)
    return PipelineConfig(**kw)


# ---------------------------------------------------------------------------
# fixed-precision JSON

def test_render_json_scalars():
    assert render_json(0.5) == "0.500000000"
    assert render_json(7) == "7"
    assert render_json(True) == "true"
    assert render_json(None) == "null"
    assert render_json("x") == '"x"'
    assert render_json(INF) == '"inf"'
    assert render_json(np.float64(1.0)) == "1.000000000"
    assert render_json(np.int64(3)) == "3"


def test_render_json_structures():
    assert render_json({}) == "{}"
    assert render_json([]) == "[]"
    text = render_json({"a": [1, 2.0], "b": {"c": None}})
    assert json.loads(text) == {"a": [1, 2.0], "b": {"c": None}}
    assert "2.000000000" in text


def test_render_json_deterministic():
    payload = {"x": 1 / 3, "y": [math.pi, {"z": 2 / 7}]}
    assert render_json(payload) == render_json(json.loads(render_json(payload)))


# ---------------------------------------------------------------------------
# pipeline runs

def test_zigzag_discovery():
    result = run_pipeline(zigzag_config())
    assert result.clusters.k == 2
    assert result.accuracy == 1.0
    assert result.discriminant.tree.height == 1
    assert result.discriminant.tree.leaf_count == 2
    assert result.leakage_bits == 1.0
    assert result.note is None
    assert list(result.report.keys()) == REPORT_KEYS
    assert result.report["kd_bound"] == pytest.approx(2 * math.log2(21))
    assert result.report["n_secrets"] == 10 and result.report["n_publics"] == 20
    assert set(result.timings) == {"load", "hypertraces", "clustering", "discriminant"}


def test_cluster_membership_is_parity():
    result = run_pipeline(zigzag_config())
    for h, cid in zip(result.hypertraces, result.clusters.assignment):
        same = [
            o for o, c in zip(result.hypertraces, result.clusters.assignment)
            if c == cid
        ]
        assert all(int(o.secret[0]) % 2 == int(h.secret[0]) % 2 for o in same)


def test_single_secret_short_circuit():
    result = run_pipeline(zigzag_config(secrets=[0], publics=list(range(20))))
    assert result.clusters.k == 1
    assert result.note == NONINTERFERENCE_NOTE
    assert result.accuracy is None
    assert result.discriminant is None
    assert result.report["tree_height"] is None
    assert result.report["leaf_count"] is None
    assert result.report["note"] == NONINTERFERENCE_NOTE
    assert result.timings["discriminant"] == 0.0
    assert result.leakage_bits == 0.0


def test_eps_aux_defaults_and_overrides():
    assert run_pipeline(zigzag_config()).report["eps_aux"] == 0.001
    result = run_pipeline(zigzag_config(eps_aux=0.5))
    assert result.report["eps_aux"] == 0.5


def test_mitigation_stage_erases_leak():
    result = run_pipeline(
        zigzag_config(mitigation=MitigationScheme("quantize", q=4.5))
    )
    assert result.clusters.k == 1
    assert result.note == NONINTERFERENCE_NOTE
    assert "mitigate" in result.timings


def test_input_file_route(tmp_path):
    ts = generate(BenchModel("zigzag", noise_sigma=0.0, seed=1),
                  list(range(10)), list(range(20)))
    path = tmp_path / "zz.csv"
    save_traces(ts, path)
    result = run_pipeline(PipelineConfig(input_path=str(path)))
    assert result.clusters.k == 2


def test_constrained_kmeans_route():
    result = run_pipeline(zigzag_config(algorithm="constrained-kmeans"))
    assert result.clusters.k == 2
    assert result.report["algorithm"] == "constrained-kmeans"


def test_config_validation():
    with pytest.raises(ValueError):
        PipelineConfig()                       # neither input nor model
    with pytest.raises(ValueError):
        PipelineConfig(input_path="x", model=BenchModel("zigzag"))
    with pytest.raises(ValueError):
        zigzag_config(eps=0.0)
    with pytest.raises(ValueError):
        zigzag_config(cv_folds=1)
    with pytest.raises(ValueError):
        zigzag_config(eps_aux=-1.0)
    with pytest.raises(ValueError):
        zigzag_config(max_clusters=0)


def test_stage_errors_carry_stage_and_cause(tmp_path):
    bad = tmp_path / "bad.csv"
    bad.write_text("no header here\n")
    with pytest.raises(PipelineStageError) as exc:
        run_pipeline(PipelineConfig(input_path=str(bad)))
    assert exc.value.stage == "load"
    assert isinstance(exc.value.cause, ParseError)
    assert str(exc.value).startswith("[load]")

    with pytest.raises(PipelineStageError) as exc:
        run_pipeline(zigzag_config(max_clusters=1))
    assert exc.value.stage == "clustering"
    assert isinstance(exc.value.cause, InfeasibleClusteringError)

    with pytest.raises(PipelineStageError) as exc:
        run_pipeline(zigzag_config(norm=INF, algorithm="constrained-kmeans"))
    assert isinstance(exc.value.cause, UnsupportedNormError)


# ---------------------------------------------------------------------------
# report bundle

BUNDLE_FILES = {
    "clusters.csv", "centroids.json", "tree.txt", "tree.dot",
    "report.json", "curves.csv", "curves.svg",
}


def test_bundle_contents(tmp_path):
    out = tmp_path / "bundle"
    result = run_pipeline(zigzag_config(out_dir=str(out)))
    assert set(result.files) == BUNDLE_FILES
    assert all((out / name).is_file() for name in BUNDLE_FILES)

    lines = (out / "clusters.csv").read_text().splitlines()
    assert lines[0] == "secret,cluster"
    secrets = [line.split(",")[0] for line in lines[1:]]
    assert sorted(secrets, key=float) == [str(s) for s in range(10)]

    cents = json.loads((out / "centroids.json").read_text())
    assert cents["eps"] == 0.001
    assert len(cents["centroids"]) == result.clusters.k
    curve = curve_from_record(cents["centroids"][0])
    eval_curve(curve, 5.0)  # reconstructable and evaluable

    rep = json.loads((out / "report.json").read_text())
    assert rep["k"] == 2 and "timings" in rep
    assert rep["spec"]["norm"] == 2.0

    tree_text = (out / "tree.txt").read_text()
    assert "cluster" in tree_text and "yes:" in tree_text
    assert (out / "tree.dot").read_text().startswith("digraph")

    curves = (out / "curves.csv").read_text().splitlines()
    assert curves[0] == "secret,cluster,y,t"
    svg = (out / "curves.svg").read_text()
    assert svg.lstrip().startswith("<?xml")


def test_single_cluster_bundle_has_no_tree(tmp_path):
    out = tmp_path / "bundle"
    result = run_pipeline(
        zigzag_config(secrets=[0, 2, 4], publics=list(range(20)), out_dir=str(out))
    )
    assert result.clusters.k == 1
    assert not (out / "tree.txt").exists()
    assert not (out / "tree.dot").exists()
    assert (out / "report.json").is_file()


def test_rerun_determinism_modulo_timings(tmp_path):
    out_a, out_b = tmp_path / "a", tmp_path / "b"
    run_pipeline(zigzag_config(out_dir=str(out_a)))
    run_pipeline(zigzag_config(out_dir=str(out_b)))
    for name in BUNDLE_FILES - {"report.json"}:
        assert (out_a / name).read_bytes() == (out_b / name).read_bytes(), name
    ra = json.loads((out_a / "report.json").read_text())
    rb = json.loads((out_b / "report.json").read_text())
    ra.pop("timings")
    rb.pop("timings")
    assert render_json(ra) == render_json(rb)


# ---------------------------------------------------------------------------
# command line

ZZ_FLAGS = ["--kind", "zigzag", "--secrets", "10", "--publics", "20",
            "--noise", "0"]


def test_cli_generate_and_analyze(tmp_path, capsys):
    traces = tmp_path / "zz.csv"
    assert main(["generate", *ZZ_FLAGS, "--out", str(traces)]) == 0
    assert "wrote 200 traces" in capsys.readouterr().out

    bundle = tmp_path / "bundle"
    assert main(["analyze", str(traces), "--out", str(bundle)]) == 0
    out = capsys.readouterr().out
    assert "clusters: 2" in out
    assert "cv_accuracy: 100.0%" in out
    assert (bundle / "report.json").is_file()

    assert main(["report", str(bundle)]) == 0
    assert "clusters (k):    2" in capsys.readouterr().out


def test_cli_analyze_inline_model(tmp_path, capsys):
    bundle = tmp_path / "bundle"
    assert main(["analyze", *ZZ_FLAGS, "--out", str(bundle)]) == 0
    assert "clusters: 2" in capsys.readouterr().out


def test_cli_analyze_noninterference_note(tmp_path, capsys):
    bundle = tmp_path / "bundle"
    assert main(
        ["analyze", *ZZ_FLAGS, "--mitigate", "quantize", "--q", "4.5",
         "--out", str(bundle)]
    ) == 0
    assert NONINTERFERENCE_NOTE in capsys.readouterr().out


def test_cli_mitigate(tmp_path, capsys):
    traces = tmp_path / "zz.csv"
    main(["generate", *ZZ_FLAGS, "--out", str(traces)])
    capsys.readouterr()
    mitigated = tmp_path / "mm.csv"
    assert main(
        ["mitigate", str(traces), "--scheme", "quantize", "--q", "4.5",
         "--out", str(mitigated)]
    ) == 0
    from leakscope import load_traces

    out = load_traces(mitigated)
    assert all(r.time == 4.5 for r in out.records)


def test_cli_match(tmp_path, capsys):
    bundle = tmp_path / "bundle"
    main(["analyze", *ZZ_FLAGS, "--out", str(bundle)])
    capsys.readouterr()
    cents = json.loads((bundle / "centroids.json").read_text())
    curve = curve_from_record(cents["centroids"][0])
    ys = np.arange(20.0)
    # network offset of 5 seconds must not disturb the match
    obs = tmp_path / "obs.csv"
    obs.write_text(
        "y,t\n"
        + "".join(f"{y},{eval_curve(curve, y) + 5.0}\n" for y in ys)
    )
    assert main(
        ["match", "--clusters", str(bundle / "centroids.json"), "--obs", str(obs)]
    ) == 0
    record = json.loads(capsys.readouterr().out)
    assert record["cluster_id"] == 0
    assert record["ambiguous"] is False
    assert record["distances"][0] == pytest.approx(0.0, abs=1e-6)
    assert record["leakage_bits"] == 1.0
    assert record["kd_bound"] == pytest.approx(2 * math.log2(21))


def test_cli_match_json_observation(tmp_path, capsys):
    bundle = tmp_path / "bundle"
    main(["analyze", *ZZ_FLAGS, "--out", str(bundle)])
    capsys.readouterr()
    cents = json.loads((bundle / "centroids.json").read_text())
    curve = curve_from_record(cents["centroids"][1])
    samples = [[float(y), float(eval_curve(curve, y))] for y in range(20)]
    obs = tmp_path / "obs.json"
    obs.write_text(json.dumps({"samples": samples}))
    assert main(
        ["match", "--clusters", str(bundle / "centroids.json"), "--obs", str(obs)]
    ) == 0
    assert json.loads(capsys.readouterr().out)["cluster_id"] == 1


def test_cli_exit_infeasible(tmp_path, capsys):
    code = main(
        ["analyze", *ZZ_FLAGS, "--max-clusters", "1", "--out", str(tmp_path / "b")]
    )
    assert code == 2
    assert "leakscope analyze" in capsys.readouterr().err


def test_cli_exit_input_errors(tmp_path, capsys):
    assert main(["analyze", str(tmp_path / "missing.csv")]) == 3
    capsys.readouterr()

    bad = tmp_path / "bad.csv"
    bad.write_text("not a trace file\n")
    assert main(["analyze", str(bad)]) == 3
    capsys.readouterr()

    assert main(["generate", "--out", str(tmp_path / "x.csv")]) == 3  # no --kind
    capsys.readouterr()


def test_cli_match_value_norm_rejected(tmp_path, capsys):
    bundle = tmp_path / "bundle"
    main(["analyze", *ZZ_FLAGS, "--out", str(bundle)])
    capsys.readouterr()
    obs = tmp_path / "obs.csv"
    obs.write_text("".join(f"{y},{0.002 * y}\n" for y in range(20)))
    code = main(
        ["match", "--clusters", str(bundle / "centroids.json"),
         "--obs", str(obs), "--deriv-order", "0"]
    )
    assert code == 3
    assert "deriv_order >= 1" in capsys.readouterr().err


def test_cli_bad_flag_exits_input_status(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["analyze", "--deriv-order", "5"])
    assert exc.value.code == 3
    capsys.readouterr()


def test_cli_kmeans_algorithm(tmp_path, capsys):
    bundle = tmp_path / "bundle"
    assert main(
        ["analyze", *ZZ_FLAGS, "--algo", "constrained-kmeans", "--out", str(bundle)]
    ) == 0
    assert "clusters: 2" in capsys.readouterr().out


def test_cli_structured_records(tmp_path, capsys):
    traces = tmp_path / "zz.json"
    assert main(
        ["generate", *ZZ_FLAGS, "--format", "structured-records",
         "--out", str(traces)]
    ) == 0
    capsys.readouterr()
    bundle = tmp_path / "bundle"
    assert main(["analyze", str(traces), "--out", str(bundle)]) == 0
    assert "clusters: 2" in capsys.readouterr().out
