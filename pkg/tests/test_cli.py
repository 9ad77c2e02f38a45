import csv
import io
import json
import os
import tempfile
import xml.etree.ElementTree as ET
from pathlib import Path
from unittest import mock

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qcbench.cli import main
from qcbench.device import DeviceModel, build_crystal_topology, uniform_device
from qcbench.report import BenchmarkReport
from qcbench.suite import (
    BENCHMARKS,
    ConfigError,
    EmptyPlotError,
    SuiteConfig,
    emit_report,
    load_config,
    load_reports,
    report_plots,
    run_suite,
)

GOLDEN = Path(__file__).parent / "golden"

# a pinned, quick suite used for determinism and golden-file checks
TINY = {
    "schema_version": 1,
    "seed": 7,
    "benchmarks": [
        {"name": "rb", "params": {"qubits": [0, 1, 5], "depths": [1, 4, 16], "circuits_per_depth": 10, "shots": 128}},
        {"name": "mrb", "params": {"widths": [2], "depths": [0, 2, 4], "samples_per_depth": 4, "shots": 128}},
        {"name": "ghz", "params": {"sizes": [2, 3], "shots": 512}},
        {"name": "qscore", "params": {"n_max": 4, "graphs_per_n": 3, "shots": 256, "max_candidates": 20}},
        {"name": "volumetric", "params": {"widths": [2, 3], "depths": [1, 2, 4], "n_circuits": 3, "shots": 128}},
        {"name": "qv", "params": {"widths": [2], "n_circuits": 4, "shots": 128, "max_candidates": 20}},
    ],
}


def tiny_config(out_dir, **changes):
    return SuiteConfig.from_dict({**TINY, "out_dir": str(out_dir), **changes})


@pytest.fixture(scope="module")
def tiny_run(tmp_path_factory):
    out = tmp_path_factory.mktemp("tiny")
    return out, run_suite(tiny_config(out))


def write(path, text):
    path.write_text(text)
    return str(path)


# ---------------------------------------------------------------------------
# configuration


def test_yaml_error_has_line(tmp_path):
    cfg = write(tmp_path / "c.yaml", "schema_version: 1\nbenchmarks: [rb\nseed: 3\n")
    with pytest.raises(ConfigError, match=r"c\.yaml:\d+"):
        load_config(cfg)


def test_json_error_has_line(tmp_path):
    cfg = write(tmp_path / "c.json", '{\n  "schema_version": 1,\n  "seed": ,\n}')
    with pytest.raises(ConfigError, match=r"c\.json:3"):
        load_config(cfg)


@pytest.mark.parametrize(
    "doc",
    [
        {"benchmarks": []},
        {"schema_version": 2},
        {"schema_version": 1, "benchmarks": ["teleport"]},
        {"schema_version": 1, "benchmarks": [{"name": "rb", "params": {"depth": 3}}]},
        {"schema_version": 1, "device": "/no/such/device.json"},
        {"schema_version": 1, "backend": "ftp://x"},
        {"schema_version": 1, "colour": "red"},
    ],
)
def test_invalid_configs(doc):
    with pytest.raises(ConfigError):
        SuiteConfig.from_dict(doc)


def test_cli_config_error_exit_code(tmp_path, capsys):
    cfg = write(tmp_path / "c.yaml", "schema_version: 1\nbenchmarks: [nope]\n")
    assert main(["run", "--config", cfg]) == 2
    assert "config error" in capsys.readouterr().err


def test_flags_override_config(tmp_path):
    cfg = load_config(write(tmp_path / "c.yaml", "schema_version: 1\nseed: 1\nbenchmarks:\n  - name: ghz\n    params: {sizes: [2]}\n"))
    new = cfg.override(seed=9, out_dir="x", benchmarks=["ghz", "qv"], workers=None)
    assert (new.seed, new.out_dir, new.workers) == (9, "x", 1)
    assert [b.name for b in new.benchmarks] == ["ghz", "qv"]
    assert new.benchmarks[0].params == {"sizes": [2]}


def test_seeds_depend_on_master_seed_and_position():
    a = SuiteConfig.from_dict({"schema_version": 1, "seed": 1, "benchmarks": ["rb", "rb"]})
    b = a.override(seed=2)
    assert a.benchmark_seed(0) != a.benchmark_seed(1)
    assert a.benchmark_seed(0) != b.benchmark_seed(0)
    assert a.benchmark_seed(0) == SuiteConfig.from_dict(a.to_dict()).benchmark_seed(0)


# ---------------------------------------------------------------------------
# running


def test_empty_suite(tmp_path):
    res = run_suite(SuiteConfig(out_dir=str(tmp_path / "o")))
    assert (res.exit_status, res.reports) == (0, [])
    assert main(["run", "--out-dir", str(tmp_path / "o")]) == 0


def test_rb_only_suite_persists_one_report(tmp_path, capsys):
    cfg = write(tmp_path / "c.yaml", "schema_version: 1\nbenchmarks:\n  - name: rb\n    params: {qubits: [3], depths: [1, 4, 8], circuits_per_depth: 10, shots: 64}\n")
    out = tmp_path / "out"
    assert main(["run", "--config", cfg, "--out-dir", str(out), "--seed", "4"]) == 0
    assert sorted(p.name for p in out.iterdir()) == ["00-rb.json", "runs.jsonl"]
    (rep,) = load_reports(out)
    assert rep.benchmark == "rb" and "rb_1q:3" in rep.derived
    assert "rb" in capsys.readouterr().out


def test_unreachable_backend_exit_code(tmp_path):
    assert main(["run", "--backend", "http://127.0.0.1:9", "--benchmarks", "ghz", "--out-dir", str(tmp_path)]) == 2


def fake_bench(backend, seed, error=False, verdict=True):
    rep = BenchmarkReport("fake", seed=seed)
    rep.points.append({"element": "x"})
    rep.verdicts["x"] = verdict
    if error:
        rep.errors["x"] = "failed"
    return rep


@settings(max_examples=15)
@given(st.lists(st.tuples(st.booleans(), st.booleans()), max_size=4))
def test_exit_status_follows_errors_only(flags):
    with mock.patch.dict(BENCHMARKS, {"fake": fake_bench}), tempfile.TemporaryDirectory() as out:
        cfg = SuiteConfig.from_dict(
            {"schema_version": 1, "out_dir": out, "benchmarks": [{"name": "fake", "params": {"error": e, "verdict": v}} for e, v in flags]}
        )
        res = run_suite(cfg, backend=mock.Mock())
    assert res.exit_status == (1 if any(e for e, _ in flags) else 0)


def test_crashing_benchmark_is_recorded(tmp_path):
    def boom(backend, seed):
        raise RuntimeError("kaput")

    with mock.patch.dict(BENCHMARKS, {"boom": boom}):
        res = run_suite(SuiteConfig.from_dict({"schema_version": 1, "out_dir": str(tmp_path), "benchmarks": ["boom"]}), backend=mock.Mock())
    assert res.exit_status == 1
    assert "kaput" in res.reports[0].errors["run"]


def test_tiny_suite_is_deterministic(tiny_run, tmp_path):
    _, first = tiny_run
    assert first.exit_status == 0
    again = run_suite(tiny_config(tmp_path / "b", workers=3, parallel=True))
    for a, b in zip(first.reports, again.reports):
        assert json.dumps(a.content(), sort_keys=True) == json.dumps(b.content(), sort_keys=True)


# ---------------------------------------------------------------------------
# reports


def test_json_round_trip(tiny_run, tmp_path):
    out, res = tiny_run
    (path,) = emit_report(res.reports, "json", tmp_path)
    back = load_reports(path)
    assert [r.to_dict() for r in back] == [r.to_dict() for r in res.reports]
    assert [r.to_dict() for r in load_reports(out / "02-ghz.json")] == [res.reports[2].to_dict()]


def test_csv_and_svg_parse(tiny_run, tmp_path):
    _, res = tiny_run
    for path in emit_report(res.reports, "csv", tmp_path / "csv"):
        rows = list(csv.reader(io.StringIO(path.read_text())))
        assert len(rows) >= 2 and all(len(r) == len(rows[0]) for r in rows)
    svgs = emit_report(res.reports, "svg", tmp_path / "svg")
    assert {p.name for p in svgs} >= {"00-rb-cdf.svg", "01-rb-decay.svg", "02-ghz-fidelity.svg", "03-qscore-beta.svg", "04-volumetric-heatmap.svg", "05-qv-hop.svg"}
    for path in svgs:
        assert ET.parse(path).getroot().tag.endswith("svg")


GOLDEN_FILES = ["00-rb-errors.csv", "00-rb-cdf.svg", "02-ghz-fidelity.csv", "03-qscore-beta.csv", "03-qscore-beta.svg", "04-volumetric-grid.csv"]


@pytest.mark.parametrize("name", GOLDEN_FILES)
def test_golden_files(tiny_run, tmp_path, name):
    _, res = tiny_run
    fmt = name.rsplit(".", 1)[1]
    produced = {p.name: p for p in emit_report(res.reports, fmt, tmp_path)}
    text = produced[name].read_text()
    if os.environ.get("QCBENCH_REGEN_GOLDEN"):
        (GOLDEN / name).write_text(text)
    assert text == (GOLDEN / name).read_text()


def test_empty_plot_error(tmp_path, capsys):
    with pytest.raises(EmptyPlotError):
        report_plots(BenchmarkReport("ghz"))
    path = tmp_path / "r.json"
    path.write_text(json.dumps(BenchmarkReport("qv").to_dict()))
    assert main(["report", str(path), "--format", "svg", "--out-dir", str(tmp_path)]) == 1
    assert "no data points" in capsys.readouterr().err


def test_unknown_format(tmp_path):
    with pytest.raises(ValueError):
        emit_report([], "pdf", tmp_path)


def test_cli_report_writes_files(tiny_run, tmp_path, capsys):
    out, _ = tiny_run
    assert main(["report", str(out), "--format", "csv", "--out-dir", str(tmp_path)]) == 0
    printed = capsys.readouterr().out.split()
    assert printed and all(Path(p).exists() for p in printed)


def test_cli_device(tmp_path, capsys):
    assert main(["device"]) == 0
    assert DeviceModel.from_dict(json.loads(capsys.readouterr().out)).num_qubits == 20
    path = tmp_path / "spark.json"
    uniform_device(build_crystal_topology("spark-5"), name="spark").save(path)
    assert main(["device", "--backend", str(path)]) == 0
    assert DeviceModel.from_dict(json.loads(capsys.readouterr().out)).num_qubits == 5
