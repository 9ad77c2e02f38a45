"""Suite configuration, orchestration and report emission."""

from __future__ import annotations

import csv
import inspect
import io
import json
import time
import zlib
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Callable, Optional, Sequence

import numpy as np
import yaml

from .bench_ghz import run_ghz
from .bench_qscore import run_qscore
from .bench_rb import (
    IRB_DEPTHS,
    MRB_DEPTHS,
    RB_DEPTHS_1Q,
    MrbSpec,
    RbSpec,
    estimate_drive_crosstalk,
    partition_distance_groups,
    run_rb_suite,
)
from .bench_volume import run_clops, run_qv, run_volumetric, volumetric_csv
from .device import PROFILES, DeviceModel, load_device
from .execution import LocalBackend, persist_run, read_runs
from .report import BenchmarkReport
from .routing import greedy_subsets

CONFIG_SCHEMA = 1
STORE_NAME = "runs.jsonl"


class ConfigError(ValueError):
    pass


class EmptyPlotError(ValueError):
    pass


# ---------------------------------------------------------------------------
# benchmark runners: (backend, seed, **params) -> BenchmarkReport


def _bench_rb(backend, seed, qubits=None, depths=RB_DEPTHS_1Q, circuits_per_depth=30, shots=1024):
    topo = backend.device.topology
    targets = [(int(q),) for q in (qubits if qubits is not None else topo.qubits)]
    groups = partition_distance_groups(targets, topo)
    index = {t: i for i, t in enumerate(targets)}
    spec = RbSpec(
        tuple(targets),
        tuple(depths),
        circuits_per_depth,
        groups=tuple(tuple(index[tuple(t)] for t in g) for g in groups),
        seed=seed,
        shots=shots,
    )
    return run_rb_suite(backend, [spec])


def _bench_irb(backend, seed, pairs=None, depths=IRB_DEPTHS, circuits_per_depth=30, shots=1024):
    pairs = [tuple(p) for p in pairs] if pairs is not None else [backend.device.topology.couplers[0]]
    specs = [RbSpec((p,), tuple(depths), circuits_per_depth, interleaved="CZ", seed=seed + 2 * i, shots=shots) for i, p in enumerate(pairs)]
    return run_rb_suite(backend, specs)


def _bench_mrb(backend, seed, widths=(2, 4, 6, 8), depths=MRB_DEPTHS, samples_per_depth=30, cz_density=0.5, shots=1024):
    subsets = tuple(greedy_subsets(backend.device, w)[0] for w in widths)
    return run_rb_suite(backend, [MrbSpec(subsets, tuple(depths), samples_per_depth, cz_density, seed, shots)])


def _bench_qv(backend, seed, widths=(2, 3, 4, 5), n_circuits=100, shots=1024, max_candidates=10_000):
    return run_qv(backend, list(widths), n_circuits, shots, seed, max_candidates)


def _bench_volumetric(backend, seed, widths=(2, 4, 6, 8), depths=(2, 4, 8, 16, 32), n_circuits=20, density=0.25, shots=1024, max_volume=400):
    return run_volumetric(backend, list(widths), list(depths), n_circuits, density, shots, seed, max_volume)


def _bench_clops(backend, seed, qv=32, M=10, K=3, S=100, max_candidates=200):
    return run_clops(backend, qv, M, K, S, seed, max_candidates)


def _bench_ghz(backend, seed, sizes=(2, 4, 6), shots=4096):
    return run_ghz(backend, list(sizes), shots, seed)


def _bench_qscore(backend, seed, n_max=6, n_min=2, graphs_per_n=20, shots=1024, virtual_node=True, layout_opt=True, rem=False, max_candidates=200):
    return run_qscore(backend, n_max, graphs_per_n, shots, virtual_node, layout_opt, rem, seed, n_min, max_candidates)


def _bench_crosstalk(backend, seed, pairs=None, points=64, shots=2000):
    started = time.time()
    pairs = [tuple(p) for p in pairs] if pairs is not None else [backend.device.topology.couplers[0]]
    report = BenchmarkReport("crosstalk", spec={"pairs": pairs, "points": points, "shots": shots}, seed=seed)
    for i, (t, s) in enumerate(pairs):
        key = f"drive:{t}->{s}"
        try:
            db = estimate_drive_crosstalk(backend, t, s, points, shots, seed + i)
        except Exception as exc:
            report.errors[key] = f"{type(exc).__name__}: {exc}"
            continue
        report.points.append({"element": key, "target": t, "spectator": s, "db": db})
        report.derived[key] = db
    return report.stamp(started)


BENCHMARKS: dict[str, Callable[..., BenchmarkReport]] = {
    "rb": _bench_rb,
    "irb": _bench_irb,
    "mrb": _bench_mrb,
    "qv": _bench_qv,
    "volumetric": _bench_volumetric,
    "clops": _bench_clops,
    "ghz": _bench_ghz,
    "qscore": _bench_qscore,
    "crosstalk": _bench_crosstalk,
}


# ---------------------------------------------------------------------------
# configuration


@dataclass(frozen=True)
class BenchmarkEntry:
    name: str
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.name not in BENCHMARKS:
            raise ConfigError(f"unknown benchmark {self.name!r}; known: {', '.join(BENCHMARKS)}")
        accepted = set(inspect.signature(BENCHMARKS[self.name]).parameters) - {"backend", "seed"}
        extra = set(self.params) - accepted
        if extra:
            raise ConfigError(f"{self.name}: unknown parameter(s) {sorted(extra)}")


@dataclass(frozen=True)
class SuiteConfig:
    backend: str = "local"
    device: str = "garnet-median"
    benchmarks: tuple[BenchmarkEntry, ...] = ()
    out_dir: str = "qcbench-out"
    seed: int = 0
    workers: int = 1
    parallel: bool = False

    def __post_init__(self):
        if not self.backend.startswith(("http://", "https://")) and self.backend != "local":
            raise ConfigError(f"backend must be 'local' or an http(s) URL, got {self.backend!r}")
        if self.backend == "local" and self.device not in PROFILES and not Path(self.device).is_file():
            raise ConfigError(f"device profile or file not found: {self.device}")
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")

    def benchmark_seed(self, index: int) -> int:
        """Per-benchmark seed derived from the master seed, the position and the name."""
        name = self.benchmarks[index].name
        ss = np.random.SeedSequence([self.seed, index, zlib.crc32(name.encode())])
        return int(ss.generate_state(1)[0] & 0x7FFFFFFF)

    @classmethod
    def from_dict(cls, doc: dict) -> "SuiteConfig":
        if not isinstance(doc, dict):
            raise ConfigError("config must be a mapping")
        version = doc.get("schema_version")
        if version != CONFIG_SCHEMA:
            raise ConfigError(f"config schema_version must be {CONFIG_SCHEMA}, got {version!r}")
        known = {"schema_version", "backend", "device", "benchmarks", "out_dir", "seed", "workers", "parallel"}
        extra = set(doc) - known
        if extra:
            raise ConfigError(f"unknown config field(s) {sorted(extra)}")
        entries = []
        for item in doc.get("benchmarks") or []:
            if isinstance(item, str):
                entries.append(BenchmarkEntry(item))
            elif isinstance(item, dict) and "name" in item:
                entries.append(BenchmarkEntry(item["name"], dict(item.get("params") or {})))
            else:
                raise ConfigError(f"bad benchmark entry {item!r}")
        kwargs = {k: doc[k] for k in ("backend", "device", "out_dir", "seed", "workers", "parallel") if k in doc}
        return cls(benchmarks=tuple(entries), **kwargs)

    def to_dict(self) -> dict:
        return {
            "schema_version": CONFIG_SCHEMA,
            "backend": self.backend,
            "device": self.device,
            "benchmarks": [{"name": b.name, "params": b.params} for b in self.benchmarks],
            "out_dir": self.out_dir,
            "seed": self.seed,
            "workers": self.workers,
            "parallel": self.parallel,
        }

    def override(self, **flags: Any) -> "SuiteConfig":
        """Apply command-line overrides; ``None`` leaves a field alone."""
        changes = {k: v for k, v in flags.items() if v is not None and k != "benchmarks"}
        if flags.get("benchmarks") is not None:
            existing = {b.name: b for b in self.benchmarks}
            changes["benchmarks"] = tuple(existing.get(n, BenchmarkEntry(n)) for n in flags["benchmarks"])
        return replace(self, **changes)


def load_config(path: str | Path) -> SuiteConfig:
    """Read a YAML or JSON config; parse errors carry the line number."""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    try:
        if path.suffix == ".json":
            doc = json.loads(text)
        else:
            doc = yaml.safe_load(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}:{exc.lineno}: {exc.msg}") from exc
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        where = f"{path}:{mark.line + 1}" if mark is not None else str(path)
        raise ConfigError(f"{where}: {getattr(exc, 'problem', None) or exc}") from exc
    return SuiteConfig.from_dict(doc)


# ---------------------------------------------------------------------------
# orchestration


def make_backend(config: SuiteConfig):
    if config.backend == "local":
        return LocalBackend(load_device(config.device), workers=config.workers)
    from .execution.remote import RemoteBackend

    return RemoteBackend(config.backend)


@dataclass
class SuiteResult:
    exit_status: int
    reports: list[BenchmarkReport]
    record_ids: list[str]


def _run_one(backend, config: SuiteConfig, index: int) -> BenchmarkReport:
    entry = config.benchmarks[index]
    seed = config.benchmark_seed(index)
    started = time.time()
    try:
        report = BENCHMARKS[entry.name](backend, seed, **entry.params)
    except Exception as exc:
        report = BenchmarkReport(entry.name, spec=dict(entry.params), seed=seed)
        report.errors["run"] = f"{type(exc).__name__}: {exc}"
        report.stamp(started)
    report.metadata["suite_index"] = index
    report.metadata["suite_name"] = entry.name
    return report


def run_suite(config: SuiteConfig, backend=None) -> SuiteResult:
    """Run the configured benchmarks in order and persist each report.

    Exit status is 1 when any benchmark recorded an error, 2 when the backend
    cannot be reached, 0 otherwise. Pass/fail verdicts never change it.
    """
    if not config.benchmarks:
        return SuiteResult(0, [], [])
    backend = backend or make_backend(config)
    try:
        backend.device
    except Exception as exc:
        raise ConnectionError(f"backend unreachable: {exc}") from exc
    idx = range(len(config.benchmarks))
    if config.parallel and len(config.benchmarks) > 1:
        with ThreadPoolExecutor(max_workers=len(config.benchmarks)) as pool:
            reports = list(pool.map(lambda i: _run_one(backend, config, i), idx))
    else:
        reports = [_run_one(backend, config, i) for i in idx]
    out = Path(config.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    ids = []
    for i, rep in enumerate(reports):
        ids.append(persist_run(out / STORE_NAME, rep))
        (out / f"{i:02d}-{rep.benchmark}.json").write_text(json.dumps(rep.to_dict(), indent=2, sort_keys=True) + "\n")
    status = 1 if any(r.errors for r in reports) else 0
    return SuiteResult(status, reports, ids)


def load_reports(path: str | Path) -> list[BenchmarkReport]:
    """Reports from a run store (.jsonl), a single report JSON or a JSON list."""
    path = Path(path)
    if path.is_dir():
        path = path / STORE_NAME
    if path.suffix == ".jsonl":
        return [BenchmarkReport.from_dict(e["record"]) for e in read_runs(path) if e["kind"] == "BenchmarkReport"]
    doc = json.loads(path.read_text(encoding="utf-8"))
    docs = doc if isinstance(doc, list) else [doc]
    return [BenchmarkReport.from_dict(d) for d in docs]


# ---------------------------------------------------------------------------
# emission

FORMATS = ("json", "csv", "svg")


def _csv(rows: Sequence[Sequence[Any]], header: Sequence[str]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow(["" if v is None else (f"{v:.10g}" if isinstance(v, float) else v) for v in r])
    return buf.getvalue()


def report_tables(report: BenchmarkReport) -> dict[str, str]:
    """CSV tables keyed by a short metric name."""
    b = report.benchmark
    tables = {}
    if b == "rb":
        rows = []
        for key, vals in sorted(report.derived.items()):
            if key == "summary":
                continue
            for metric, v in sorted(vals.items()):
                rows.append((key, metric, v))
        tables["errors"] = _csv(rows, ("element", "metric", "value"))
        decay = [(p["element"], p["series"], d, m, e) for p in report.points for d, m, e in p["data"]]
        tables["decay"] = _csv(decay, ("element", "series", "depth", "mean", "sem"))
    elif b == "qv":
        rows = [(k, v["mean"], v["sigma"], v["n_circuits"], v["mean_cz"], report.verdicts.get(k)) for k, v in sorted(report.derived.items()) if k.startswith("qv:")]
        tables["hop"] = _csv(rows, ("element", "mean_hop", "sigma", "n_circuits", "mean_cz", "pass"))
    elif b == "volumetric":
        tables["grid"] = volumetric_csv(report)
    elif b == "ghz":
        rows = [(p["raw"]["N"], p["raw"]["F"], p["rem"]["F"], p["raw"]["F_raw"], p["rem"]["F_raw"]) for p in report.points]
        tables["fidelity"] = _csv(rows, ("N", "F_raw", "F_rem", "F_raw_unclamped", "F_rem_unclamped"))
    elif b == "qscore":
        cols = ("n", "C", "C_rand", "C_opt", "C_opt_sk", "beta", "pass", "instances", "failed")
        tables["beta"] = _csv([[p[c] for c in cols] for p in report.points], cols)
    elif b == "clops":
        t = report.metadata.get("timing", {})
        tables["clops"] = _csv([(report.derived.get(k) for k in "MKSD")], ("M", "K", "S", "D")) if report.derived else ""
        if "clops" in t:
            tables["clops"] = _csv([(*(report.derived[k] for k in "MKSD"), t["elapsed"], t["clops"])], ("M", "K", "S", "D", "T", "clops"))
    elif b == "crosstalk":
        tables["crosstalk"] = _csv([(p["target"], p["spectator"], p["db"]) for p in report.points], ("target", "spectator", "db"))
    return {k: v for k, v in tables.items() if v}


def _figure():
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    matplotlib.rcParams["svg.hashsalt"] = "qcbench"
    matplotlib.rcParams["svg.fonttype"] = "path"
    fig, ax = plt.subplots(figsize=(6, 4))
    return plt, fig, ax


def _svg(plt, fig) -> str:
    buf = io.StringIO()
    fig.savefig(buf, format="svg", metadata={"Date": None, "Creator": None})
    plt.close(fig)
    return buf.getvalue()


def report_plots(report: BenchmarkReport) -> dict[str, str]:
    """SVG plots keyed by a short name; raises EmptyPlotError on a report without data."""
    if not report.points:
        raise EmptyPlotError(f"{report.benchmark} report has no data points to plot")
    b = report.benchmark
    plots = {}
    if b == "rb":
        summary = report.derived.get("summary", {})
        if summary:
            plt, fig, ax = _figure()
            for metric, s in sorted(summary.items()):
                xs = [x for x, _ in s["cdf"]]
                ys = [y for _, y in s["cdf"]]
                (line,) = ax.step(xs, ys, where="post", label=metric)
                ax.axvline(s["median"], color=line.get_color(), linestyle="--", linewidth=0.8)
            ax.set_xscale("log")
            ax.set_xlabel("error")
            ax.set_ylabel("cumulative fraction")
            ax.legend()
            plots["cdf"] = _svg(plt, fig)
        mrb = [p for p in report.points if p["element"].startswith("mrb:")]
        if mrb:
            plt, fig, ax = _figure()
            for p in mrb:
                d, m, e = zip(*p["data"])
                ax.errorbar(d, m, yerr=e, marker="o", capsize=2, label=p["element"].split(":")[1])
                fit = report.fits.get(p["element"], {}).get("polarization")
                if fit:
                    xs = np.linspace(0, max(d), 100)
                    ax.plot(xs, fit["A"] * fit["p"] ** xs + fit["B"], linewidth=0.8, color="grey")
            ax.set_xlabel("depth")
            ax.set_ylabel("polarization")
            ax.legend()
            plots["decay"] = _svg(plt, fig)
    elif b == "qv":
        plt, fig, ax = _figure()
        for p in report.points:
            w = int(p["element"].split(":")[1])
            ax.plot([w] * len(p["hops"]), p["hops"], ".", alpha=0.4, color="tab:blue")
        ax.axhline(2 / 3, color="black", linestyle="--", linewidth=0.8)
        ax.set_xlabel("width")
        ax.set_ylabel("heavy-output probability")
        plots["hop"] = _svg(plt, fig)
    elif b == "volumetric":
        widths = sorted({c["width"] for c in report.points})
        depths = sorted({c["depth"] for c in report.points})
        grid = np.full((len(widths), len(depths)), np.nan)
        for c in report.points:
            if c["fidelity"] is not None:
                grid[widths.index(c["width"]), depths.index(c["depth"])] = c["fidelity"]
        plt, fig, ax = _figure()
        im = ax.imshow(grid, origin="lower", vmin=0, vmax=1, cmap="viridis", aspect="auto")
        ax.set_xticks(range(len(depths)), [str(d) for d in depths])
        ax.set_yticks(range(len(widths)), [str(w) for w in widths])
        for c in report.points:
            if c["extrapolated"]:
                ax.text(depths.index(c["depth"]), widths.index(c["width"]), "x", ha="center", va="center", color="white")
        ax.set_xlabel("depth")
        ax.set_ylabel("width")
        fig.colorbar(im, ax=ax, label="fidelity")
        plots["heatmap"] = _svg(plt, fig)
    elif b == "ghz":
        plt, fig, ax = _figure()
        ns = [p["raw"]["N"] for p in report.points]
        ax.plot(ns, [p["raw"]["F"] for p in report.points], "o-", label="raw")
        ax.plot(ns, [p["rem"]["F"] for p in report.points], "s-", label="REM")
        ax.axhline(0.5, color="black", linestyle="--", linewidth=0.8)
        ax.set_xlabel("N")
        ax.set_ylabel("GHZ fidelity")
        ax.legend()
        plots["fidelity"] = _svg(plt, fig)
    elif b == "qscore":
        plt, fig, ax = _figure()
        ax.plot([p["n"] for p in report.points], [p["beta"] for p in report.points], "o-")
        ax.axhline(0.2, color="black", linestyle="--", linewidth=0.8)
        ax.set_xlabel("n")
        ax.set_ylabel("beta")
        plots["beta"] = _svg(plt, fig)
    return plots


def emit_report(reports: Sequence[BenchmarkReport], fmt: str, out_dir: str | Path) -> list[Path]:
    """Write reports as one JSON dump, per-metric CSV tables or SVG plots."""
    if fmt not in FORMATS:
        raise ValueError(f"unknown format {fmt!r}; choose from {', '.join(FORMATS)}")
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OSError(f"output directory {out} is not writable: {exc}") from exc
    written = []

    def put(name: str, text: str) -> None:
        path = out / name
        path.write_text(text, encoding="utf-8")
        written.append(path)

    if fmt == "json":
        put("reports.json", json.dumps([r.to_dict() for r in reports], indent=2, sort_keys=True) + "\n")
        return written
    for i, rep in enumerate(reports):
        parts = report_tables(rep) if fmt == "csv" else report_plots(rep)
        for name, text in parts.items():
            put(f"{i:02d}-{rep.benchmark}-{name}.{fmt}", text)
    return written
