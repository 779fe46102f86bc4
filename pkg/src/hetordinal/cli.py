"""Command-line entry point.

Subcommands ``fit``, ``select``, ``benchmark``, ``bootstrap``,
``sensitivity`` and ``generate`` share one flag set. A JSON file passed
with ``--config`` overrides the flags. Every run writes ``manifest.json``
into the output directory, also when it fails; all other artifacts are
deterministic functions of the input bytes, the configuration and the seed.

Exit codes: 0 success, 2 configuration error, 3 data error, 4 numeric
failure, 1 anything else.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import logging
import math
import os
import platform
import sys
import tempfile
import time
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Sequence

import numpy as np

from . import __version__
from .benchmark import (BenchmarkReport, TierSpec, default_tiers, generate, run_benchmark, save_instance)
from .embedding import OrdinalDataset, fit_embedding, transform
from .errors import (AllRowsDropped, ConfigError, DataError, HetOrdinalError, IoError, NonIntegerCell,
                     ParseError, SchemaMismatch)
from .mixture import MixtureConfig, effective_k, fit
from .selection import SelectionPlan, SelectionReport, run_pipeline
from .stability import (BOOTSTRAP_MODES, SENSITIVITY_COLUMNS, BootstrapReport, SensitivityReport,
                        alpha_sweep, bootstrap_stability, item_set_sweep, n_min_sweep, weight_resample_refit)

__all__ = ["RunConfig", "RunManifest", "IngestResult", "ingest_csv", "emit_reports", "run", "main",
           "OUTPUT_ENV", "COMMANDS"]

log = logging.getLogger("hetordinal")

OUTPUT_ENV = "HETORDINAL_OUTPUT_DIR"
COMMANDS = ("fit", "select", "benchmark", "bootstrap", "sensitivity", "generate")
NEEDS_INPUT = ("fit", "select", "bootstrap", "sensitivity")

# fixed column orders of the CSV artifacts
MODEL_COMPARISON_COLUMNS = ("model", "mse", "delta_vs_baseline")
K_CURVE_COLUMNS = ("k", "mse", "fold_sd")
BENCHMARK_COLUMNS = ("tier", "replicate", "model", "metric", "value")
BOOTSTRAP_COLUMNS = ("replicate", "k_fit", "agreement", "effective_k", "mean_max_responsibility")


# ----------------------------------------------------------------------------- configuration

@dataclass
class RunConfig:
    command: str
    seed: int | None = None
    input: str | None = None
    output: str | None = None
    schema: str | None = None
    missing: tuple[str, ...] = ("", "NA")
    weights_column: str | None = None
    # mixture
    k: int = 5
    bnp: bool = False
    alpha: float = 1.0
    max_iters: int = 100
    eps_loglik: float = 1.0
    eps_assign: float = 0.001
    max_parents: int = 2
    n_min: float = 120.0
    penalty: float = 1.0
    # selection
    k_grid: tuple[int, ...] = (2, 3, 4, 5, 6)
    outer_test_fraction: float = 0.2
    inner_folds: int = 5
    k_max: int = 10
    seed_from_discovery: bool = False
    # benchmark / generate
    tiers: tuple[str, ...] = ("easy", "moderate", "hard", "stress")
    tier_file: str | None = None
    replicates: int | None = None
    # bootstrap
    B: int = 20
    bootstrap_mode: str = "rediscover"
    # sensitivity
    axis: str = "alpha"
    alphas: tuple[float, ...] = (0.5, 1.0, 2.0)
    n_min_grid: tuple[float, ...] = (120.0, 400.0, 500.0, 700.0)
    item_variants: tuple[str, ...] = ()
    base_items: tuple[str, ...] | None = None
    R: int = 4

    def validate(self) -> "RunConfig":
        if self.command not in COMMANDS:
            raise ConfigError(f"unknown command {self.command!r}")
        if self.seed is None:
            raise ConfigError("a seed is required (--seed or the config file)")
        if self.command in NEEDS_INPUT:
            if not self.input:
                raise ConfigError(f"command {self.command!r} needs an input CSV")
            if not Path(self.input).is_file():
                raise ConfigError(f"input file {self.input!r} does not exist")
        if self.schema and not Path(self.schema).is_file():
            raise ConfigError(f"schema file {self.schema!r} does not exist")
        if self.tier_file and not Path(self.tier_file).is_file():
            raise ConfigError(f"tier file {self.tier_file!r} does not exist")
        if self.bootstrap_mode not in BOOTSTRAP_MODES:
            raise ConfigError(f"bootstrap_mode must be one of {BOOTSTRAP_MODES}")
        if self.axis not in ("alpha", "item_set", "n_min", "weights"):
            raise ConfigError(f"unknown sensitivity axis {self.axis!r}")
        if self.command == "sensitivity" and self.axis == "weights" and not self.weights_column:
            raise ConfigError("the weights axis needs --weights-column")
        self.mixture_config()
        self.selection_plan()
        return self

    def mixture_config(self) -> MixtureConfig:
        return MixtureConfig(k=self.k, bnp=self.bnp, alpha=self.alpha, max_iters=self.max_iters,
                             eps_loglik=self.eps_loglik, eps_assign=self.eps_assign,
                             max_parents=self.max_parents, n_min=self.n_min, penalty=self.penalty,
                             seed=int(self.seed))

    def selection_plan(self) -> SelectionPlan:
        return SelectionPlan(k_grid=self.k_grid, outer_test_fraction=self.outer_test_fraction,
                             inner_folds=self.inner_folds, seed=int(self.seed), k_max=self.k_max,
                             seed_from_discovery=self.seed_from_discovery)

    def resolved_output(self) -> Path:
        return Path(self.output or os.environ.get(OUTPUT_ENV) or "hetordinal_out")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["output"] = str(self.resolved_output())
        return d

    @classmethod
    def field_names(cls) -> set[str]:
        return {f.name for f in fields(cls)}


_TUPLE_FIELDS = {"missing": str, "k_grid": int, "tiers": str, "alphas": float, "n_min_grid": float,
                 "item_variants": str, "base_items": str}


def _coerce(name: str, value):
    if name in _TUPLE_FIELDS and value is not None:
        if isinstance(value, str):
            value = [v for v in value.split(",")] if value else []
        try:
            return tuple(_TUPLE_FIELDS[name](v) for v in value)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"bad value for {name}: {value!r}") from exc
    return value


def load_config_file(path: str) -> dict:
    try:
        raw = json.loads(Path(path).read_text())
    except FileNotFoundError as exc:
        raise ConfigError(f"config file {path!r} does not exist") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config file {path!r} is not valid JSON: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigError("the config file must hold a JSON object")
    unknown = set(raw) - RunConfig.field_names()
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    return raw


# ----------------------------------------------------------------------------- ingestion

@dataclass
class IngestResult:
    dataset: OrdinalDataset
    n_read: int
    n_dropped: int
    weights: np.ndarray | None = None

    def to_dict(self) -> dict:
        return {"rows_read": self.n_read, "rows_dropped": self.n_dropped,
                "rows_used": self.dataset.n_rows, "items": list(self.dataset.item_names),
                "category_counts": list(self.dataset.category_counts)}


def _read_schema(path) -> dict[str, int]:
    try:
        raw = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read schema sidecar {path!r}: {exc}") from exc
    items = raw.get("items", raw) if isinstance(raw, dict) else None
    if not isinstance(items, dict):
        raise ConfigError("schema sidecar must map item names to category counts")
    try:
        return {str(k): int(v) for k, v in items.items()}
    except (TypeError, ValueError) as exc:
        raise ConfigError("schema category counts must be integers") from exc


def ingest_csv(path, missing: Sequence[str] = ("", "NA"), schema=None,
               weights_column: str | None = None) -> IngestResult:
    """Read an ordinal CSV with a header row of item names.

    Rows holding a missing token in any item column are dropped and counted.
    Category counts come from the schema sidecar when one is given (or a
    ``<stem>.schema.json`` file sits next to the CSV), else from the largest
    observed code per column. Codes must be 1-based integers.
    """
    path = Path(path)
    if schema is None and path.with_suffix(".schema.json").is_file():
        schema = path.with_suffix(".schema.json")
    try:
        with open(path, newline="") as fh:
            text = fh.read()
    except OSError as exc:
        raise IoError(f"cannot read {path}: {exc}") from exc
    reader = csv.reader(io.StringIO(text))
    try:
        header = next(reader)
    except StopIteration:
        raise ParseError(f"{path} is empty", row=0) from None
    header = [h.strip() for h in header]
    if len(set(header)) != len(header) or any(not h for h in header):
        raise ParseError("header must hold unique, nonempty column names", row=1)
    wcol = None
    if weights_column is not None:
        if weights_column not in header:
            raise SchemaMismatch(f"weights column {weights_column!r} not in the header")
        wcol = header.index(weights_column)
    item_cols = [c for c in range(len(header)) if c != wcol]
    names = [header[c] for c in item_cols]
    missing = set(missing)

    rows, wts, n_read, dropped = [], [], 0, 0
    for lineno, rec in enumerate(reader, start=2):
        if not rec:
            continue
        n_read += 1
        if len(rec) != len(header):
            raise ParseError(f"line {lineno} has {len(rec)} fields, expected {len(header)}", row=lineno)
        cells = [rec[c].strip() for c in item_cols]
        if any(cell in missing for cell in cells):
            dropped += 1
            continue
        vals = []
        for c, cell in zip(item_cols, cells):
            try:
                vals.append(int(cell))
            except ValueError:
                raise NonIntegerCell(f"line {lineno}, column {header[c]!r}: {cell!r} is not an integer code",
                                     row=lineno, column=header[c]) from None
        if wcol is not None:
            try:
                wv = float(rec[wcol])
            except ValueError:
                raise ParseError(f"line {lineno}: weight {rec[wcol]!r} is not a number",
                                 row=lineno, column=weights_column) from None
            if not (math.isfinite(wv) and wv > 0):
                raise DataError(f"line {lineno}: weights must be positive and finite")
            wts.append(wv)
        rows.append(vals)
    if n_read == 0:
        raise AllRowsDropped(f"{path} holds no data rows")
    if not rows:
        raise AllRowsDropped(f"all {n_read} rows contain a missing value")
    values = np.asarray(rows, dtype=np.int64)
    low = values.min(axis=0)
    if np.any(low < 1):
        j = int(np.argmin(low))
        hint = " (codes look 0-based: add 1 to every code)" if low[j] == 0 else ""
        raise DataError(f"column {names[j]!r} holds code {int(low[j])}; codes must start at 1{hint}")
    counts = None
    if schema is not None:
        declared = _read_schema(schema)
        missing_items = [n for n in names if n not in declared]
        if missing_items:
            raise SchemaMismatch(f"schema sidecar lacks items {missing_items}")
        counts = tuple(declared[n] for n in names)
    if dropped:
        log.info("dropped %d of %d rows with missing values", dropped, n_read)
    data = OrdinalDataset(values, tuple(names), counts)
    return IngestResult(data, n_read, dropped, np.asarray(wts) if wcol is not None else None)


# ----------------------------------------------------------------------------- artifacts

def _clean(obj):
    """JSON-safe copy: numpy scalars to Python, NaN/inf to null."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, np.generic):
        obj = obj.item()
    if isinstance(obj, float) and not math.isfinite(obj):
        return None
    return obj


def _atomic_write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _fmt_cell(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (float, np.floating)):
        return "" if not math.isfinite(v) else repr(float(v))
    return str(v)


def _csv_text(columns: Sequence[str], rows: Sequence[dict]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        w.writerow([_fmt_cell(r.get(c)) for c in columns])
    return buf.getvalue()


def _json_text(obj) -> str:
    return json.dumps(_clean(obj), indent=2, sort_keys=True, allow_nan=False) + "\n"


class _Writer:
    def __init__(self, outdir: Path):
        self.outdir = outdir
        self.files: list[str] = []

    def text(self, name: str, text: str) -> str:
        try:
            _atomic_write(self.outdir / name, text)
        except OSError as exc:
            raise IoError(f"cannot write {self.outdir / name}: {exc}") from exc
        self.files.append(name)
        return name

    def json(self, name: str, obj) -> str:
        return self.text(name, _json_text(obj))

    def csv(self, name: str, columns, rows) -> str:
        return self.text(name, _csv_text(columns, rows))


def emit_reports(results: dict, outdir) -> list[str]:
    """Write the plot-ready CSVs and report JSON for whatever results are present.

    Recognised keys: ``selection`` (SelectionReport), ``benchmark``
    (BenchmarkReport), ``bootstrap`` (BootstrapReport), ``sensitivity``
    (SensitivityReport). Returns the written file names relative to
    ``outdir``.
    """
    w = _Writer(Path(outdir))
    sel: SelectionReport | None = results.get("selection")
    if sel is not None:
        w.json("selection.json", sel.to_dict())
        w.csv("model_comparison.csv", MODEL_COMPARISON_COLUMNS, sel.holdout)
        w.csv("k_curve.csv", K_CURVE_COLUMNS,
              [{"k": k, "mse": v, "fold_sd": float(np.std(sel.fold_mse[k], ddof=1))}
               for k, v in sel.curve.items()])
    bench: BenchmarkReport | None = results.get("benchmark")
    if bench is not None:
        w.json("benchmark.json", bench.to_dict())
        w.csv("benchmark.csv", BENCHMARK_COLUMNS, bench.long_rows())
        cols = ["tier", "model", "replicates"] + [f"{m}_{s}" for m in ("mse", "ari", "nmi", "shd")
                                                  for s in ("mean", "sd")]
        w.csv("benchmark_summary.csv", cols, bench.summary)
    boot: BootstrapReport | None = results.get("bootstrap")
    if boot is not None:
        w.json("bootstrap.json", boot.to_dict())
        w.csv("bootstrap.csv", BOOTSTRAP_COLUMNS, boot.rows)
    sens: SensitivityReport | None = results.get("sensitivity")
    if sens is not None:
        w.json("sensitivity.json", sens.to_dict())
        w.csv("sensitivity.csv", SENSITIVITY_COLUMNS, sens.rows)
    return w.files


# ----------------------------------------------------------------------------- manifest

@dataclass
class RunManifest:
    config: dict
    input_sha256: str | None
    version: str = __version__
    status: str = "running"
    started: float = field(default_factory=time.time)
    finished: float | None = None
    outputs: list[dict] = field(default_factory=list)
    error: dict | None = None

    def to_dict(self) -> dict:
        return {
            "config": self.config,
            "input_sha256": self.input_sha256,
            "software": {"package": "hetordinal", "version": self.version,
                         "python": platform.python_version(), "numpy": np.__version__},
            "status": self.status,
            "wall_clock": {"started": self.started, "finished": self.finished,
                           "seconds": None if self.finished is None else self.finished - self.started},
            "outputs": self.outputs,
            "error": self.error,
        }

    def write(self, outdir: Path) -> None:
        _atomic_write(outdir / "manifest.json", _json_text(self.to_dict()))


def _sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


# ----------------------------------------------------------------------------- commands

def _load(cfg: RunConfig, w: _Writer) -> IngestResult:
    res = ingest_csv(cfg.input, cfg.missing, cfg.schema, cfg.weights_column)
    w.json("ingest.json", res.to_dict())
    return res


def _tiers(cfg: RunConfig) -> list[TierSpec]:
    if cfg.tier_file:
        raw = json.loads(Path(cfg.tier_file).read_text())
        specs = [TierSpec.from_dict(d) for d in (raw["tiers"] if isinstance(raw, dict) else raw)]
    else:
        known = {t.name: t for t in default_tiers(int(cfg.seed))}
        unknown = [t for t in cfg.tiers if t not in known]
        if unknown:
            raise ConfigError(f"unknown tiers {unknown}; choose from {sorted(known)}")
        specs = [known[t] for t in cfg.tiers]
    if not specs:
        raise ConfigError("no tiers selected")
    return specs


def _cmd_fit(cfg: RunConfig, w: _Writer) -> None:
    res = _load(cfg, w)
    data = res.dataset
    emb = fit_embedding(data)
    X = transform(data, emb).X
    model = fit(X, cfg.mixture_config(), item_names=data.item_names)
    w.json("embedding.json", emb.to_dict())
    w.json("model.json", model.to_dict())
    w.json("fit_report.json", {
        "loglik": model.loglik(X), "effective_k": effective_k(model), "n_clusters": model.n_clusters,
        "cluster_sizes": model.cluster_sizes().tolist(), "converged": model.converged,
        "iterations": len(model.trace)})


def _cmd_select(cfg: RunConfig, w: _Writer) -> None:
    res = _load(cfg, w)
    rpt = run_pipeline(res.dataset, cfg.selection_plan(), cfg.mixture_config(),
                       progress=lambda stage: log.info("stage: %s", stage))
    w.json("embedding.json", rpt.embedding.to_dict())
    w.json("confirmatory_model.json", rpt.confirmatory.to_dict())
    w.json("discovery_model.json", rpt.models["bnp_full"].to_dict())
    w.files.extend(emit_reports({"selection": rpt}, w.outdir))


def _cmd_benchmark(cfg: RunConfig, w: _Writer) -> None:
    reps = range(cfg.replicates) if cfg.replicates is not None else None

    def progress(tier, rep, rows):
        log.info("%s replicate %d: %s", tier, rep,
                 ", ".join(f"{r['model']} mse={r['mse']:.3f} ari={r['ari']:.3f}" for r in rows))

    rpt = run_benchmark(_tiers(cfg), cfg.mixture_config(), k_max=cfg.k_max, replicates=reps, progress=progress)
    w.files.extend(emit_reports({"benchmark": rpt}, w.outdir))


def _cmd_generate(cfg: RunConfig, w: _Writer) -> None:
    index = []
    for spec in _tiers(cfg):
        n_rep = cfg.replicates if cfg.replicates is not None else spec.replications
        for rep in range(n_rep):
            inst = generate(spec, rep)
            paths = save_instance(inst, w.outdir / "instances")
            names = [str(Path(p).relative_to(w.outdir)) for p in paths]
            w.files.extend(names)
            index.append({"tier": spec.name, "replicate": rep, "files": names,
                          "fingerprint": inst.data.fingerprint()})
    w.json("instances.json", index)


def _reference_model(cfg: RunConfig, data: OrdinalDataset, w: _Writer):
    X = transform(data, fit_embedding(data)).X
    ref = fit(X, cfg.mixture_config().replace(bnp=False), item_names=data.item_names)
    w.json("reference_model.json", ref.to_dict())
    return ref


def _cmd_bootstrap(cfg: RunConfig, w: _Writer) -> None:
    data = _load(cfg, w).dataset
    ref = _reference_model(cfg, data, w)
    rpt = bootstrap_stability(data, ref, cfg.B, ref.config, mode=cfg.bootstrap_mode, k_max=cfg.k_max,
                              seed=int(cfg.seed),
                              progress=lambda r: log.info("replicate %d agreement %.3f", r["replicate"],
                                                          r["agreement"]))
    w.files.extend(emit_reports({"bootstrap": rpt}, w.outdir))


def _cmd_sensitivity(cfg: RunConfig, w: _Writer) -> None:
    res = _load(cfg, w)
    data = res.dataset
    mc = cfg.mixture_config().replace(bnp=False)
    seed = int(cfg.seed)
    if cfg.axis == "alpha":
        rpt = alpha_sweep(data, cfg.alphas, mc, seed=seed, test_fraction=cfg.outer_test_fraction, k_max=cfg.k_max)
    elif cfg.axis == "item_set":
        rpt = item_set_sweep(data, ("",) + tuple(cfg.item_variants), mc, base_items=cfg.base_items, seed=seed,
                             test_fraction=cfg.outer_test_fraction)
    elif cfg.axis == "n_min":
        rpt = n_min_sweep(data, cfg.n_min_grid, mc, seed=seed, test_fraction=cfg.outer_test_fraction)
    else:
        rpt = weight_resample_refit(data, res.weights, cfg.R, mc, seed=seed)
    w.files.extend(emit_reports({"sensitivity": rpt}, w.outdir))


_DISPATCH = {"fit": _cmd_fit, "select": _cmd_select, "benchmark": _cmd_benchmark,
             "bootstrap": _cmd_bootstrap, "sensitivity": _cmd_sensitivity, "generate": _cmd_generate}


def run(cfg: RunConfig) -> int:
    """Execute one command and return its exit status."""
    outdir = cfg.resolved_output()
    manifest = RunManifest(config=cfg.to_dict(), input_sha256=None)
    w = _Writer(outdir)
    status = 0
    try:
        outdir.mkdir(parents=True, exist_ok=True)
        cfg.validate()
        if cfg.input:
            manifest.input_sha256 = _sha256(cfg.input)
        _DISPATCH[cfg.command](cfg, w)
        manifest.status = "ok"
    except HetOrdinalError as exc:
        status = exc.exit_code
        manifest.status = "failed"
        manifest.error = {"type": type(exc).__name__, "code": exc.code, "exit_code": status,
                          "message": str(exc), "row": getattr(exc, "row", None),
                          "column": getattr(exc, "column", None)}
        log.error("%s: %s", exc.code, exc)
    except Exception as exc:  # unexpected failures still leave a manifest behind
        status = 1
        manifest.status = "failed"
        manifest.error = {"type": type(exc).__name__, "code": "internal_error", "exit_code": 1,
                          "message": str(exc), "row": None, "column": None}
        log.exception("internal error")
    finally:
        manifest.finished = time.time()
        files = sorted(set(w.files))
        manifest.outputs = [{"path": f, "sha256": _sha256(outdir / f)} for f in files if (outdir / f).is_file()]
        try:
            manifest.write(outdir)
        except OSError as exc:
            log.error("cannot write manifest: %s", exc)
            status = status or IoError.exit_code
    return status


# ----------------------------------------------------------------------------- argument parsing

def _flags() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    S = argparse.SUPPRESS
    g = p.add_argument_group("run")
    g.add_argument("--config", help="JSON file whose keys override the flags")
    g.add_argument("--seed", type=int, default=S, help="random seed (required)")
    g.add_argument("--input", "-i", default=S, help="ordinal CSV with a header row")
    g.add_argument("--output", "-o", default=S, help=f"output directory (default ${OUTPUT_ENV} or ./hetordinal_out)")
    g.add_argument("--schema", default=S, help="JSON sidecar mapping item -> category count")
    g.add_argument("--missing", default=S, help="comma-separated missing-value tokens (default ',NA')")
    g.add_argument("--weights-column", dest="weights_column", default=S, help="column holding row weights")
    g.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    m = p.add_argument_group("mixture")
    m.add_argument("--k", type=int, default=S, help="number of components (default 5)")
    m.add_argument("--bnp", action="store_true", default=S, help="stick-breaking fit with K as truncation")
    m.add_argument("--alpha", type=float, default=S)
    m.add_argument("--max-iters", dest="max_iters", type=int, default=S)
    m.add_argument("--eps-loglik", dest="eps_loglik", type=float, default=S)
    m.add_argument("--eps-assign", dest="eps_assign", type=float, default=S)
    m.add_argument("--max-parents", dest="max_parents", type=int, default=S)
    m.add_argument("--n-min", dest="n_min", type=float, default=S)
    m.add_argument("--penalty", type=float, default=S)
    s = p.add_argument_group("selection")
    s.add_argument("--k-grid", dest="k_grid", default=S, help="comma-separated K values (default 2,3,4,5,6)")
    s.add_argument("--outer-test-fraction", dest="outer_test_fraction", type=float, default=S)
    s.add_argument("--inner-folds", dest="inner_folds", type=int, default=S)
    s.add_argument("--k-max", dest="k_max", type=int, default=S)
    s.add_argument("--seed-from-discovery", dest="seed_from_discovery", action="store_true", default=S)
    b = p.add_argument_group("benchmark")
    b.add_argument("--tiers", default=S, help="comma-separated tier names")
    b.add_argument("--tier-file", dest="tier_file", default=S, help="JSON list of tier specifications")
    b.add_argument("--replicates", type=int, default=S)
    st = p.add_argument_group("stability")
    st.add_argument("--B", "--bootstrap-replicates", dest="B", type=int, default=S)
    st.add_argument("--bootstrap-mode", dest="bootstrap_mode", choices=BOOTSTRAP_MODES, default=S)
    st.add_argument("--axis", choices=("alpha", "item_set", "n_min", "weights"), default=S)
    st.add_argument("--alphas", default=S)
    st.add_argument("--n-min-grid", dest="n_min_grid", default=S)
    st.add_argument("--item-variant", dest="item_variants", action="append", default=S,
                    help="item change such as '-q3' or '+q9,-q2'; repeatable")
    st.add_argument("--base-items", dest="base_items", default=S)
    st.add_argument("--R", "--weight-replicates", dest="R", type=int, default=S)
    return p


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="hetordinal", description=__doc__.split("\n\n")[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    flags = _flags()
    helps = {
        "fit": "fit one mixture of DAGs",
        "select": "discovery, K selection, confirmation and holdout comparison",
        "benchmark": "synthetic recovery benchmark",
        "bootstrap": "bootstrap assignment stability",
        "sensitivity": "alpha / item-set / n_min / weight sensitivity sweep",
        "generate": "write synthetic benchmark instances",
    }
    for name in COMMANDS:
        sub.add_parser(name, parents=[flags], help=helps[name])
    return parser


def _merge(ns: dict) -> RunConfig:
    values = dict(ns)
    cfg_path = values.pop("config", None)
    if cfg_path:
        values.update(load_config_file(cfg_path))
        values["command"] = ns["command"]
    values = {k: _coerce(k, v) for k, v in values.items()}
    try:
        return RunConfig(**values)
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc


def config_from_args(argv: Sequence[str] | None = None) -> RunConfig:
    ns = vars(build_parser().parse_args(argv))
    ns.pop("verbose", None)
    return _merge(ns)


def main(argv: Sequence[str] | None = None) -> int:
    ns = vars(build_parser().parse_args(argv))
    verbose = ns.pop("verbose", False)
    logging.basicConfig(level=logging.INFO if verbose else logging.WARNING,
                        format="%(levelname)s %(message)s", stream=sys.stderr)
    try:
        cfg = _merge(ns)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        outdir = Path(ns.get("output") or os.environ.get(OUTPUT_ENV) or "hetordinal_out")
        manifest = RunManifest(config=_clean({k: v for k, v in ns.items()}), input_sha256=None,
                               status="failed", finished=time.time(),
                               error={"type": type(exc).__name__, "code": exc.code, "exit_code": exc.exit_code,
                                      "message": str(exc), "row": None, "column": None})
        try:
            outdir.mkdir(parents=True, exist_ok=True)
            manifest.write(outdir)
        except OSError:
            pass
        return exc.exit_code
    return run(cfg)


if __name__ == "__main__":
    sys.exit(main())
