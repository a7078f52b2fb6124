"""Command-line entry point ``genbound``.

Exit codes: 0 success, 1 runtime failure, 2 usage or configuration error.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import math
import os
import sys
import warnings
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Optional

import numpy as np
import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from . import mc
from .conditions import eta_c_scan
from .core import LearningTuple, ModelId, RngStream
from .mi_est import chain_rule_mi, closed_form_mi, histogram_mi, ksg_mi, mixed_mi, nats_to_bits
from .tables import Table

EXIT_OK, EXIT_RUNTIME, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    pass


def _version() -> str:
    try:
        from importlib.metadata import version

        return version("artifact")
    except Exception:  # pragma: no cover
        return "0+unknown"


# ---------------------------------------------------------------- config file


class SweepFile(BaseModel):
    """Schema of a sweep configuration file (YAML or JSON); unknown keys are rejected."""

    model_config = ConfigDict(extra="forbid")

    model: Optional[str] = None
    params: dict[str, Any] = Field(default_factory=dict)
    n_grid: list[int] = Field(default_factory=list)
    repetitions: Optional[int] = None
    master_seed: int = Field(0, ge=0, lt=2**64)
    eta_grid: list[float] = Field(default_factory=list)
    k: int = Field(3, ge=1)
    bins: int = Field(8, ge=2)
    outputs: list[str] = Field(default_factory=lambda: sorted(mc.ALL_OUTPUTS))
    bound_eta: Optional[float] = Field(None, gt=0)
    bound_c: Optional[float] = Field(None, gt=0, le=1)
    test_size: int = Field(10_000, ge=1)
    cgf_points: int = Field(8, ge=1)
    mi_pairs: int = Field(50, ge=1)
    n_boot: int = Field(1000, ge=10)
    name: str = "sweep"
    examples: list[str] = Field(default_factory=list)
    example_reps: dict[str, int] = Field(default_factory=dict)

    @field_validator("model")
    @classmethod
    def _model(cls, v):
        if v is not None:
            ModelId.parse(v)
        return v

    @field_validator("n_grid")
    @classmethod
    def _grid(cls, v):
        if any(n < 2 for n in v):
            raise ValueError("every n must be >= 2")
        if len(set(v)) != len(v):
            raise ValueError("duplicate sample sizes")
        if any(b <= a for a, b in zip(v, v[1:])):
            raise ValueError("must be strictly ascending")
        return v

    @field_validator("repetitions")
    @classmethod
    def _reps(cls, v):
        if v is not None and v < 2:
            raise ValueError("must be >= 2")
        return v

    @field_validator("eta_grid")
    @classmethod
    def _etas(cls, v):
        if any(e <= 0 for e in v) or any(b <= a for a, b in zip(v, v[1:])):
            raise ValueError("must be strictly positive and ascending")
        return v

    @field_validator("outputs")
    @classmethod
    def _outputs(cls, v):
        bad = sorted(set(v) - mc.ALL_OUTPUTS)
        if bad:
            raise ValueError(f"unknown outputs {bad}; allowed: {sorted(mc.ALL_OUTPUTS)}")
        return v

    @field_validator("examples", mode="before")
    @classmethod
    def _all_examples(cls, v):
        return list(mc.EXAMPLE_IDS) if v in ("all", ["all"]) else v

    @field_validator("examples")
    @classmethod
    def _examples(cls, v):
        if v == ["all"]:
            return list(mc.EXAMPLE_IDS)
        bad = [e for e in v if e not in mc.EXAMPLE_IDS]
        if bad:
            raise ValueError(f"unknown examples {bad}")
        return v

    @model_validator(mode="after")
    def _complete(self):
        if self.model is None and not self.examples:
            raise ValueError("a config needs 'model' (with n_grid and repetitions) or 'examples'")
        if self.model is not None and (not self.n_grid or self.repetitions is None):
            raise ValueError("'model' requires 'n_grid' and 'repetitions'")
        return self

    def sweep_config(self) -> mc.SweepConfig:
        tup = LearningTuple.of(self.model, **_tuple_params(self.params))
        return mc.SweepConfig(
            tup, tuple(self.n_grid), self.repetitions, self.master_seed, tuple(self.eta_grid), self.k, self.bins,
            frozenset(self.outputs), self.bound_eta, self.bound_c, self.test_size, self.cgf_points, self.mi_pairs,
            self.n_boot,
        )


def _tuple_params(params: dict) -> dict:
    out = {}
    for key, val in params.items():
        out[key] = tuple(val) if isinstance(val, list) else val
    return out


def _node_line(root, loc) -> int | None:
    """1-based line of the YAML node addressed by a pydantic error location."""
    node, line = root, None
    for part in loc:
        if node is None:
            break
        line = node.start_mark.line + 1
        if isinstance(node, yaml.MappingNode):
            nxt = None
            for key, val in node.value:
                if key.value == str(part):
                    nxt = val
                    line = key.start_mark.line + 1
                    break
            node = nxt
        elif isinstance(node, yaml.SequenceNode) and isinstance(part, int) and part < len(node.value):
            node = node.value[part]
        else:
            node = None
    if node is not None:
        line = node.start_mark.line + 1
    return line


def load_config(path: str | Path) -> SweepFile:
    """Parse and validate a config file; raises UsageError with file:line diagnostics."""
    p = Path(path)
    try:
        text = p.read_text(encoding="utf-8")
    except OSError as exc:
        raise UsageError(f"cannot read config {p}: {exc}") from None
    try:
        root = yaml.compose(text)
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise UsageError(f"{p}: malformed config: {exc}") from None
    if not isinstance(data, dict):
        raise UsageError(f"{p}: top level must be a mapping of keys to values")
    try:
        cfg = SweepFile.model_validate(data)
    except ValidationError as exc:
        lines = []
        for err in exc.errors():
            loc = tuple(err["loc"])
            field = ".".join(str(x) for x in loc) or "<root>"
            ln = _node_line(root, loc) if loc else None
            where = f"{p}:{ln}" if ln else str(p)
            lines.append(f"{where}: field '{field}': {err['msg']}")
        raise UsageError("\n".join(lines)) from None
    if cfg.model is not None:
        try:
            cfg.sweep_config()
        except ValueError as exc:
            ln = _node_line(root, ("params",)) or _node_line(root, ("model",))
            raise UsageError(f"{p}:{ln}: field 'params': {exc}") from None
    return cfg


def config_digest(obj) -> str:
    payload = json.dumps(obj, sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()


# ---------------------------------------------------------------- output helpers


def _timestamp() -> str:
    epoch = os.environ.get("SOURCE_DATE_EPOCH")
    dt = datetime.fromtimestamp(int(epoch), timezone.utc) if epoch else datetime.now(timezone.utc)
    return dt.strftime("%Y-%m-%dT%H:%M:%SZ")


def _clean(obj):
    """JSON-safe copy: non-finite floats become strings, numpy scalars become Python numbers."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.generic):
        obj = obj.item()
    if isinstance(obj, float) and not math.isfinite(obj):
        return "nan" if math.isnan(obj) else ("inf" if obj > 0 else "-inf")
    return obj


def _write_json(path: Path, obj) -> str:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(_clean(obj), fh, indent=2)
        fh.write("\n")
    return str(path)


def _write_manifest(out: Path, name: str, argv: list[str], digest: str, seed: int | None, started: str, files: list[str],
                    timings: dict | None = None) -> str:
    manifest = {
        "command_line": argv,
        "config_digest": digest,
        "master_seed": seed,
        "artifact_version": _version(),
        "started": started,
        "finished": _timestamp(),
        "outputs": sorted(Path(f).name for f in files),
        "timings_seconds": timings or {},
    }
    return _write_json(out / f"{name}_manifest.json", manifest)


def _emit(obj, out: str | None, name: str) -> None:
    text = json.dumps(_clean(obj), indent=2)
    if out:
        d = Path(out)
        d.mkdir(parents=True, exist_ok=True)
        _write_json(d / f"{name}.json", obj)
    print(text)


def parse_grid(text: str) -> list[float]:
    """``a:b:k`` is k evenly spaced points from a to b; otherwise a comma-separated list."""
    text = text.strip()
    try:
        if ":" in text:
            a, b, k = text.split(":")
            k = int(k)
            if k < 1:
                raise ValueError
            return [float(v) for v in np.linspace(float(a), float(b), k)]
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise UsageError(f"bad grid {text!r}; use a:b:k or a comma-separated list") from None


# ---------------------------------------------------------------- commands


def cmd_example(args) -> int:
    if args.example_id not in mc.EXAMPLE_IDS:
        raise UsageError(f"unknown example {args.example_id!r}; choose from {', '.join(mc.EXAMPLE_IDS)}")
    started = _timestamp()
    bundle = mc.reproduce_example(args.example_id, seed=args.seed, reps=args.reps, threads=args.threads)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    timings = {}
    files = write_bundle(bundle, out, args.json, timings)
    digest = config_digest({"example": args.example_id, "seed": args.seed, "reps": bundle.meta["reps"]})
    _write_manifest(out, args.example_id, sys.argv, digest, args.seed, started, files, timings)
    for v in bundle.verdicts:
        print(f"[{'PASS' if v.passed else 'FAIL'}] criterion {v.criterion}: {v.description}")
    return EXIT_OK


def _split_timing(v: mc.Verdict, timings: dict) -> dict:
    # wall-clock values would break byte-identical reruns, so they go to the manifest
    d = v.as_dict()
    if "seconds" in d["detail"]:
        d["detail"] = {k: x for k, x in d["detail"].items() if k != "seconds"}
        timings[f"criterion_{v.criterion}"] = v.detail["seconds"]
    return d


def write_bundle(bundle: mc.ReportBundle, out: Path, also_json: bool, timings: dict | None = None) -> list[str]:
    """Write every table and the verdict file; wall-clock timings are collected into ``timings``."""
    timings = {} if timings is None else timings
    files = []
    for key, table in bundle.tables.items():
        files += table.write(out / f"{bundle.example_id}_{key}.csv", also_json)
    verdicts = {
        "example_id": bundle.example_id,
        "meta": bundle.meta,
        "fits": {k: f.as_dict() for k, f in bundle.fits.items()},
        "verdicts": [_split_timing(v, timings) for v in bundle.verdicts],
    }
    files.append(_write_json(out / f"{bundle.example_id}_verdicts.json", verdicts))
    return files


def cmd_check(args) -> int:
    tup = LearningTuple.of(args.model)
    grid = parse_grid(args.eta_grid)
    if args.source == "closed":
        if tup.model_id is ModelId.LOGISTIC_REGRESSION:
            raise UsageError("logistic_regression has no closed form; use --source mc")
        reports = eta_c_scan(tup, grid, n=args.n)
    else:
        cfg = mc.SweepConfig(tup, (args.n,), args.reps, args.seed, tuple(grid), outputs=frozenset({"cgf"}))
        res = mc.run_sweep(cfg, threads=args.threads)
        by_eta = res.condition_reports[args.n]
        reports = [by_eta[e] for e in cfg.eta_grid]
    rows = [dict(r.as_dict(), n=args.n, model=tup.model_id.value) for r in reports]
    _emit(rows, args.out, f"check_{tup.model_id.value}")
    return EXIT_OK


def _load_data(path: str) -> np.ndarray:
    try:
        arr = np.loadtxt(path, delimiter=",", ndmin=2)
    except ValueError:
        arr = np.loadtxt(path, delimiter=",", ndmin=2, skiprows=1)
    except OSError as exc:
        raise UsageError(f"cannot read data file: {exc}") from None
    return arr


def _gaussian_pair(rho: float, size: int, seed: int) -> np.ndarray:
    if not -1 < rho < 1:
        raise UsageError("--rho must lie in (-1, 1)")
    g = RngStream(seed).generator()
    x = g.standard_normal(size)
    y = rho * x + math.sqrt(1 - rho * rho) * g.standard_normal(size)
    return np.column_stack([x, y])


def cmd_mi(args) -> int:
    est = args.estimator
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        if est == "closed_form":
            if not args.model or args.n is None:
                raise UsageError("closed_form needs --model and --n")
            result = [e.as_dict() for e in closed_form_mi(LearningTuple.of(args.model), args.n)]
            values = [r["value"] for r in result]
            payload = {"estimator": est, "model": args.model, "n": args.n, "mean": float(np.mean(values)),
                       "per_sample": values if len(values) <= 50 else None, "flags": result[0]["flags"]}
        else:
            if args.data:
                data = _load_data(args.data)
            elif args.rho is not None:
                data = _gaussian_pair(args.rho, args.size, args.seed)
            else:
                raise UsageError("give --data FILE or --rho for the correlated-Gaussian generator")
            if data.shape[1] < 2:
                raise UsageError("data needs at least two columns")
            if est == "ksg":
                cut = args.x_cols
                r = ksg_mi(data[:, :cut], data[:, cut:], k=args.k, seed=args.seed)
            elif est == "histogram":
                r = histogram_mi(data[:, 0], data[:, 1], bins=args.bins, seed=args.seed)
            elif est == "mixed":
                r = mixed_mi(data[:, 0], data[:, 1:], k=args.k, seed=args.seed)
            else:
                wc = args.w_cols
                r = chain_rule_mi(data[:, :wc], data[:, wc:-1], data[:, -1], k=args.k, seed=args.seed)
            payload = r.as_dict()
    payload["warnings"] = [str(w.message) for w in caught]
    value = payload.get("value", payload.get("mean"))
    payload["bits"] = nats_to_bits(value)
    for msg in payload["warnings"]:
        print(f"warning: {msg}", file=sys.stderr)
    _emit(payload, args.out, f"mi_{est}")
    return EXIT_OK


def cmd_sweep(args) -> int:
    cfg = load_config(args.config)
    started = _timestamp()
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    files = []
    timings = {}
    if cfg.model is not None:
        res = mc.run_sweep(cfg.sweep_config(), threads=args.threads)
        files += res.table.write(out / f"{cfg.name}.csv", args.json)
    failed = 0
    for ex in cfg.examples:
        bundle = mc.reproduce_example(ex, seed=cfg.master_seed, reps=cfg.example_reps.get(ex), threads=args.threads)
        files += write_bundle(bundle, out, args.json, timings)
        for v in bundle.verdicts:
            failed += not v.passed
            print(f"[{'PASS' if v.passed else 'FAIL'}] {ex} criterion {v.criterion}: {v.description}")
    _write_manifest(out, cfg.name, sys.argv, config_digest(cfg.model_dump()), cfg.master_seed, started, files, timings)
    if cfg.examples:
        print(f"{failed} verdict(s) failed")
    return EXIT_OK


def cmd_schema(args) -> int:
    print(json.dumps(SweepFile.model_json_schema(), indent=2))
    return EXIT_OK


# ---------------------------------------------------------------- parser


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="genbound", description="Evaluate information-theoretic generalization bounds.")
    parser.add_argument("--version", action="version", version=_version())
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(p, out_default=None):
        p.add_argument("--threads", type=int, default=None, help="worker threads (GENBOUND_THREADS overrides)")
        p.add_argument("--json", action="store_true", help="mirror every CSV as JSON")
        p.add_argument("--out", default=out_default, help="output directory")

    p = sub.add_parser("example", help="reproduce one worked example")
    p.add_argument("example_id", help=", ".join(mc.EXAMPLE_IDS))
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--reps", type=int, default=None)
    common(p, "results")
    p.set_defaults(func=cmd_example)

    p = sub.add_parser("check", help="check the (eta, c)-central condition on an eta grid")
    p.add_argument("model")
    p.add_argument("--eta-grid", required=True, help="a:b:k or comma-separated values")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--source", choices=("closed", "mc"), default="closed")
    p.add_argument("--reps", type=int, default=2000, help="repetitions for --source mc")
    p.add_argument("--seed", type=int, default=0)
    common(p)
    p.set_defaults(func=cmd_check)

    p = sub.add_parser("mi", help="estimate mutual information (nats)")
    p.add_argument("--estimator", choices=("closed_form", "ksg", "mixed", "chain_rule", "histogram"), default="ksg")
    p.add_argument("--model")
    p.add_argument("--n", type=int)
    p.add_argument("--data", help="CSV of samples, one row per draw")
    p.add_argument("--rho", type=float, help="correlation of the built-in bivariate Gaussian generator")
    p.add_argument("--size", type=int, default=5000, help="draws from the built-in generator")
    p.add_argument("--x-cols", type=int, default=1, help="ksg: leading columns forming X")
    p.add_argument("--w-cols", type=int, default=2, help="chain_rule: leading columns forming W; last column is the label")
    p.add_argument("--k", type=int, default=3)
    p.add_argument("--bins", type=int, default=8)
    p.add_argument("--seed", type=int, default=0)
    common(p)
    p.set_defaults(func=cmd_mi)

    p = sub.add_parser("sweep", help="run a Monte-Carlo sweep from a config file")
    p.add_argument("--config", required=True)
    common(p, "results")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("schema", help="print the JSON schema of sweep config files")
    p.set_defaults(func=cmd_schema)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        if getattr(args, "threads", None) is not None and args.threads < 1:
            raise UsageError("--threads must be >= 1")
        mc.resolve_threads(getattr(args, "threads", None))
        return args.func(args)
    except UsageError as exc:
        print(f"genbound: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ValueError as exc:
        print(f"genbound: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except Exception as exc:  # runtime failure
        print(f"genbound: runtime failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":  # pragma: no cover
    raise SystemExit(main())
