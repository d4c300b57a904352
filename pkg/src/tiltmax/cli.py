"""Command-line experiment runner.

Every run is described by an :class:`ExperimentConfig`, either assembled from
command-line flags or read from a JSON file with ``--config``, validated
against :data:`CONFIG_SCHEMA` and executed by :func:`run`.  Outputs carry a
provenance header with the seed, a hash of the numeric part of the config and
the toolkit version; the payload never depends on the thread count.
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import math
import os
import sys
from dataclasses import asdict, dataclass, field

import jsonschema
import numpy as np

from . import __version__
from .distribution import (
    BLOCK_SIZE,
    FidiQuery,
    empirical_fidi,
    hr_closed_form,
    hr_model_neglog,
    neglog_fidi_infargmax,
    neglog_fidi_mc,
)
from .grid import Grid
from .pickands import (
    alpha2_argmax_oracle,
    alpha2_direct_oracle,
    alpha2_ratio_oracle,
    pickands_argmax_prob,
    pickands_direct,
    pickands_lower_bound_c0,
    pickands_ratio,
)
from .randomness import child_seed
from .simulate import simulate_fields
from .spectral import MODEL_FAMILIES, model_from_spec
from .stationarity import (
    FUNCTIONALS,
    KS_LEVEL,
    check_field_stationarity,
    check_theta_shift,
    check_tilt_shift_library,
    check_tilt_shift_mc,
    check_xi_shift_gaussian,
)

EXIT_OK, EXIT_ERROR, EXIT_FAIL = 0, 1, 2

#: Every default used by the runner, in one place.
DEFAULTS = {
    "seed": 0,
    "reps": 100_000,
    "threads": os.cpu_count() or 1,
    "ks_level": KS_LEVEL,
    "radius": 8.0,
    "block_size": BLOCK_SIZE,
    "error_budget": 1e-4,
    "delta": 0.5,
    "window": 16.0,
}

TASKS = ("simulate", "fidi", "pickands", "check", "extend", "oracle")

_NUM = {"type": "number"}
_NUMS = {"oneOf": [{"type": "string"}, {"type": "array", "items": _NUM}]}
_VEC = {"oneOf": [_NUM, {"type": "string"}, {"type": "array", "items": _NUM}]}

CONFIG_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "required": ["task"],
    "additionalProperties": False,
    "properties": {
        "task": {"enum": list(TASKS)},
        "model": {"$ref": "#/$defs/model"},
        "grid": {"oneOf": [{"type": "string"}, {"type": "array"}, {"type": "object"}]},
        "params": {"type": "object"},
        "seed": {"type": "integer", "minimum": 0},
        "reps": {"type": "integer", "minimum": 2},
        "threads": {"type": "integer", "minimum": 1},
        "output": {
            "type": "object",
            "additionalProperties": False,
            "properties": {"path": {"type": "string"}, "format": {"enum": ["json", "csv"]}},
        },
    },
    "allOf": [
        {"if": {"properties": {"task": {"not": {"const": "oracle"}}}}, "then": {"required": ["task", "model"]}},
        {
            "if": {"properties": {"task": {"const": "simulate"}}},
            "then": {"properties": {"params": {
                "type": "object", "additionalProperties": False,
                "properties": {
                    "method": {"enum": ["dm", "direct"]},
                    "error_budget": {"type": "number", "exclusiveMinimum": 0},
                    "provenance": {"type": "boolean"},
                },
            }}},
        },
        {
            "if": {"properties": {"task": {"const": "extend"}}},
            "then": {"properties": {"params": {"type": "object", "additionalProperties": False, "properties": {}}}},
        },
        {
            "if": {"properties": {"task": {"const": "fidi"}}},
            "then": {"properties": {"params": {
                "type": "object", "additionalProperties": False, "required": ["points", "x"],
                "properties": {
                    "points": _NUMS, "x": _NUMS,
                    "method": {"enum": ["mc", "infargmax", "empirical", "empirical-direct", "closed-form"]},
                    "scale": {"enum": ["gumbel", "frechet"]}, "alpha": _NUM,
                    "error_budget": {"type": "number", "exclusiveMinimum": 0},
                },
            }}},
        },
        {
            "if": {"properties": {"task": {"const": "pickands"}}},
            "then": {"properties": {"params": {
                "type": "object", "additionalProperties": False,
                "properties": {
                    "delta": {"type": "number", "exclusiveMinimum": 0},
                    "method": {"enum": ["ratio", "argmax", "direct", "direct-plain", "c0"]},
                    "radius": {"type": "number", "exclusiveMinimum": 0},
                    "window": {"type": "number", "exclusiveMinimum": 0},
                    "check": {"type": "boolean"},
                },
            }}},
        },
        {
            "if": {"properties": {"task": {"const": "check"}}},
            "then": {"properties": {"params": {
                "type": "object", "additionalProperties": False, "required": ["identity"],
                "properties": {
                    "identity": {"enum": ["xi-shift", "tilt-shift", "theta-shift", "field"]},
                    "a": _VEC, "h": _VEC,
                    "functional": {"enum": ["all", *FUNCTIONALS]},
                    "estimator": {"enum": ["tilt", "weight"]},
                },
            }}},
        },
        {
            "if": {"properties": {"task": {"const": "oracle"}}},
            "then": {"properties": {"params": {
                "type": "object", "additionalProperties": False, "required": ["which"],
                "properties": {
                    "which": {"enum": ["alpha2-ratio", "alpha2-argmax", "alpha2-direct", "hr"]},
                    "delta": _NUMS, "window": _NUM, "gamma": _NUM, "x": _NUMS,
                },
            }}},
        },
    ],
    "$defs": {
        "model": {
            "type": "object",
            "required": ["family"],
            "properties": {
                "family": {"enum": list(MODEL_FAMILIES)},
                "alpha": {"type": "number", "exclusiveMinimum": 0, "maximum": 2},
                "scale": {"type": "number", "minimum": 0},
                "dim": {"type": "integer", "minimum": 1},
                "p": {"type": "number", "exclusiveMinimum": 0, "maximum": 1},
                "inner": {"$ref": "#/$defs/model"},
                "base": {"$ref": "#/$defs/model"},
            },
        }
    },
}


class ConfigError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    task: str
    model: dict | None = None
    grid: object = None
    params: dict = field(default_factory=dict)
    seed: int = DEFAULTS["seed"]
    reps: int = DEFAULTS["reps"]
    threads: int = 1
    output: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        out = asdict(self)
        return {k: v for k, v in out.items() if v is not None}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2)

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        validate(data)
        return cls(**data)

    @classmethod
    def from_json(cls, text: str) -> "ExperimentConfig":
        return cls.from_dict(json.loads(text))

    def digest(self) -> str:
        """Hash of the fields that determine the numeric output (not threads or output)."""
        core = {k: v for k, v in self.to_dict().items() if k not in ("threads", "output")}
        blob = json.dumps(core, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:16]


def _key_path(err: jsonschema.ValidationError) -> str:
    return "$" + "".join(f"[{p}]" if isinstance(p, int) else f".{p}" for p in err.absolute_path)


def validate(data: dict) -> None:
    validator = jsonschema.Draft202012Validator(CONFIG_SCHEMA)
    err = jsonschema.exceptions.best_match(validator.iter_errors(data))
    if err is not None:
        raise ConfigError(f"config error at {_key_path(err)}: {err.message}")


# ------------------------------------------------------------- execution


def _floats(v) -> list[float]:
    if isinstance(v, str):
        return [float(x) for x in v.split(",") if x.strip()]
    if isinstance(v, (int, float)):
        return [float(v)]
    return [float(x) for x in v]


def _grid(cfg: ExperimentConfig) -> Grid:
    if cfg.grid is None:
        raise ConfigError("config error at $.grid: a grid is required for this task")
    return Grid.from_spec(cfg.grid)


def _header(cfg: ExperimentConfig) -> dict:
    return {"tool": "tiltmax", "version": __version__, "seed": cfg.seed, "config_hash": cfg.digest()}


def _jsonable(v):
    if isinstance(v, dict):
        return {k: _jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    if isinstance(v, np.ndarray):
        return _jsonable(v.tolist())
    if isinstance(v, (np.floating, float)):
        f = float(v)
        return f if math.isfinite(f) else repr(f)
    if isinstance(v, np.integer):
        return int(v)
    if isinstance(v, np.bool_):
        return bool(v)
    return v


def _report_payload(rep) -> dict:
    d = rep.to_dict()
    return {"estimate": d["estimate"], "stderr": d["stderr"], "reps": d["reps"], "method": d["method"],
            "ci_low": d["ci_low"], "ci_high": d["ci_high"], "flags": d["flags"]}


def _run_simulate(cfg: ExperimentConfig, two_sided: bool = False):
    model = model_from_spec(cfg.model)
    grid = _grid(cfg)
    method = "two-sided" if two_sided else cfg.params.get("method", "dm")
    batch = simulate_fields(model, grid, cfg.reps, cfg.seed, method=method,
                            error_budget=cfg.params.get("error_budget", DEFAULTS["error_budget"]),
                            provenance=bool(cfg.params.get("provenance", False)), threads=cfg.threads)
    table = {"columns": grid.coordinate_labels(), "rows": batch.values, "n_atoms": batch.n_atoms}
    out = {"method": method, "exact": batch.exact, "table": table}
    if batch.provenance is not None:
        out["provenance"] = batch.provenance
    return EXIT_OK, out


def _run_fidi(cfg: ExperimentConfig):
    model = model_from_spec(cfg.model)
    p = cfg.params
    query = FidiQuery(np.asarray(_floats(p["points"])), np.asarray(_floats(p["x"])),
                      scale=p.get("scale", "gumbel"), alpha=float(p.get("alpha", 1.0)))
    method = p.get("method", "mc")
    if method == "mc":
        rep = neglog_fidi_mc(model, query, cfg.reps, cfg.seed)
    elif method == "infargmax":
        rep = neglog_fidi_infargmax(model, query, cfg.reps, cfg.seed)
    elif method in ("empirical", "empirical-direct"):
        sim = "dm" if method == "empirical" else "direct"
        batch = simulate_fields(model, Grid(query.points), cfg.reps, cfg.seed, method=sim,
                                error_budget=p.get("error_budget", DEFAULTS["error_budget"]), threads=cfg.threads)
        rep = empirical_fidi(batch, query).neglog
    else:
        est = hr_model_neglog(model, query)
        return EXIT_OK, {"estimate": est, "stderr": 0.0, "reps": 0, "method": "closed-form"}
    return EXIT_OK, _report_payload(rep)


def _run_pickands(cfg: ExperimentConfig):
    model = model_from_spec(cfg.model)
    p = cfg.params
    delta = float(p.get("delta", DEFAULTS["delta"]))
    radius = float(p.get("radius", DEFAULTS["radius"]))
    check = bool(p.get("check", True))
    method = p.get("method", "ratio")
    if method == "ratio":
        est = pickands_ratio(model, delta, radius, cfg.reps, cfg.seed, check=check)
    elif method == "argmax":
        est = pickands_argmax_prob(model, delta, radius, cfg.reps, cfg.seed, check=check)
    elif method in ("direct", "direct-plain"):
        window = float(p.get("window", DEFAULTS["window"]))
        est = pickands_direct(model, delta, window, cfg.reps, cfg.seed,
                              method="plain" if method == "direct-plain" else "tilted")
    else:
        est = pickands_lower_bound_c0(model, delta, radius, cfg.reps, cfg.seed, check=check)
    out = _report_payload(est.report)
    out.update({"delta": est.delta, "window": est.window, "kind": est.method})
    return EXIT_OK, out


def _run_check(cfg: ExperimentConfig):
    model = model_from_spec(cfg.model)
    p = cfg.params
    a, h = _floats(p.get("a", 0.0)), _floats(p.get("h", 1.0))
    ident = p["identity"]
    if ident == "xi-shift":
        rep = check_xi_shift_gaussian(model, a, h, _grid(cfg))
    elif ident == "theta-shift":
        rep = check_theta_shift(model, a, h, _grid(cfg), reps=cfg.reps, rng=cfg.seed)
    elif ident == "tilt-shift":
        gamma = p.get("functional", "all")
        est = p.get("estimator", "tilt")
        if gamma == "all":
            rep = check_tilt_shift_library(model, a, h, cfg.reps, cfg.seed, estimator=est)
        else:
            rep = check_tilt_shift_mc(model, gamma, a, h, cfg.reps, cfg.seed, estimator=est)
    else:
        batch = simulate_fields(model, _grid(cfg), cfg.reps, child_seed(cfg.seed, 0), threads=cfg.threads)
        rep = check_field_stationarity(batch, h)
    out = rep.to_dict()
    return (EXIT_OK if rep.passed else EXIT_FAIL), out


def _run_oracle(cfg: ExperimentConfig):
    p = cfg.params
    which = p["which"]
    if which == "hr":
        x = _floats(p.get("x", [0.0, 0.0]))
        return EXIT_OK, {"which": which, "gamma": p.get("gamma", 1.0),
                         "value": hr_closed_form(float(p.get("gamma", 1.0)), x[0], x[1])}
    deltas = _floats(p.get("delta", DEFAULTS["delta"]))
    if which == "alpha2-ratio":
        vals = [alpha2_ratio_oracle(d) for d in deltas]
    elif which == "alpha2-argmax":
        vals = [alpha2_argmax_oracle(d) for d in deltas]
    else:
        window = float(p.get("window", DEFAULTS["window"]))
        vals = [alpha2_direct_oracle(d, window) for d in deltas]
    return EXIT_OK, {"which": which, "delta": deltas, "value": vals}


_RUNNERS = {
    "simulate": _run_simulate,
    "extend": lambda cfg: _run_simulate(cfg, two_sided=True),
    "fidi": _run_fidi,
    "pickands": _run_pickands,
    "check": _run_check,
    "oracle": _run_oracle,
}


def run(config: ExperimentConfig) -> tuple[int, dict]:
    """Execute a validated config; returns ``(exit status, result document)``."""
    validate(config.to_dict())
    status, payload = _RUNNERS[config.task](config)
    return status, {"header": _header(config), "task": config.task, "result": _jsonable(payload)}


# ---------------------------------------------------------------- output


def render(doc: dict, fmt: str) -> str:
    if fmt == "json" or "table" not in doc["result"]:
        return json.dumps(doc, indent=2, sort_keys=True) + "\n"
    h = doc["header"]
    buf = io.StringIO()
    buf.write(f"# tool={h['tool']} version={h['version']} seed={h['seed']} config_hash={h['config_hash']}\n")
    table = doc["result"]["table"]
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["replicate", *table["columns"], "n_atoms"])
    for i, (row, atoms) in enumerate(zip(table["rows"], table["n_atoms"])):
        w.writerow([i, *(repr(float(v)) for v in row), atoms])
    return buf.getvalue()


def write_output(doc: dict, cfg: ExperimentConfig, stdout=None) -> None:
    stdout = stdout or sys.stdout
    path = cfg.output.get("path")
    fmt = cfg.output.get("format")
    if fmt is None:
        fmt = "csv" if path and path.endswith(".csv") else ("csv" if "table" in doc["result"] and not path else "json")
    text = render(doc, fmt)
    if path:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        stdout.write(text)


# ------------------------------------------------------------------ argv


def _model_arg(text: str) -> dict:
    """``'{"family": ...}'`` JSON or the shorthand ``family[:key=value,...]``."""
    text = text.strip()
    if text.startswith("{"):
        return json.loads(text)
    name, _, rest = text.partition(":")
    spec: dict = {"family": name}
    for item in filter(None, rest.split(",")):
        k, _, v = item.partition("=")
        try:
            spec[k] = int(v) if k == "dim" else float(v)
        except ValueError:
            spec[k] = v
    return spec


def _grid_arg(text: str):
    text = text.strip()
    return json.loads(text) if text.startswith(("{", "[")) else text


def _global_flags(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("global options")
    g.add_argument("--seed", type=int, default=argparse.SUPPRESS, help="master seed (default 0)")
    g.add_argument("--reps", type=int, default=argparse.SUPPRESS, help="replicates (default 100000)")
    g.add_argument("--threads", type=int, default=argparse.SUPPRESS, help="worker threads (default: host CPUs)")
    g.add_argument("--out", default=argparse.SUPPRESS,
                   help="output path, or 'json' / 'csv' to print that format on stdout")
    g.add_argument("--config", default=argparse.SUPPRESS, help="JSON experiment config")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="tiltmax", description="Max-stable fields from tilted spectral processes.")
    parser.add_argument("--version", action="version", version=f"tiltmax {__version__}")
    _global_flags(parser)
    sub = parser.add_subparsers(dest="command")

    def add(name, help_):
        sp = sub.add_parser(name, help=help_)
        _global_flags(sp)
        return sp

    sp = add("simulate", "simulate fields on a grid (CSV)")
    sp.add_argument("--model", type=_model_arg)
    sp.add_argument("--grid", type=_grid_arg)
    sp.add_argument("--method", choices=["dm", "direct"])
    sp.add_argument("--error-budget", "--budget", type=float, dest="error_budget")
    sp.add_argument("--provenance", action="store_const", const=True,
                    help="keep the winning atom and shape per point (JSON output)")

    sp = add("extend", "simulate the two-sided extension of a one-sided model (CSV)")
    sp.add_argument("--model", type=_model_arg)
    sp.add_argument("--grid", type=_grid_arg)

    sp = add("fidi", "estimate -log P(zeta(t_i) <= x_i)")
    sp.add_argument("--model", type=_model_arg)
    sp.add_argument("--points")
    sp.add_argument("--x")
    sp.add_argument("--method", choices=["mc", "infargmax", "empirical", "empirical-direct", "closed-form"])
    sp.add_argument("--scale", choices=["gumbel", "frechet"])
    sp.add_argument("--alpha", type=float)
    sp.add_argument("--error-budget", "--budget", type=float, dest="error_budget")

    sp = add("pickands", "estimate a discrete Pickands constant")
    sp.add_argument("--model", type=_model_arg)
    sp.add_argument("--delta", type=float)
    sp.add_argument("--method", choices=["ratio", "argmax", "direct", "direct-plain", "c0"])
    sp.add_argument("--radius", type=float)
    sp.add_argument("--window", type=float)
    sp.add_argument("--no-check", dest="check", action="store_const", const=False)

    sp = add("check", "check a shift identity (exit 0 pass, 2 fail)")
    sp.add_argument("--model", type=_model_arg)
    sp.add_argument("--grid", type=_grid_arg)
    sp.add_argument("--identity", choices=["xi-shift", "tilt-shift", "theta-shift", "field"])
    sp.add_argument("--a")
    sp.add_argument("--h")
    sp.add_argument("--functional", choices=["all", *FUNCTIONALS])
    sp.add_argument("--estimator", choices=["tilt", "weight"])

    sp = add("oracle", "evaluate the deterministic oracles")
    sp.add_argument("which", nargs="?", choices=["alpha2-ratio", "alpha2-argmax", "alpha2-direct", "hr"])
    sp.add_argument("--delta")
    sp.add_argument("--window", type=float)
    sp.add_argument("--gamma", type=float)
    sp.add_argument("--x")
    return parser


_TOP_LEVEL = ("model", "grid")
_GLOBALS = ("seed", "reps", "threads", "out", "config")


def config_from_args(args: argparse.Namespace) -> ExperimentConfig:
    ns = vars(args)
    data: dict = {}
    if "config" in ns:
        with open(ns["config"], encoding="utf-8") as fh:
            data = json.load(fh)
        if not isinstance(data, dict):
            raise ConfigError("config error at $: expected an object")
    command = ns.get("command")
    if command:
        if data.get("task", command) != command:
            raise ConfigError(f"config error at $.task: config is for '{data['task']}', command is '{command}'")
        data["task"] = command
    if "task" not in data:
        raise ConfigError("config error at $.task: no subcommand and no config task")
    params = dict(data.get("params", {}))
    for key, val in ns.items():
        if key in _GLOBALS or key == "command" or val is None:
            continue
        if key in _TOP_LEVEL:
            data[key] = val
        else:
            params[key] = val
    if params or "params" in data:
        data["params"] = params
    for key in ("seed", "reps", "threads"):
        if key in ns:
            data[key] = ns[key]
    data.setdefault("threads", DEFAULTS["threads"])
    if "out" in ns:
        out = ns["out"]
        data["output"] = {"format": out} if out in ("json", "csv") else {"path": out}
    return ExperimentConfig.from_dict(data)


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = config_from_args(args)
        status, doc = run(cfg)
        write_output(doc, cfg)
    except ConfigError as exc:
        print(f"tiltmax: {exc}", file=sys.stderr)
        return EXIT_ERROR
    except (ValueError, KeyError, RuntimeError, OSError, np.linalg.LinAlgError, json.JSONDecodeError) as exc:
        print(f"tiltmax: error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    return status


if __name__ == "__main__":
    raise SystemExit(main())
