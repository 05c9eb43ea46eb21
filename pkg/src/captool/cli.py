"""Command-line front end: point runs, sweeps and boundary searches.

Everything is batch-oriented: a run reads a validated JSON config (or
flags), computes, and leaves behind a results CSV plus a run record with
the config digest and per-point diagnostics. Output files are written to
a temporary name and renamed into place so an interrupted run never
leaves a torn file; sweep rows stream into a ``.partial`` file as they
complete so long sweeps are recoverable.

Exit codes: 0 success, 1 configuration error, 2 infeasible constraints,
3 optimizer non-convergence, 4 sweep finished with non-converged rows.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import os
import sys
import tempfile
import time
from dataclasses import asdict
from importlib import resources
from pathlib import Path

import jsonschema

from . import __version__
from .capacity import (
    CSV_HEADER,
    GridPoint,
    SweepRow,
    SweepSpec,
    evaluate_point,
    find_zero_boundary,
    format_row,
    run_point,
)
from .channels import ChannelModel
from .errors import CaptoolError, ConfigError, ConstraintInfeasible, NoBoundary
from .optimize import OptimizerConfig
from .protocols import build_protocol

log = logging.getLogger("captool")

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_INFEASIBLE = 2
EXIT_NONCONVERGED = 3
EXIT_PARTIAL = 4

PROTOCOL_CHOICES = ("dl04", "dl04-6state", "dl04-mismatch")
METHOD_CHOICES = ("spgd", "cgd", "comb")
PRESET_NAMES = ("fig2", "fig3", "fig4", "fig5")

SCHEMA_VERSION = 1

CONFIG_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "required": ["schema_version", "protocol", "channel", "optimizer", "output"],
    "properties": {
        "schema_version": {"const": SCHEMA_VERSION},
        "protocol": {
            "type": "object",
            "additionalProperties": False,
            "required": ["name"],
            "properties": {
                "name": {"enum": list(PROTOCOL_CHOICES)},
                "p_z": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
                "p_x": {"type": "number", "minimum": 0, "maximum": 1},
                "povm_mode": {"enum": ["corrected", "verbatim"]},
            },
        },
        "channel": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "eps": {"type": "array", "items": {"type": "number", "minimum": 0, "maximum": 1}},
                "q_f": {"type": "array", "items": {"type": "number", "minimum": 0, "maximum": 0.5}},
                "q_b": {"type": "array", "items": {"type": "number", "minimum": 0, "maximum": 0.5}},
            },
        },
        "mismatch": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "eta": {"type": "array", "items": {"type": "number", "exclusiveMinimum": 0, "maximum": 1}},
                "eta_big": {"type": "array", "items": {"type": "number", "exclusiveMinimum": 0, "maximum": 1}},
            },
        },
        "optimizer": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "method": {
                    "anyOf": [
                        {"enum": list(METHOD_CHOICES)},
                        {"type": "array", "items": {"enum": list(METHOD_CHOICES)}, "minItems": 1},
                    ]
                },
                "mu": {"type": "number", "minimum": 0, "exclusiveMaximum": 1},
                "zeta0": {"type": "number", "exclusiveMinimum": 0},
                "max_iter": {"type": "integer", "minimum": 1},
                "tol": {"type": "number", "exclusiveMinimum": 0},
                "reg": {"type": "number", "minimum": 0, "maximum": 1e-6},
                "cgd_stall_window": {"type": "integer", "minimum": 1},
                "cgd_stall_rel": {"type": "number", "exclusiveMinimum": 0},
                "cgd_linesearch_tol": {"type": "number", "exclusiveMinimum": 0, "maximum": 1},
            },
        },
        "sweep": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "q_b": {"type": "number", "minimum": 0, "maximum": 0.5},
                "qber_mode": {"enum": ["max", "mean", "z-only"]},
                "gamma": {"type": "number", "exclusiveMinimum": 0, "maximum": 1},
                "jobs": {"type": "integer", "minimum": 1},
            },
        },
        "output": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "results": {"type": "string"},
                "record": {"type": "string"},
                "emit_traces": {"type": "boolean"},
                "timings": {"type": "boolean"},
            },
        },
    },
}


class _Parser(argparse.ArgumentParser):
    """argparse variant that reports usage problems as ConfigError (exit 1)."""

    def error(self, message):  # noqa: D102
        raise ConfigError(message)


def canonical_config(config: dict) -> str:
    """Key-order-independent serialization used for hashing and round trips."""
    return json.dumps(config, sort_keys=True, separators=(",", ":"))


def config_digest(config: dict) -> str:
    return hashlib.sha256(canonical_config(config).encode()).hexdigest()


def validate_config(config: dict) -> dict:
    try:
        jsonschema.validate(config, CONFIG_SCHEMA)
    except jsonschema.ValidationError as exc:
        raise ConfigError(f"config schema violation: {exc.message}") from exc
    return config


def load_config(path_or_preset: str) -> dict:
    p = Path(path_or_preset)
    if p.exists():
        text = p.read_text()
    elif path_or_preset in PRESET_NAMES:
        text = resources.files("captool").joinpath(f"presets/{path_or_preset}.json").read_text()
    else:
        raise ConfigError(f"config file {path_or_preset!r} not found")
    try:
        config = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from exc
    return validate_config(config)


def atomic_write(path: Path, text: str) -> None:
    """Write via a temp file in the target directory, then rename into place."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name + ".", suffix=".tmp")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _optimizer_from_config(opt_cfg: dict, method: str) -> OptimizerConfig:
    kwargs = {k: v for k, v in opt_cfg.items() if k != "method"}
    return OptimizerConfig(method=method, **kwargs)


def sweep_spec_from_config(config: dict, method: str) -> SweepSpec:
    proto = config["protocol"]
    chan = config.get("channel", {})
    mism = config.get("mismatch", {})
    sw = config.get("sweep", {})
    out = config.get("output", {})
    return SweepSpec(
        protocol=proto["name"],
        p_z=proto.get("p_z", 0.999),
        p_x=proto.get("p_x"),
        povm_mode=proto.get("povm_mode", "corrected"),
        eps_grid=tuple(chan["eps"]) if chan.get("eps") else None,
        qf_grid=tuple(chan["q_f"]) if chan.get("q_f") else None,
        qb_grid=tuple(chan["q_b"]) if chan.get("q_b") else None,
        eta_grid=tuple(mism["eta"]) if mism.get("eta") else None,
        eta_big_grid=tuple(mism["eta_big"]) if mism.get("eta_big") else None,
        q_b=sw.get("q_b"),
        qber_mode=sw.get("qber_mode", "max"),
        gamma=sw.get("gamma", 1.0),
        optimizer=_optimizer_from_config(config.get("optimizer", {}), method),
        emit_timings=out.get("timings", False),
    )


def _configure_logging() -> None:
    level_name = os.environ.get("CAPTOOL_LOG", "warn").lower()
    levels = {"error": logging.ERROR, "warn": logging.WARNING,
              "info": logging.INFO, "debug": logging.DEBUG}
    if level_name not in levels:
        raise ConfigError(f"CAPTOOL_LOG must be one of {sorted(levels)}, got {level_name!r}")
    logging.basicConfig(stream=sys.stderr, level=levels[level_name],
                        format="%(levelname)s %(name)s: %(message)s")


def _parse_grid(text: str) -> list[float]:
    """'start:stop:step' inclusive of the endpoint up to rounding."""
    try:
        start, stop, step = (float(t) for t in text.split(":"))
    except ValueError as exc:
        raise ConfigError(f"grid {text!r} is not start:stop:step") from exc
    if step <= 0 or stop < start:
        raise ConfigError(f"grid {text!r} must have step > 0 and stop >= start")
    values = []
    k = 0
    while True:
        v = start + k * step
        if v > stop + 1e-12:
            break
        values.append(round(v, 12))
        k += 1
    return values


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="captool", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"captool {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    point = sub.add_parser("point", help="compute capacities at one parameter point")
    point.add_argument("--protocol", required=True, choices=PROTOCOL_CHOICES)
    point.add_argument("--epsilon", required=True, type=float)
    point.add_argument("--q-b", type=float, default=None)
    point.add_argument("--eta", type=float, default=1.0)
    point.add_argument("--eta-big", type=float, default=1.0)
    point.add_argument("--pz", type=float, default=0.999)
    point.add_argument("--px", type=float, default=None)
    point.add_argument("--method", choices=METHOD_CHOICES, default="comb")
    point.add_argument("--tol", type=float, default=None)
    point.add_argument("--max-iter", type=int, default=None)
    point.add_argument("--povm-mode", choices=("corrected", "verbatim"), default="corrected")
    point.add_argument("--out", type=Path, default=None)
    point.add_argument("--emit-trace", type=Path, default=None)

    sweep = sub.add_parser("sweep", help="run a parameter sweep from a JSON config")
    sweep.add_argument("--config", required=True,
                       help="config path or preset name (fig2, fig3, fig4, fig5)")
    sweep.add_argument("--out", required=True, type=Path, help="output directory")
    sweep.add_argument("--jobs", type=int, default=None)

    boundary = sub.add_parser("boundary", help="zero-capacity boundary q_b*(q_f)")
    boundary.add_argument("--protocol", required=True, choices=("dl04", "dl04-6state"))
    boundary.add_argument("--qf-grid", required=True, help="start:stop:step")
    boundary.add_argument("--tol", type=float, default=1e-4)
    boundary.add_argument("--pz", type=float, default=0.999)
    boundary.add_argument("--px", type=float, default=None)
    boundary.add_argument("--method", choices=METHOD_CHOICES, default="comb")
    boundary.add_argument("--out", type=Path, default=None)
    return parser


def cmd_point(args) -> int:
    if not 0.0 <= args.epsilon <= 1.0:
        raise ConfigError(f"--epsilon {args.epsilon} outside [0, 1]")
    if args.q_b is not None and not 0.0 <= args.q_b <= 0.5:
        raise ConfigError(f"--q-b {args.q_b} outside [0, 1/2]")
    spec = build_protocol(args.protocol, p_z=args.pz, p_x=args.px,
                          eta=args.eta, eta_big=args.eta_big, povm_mode=args.povm_mode)
    kind = "vacuum-depolarizing" if args.protocol == "dl04-mismatch" else "isotropic-depolarizing"
    channel = ChannelModel(kind, args.epsilon)
    opt_kwargs = {}
    if args.tol is not None:
        opt_kwargs["tol"] = args.tol
    if args.max_iter is not None:
        opt_kwargs["max_iter"] = args.max_iter
    cfg = OptimizerConfig(method=args.method, **opt_kwargs)
    result = run_point(spec, channel, cfg, q_b=args.q_b, keep_trace=args.emit_trace is not None)
    sw = SweepSpec(
        protocol=args.protocol, p_z=args.pz, p_x=args.px, povm_mode=args.povm_mode,
        eps_grid=(args.epsilon,),
        eta_grid=(args.eta,) if args.protocol == "dl04-mismatch" else None,
        eta_big_grid=(args.eta_big,) if args.protocol == "dl04-mismatch" else None,
        optimizer=cfg, emit_timings=True,
    )
    point = GridPoint(
        eps=args.epsilon, q_b=args.q_b,
        eta=args.eta if args.protocol == "dl04-mismatch" else None,
        eta_big=args.eta_big if args.protocol == "dl04-mismatch" else None,
    )
    row = format_row(sw, SweepRow(point, result))
    if args.out is not None:
        atomic_write(args.out, row + "\n")
    else:
        print(row)
    if args.emit_trace is not None and result.trace is not None:
        atomic_write(args.emit_trace, result.trace.to_csv())
    return EXIT_OK if result.converged else EXIT_NONCONVERGED


def _run_sweep_config(config: dict, out_dir: Path, jobs: int | None) -> int:
    methods = config.get("optimizer", {}).get("method", "comb")
    if isinstance(methods, str):
        methods = [methods]
    sw_jobs = jobs if jobs is not None else config.get("sweep", {}).get("jobs", 1)
    out = config.get("output", {})
    results_name = out.get("results", "results.csv")
    record_name = out.get("record", "run_record.json")
    emit_traces = out.get("emit_traces", False)

    out_dir.mkdir(parents=True, exist_ok=True)
    partial = out_dir / (results_name + ".partial")
    started = time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime())
    t0 = time.perf_counter()

    tasks = []
    for method in methods:
        sw = sweep_spec_from_config(config, method)
        for point in sw.grid():
            tasks.append((method, sw, point))
    if not tasks:
        raise ConfigError("sweep grid is empty")

    rows = []
    with partial.open("w") as fh:
        fh.write(CSV_HEADER + "\n")
        fh.flush()

        def finish_row(method, sw, row):
            rows.append((method, sw, row))
            fh.write(format_row(sw, row) + "\n")
            fh.flush()
            if emit_traces and row.result is not None and row.result.trace is not None:
                p = row.point
                tag = f"{method}_eps{p.eps:g}"
                if p.eta is not None:
                    tag += f"_eta{p.eta:g}_etabig{p.eta_big:g}"
                if p.q_b is not None:
                    tag += f"_qb{p.q_b:g}"
                atomic_write(out_dir / f"trace_{tag}.csv", row.result.trace.to_csv())

        if sw_jobs <= 1:
            for method, sw, point in tasks:
                finish_row(method, sw, evaluate_point(sw, point, keep_trace=emit_traces))
        else:
            from concurrent.futures import ProcessPoolExecutor
            with ProcessPoolExecutor(max_workers=sw_jobs) as pool:
                futures = [pool.submit(evaluate_point, sw, point, emit_traces)
                           for method, sw, point in tasks]
                for (method, sw, _point), fut in zip(tasks, futures):
                    finish_row(method, sw, fut.result())

    csv_text = CSV_HEADER + "\n" + "".join(format_row(sw, row) + "\n" for method, sw, row in rows)
    atomic_write(out_dir / results_name, csv_text)
    partial.unlink(missing_ok=True)

    errors = [
        {"point": asdict(row.point), "method": method, "error": row.error}
        for method, sw, row in rows if row.error is not None
    ]
    record = {
        "schema_version": SCHEMA_VERSION,
        "config_digest": config_digest(config),
        "config": config,
        "started_at": started,
        "finished_at": time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime()),
        "elapsed_ms": (time.perf_counter() - t0) * 1e3,
        "software_version": __version__,
        "rows": [
            {
                "method": method,
                "point": asdict(row.point),
                "converged": bool(row.result.converged) if row.result else False,
                "g_bits": row.result.g_bits if row.result else None,
                "cs_secure": row.result.cs_secure if row.result else None,
                "cs_reliable": row.result.cs_reliable if row.result else None,
                "iterations": row.result.iterations if row.result else None,
                "elapsed_ms": row.result.elapsed_ms if row.result else None,
                "error": row.error,
            }
            for method, sw, row in rows
        ],
        "errors": errors,
    }
    atomic_write(out_dir / record_name, json.dumps(record, indent=2, sort_keys=True) + "\n")

    all_ok = all(row.error is None and row.result.converged for _m, _s, row in rows)
    return EXIT_OK if all_ok else EXIT_PARTIAL


def cmd_sweep(args) -> int:
    config = load_config(args.config)
    return _run_sweep_config(config, args.out, args.jobs)


def cmd_boundary(args) -> int:
    qf_values = _parse_grid(args.qf_grid)
    if not qf_values:
        raise ConfigError("empty q_f grid")
    spec = build_protocol(args.protocol, p_z=args.pz, p_x=args.px)
    cfg = OptimizerConfig(method=args.method)
    lines = ["q_f,q_b_star"]
    for q_f in qf_values:
        try:
            q_b_star = find_zero_boundary(spec, q_f, cfg, tol=args.tol)
            lines.append(f"{q_f:.10g},{q_b_star:.10g}")
        except NoBoundary:
            lines.append(f"{q_f:.10g},")
    text = "\n".join(lines) + "\n"
    if args.out is not None:
        atomic_write(args.out, text)
    else:
        print(text, end="")
    return EXIT_OK


def main(argv: list[str] | None = None) -> int:
    try:
        _configure_logging()
        parser = build_parser()
        args = parser.parse_args(argv)
        if args.command == "point":
            return cmd_point(args)
        if args.command == "sweep":
            return cmd_sweep(args)
        return cmd_boundary(args)
    except ConfigError as exc:
        log.error("configuration error: %s", exc)
        print(f"captool: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ConstraintInfeasible as exc:
        log.error("infeasible constraints: %s", exc)
        print(f"captool: infeasible constraints: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except CaptoolError as exc:
        log.error("%s", exc)
        print(f"captool: error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
