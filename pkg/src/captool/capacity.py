"""Secrecy capacities, parameter sweeps and the zero-capacity boundary.

The optimized objective g bounds the eavesdropper's knowledge; error
correction is charged per channel at the Shannon limit scaled by gamma
(gamma = 1 by default). Two figures of merit:

* secure capacity   g - gamma * h(q_f)          (forward channel only)
* reliable capacity g - gamma * (h(q_f) + h(q_b))

with h the binary entropy and q_f, q_b the forward/backward error rates.
q_b is never simulated here: it is an input, defaulting to q_f.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import __version__
from .channels import ChannelModel, ObservationTable, extract_qber, simulate_observations
from .errors import ConfigError, DomainError, NoBoundary
from .linalg import binary_entropy
from .optimize import FeasibleSet, OptimizerConfig, minimize
from .protocols import ProtocolSpec, build_protocol, constraints_from_observations

CSV_COLUMNS = (
    "protocol", "eps", "q_f", "q_b", "eta", "eta_big", "p_z",
    "g_bits", "cs_secure", "cs_reliable", "iterations", "elapsed_ms", "converged",
)
CSV_HEADER = ",".join(CSV_COLUMNS)

IDEAL_PROTOCOLS = ("dl04", "dl04-6state")
PROTOCOL_NAMES = IDEAL_PROTOCOLS + ("dl04-mismatch",)


def secure_capacity(g: float, q_f: float, gamma: float = 1.0) -> float:
    """g - gamma * h(q_f), in bits per use."""
    if g < 0.0:
        raise DomainError(f"g={g} negative")
    if not 0.0 <= q_f <= 0.5 + 1e-12:
        raise DomainError(f"q_f={q_f} outside [0, 1/2]")
    if not 0.0 < gamma <= 1.0:
        raise DomainError(f"gamma={gamma} outside (0, 1]")
    return g - gamma * binary_entropy(min(q_f, 0.5))


def reliable_capacity(g: float, q_f: float, q_b: float, gamma: float = 1.0) -> float:
    """g - gamma * (h(q_f) + h(q_b)), in bits per use."""
    if not 0.0 <= q_b <= 0.5 + 1e-12:
        raise DomainError(f"q_b={q_b} outside [0, 1/2]")
    return secure_capacity(g, q_f, gamma) - gamma * binary_entropy(min(q_b, 0.5))


@dataclass
class CapacityResult:
    g_bits: float
    q_f: float
    q_b: float
    gamma: float
    cs_secure: float
    cs_reliable: float
    converged: bool
    iterations: int
    elapsed_ms: float
    params: dict[str, float]
    trace: object | None = None


def run_point(
    spec: ProtocolSpec,
    source: ChannelModel | ObservationTable,
    cfg: OptimizerConfig,
    q_b: float | None = None,
    qber_mode: str = "max",
    gamma: float = 1.0,
    keep_trace: bool = False,
) -> CapacityResult:
    """Constrain, optimize, and convert the optimum into capacities.

    source is either a noise channel (statistics get simulated) or a
    ready-made observation table. q_b defaults to the extracted q_f.
    """
    t0 = time.perf_counter()
    if isinstance(source, ChannelModel):
        table = simulate_observations(spec, source)
    else:
        table = source
    constraints = constraints_from_observations(spec, table)
    fs = FeasibleSet(constraints, spec.dim)
    qber = extract_qber(spec, table, qber_mode)
    q_f = qber.q_f
    q_b_eff = q_f if q_b is None else float(q_b)
    res = minimize(spec, fs, cfg)
    g = max(res.g_star, 0.0)  # clip the solver's tiny negative round-off
    cs_s = secure_capacity(g, q_f, gamma)
    cs_r = cs_s - gamma * binary_entropy(min(q_b_eff, 0.5))
    if not 0.0 <= q_b_eff <= 0.5 + 1e-12:
        raise DomainError(f"q_b={q_b_eff} outside [0, 1/2]")
    elapsed = (time.perf_counter() - t0) * 1e3
    return CapacityResult(
        g_bits=g, q_f=q_f, q_b=q_b_eff, gamma=gamma,
        cs_secure=cs_s, cs_reliable=cs_r,
        converged=res.converged, iterations=res.iterations, elapsed_ms=elapsed,
        params=dict(spec.params),
        trace=res.trace if keep_trace else None,
    )


@dataclass(frozen=True)
class GridPoint:
    """One sweep coordinate; eta fields stay None for ideal protocols."""

    eps: float
    q_b: float | None = None
    eta: float | None = None
    eta_big: float | None = None


@dataclass
class SweepSpec:
    """A protocol, a parameter grid and the optimizer settings to sweep with."""

    protocol: str
    p_z: float = 0.999
    p_x: float | None = None
    povm_mode: str = "corrected"
    eps_grid: tuple[float, ...] | None = None
    qf_grid: tuple[float, ...] | None = None
    qb_grid: tuple[float, ...] | None = None
    eta_grid: tuple[float, ...] | None = None
    eta_big_grid: tuple[float, ...] | None = None
    q_b: float | None = None          # fixed backward error rate; None -> q_f
    qber_mode: str = "max"
    gamma: float = 1.0
    optimizer: OptimizerConfig = field(default_factory=OptimizerConfig)
    emit_timings: bool = False

    def __post_init__(self) -> None:
        if self.protocol not in PROTOCOL_NAMES:
            raise ConfigError(f"unknown protocol {self.protocol!r}")
        if self.protocol == "dl04-mismatch":
            if not self.eps_grid or not self.eta_grid or not self.eta_big_grid:
                raise ConfigError("mismatch sweeps need eps, eta and eta_big grids")
        else:
            has_eps = bool(self.eps_grid)
            has_q = bool(self.qf_grid)
            if has_eps == has_q:
                raise ConfigError("provide exactly one of eps_grid or qf_grid")
            if self.qb_grid and not self.qf_grid:
                raise ConfigError("qb_grid requires qf_grid")

    def grid(self) -> list[GridPoint]:
        points: list[GridPoint] = []
        if self.protocol == "dl04-mismatch":
            for eps in self.eps_grid:
                for eta_big in self.eta_big_grid:
                    for eta in self.eta_grid:
                        points.append(GridPoint(eps=float(eps), q_b=self.q_b,
                                                eta=float(eta), eta_big=float(eta_big)))
        elif self.qf_grid:
            qbs = self.qb_grid if self.qb_grid else (None,)
            for q_f in self.qf_grid:
                for q_b in qbs:
                    qb_val = self.q_b if q_b is None else float(q_b)
                    # isotropic depolarizing noise has q = eps / 2 exactly
                    points.append(GridPoint(eps=2.0 * float(q_f), q_b=qb_val))
        else:
            for eps in self.eps_grid:
                points.append(GridPoint(eps=float(eps), q_b=self.q_b))
        if not points:
            raise ConfigError("sweep grid is empty")
        return points


@dataclass
class SweepRow:
    point: GridPoint
    result: CapacityResult | None
    error: str | None = None


@dataclass
class SweepResult:
    spec: SweepSpec
    rows: list[SweepRow]
    software_version: str = __version__
    created_at: str = ""        # UTC timestamp, set by run_sweep
    config_digest: str | None = None  # set when driven from a serialized config

    @property
    def all_converged(self) -> bool:
        return all(r.error is None and r.result.converged for r in self.rows)


def build_sweep_protocol(sw: SweepSpec, point: GridPoint) -> ProtocolSpec:
    return build_protocol(
        sw.protocol, p_z=sw.p_z, p_x=sw.p_x,
        eta=point.eta if point.eta is not None else 1.0,
        eta_big=point.eta_big if point.eta_big is not None else 1.0,
        povm_mode=sw.povm_mode,
    )


def channel_for(sw: SweepSpec, point: GridPoint) -> ChannelModel:
    kind = "vacuum-depolarizing" if sw.protocol == "dl04-mismatch" else "isotropic-depolarizing"
    return ChannelModel(kind, point.eps)


def evaluate_point(sw: SweepSpec, point: GridPoint, keep_trace: bool = False) -> SweepRow:
    """One grid point; hard per-point errors are captured, not raised."""
    try:
        spec = build_sweep_protocol(sw, point)
        result = run_point(
            spec, channel_for(sw, point), sw.optimizer,
            q_b=point.q_b, qber_mode=sw.qber_mode, gamma=sw.gamma,
            keep_trace=keep_trace,
        )
        return SweepRow(point, result)
    except Exception as exc:  # recorded per row; the sweep continues
        return SweepRow(point, None, error=f"{type(exc).__name__}: {exc}")


def run_sweep(sw: SweepSpec, on_row: Callable[[SweepRow], None] | None = None,
              keep_traces: bool = False, config_digest: str | None = None) -> SweepResult:
    """Evaluate the grid in order, reporting each row as it completes."""
    created = time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime())
    rows: list[SweepRow] = []
    for point in sw.grid():
        row = evaluate_point(sw, point, keep_trace=keep_traces)
        rows.append(row)
        if on_row is not None:
            on_row(row)
    return SweepResult(sw, rows, created_at=created, config_digest=config_digest)


def _fmt(value: float | int | None) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, int):
        return str(value)
    return f"{value:.10g}"


def format_row(sw: SweepSpec, row: SweepRow) -> str:
    """One CSV line in the fixed column order; absent fields stay empty."""
    p = row.point
    r = row.result
    fields = [
        sw.protocol,
        _fmt(p.eps),
        _fmt(r.q_f if r else None),
        _fmt(r.q_b if r else None),
        _fmt(p.eta),
        _fmt(p.eta_big),
        _fmt(sw.p_z),
        _fmt(r.g_bits if r else None),
        _fmt(r.cs_secure if r else None),
        _fmt(r.cs_reliable if r else None),
        _fmt(r.iterations if r else None),
        _fmt(r.elapsed_ms if (r and sw.emit_timings) else None),
        _fmt(r.converged if r else False),
    ]
    return ",".join(fields)


def find_zero_boundary(
    spec: ProtocolSpec,
    q_f: float,
    cfg: OptimizerConfig,
    tol: float = 1e-4,
    qber_mode: str = "max",
    gamma: float = 1.0,
) -> float:
    """Backward error rate q_b* where the reliable capacity crosses zero.

    g depends on the forward statistics only, so one optimization serves
    the whole bisection in q_b.
    """
    if spec.name not in IDEAL_PROTOCOLS:
        raise ConfigError("zero boundary search is defined for the isotropic-channel protocols")
    if not 0.0 <= q_f <= 0.5:
        raise DomainError(f"q_f={q_f} outside [0, 1/2]")
    channel = ChannelModel("isotropic-depolarizing", 2.0 * q_f)
    res = run_point(spec, channel, cfg, q_b=0.0, qber_mode=qber_mode, gamma=gamma)
    c0 = res.cs_reliable  # capacity at q_b = 0
    if c0 <= 0.0:
        raise NoBoundary(f"capacity at q_b=0 is {c0:.6g}; nothing to cross")

    def cap(q_b: float) -> float:
        return c0 - gamma * binary_entropy(q_b)

    lo, hi = 0.0, 0.5
    if cap(hi) > 1e-9:
        raise NoBoundary("capacity stays positive up to q_b = 1/2")
    if cap(hi) >= 0.0:  # crossing sits at the endpoint up to round-off
        return hi
    while hi - lo > tol:
        mid = (lo + hi) / 2.0
        if cap(mid) > 0.0:
            lo = mid
        else:
            hi = mid
    return (lo + hi) / 2.0
