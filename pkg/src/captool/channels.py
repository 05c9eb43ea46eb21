"""Noise channels and the joint observation statistics they induce.

Observation tables play the role of measured data: every entry is the
joint probability of an (Alice outcome, Bob outcome) pair on the noisy
shared state, and the optimization downstream is constrained to states
reproducing exactly those numbers. Tables can also be loaded from CSV so
real measured statistics can replace the simulation.
"""

from __future__ import annotations

import io
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ConfigError, DegenerateStatistics, DomainError, ShapeError
from .linalg import hermitize, hs_inner, kron
from .protocols import ANTI_CORRELATED_BASES, KET0, KET1, ProtocolSpec

CHANNEL_KINDS = ("isotropic-depolarizing", "vacuum-depolarizing")


@dataclass(frozen=True)
class ChannelModel:
    """Depolarizing noise of strength epsilon.

    "isotropic-depolarizing" mixes with the full identity; the
    "vacuum-depolarizing" variant spreads the noise over the non-vacuum
    block of the measured arm only (its normalization is trace-preserving
    just when that arm has an extra vacuum level, d_A >= 3).
    """

    kind: str
    epsilon: float

    def __post_init__(self) -> None:
        if self.kind not in CHANNEL_KINDS:
            raise ConfigError(f"unknown channel kind {self.kind!r}")
        if not 0.0 <= self.epsilon <= 1.0:
            raise ConfigError(f"epsilon={self.epsilon} outside [0, 1]")


@dataclass(frozen=True)
class ObservationTable:
    """Joint outcome probabilities, rows = Alice outcomes, cols = Bob outcomes."""

    pr: np.ndarray

    def __post_init__(self) -> None:
        pr = np.asarray(self.pr, dtype=float)
        object.__setattr__(self, "pr", pr)
        if pr.ndim != 2:
            raise ShapeError(f"observation table must be 2-D, got shape {pr.shape}")
        if float(pr.min(initial=0.0)) < -1e-12:
            raise DomainError("observation table has a negative entry")

    @property
    def total(self) -> float:
        return float(self.pr.sum())

    def to_csv(self, path: str | Path | None = None) -> str:
        buf = io.StringIO()
        buf.write("i,j,pr\n")
        for i in range(self.pr.shape[0]):
            for j in range(self.pr.shape[1]):
                buf.write(f"{i},{j},{self.pr[i, j]:.10g}\n")
        text = buf.getvalue()
        if path is not None:
            Path(path).write_text(text)
        return text

    @classmethod
    def from_csv(cls, source: str | Path) -> "ObservationTable":
        text = Path(source).read_text() if isinstance(source, Path) or "\n" not in str(source) else str(source)
        lines = [ln.strip() for ln in text.splitlines() if ln.strip()]
        if not lines or lines[0].replace(" ", "") != "i,j,pr":
            raise ConfigError("observation CSV must start with header 'i,j,pr'")
        entries = []
        for ln in lines[1:]:
            parts = ln.split(",")
            if len(parts) != 3:
                raise ConfigError(f"malformed observation CSV line: {ln!r}")
            entries.append((int(parts[0]), int(parts[1]), float(parts[2])))
        n_a = max(e[0] for e in entries) + 1
        n_b = max(e[1] for e in entries) + 1
        pr = np.zeros((n_a, n_b))
        seen = np.zeros((n_a, n_b), dtype=bool)
        for i, j, v in entries:
            pr[i, j] = v
            seen[i, j] = True
        if not seen.all():
            raise ConfigError("observation CSV does not cover all outcome pairs")
        return cls(pr)


@dataclass(frozen=True)
class QberReport:
    """Per-basis and aggregate quantum bit error rates."""

    q_z: float
    q_x: float
    q_y: float | None
    q_f: float

    def __post_init__(self) -> None:
        for name, q in (("q_z", self.q_z), ("q_x", self.q_x), ("q_y", self.q_y), ("q_f", self.q_f)):
            if q is None:
                continue
            if q < -1e-12 or q > 0.5 + 1e-9:
                raise DomainError(f"{name}={q} outside [0, 1/2]")


def bell_state(dim_a: int = 2) -> np.ndarray:
    """Projector onto (|00> + |11>)/sqrt(2), optionally embedded beside a vacuum level."""
    if dim_a not in (2, 3):
        raise ConfigError(f"bell_state supports dim_a in (2, 3), got {dim_a}")
    zero = np.zeros(dim_a, dtype=complex)
    zero[: 2] = KET0
    one = np.zeros(dim_a, dtype=complex)
    one[: 2] = KET1
    psi = (np.kron(zero, KET0) + np.kron(one, KET1)) / np.sqrt(2.0)
    return np.outer(psi, psi.conj())


def apply_channel(ch: ChannelModel, rho: np.ndarray, dims: tuple[int, int]) -> np.ndarray:
    """Push a state through the depolarizing channel."""
    d_a, d_b = int(dims[0]), int(dims[1])
    rho = np.asarray(rho, dtype=complex)
    if rho.shape != (d_a * d_b, d_a * d_b):
        raise ShapeError(f"state shape {rho.shape} inconsistent with dims {dims}")
    eps = ch.epsilon
    if ch.kind == "isotropic-depolarizing":
        mix = np.eye(d_a * d_b, dtype=complex) / (d_a * d_b)
    else:
        if d_a < 3:
            raise ConfigError("vacuum-depolarizing channel requires a vacuum level (d_A >= 3)")
        block = np.eye(d_a, dtype=complex)
        block[-1, -1] = 0.0  # vacuum level takes no noise
        mix = np.kron(block, np.eye(d_b, dtype=complex)) / (d_b * (d_a - 1))
    return hermitize(eps * mix + (1.0 - eps) * rho)


def observations_from_state(spec: ProtocolSpec, rho: np.ndarray) -> ObservationTable:
    """Joint outcome probabilities tr(rho F_i^A ox F_j^B) for every pair."""
    pr = np.empty((len(spec.alice_povm.elements), len(spec.bob_povm.elements)))
    for i, fa in enumerate(spec.alice_povm.elements):
        for j, fb in enumerate(spec.bob_povm.elements):
            pr[i, j] = hs_inner(kron(fa, fb), rho)
    return ObservationTable(np.clip(pr, 0.0, None))


def simulate_observations(spec: ProtocolSpec, ch: ChannelModel) -> ObservationTable:
    """Statistics of the noisy Bell pair under the protocol's measurements."""
    rho = bell_state(spec.dim_a)
    noisy = apply_channel(ch, rho, (spec.dim_a, spec.dim_b))
    return observations_from_state(spec, noisy)


def extract_qber(spec: ProtocolSpec, table: ObservationTable, mode: str = "max") -> QberReport:
    """Per-basis error rates and the aggregate forward error rate.

    A basis error is a bit disagreement, except in bases where the ideal
    pair anti-correlates (the y basis), where agreement is the error.
    """
    if mode not in ("max", "mean", "z-only"):
        raise ConfigError(f"unknown QBER mode {mode!r}")
    pr = np.asarray(table.pr, dtype=float)
    n_a, n_b = len(spec.alice_povm.labels), len(spec.bob_povm.labels)
    if pr.shape != (n_a, n_b):
        raise ShapeError(f"observation table shape {pr.shape}, expected {(n_a, n_b)}")

    def outcome(lab: str) -> tuple[str, str] | None:
        if len(lab) == 2 and lab[0] in "zxy" and lab[1] in "01":
            return lab[0], lab[1]
        return None  # completion outcomes carry no bit

    rates: dict[str, float] = {}
    bases = ("z", "x", "y")
    for basis in bases:
        err = 0.0
        tot = 0.0
        present = False
        for i, la in enumerate(spec.alice_povm.labels):
            oa = outcome(la)
            if oa is None or oa[0] != basis:
                continue
            for j, lb in enumerate(spec.bob_povm.labels):
                ob = outcome(lb)
                if ob is None or ob[0] != basis:
                    continue
                present = True
                tot += pr[i, j]
                agree = oa[1] == ob[1]
                is_error = agree if basis in ANTI_CORRELATED_BASES else not agree
                if is_error:
                    err += pr[i, j]
        if not present:
            continue
        if tot < 1e-12:
            raise DegenerateStatistics(f"matched-basis probability in {basis} is {tot:.3e}")
        rates[basis] = err / tot

    if "z" not in rates or "x" not in rates:
        raise DegenerateStatistics("protocol statistics lack a z or x sector")
    q_y = rates.get("y")
    if mode == "z-only":
        q_f = rates["z"]
    elif mode == "mean":
        q_f = float(np.mean(list(rates.values())))
    else:
        q_f = max(rates.values())
    return QberReport(q_z=rates["z"], q_x=rates["x"], q_y=q_y, q_f=q_f)
