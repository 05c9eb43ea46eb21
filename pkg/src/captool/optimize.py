"""Constrained minimization of the key-register relative entropy.

The objective is g(rho) = S( G(rho) || Z(G(rho)) ) in bits, with G the
protocol's post-selection map and Z the pinching that dephases the key
register. g is convex on the feasible set

    D = { rho >= 0 : tr(Gamma_k rho) = p_k, tr rho = 1 }

so the three solvers here all bound the same minimum from above:

* spgd  -- projected gradient descent with a heavy-ball momentum term and
  Armijo backtracking; slow but reaches deep minima.
* cgd   -- conditional gradient (Frank-Wolfe): each step minimizes the
  linearized objective over D and moves by a golden-section line search;
  fast at first, stalls at moderate precision.
* comb  -- cgd until it stalls, then spgd from its iterate.

Projection onto D alternates a least-squares affine projection with a PSD
eigenvalue clip (Dykstra's scheme), which converges because both sets are
convex.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .errors import ConfigError, ConstraintInfeasible
from .linalg import (
    DEFAULT_REG,
    hermitize,
    hs_inner,
    matrix_log2_on_support,
    project_psd,
    relative_entropy,
)
from .protocols import (
    ConstraintSet,
    ProtocolSpec,
    apply_pinching,
    apply_post_selection,
    post_selection_adjoint,
)

ARMIJO_C = 1e-4
ARMIJO_MAX_HALVINGS = 30
STAGNATION_WINDOW = 5
DYKSTRA_MAX_ITER = 10000
DYKSTRA_GIVEUP_RESIDUAL = 1e-7
DYKSTRA_TARGET = 1e-12  # internal projection target; membership stays at feas_tol
LINEAR_SUBPROBLEM_MAX_ITER = 500
LINEAR_SUBPROBLEM_RTOL = 1e-8
# Default cgd line-search bracket width. Deliberately coarse: the rough
# per-iteration sub-optimization is what makes cgd fast early and stall at
# moderate precision, the regime comb hands over to spgd.
GOLDEN_TOL = 3e-2

METHODS = ("spgd", "cgd", "comb")


@dataclass
class FeasibleSet:
    """The constraint data plus cached arrays for fast projection.

    Rows are normalized internally so the Gram system stays
    well-conditioned even when POVM weights differ by orders of
    magnitude; membership is always tested against the raw constraints.
    """

    constraints: ConstraintSet
    dim: int
    feas_tol: float = 1e-9

    def __post_init__(self) -> None:
        rows = [np.eye(self.dim, dtype=complex)] if self.constraints.includes_trace_constraint else []
        vals = [1.0] if rows else []
        for g, v in zip(self.constraints.observables, self.constraints.values):
            if g.shape != (self.dim, self.dim):
                raise ConfigError(f"constraint shape {g.shape} does not match dim {self.dim}")
            rows.append(np.asarray(g, dtype=complex))
            vals.append(float(v))
        if not rows:
            raise ConfigError("feasible set needs at least the trace constraint")
        self._rows = np.stack(rows)
        self._targets = np.array(vals)
        norms = np.sqrt(np.einsum("kij,kij->k", self._rows.conj(), self._rows).real)
        self._rows_n = self._rows / norms[:, None, None]
        self._targets_n = self._targets / norms
        gram = np.einsum("aij,bij->ab", self._rows_n.conj(), self._rows_n).real
        # pseudo-inverse tolerates hand-built dependent rows; inconsistent
        # targets then surface as a residual plateau in project_feasible
        self._gram_pinv = np.linalg.pinv(gram, rcond=1e-13)
        self._initial: np.ndarray | None = None

    def expectations(self, x: np.ndarray) -> np.ndarray:
        return np.einsum("kij,ij->k", self._rows.conj(), x).real

    def affine_residual(self, x: np.ndarray) -> float:
        return float(np.max(np.abs(self.expectations(x) - self._targets)))

    def residual(self, x: np.ndarray) -> float:
        """Distance-like violation: affine residual plus any negative eigenvalue."""
        neg = -float(np.linalg.eigvalsh(hermitize(x))[0])
        return max(self.affine_residual(x), max(neg, 0.0))

    def member(self, x: np.ndarray) -> bool:
        return self.residual(x) <= self.feas_tol

    def project_affine(self, x: np.ndarray) -> np.ndarray:
        r = np.einsum("kij,ij->k", self._rows_n.conj(), x).real - self._targets_n
        coeff = self._gram_pinv @ r
        return x - np.tensordot(coeff, self._rows_n, axes=1)


def project_feasible(fs: FeasibleSet, m: np.ndarray) -> np.ndarray:
    """Dykstra alternation between the affine set and the PSD cone.

    Internally drives the residual well below the membership tolerance so
    solvers can resolve objective gaps near 1e-10; a residual plateau
    above the give-up level means no state satisfies the constraints.
    """
    target = min(fs.feas_tol, DYKSTRA_TARGET)
    x = hermitize(m)
    q = np.zeros_like(x)
    last_check = np.inf
    res = np.inf
    for it in range(1, DYKSTRA_MAX_ITER + 1):
        y = fs.project_affine(x)
        z = project_psd(y + q)
        q = y + q - z
        x = z
        res = fs.affine_residual(x)
        if res < target:
            return x
        if it % 500 == 0:
            # residual plateau above the give-up level signals infeasibility
            if res > DYKSTRA_GIVEUP_RESIDUAL and res > 0.99 * last_check:
                raise ConstraintInfeasible(
                    f"projection stalled at residual {res:.3e} after {it} alternations")
            last_check = res
    if res > DYKSTRA_GIVEUP_RESIDUAL:
        raise ConstraintInfeasible(
            f"projection residual {res:.3e} after {DYKSTRA_MAX_ITER} alternations")
    return x


def initial_point(fs: FeasibleSet) -> np.ndarray:
    """Projection of the maximally mixed state onto D; deterministic."""
    if fs._initial is None:
        fs._initial = project_feasible(fs, np.eye(fs.dim, dtype=complex) / fs.dim)
    return fs._initial


@dataclass
class OptimizerConfig:
    method: str = "comb"
    mu: float = 0.9
    zeta0: float = 1.0
    max_iter: int = 5000
    tol: float = 1e-10
    reg: float = DEFAULT_REG
    cgd_stall_window: int = 3
    cgd_stall_rel: float = 1e-6
    cgd_linesearch_tol: float = GOLDEN_TOL
    spgd_fixed_step: float | None = None  # overrides backtracking when set
    cgd_fixed_step: float | None = None   # overrides the line search when set

    def __post_init__(self) -> None:
        if self.method not in METHODS:
            raise ConfigError(f"unknown optimizer method {self.method!r}")
        if not 0.0 <= self.mu < 1.0:
            raise ConfigError(f"mu={self.mu} outside [0, 1)")
        if self.zeta0 <= 0.0:
            raise ConfigError(f"zeta0={self.zeta0} must be positive")
        if self.tol <= 0.0:
            raise ConfigError(f"tol={self.tol} must be positive")
        if self.max_iter < 1:
            raise ConfigError("max_iter must be at least 1")


@dataclass
class IterationTrace:
    """Per-iteration objective, feasibility residual, step size and wall time."""

    iters: list[int] = field(default_factory=list)
    g_bits: list[float] = field(default_factory=list)
    residual: list[float] = field(default_factory=list)
    step: list[float] = field(default_factory=list)
    elapsed_ms: list[float] = field(default_factory=list)

    def append(self, it: int, g: float, res: float, step: float, ms: float) -> None:
        self.iters.append(it)
        self.g_bits.append(g)
        self.residual.append(res)
        self.step.append(step)
        self.elapsed_ms.append(ms)

    def extend_shifted(self, other: "IterationTrace") -> None:
        """Concatenate a follow-on trace, continuing indices and wall time."""
        di = self.iters[-1] if self.iters else 0
        dt = self.elapsed_ms[-1] if self.elapsed_ms else 0.0
        for k in range(len(other.iters)):
            if other.iters[k] == 0 and self.iters:
                continue  # drop the duplicated starting point
            self.append(other.iters[k] + di, other.g_bits[k], other.residual[k],
                        other.step[k], other.elapsed_ms[k] + dt)

    def to_csv(self, path: str | Path | None = None) -> str:
        lines = ["iter,g_bits,residual,step,elapsed_ms"]
        for k in range(len(self.iters)):
            lines.append(
                f"{self.iters[k]},{self.g_bits[k]:.10g},{self.residual[k]:.10g},"
                f"{self.step[k]:.10g},{self.elapsed_ms[k]:.10g}")
        text = "\n".join(lines) + "\n"
        if path is not None:
            Path(path).write_text(text)
        return text


@dataclass
class OptimizationResult:
    rho_star: np.ndarray
    g_star: float
    converged: bool
    iterations: int
    trace: IterationTrace


def objective(spec: ProtocolSpec, rho: np.ndarray, reg: float = DEFAULT_REG) -> float:
    """g(rho) = S(G(rho) || Z(G(rho))) in bits; nonnegative."""
    sigma = apply_post_selection(spec, rho)
    return relative_entropy(sigma, apply_pinching(spec, sigma), reg)


def gradient(spec: ProtocolSpec, rho: np.ndarray, reg: float = DEFAULT_REG) -> np.ndarray:
    """Gradient G^dag(log2 G(rho) - log2 Z(G(rho))) of the objective.

    The identity terms of the matrix-log differential cancel because the
    pinching is trace-preserving and self-adjoint.
    """
    sigma = apply_post_selection(spec, rho)
    diff = matrix_log2_on_support(sigma, reg) - matrix_log2_on_support(apply_pinching(spec, sigma), reg)
    return post_selection_adjoint(spec, diff)


def linear_subproblem(fs: FeasibleSet, w: np.ndarray) -> np.ndarray:
    """Approximate argmin over D of tr(w sigma) by fixed-step projected descent."""
    w = hermitize(w)
    sigma = initial_point(fs)
    alpha = 1.0 / (1.0 + float(np.max(np.abs(w))))
    f_prev = hs_inner(w, sigma)
    for _ in range(LINEAR_SUBPROBLEM_MAX_ITER):
        sigma_new = project_feasible(fs, sigma - alpha * w)
        f_new = hs_inner(w, sigma_new)
        done = abs(f_new - f_prev) < LINEAR_SUBPROBLEM_RTOL * max(1.0, abs(f_prev))
        sigma, f_prev = sigma_new, f_new
        if done:
            break
    return sigma


def _golden_section(f, tol: float | None = None) -> tuple[float, float]:
    """Minimize a unimodal f on [0, 1]; returns (argmin, min)."""
    if tol is None:
        tol = GOLDEN_TOL
    invphi = (np.sqrt(5.0) - 1.0) / 2.0
    a, b = 0.0, 1.0
    c = b - invphi * (b - a)
    d = a + invphi * (b - a)
    fc, fd = f(c), f(d)
    while b - a > tol:
        if fc < fd:
            b, d, fd = d, c, fc
            c = b - invphi * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + invphi * (b - a)
            fd = f(d)
    candidates = [(0.0, f(0.0)), (1.0, f(1.0)), ((a + b) / 2.0, f((a + b) / 2.0))]
    return min(candidates, key=lambda t: t[1])


def spgd_minimize(
    spec: ProtocolSpec,
    fs: FeasibleSet,
    cfg: OptimizerConfig,
    rho0: np.ndarray | None = None,
) -> OptimizationResult:
    """Momentum-projected gradient descent, Armijo backtracking by default."""
    if cfg.method != "spgd":
        raise ConfigError(f"spgd_minimize called with method={cfg.method!r}")
    t0 = time.perf_counter()
    rho = initial_point(fs) if rho0 is None else project_feasible(fs, rho0)
    g = objective(spec, rho, cfg.reg)
    trace = IterationTrace()
    trace.append(0, g, fs.residual(rho), 0.0, (time.perf_counter() - t0) * 1e3)
    chi = np.zeros_like(rho)
    stagnation = 0
    converged = False
    iterations = 0
    zeta_warm = cfg.zeta0
    for s in range(1, cfg.max_iter + 1):
        iterations = s
        grad = gradient(spec, rho, cfg.reg)
        accepted = False
        step_taken = 0.0
        if cfg.spgd_fixed_step is not None:
            chi = cfg.mu * chi - cfg.spgd_fixed_step * grad
            rho = project_feasible(fs, rho + chi)
            g_prev, g = g, objective(spec, rho, cfg.reg)
            step_taken = cfg.spgd_fixed_step
            accepted = True
        else:
            for with_momentum in (True, False):
                base = cfg.mu * chi if with_momentum else np.zeros_like(chi)
                # warm start: resume near the last accepted step size
                zeta = min(cfg.zeta0, 4.0 * zeta_warm)
                for _ in range(ARMIJO_MAX_HALVINGS):
                    chi_trial = base - zeta * grad
                    try:
                        rho_trial = project_feasible(fs, rho + chi_trial)
                    except ConstraintInfeasible:
                        # projection converges slowly from far trial points;
                        # treat as a rejected step (the set is known nonempty)
                        zeta *= 0.5
                        continue
                    g_trial = objective(spec, rho_trial, cfg.reg)
                    # sufficient decrease against the realized (projected)
                    # displacement; equals c * zeta * |grad|^2 when the
                    # projection is inactive
                    move2 = hs_inner(rho_trial - rho, rho_trial - rho)
                    if g_trial <= g - (ARMIJO_C / zeta) * move2 and g_trial < g:
                        chi, rho, g_prev, g = chi_trial, rho_trial, g, g_trial
                        step_taken = zeta
                        zeta_warm = zeta
                        accepted = True
                        break
                    if move2 < 1e-26:
                        break  # the projection pins the trial in place; no step helps
                    zeta *= 0.5
                if accepted:
                    break
                chi = np.zeros_like(chi)  # momentum reset before the retry
            if not accepted:
                g_prev = g  # no admissible descent step: hold position
        trace.append(s, g, fs.residual(rho), step_taken, (time.perf_counter() - t0) * 1e3)
        stagnation = stagnation + 1 if abs(g_prev - g) < cfg.tol else 0
        if stagnation >= STAGNATION_WINDOW:
            converged = True
            break
    return OptimizationResult(rho, g, converged, iterations, trace)


def cgd_minimize(
    spec: ProtocolSpec,
    fs: FeasibleSet,
    cfg: OptimizerConfig,
    rho0: np.ndarray | None = None,
) -> OptimizationResult:
    """Conditional gradient descent; stops when relative progress stalls."""
    if cfg.method != "cgd":
        raise ConfigError(f"cgd_minimize called with method={cfg.method!r}")
    t0 = time.perf_counter()
    rho = initial_point(fs) if rho0 is None else project_feasible(fs, rho0)
    g = objective(spec, rho, cfg.reg)
    trace = IterationTrace()
    trace.append(0, g, fs.residual(rho), 0.0, (time.perf_counter() - t0) * 1e3)
    stall = 0
    converged = False
    iterations = 0
    for s in range(1, cfg.max_iter + 1):
        iterations = s
        grad = gradient(spec, rho, cfg.reg)
        omega = linear_subproblem(fs, grad)
        direction = omega - rho
        if cfg.cgd_fixed_step is not None:
            zeta = min(max(cfg.cgd_fixed_step, 0.0), 1.0)
            g_new = objective(spec, hermitize(rho + zeta * direction), cfg.reg)
        else:
            zeta, g_new = _golden_section(
                lambda t: objective(spec, hermitize(rho + t * direction), cfg.reg),
                tol=cfg.cgd_linesearch_tol)
        if g_new > g:  # guard: never move uphill, count as a stalled round
            zeta, g_new = 0.0, g
        rho = hermitize(rho + zeta * direction)
        rel = (g - g_new) / max(abs(g), 1e-15)
        g_prev, g = g, g_new
        trace.append(s, g, fs.residual(rho), zeta, (time.perf_counter() - t0) * 1e3)
        stall = stall + 1 if rel < cfg.cgd_stall_rel else 0
        if stall >= cfg.cgd_stall_window:
            converged = True  # the stall criterion is cgd's normal stop
            break
    return OptimizationResult(rho, g, converged, iterations, trace)


def comb_minimize(
    spec: ProtocolSpec,
    fs: FeasibleSet,
    cfg: OptimizerConfig,
    rho0: np.ndarray | None = None,
) -> OptimizationResult:
    """cgd until stall, then spgd from its iterate; traces are concatenated."""
    if cfg.method != "comb":
        raise ConfigError(f"comb_minimize called with method={cfg.method!r}")
    first = cgd_minimize(spec, fs, replace(cfg, method="cgd"), rho0=rho0)
    second = spgd_minimize(spec, fs, replace(cfg, method="spgd"), rho0=first.rho_star)
    trace = first.trace
    trace.extend_shifted(second.trace)
    return OptimizationResult(
        second.rho_star, second.g_star, second.converged,
        first.iterations + second.iterations, trace)


def minimize(
    spec: ProtocolSpec,
    fs: FeasibleSet,
    cfg: OptimizerConfig,
    rho0: np.ndarray | None = None,
) -> OptimizationResult:
    """Dispatch on cfg.method."""
    if cfg.method == "spgd":
        return spgd_minimize(spec, fs, cfg, rho0)
    if cfg.method == "cgd":
        return cgd_minimize(spec, fs, cfg, rho0)
    return comb_minimize(spec, fs, cfg, rho0)
