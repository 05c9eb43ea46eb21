"""Protocol models: measurement POVMs, post-selection maps and key pinchings.

Three protocol families are built here:

* ``dl04`` -- ideal single-photon two-basis protocol on a qubit pair,
  z basis chosen with probability p_z and x with 1 - p_z.
* ``dl04-6state`` -- same with an extra y-basis checking measurement.
* ``dl04-mismatch`` -- sender-side detectors with unequal efficiencies
  and an explicit no-click (vacuum) outcome, modeled on a qutrit
  (qubit + vacuum level) for the measured arm.

Each protocol carries a post-selection map G built from the square roots
of the measuring party's POVM elements, grouped per measurement basis,
writing the measured bit into a two-level key register K. The pinching
projectors dephase that register, which is all the capacity objective
needs downstream.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, InconsistentObservations, ShapeError
from .linalg import hermitian_eig, hermitize, hs_inner, kron

POVM_PSD_TOL = 1e-10
POVM_SUM_TOL = 1e-10
KRAUS_TOL = 1e-9
PINCH_TOL = 1e-10
PRUNE_TOL = 1e-10
CONSISTENCY_TOL = 1e-8

KET0 = np.array([1.0, 0.0], dtype=complex)
KET1 = np.array([0.0, 1.0], dtype=complex)
KET_PLUS = (KET0 + KET1) / np.sqrt(2.0)
KET_MINUS = (KET0 - KET1) / np.sqrt(2.0)
KET_PLUS_I = (KET0 + 1j * KET1) / np.sqrt(2.0)
KET_MINUS_I = (KET0 - 1j * KET1) / np.sqrt(2.0)

#: bases in which the ideal Bell pair anti-correlates rather than correlates
ANTI_CORRELATED_BASES = frozenset({"y"})


def _proj(v: np.ndarray) -> np.ndarray:
    return np.outer(v, v.conj())


def _psd_sqrt(m: np.ndarray) -> np.ndarray:
    w, v = hermitian_eig(m)
    return hermitize((v * np.sqrt(np.clip(w, 0.0, None))) @ v.conj().T)


def _frozen(m: np.ndarray) -> np.ndarray:
    out = np.asarray(m, dtype=complex)
    out.setflags(write=False)
    return out


@dataclass(frozen=True)
class PovmSet:
    """POVM elements with outcome labels like "z0", "x1", "nc"."""

    elements: tuple[np.ndarray, ...]
    labels: tuple[str, ...]

    def validate(self, dim: int) -> None:
        if len(self.elements) != len(self.labels):
            raise ConfigError("POVM elements and labels differ in length")
        total = np.zeros((dim, dim), dtype=complex)
        for el, lab in zip(self.elements, self.labels):
            if el.shape != (dim, dim):
                raise ConfigError(f"POVM element {lab} has shape {el.shape}, expected {(dim, dim)}")
            wmin = float(np.linalg.eigvalsh(hermitize(el))[0])
            if wmin < -POVM_PSD_TOL:
                raise ConfigError(f"POVM element {lab} has eigenvalue {wmin:.3e}")
            total = total + el
        if float(np.max(np.abs(total - np.eye(dim)))) > POVM_SUM_TOL:
            raise ConfigError("POVM elements do not sum to the identity")


@dataclass(frozen=True)
class KrausMap:
    """Trace-nonincreasing map X -> sum_m K_m X K_m^dag."""

    operators: tuple[np.ndarray, ...]
    trace_preserving: bool = field(default=False)

    @property
    def dim_in(self) -> int:
        return self.operators[0].shape[1]

    @property
    def dim_out(self) -> int:
        return self.operators[0].shape[0]

    def validate(self) -> None:
        din = self.dim_in
        total = np.zeros((din, din), dtype=complex)
        for k in self.operators:
            if k.shape[1] != din:
                raise ConfigError("Kraus operators have inconsistent input dimension")
            total = total + k.conj().T @ k
        wmax = float(np.linalg.eigvalsh(hermitize(total))[-1])
        if wmax > 1.0 + KRAUS_TOL:
            raise ConfigError(f"Kraus map increases trace: max eig of sum K^dag K = {wmax}")
        preserving = float(np.max(np.abs(total - np.eye(din)))) <= KRAUS_TOL
        if preserving != self.trace_preserving:
            raise ConfigError("trace_preserving flag disagrees with sum K^dag K")


@dataclass(frozen=True)
class PinchingSet:
    """Orthogonal projectors summing to the identity on the map output space."""

    projectors: tuple[np.ndarray, ...]

    @property
    def dim(self) -> int:
        return self.projectors[0].shape[0]

    def validate(self) -> None:
        d = self.dim
        total = np.zeros((d, d), dtype=complex)
        for a, ka in enumerate(self.projectors):
            if float(np.max(np.abs(ka @ ka - ka))) > PINCH_TOL:
                raise ConfigError(f"pinching projector {a} is not idempotent")
            if float(np.max(np.abs(ka - ka.conj().T))) > PINCH_TOL:
                raise ConfigError(f"pinching projector {a} is not Hermitian")
            for kb in self.projectors[a + 1:]:
                if float(np.max(np.abs(ka @ kb))) > PINCH_TOL:
                    raise ConfigError("pinching projectors are not mutually orthogonal")
            total = total + ka
        if float(np.max(np.abs(total - np.eye(d)))) > PINCH_TOL:
            raise ConfigError("pinching projectors do not sum to the identity")


@dataclass(frozen=True)
class ProtocolSpec:
    """Everything the capacity pipeline needs to know about one protocol."""

    name: str
    dim_a: int
    dim_b: int
    alice_povm: PovmSet
    bob_povm: PovmSet
    post_selection: KrausMap
    pinching: PinchingSet
    params: dict[str, float]

    @property
    def dim(self) -> int:
        return self.dim_a * self.dim_b

    def validate(self) -> None:
        self.alice_povm.validate(self.dim_a)
        self.bob_povm.validate(self.dim_b)
        self.post_selection.validate()
        self.pinching.validate()
        if self.post_selection.dim_in != self.dim:
            raise ConfigError("post-selection input dimension does not match dim_a * dim_b")
        if self.pinching.dim != self.post_selection.dim_out:
            raise ConfigError("pinching dimension does not match post-selection output")


@dataclass(frozen=True)
class ConstraintSet:
    """Independent expectation constraints tr(Gamma_k rho) = p_k.

    The identity (trace-one) constraint is tracked by the flag and is not
    repeated in observables.
    """

    observables: tuple[np.ndarray, ...]
    values: tuple[float, ...]
    includes_trace_constraint: bool = True


def _key_kraus(branches: list[list[np.ndarray]], dim_b: int) -> tuple[np.ndarray, ...]:
    """One Kraus operator per basis branch, writing the bit into register K.

    branches[m] lists the measuring party's POVM elements of branch m in
    bit order; the operator is (sum_bit |bit><.| ox sqrt(F_bit)) ox I_B.
    """
    kets = (KET0, KET1)
    identity_b = np.eye(dim_b, dtype=complex)
    ops = []
    for elements in branches:
        acc = 0.0
        for bit, el in enumerate(elements):
            acc = acc + np.kron(kets[bit].reshape(2, 1), _psd_sqrt(el))
        ops.append(_frozen(np.kron(acc, identity_b)))
    return tuple(ops)


def _key_pinching(dim_ab: int) -> PinchingSet:
    eye = np.eye(dim_ab, dtype=complex)
    return PinchingSet(tuple(_frozen(np.kron(_proj(k), eye)) for k in (KET0, KET1)))


def _qubit_povm(weights: dict[str, float]) -> tuple[tuple[np.ndarray, ...], tuple[str, ...]]:
    states = {
        "z0": KET0, "z1": KET1,
        "x0": KET_PLUS, "x1": KET_MINUS,
        "y0": KET_PLUS_I, "y1": KET_MINUS_I,
    }
    elements = []
    labels = []
    for label, weight in weights.items():
        elements.append(_frozen(weight * _proj(states[label])))
        labels.append(label)
    return tuple(elements), tuple(labels)


def build_dl04(p_z: float) -> ProtocolSpec:
    """Ideal two-basis protocol on a qubit pair, z chosen with probability p_z."""
    if not 0.0 < p_z < 1.0:
        raise ConfigError(f"p_z={p_z} outside (0, 1)")
    p_x = 1.0 - p_z
    weights = {"z0": p_z, "z1": p_z, "x0": p_x, "x1": p_x}
    elements, labels = _qubit_povm(weights)
    povm = PovmSet(elements, labels)
    kraus = KrausMap(
        _key_kraus([[elements[0], elements[1]], [elements[2], elements[3]]], 2),
        trace_preserving=True,
    )
    spec = ProtocolSpec(
        name="dl04", dim_a=2, dim_b=2,
        alice_povm=povm, bob_povm=povm,
        post_selection=kraus, pinching=_key_pinching(4),
        params={"p_z": p_z},
    )
    spec.validate()
    return spec


def build_dl04_six_state(p_z: float, p_x: float) -> ProtocolSpec:
    """Three-basis variant: y-basis outcomes added as check-only measurements.

    Basis weights satisfy p_z + p_x + p_y = 1 with p_y inferred. The key
    map keeps the z and x branches only; y outcomes constrain the state
    but produce no key bit.
    """
    if not 0.0 < p_z < 1.0:
        raise ConfigError(f"p_z={p_z} outside (0, 1)")
    if p_x < 0.0:
        raise ConfigError(f"p_x={p_x} negative")
    p_y = 1.0 - p_z - p_x
    if p_y < 0.0:
        raise ConfigError(f"p_z + p_x = {p_z + p_x} exceeds 1")
    weights = {"z0": p_z, "z1": p_z, "x0": p_x, "x1": p_x, "y0": p_y, "y1": p_y}
    elements, labels = _qubit_povm(weights)
    povm = PovmSet(elements, labels)
    kraus_ops = _key_kraus([[elements[0], elements[1]], [elements[2], elements[3]]], 2)
    spec = ProtocolSpec(
        name="dl04-6state", dim_a=2, dim_b=2,
        alice_povm=povm, bob_povm=povm,
        post_selection=KrausMap(kraus_ops, trace_preserving=False),
        pinching=_key_pinching(4),
        params={"p_z": p_z, "p_x": p_x, "p_y": p_y},
    )
    spec.validate()
    return spec


def build_dl04_mismatch(
    p_z: float,
    eta_big: float,
    eta: float,
    povm_mode: str = "corrected",
) -> ProtocolSpec:
    """Mismatched-detector variant: measured arm is qubit + vacuum (dim 3).

    The four click outcomes carry detector efficiencies; eta_big is the
    better detector's efficiency and eta the ratio of the worse one to it.
    A completion element collects no-click events. In the default
    "corrected" mode the two detectors split the outcomes bitwise in both
    bases (bit-1 outcomes see efficiency eta_big * eta); "verbatim" keeps
    the published operator table as printed, with the second z outcome on
    |0><0| and the eta factor on both x outcomes. The verbatim table
    double-counts the |0><0| direction, so it only forms a POVM for small
    enough eta_big (roughly eta_big * p_z * (1 + eta) <= 1); outside that
    range construction fails.
    """
    if not 0.0 < p_z < 1.0:
        raise ConfigError(f"p_z={p_z} outside (0, 1)")
    if not 0.0 < eta_big <= 1.0:
        raise ConfigError(f"eta_big={eta_big} outside (0, 1]")
    if not 0.0 < eta <= 1.0:
        raise ConfigError(f"eta={eta} outside (0, 1]")
    if povm_mode not in ("corrected", "verbatim"):
        raise ConfigError(f"unknown povm_mode {povm_mode!r}")

    def embed(m: np.ndarray) -> np.ndarray:
        out = np.zeros((3, 3), dtype=complex)
        out[:2, :2] = m
        return out

    p_x = 1.0 - p_z
    if povm_mode == "corrected":
        qubit_parts = [
            p_z * eta_big * _proj(KET0),
            p_z * eta_big * eta * _proj(KET1),
            p_x * eta_big * _proj(KET_PLUS),
            p_x * eta_big * eta * _proj(KET_MINUS),
        ]
    else:
        qubit_parts = [
            p_z * eta_big * _proj(KET0),
            p_z * eta_big * eta * _proj(KET0),
            p_x * eta_big * eta * _proj(KET_PLUS),
            p_x * eta_big * eta * _proj(KET_MINUS),
        ]
    alice_elements = [embed(m) for m in qubit_parts]
    completion = np.eye(3, dtype=complex) - sum(alice_elements)
    alice = PovmSet(
        tuple(_frozen(m) for m in alice_elements) + (_frozen(completion),),
        ("z0", "z1", "x0", "x1", "nc"),
    )
    bob_elements, bob_labels = _qubit_povm({"z0": p_z, "z1": p_z, "x0": p_x, "x1": p_x})
    bob = PovmSet(bob_elements, bob_labels)
    kraus_ops = _key_kraus(
        [[alice.elements[0], alice.elements[1]], [alice.elements[2], alice.elements[3]]], 2
    )
    spec = ProtocolSpec(
        name="dl04-mismatch", dim_a=3, dim_b=2,
        alice_povm=alice, bob_povm=bob,
        post_selection=KrausMap(kraus_ops, trace_preserving=False),
        pinching=_key_pinching(6),
        params={"p_z": p_z, "eta_big": eta_big, "eta": eta},
    )
    spec.validate()
    return spec


def build_protocol(name: str, p_z: float = 0.999, p_x: float | None = None,
                   eta: float = 1.0, eta_big: float = 1.0,
                   povm_mode: str = "corrected") -> ProtocolSpec:
    """Build a protocol by CLI name with its default parameters."""
    if name == "dl04":
        return build_dl04(p_z)
    if name == "dl04-6state":
        return build_dl04_six_state(p_z, 0.0005 if p_x is None else p_x)
    if name == "dl04-mismatch":
        return build_dl04_mismatch(p_z, eta_big, eta, povm_mode)
    raise ConfigError(f"unknown protocol {name!r}")


def apply_post_selection(spec: ProtocolSpec, rho: np.ndarray) -> np.ndarray:
    """G(rho) = sum_m K_m rho K_m^dag."""
    rho = np.asarray(rho, dtype=complex)
    if rho.shape != (spec.dim, spec.dim):
        raise ShapeError(f"state shape {rho.shape} does not match protocol dim {spec.dim}")
    out = np.zeros((spec.post_selection.dim_out,) * 2, dtype=complex)
    for k in spec.post_selection.operators:
        out = out + k @ rho @ k.conj().T
    return hermitize(out)


def post_selection_adjoint(spec: ProtocolSpec, x: np.ndarray) -> np.ndarray:
    """Adjoint map G^dag(X) = sum_m K_m^dag X K_m."""
    x = np.asarray(x, dtype=complex)
    dout = spec.post_selection.dim_out
    if x.shape != (dout, dout):
        raise ShapeError(f"operator shape {x.shape} does not match map output dim {dout}")
    out = np.zeros((spec.dim, spec.dim), dtype=complex)
    for k in spec.post_selection.operators:
        out = out + k.conj().T @ x @ k
    return hermitize(out)


def apply_pinching(spec: ProtocolSpec, x: np.ndarray) -> np.ndarray:
    """Z(X) = sum_l kappa_l X kappa_l, dephasing the key register."""
    x = np.asarray(x, dtype=complex)
    out = np.zeros_like(x)
    for kap in spec.pinching.projectors:
        out = out + kap @ x @ kap
    return hermitize(out)


def constraints_from_observations(spec: ProtocolSpec, table) -> ConstraintSet:
    """Turn a joint observation table into a pruned independent constraint set.

    One candidate constraint (F_i^A ox F_j^B, Pr_ij) arises per outcome
    pair, on top of the trace-one constraint. POVM completeness makes the
    raw list rank-deficient, so linearly dependent rows are pruned; a
    dependent row whose target disagrees with the value implied by the
    retained rows signals contradictory statistics.
    """
    pr = np.asarray(table.pr, dtype=float)
    n_a, n_b = len(spec.alice_povm.elements), len(spec.bob_povm.elements)
    if pr.shape != (n_a, n_b):
        raise ShapeError(f"observation table shape {pr.shape}, expected {(n_a, n_b)}")
    if float(np.min(pr)) < -1e-12 or float(np.max(pr)) > 1.0 + 1e-12:
        raise InconsistentObservations("observation entries outside [0, 1]")

    dim = spec.dim
    candidates: list[tuple[np.ndarray, float]] = [(np.eye(dim, dtype=complex), 1.0)]
    for i, fa in enumerate(spec.alice_povm.elements):
        for j, fb in enumerate(spec.bob_povm.elements):
            candidates.append((kron(fa, fb), float(pr[i, j])))

    retained: list[tuple[np.ndarray, float]] = []
    ortho: list[np.ndarray] = []  # orthonormal basis of the retained span
    for gamma, value in candidates:
        norm = np.sqrt(hs_inner(gamma, gamma))
        if norm <= 0.0:
            # zero-weight outcome: consistent only with a zero target
            if abs(value) > CONSISTENCY_TOL:
                raise InconsistentObservations(
                    f"zero observable paired with nonzero probability {value}")
            continue
        residual = gamma.copy()
        for b in ortho:
            residual = residual - hs_inner(b, residual) * b
        res_norm = np.sqrt(max(hs_inner(residual, residual), 0.0))
        if res_norm < PRUNE_TOL * norm:
            # dependent: its target must follow from the retained rows
            gram = np.array([[hs_inner(a[0], b[0]) for b in retained] for a in retained])
            rhs = np.array([hs_inner(r[0], gamma) for r in retained])
            coeff = np.linalg.solve(gram, rhs)
            implied = float(np.dot(coeff, [r[1] for r in retained]))
            if abs(implied - value) > CONSISTENCY_TOL:
                raise InconsistentObservations(
                    f"dependent constraint with target {value} but implied {implied}")
            continue
        retained.append((gamma, value))
        ortho.append(residual / res_norm)

    # first retained candidate is always the identity; report it via the flag
    observables = tuple(_frozen(g) for g, _ in retained[1:])
    values = tuple(v for _, v in retained[1:])
    return ConstraintSet(observables, values, includes_trace_constraint=True)
