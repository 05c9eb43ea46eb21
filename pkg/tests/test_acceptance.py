"""Acceptance criteria, one test per criterion, each printing a PASS line.

Run with ``pytest tests/test_acceptance.py -v -s``. Expected values come
from exact limits, an independent brute-force oracle (oracles.py), and
structural/monotonicity properties; no asserted number is taken on faith
from a plot.
"""

from __future__ import annotations

import time

import numpy as np
import pytest

from captool import (
    ChannelModel,
    OptimizerConfig,
    SweepSpec,
    apply_pinching,
    apply_post_selection,
    bell_state,
    build_dl04,
    build_dl04_mismatch,
    build_dl04_six_state,
    cgd_minimize,
    comb_minimize,
    constraints_from_observations,
    find_zero_boundary,
    initial_point,
    objective,
    gradient,
    project_feasible,
    run_point,
    run_sweep,
    simulate_observations,
    spgd_minimize,
)
from captool.capacity import format_row
from captool.errors import NoBoundary
from captool.linalg import binary_entropy, hermitize, hs_inner
from captool.optimize import FeasibleSet
from conftest import feasible_set_for, random_hermitian
from oracles import (
    brute_force_g,
    central_difference,
    feasible_directions,
    interior_feasible_point,
)

CFG = OptimizerConfig(method="comb", tol=1e-9)
P_Z = 0.999


@pytest.fixture(scope="module")
def dl04_spec():
    return build_dl04(P_Z)


@pytest.fixture(scope="module")
def dl04_g():
    """Memoized optimized g for ideal dl04 keyed by q = eps/2."""
    spec = build_dl04(P_Z)
    cache: dict[float, float] = {}

    def get(q: float) -> float:
        q = round(float(q), 10)
        if q not in cache:
            fs = feasible_set_for(spec, 2.0 * q)
            cache[q] = comb_minimize(spec, fs, OptimizerConfig(method="comb", tol=1e-9)).g_star
        return cache[q]

    return get


def test_criterion_1_noiseless_limit(dl04_spec):
    channel = ChannelModel("isotropic-depolarizing", 0.0)
    for method in ("spgd", "cgd", "comb"):
        t0 = time.perf_counter()
        res = run_point(dl04_spec, channel, OptimizerConfig(method=method))
        wall = time.perf_counter() - t0
        assert res.cs_reliable == pytest.approx(1.0, abs=1e-3), method
        assert res.converged, method
        assert wall < 10.0, f"{method} took {wall:.1f}s"
    print("\n[criterion 1] PASS: noiseless dl04 capacity = 1.000 +/- 1e-3 for all solvers")


def test_criterion_2_oracle_equivalence(dl04_spec):
    for eps in (0.04, 0.1, 0.2):
        fs = feasible_set_for(dl04_spec, eps)
        spgd = spgd_minimize(dl04_spec, fs, OptimizerConfig(method="spgd"))
        oracle = brute_force_g(dl04_spec, fs, restarts=50)
        assert abs(spgd.g_star - oracle) < 1e-4, f"eps={eps}: {spgd.g_star} vs {oracle}"
    print("[criterion 2] PASS: spgd matches 50-restart brute-force oracle within 1e-4")


def test_criterion_3_gradient_correctness(dl04_spec):
    protos = [
        (dl04_spec, 0.1, None),
        (build_dl04_six_state(P_Z, 0.0005), 0.1, None),
        (build_dl04_mismatch(P_Z, 0.5, 0.8), 0.05, "block"),
    ]
    rng = np.random.default_rng(99)
    for spec, eps, mode in protos:
        fs = feasible_set_for(spec, eps)
        if spec.name == "dl04-6state":
            # tomographically complete statistics leave no feasible
            # directions; check along general traceless directions at a
            # full-rank smoothing instead
            rho = hermitize(0.97 * initial_point(fs) + 0.03 * np.eye(4, dtype=complex) / 4)
            dirs = []
            for _ in range(10):
                d = random_hermitian(rng, 4)
                d = d - np.trace(d) / 4 * np.eye(4)
                dirs.append(d / np.sqrt(hs_inner(d, d)))
        else:
            support = None
            if mode == "block":
                diag = np.ones(spec.dim)
                diag[-spec.dim_b:] = 0.0
                support = np.diag(diag.astype(complex))
            rho = interior_feasible_point(fs, rng, support=support)
            dirs = feasible_directions(fs, rng, 10, support=support)
        grad = gradient(spec, rho)
        for d in dirs:
            analytic = hs_inner(grad, d)
            # step 2e-6 keeps the t^2 truncation below 1e-5 relative even
            # for directions with near-zero directional derivative
            numeric = central_difference(lambda x: objective(spec, x), rho, d, step=2e-6)
            assert analytic == pytest.approx(numeric, rel=1e-5, abs=1e-9), spec.name
    print("[criterion 3] PASS: analytic gradient matches central differences (rel < 1e-5)")


def test_criterion_4_six_state_ordering():
    dl04 = build_dl04(P_Z)
    six = build_dl04_six_state(P_Z, 0.0005)
    qs = (0.01, 0.02, 0.03, 0.04, 0.05, 0.06, 0.07, 0.08)
    for q in qs:
        channel = ChannelModel("isotropic-depolarizing", 2.0 * q)
        rc_dl04 = run_point(dl04, channel, CFG).cs_reliable
        rc_six = run_point(six, channel, CFG).cs_reliable
        assert rc_six >= rc_dl04 - 1e-6, f"q={q}: {rc_six} < {rc_dl04}"
    print("[criterion 4] PASS: six-state capacity >= dl04 capacity at 8 grid points")


def test_criterion_5_capacity_surface(dl04_spec, dl04_g):
    qs = np.linspace(0.005, 0.095, 10)
    # reliable capacity over the 10 x 10 (q_f, q_b) grid from 10 optimized g's
    rc = np.array([[dl04_g(qf) - binary_entropy(qf) - binary_entropy(qb) for qb in qs]
                   for qf in qs])
    assert np.all(np.diff(rc, axis=0) <= 1e-6), "not nonincreasing in q_f"
    assert np.all(np.diff(rc, axis=1) <= 1e-6), "not nonincreasing in q_b"

    # the zero boundary must separate the grid's signs
    for i, qf in enumerate(qs):
        try:
            qb_star = find_zero_boundary(dl04_spec, float(qf), CFG, tol=1e-4)
        except NoBoundary:
            assert np.all(rc[i, :] <= 1e-9)
            continue
        for j, qb in enumerate(qs):
            if qb < qb_star - 1e-3:
                assert rc[i, j] > -1e-9
            elif qb > qb_star + 1e-3:
                assert rc[i, j] < 1e-9

    # diagonal zero crossing
    lo, hi = 0.04, 0.09
    while hi - lo > 5e-4:
        mid = (lo + hi) / 2.0
        if dl04_g(mid) - 2.0 * binary_entropy(mid) > 0.0:
            lo = mid
        else:
            hi = mid
    crossing = (lo + hi) / 2.0
    assert crossing == pytest.approx(0.062, abs=0.005)
    print(f"[criterion 5] PASS: capacity surface monotone, boundary consistent, "
          f"diagonal crossing at q = {crossing:.4f}")


def test_criterion_6_mismatch_families():
    etas = (1.0, 0.9, 0.8, 0.7, 0.6, 0.5)
    eps_grid = (0.0, 0.01, 0.025, 0.05)
    eta_bigs = (1.0, 0.5)
    rc = {}
    for eps in eps_grid:
        for eta_big in eta_bigs:
            for eta in etas:
                spec = build_dl04_mismatch(P_Z, eta_big, eta)
                res = run_point(spec, ChannelModel("vacuum-depolarizing", eps), CFG)
                assert res.converged
                rc[(eps, eta_big, eta)] = res.cs_reliable

    assert rc[(0.0, 1.0, 1.0)] == pytest.approx(1.0, abs=1e-3)
    for eps in eps_grid:
        for eta_big in eta_bigs:
            caps = [rc[(eps, eta_big, eta)] for eta in etas]
            assert all(b <= a + 1e-6 for a, b in zip(caps, caps[1:])), \
                f"not nonincreasing in eta at eps={eps}, eta_big={eta_big}"
    for eta_big in eta_bigs:
        for eta in etas:
            family = [rc[(eps, eta_big, eta)] for eps in eps_grid]
            assert all(b <= a + 1e-6 for a, b in zip(family, family[1:])), \
                f"families not ordered by eps at eta_big={eta_big}, eta={eta}"
    print("[criterion 6] PASS: mismatch families ordered in eta and eps; "
          "no-mismatch point reproduces capacity 1")


def test_criterion_7_solver_dynamics(dl04_spec):
    fs = feasible_set_for(dl04_spec, 0.1)
    initial_point(fs)  # shared warm cache so wall times compare fairly

    t0 = time.perf_counter()
    spgd = spgd_minimize(dl04_spec, fs, OptimizerConfig(method="spgd", tol=1e-10))
    wall_spgd = time.perf_counter() - t0
    t0 = time.perf_counter()
    comb = comb_minimize(dl04_spec, fs, OptimizerConfig(method="comb", tol=1e-10))
    wall_comb = time.perf_counter() - t0
    cgd = cgd_minimize(dl04_spec, fs, OptimizerConfig(method="cgd"))

    g_min = min(spgd.g_star, comb.g_star, cgd.g_star)
    gs = spgd.trace.g_bits
    assert all(b <= a + 1e-15 for a, b in zip(gs, gs[1:])), "spgd trace not monotone"
    assert spgd.g_star - g_min <= 1e-10, "spgd missed the reference depth"

    g0, g1 = cgd.trace.g_bits[0], cgd.trace.g_bits[1]
    assert g0 - g1 >= 0.5 * (g0 - g_min), "cgd first iteration closed < 50%"
    assert cgd.g_star - g_min > 1e-6, "cgd failed to stall above 1e-6"

    assert comb.g_star - g_min <= 1e-10, "comb missed the reference depth"
    assert wall_comb <= wall_spgd, f"comb {wall_comb:.3f}s > spgd {wall_spgd:.3f}s"
    print(f"[criterion 7] PASS: spgd monotone to depth, cgd 1st iter closes "
          f"{(g0 - g1) / (g0 - g_min):.0%} then stalls at {cgd.g_star - g_min:.1e}, "
          f"comb reaches depth in {wall_comb:.2f}s vs spgd {wall_spgd:.2f}s")


def test_criterion_8_structural_suites(tmp_path):
    t0 = time.perf_counter()
    rng = np.random.default_rng(123)
    specs = [build_dl04(P_Z), build_dl04_six_state(P_Z, 0.0005), build_dl04_mismatch(P_Z, 0.5, 0.8)]

    # POVM completeness and full invariant validation
    for spec in specs:
        spec.validate()

    # pinching idempotence / self-adjointness, post-selection output sanity
    for spec in specs:
        d = spec.pinching.dim
        x = random_hermitian(rng, d)
        y = random_hermitian(rng, d)
        zx = apply_pinching(spec, x)
        assert np.max(np.abs(apply_pinching(spec, zx) - zx)) <= 1e-10
        assert abs(hs_inner(zx, y) - hs_inner(x, apply_pinching(spec, y))) <= 1e-10

    # projection membership and idempotence
    fs = feasible_set_for(specs[0], 0.1)
    out = project_feasible(fs, random_hermitian(rng, 4, 0.3))
    assert fs.member(out)
    assert np.max(np.abs(project_feasible(fs, out) - out)) <= 2 * fs.feas_tol

    # objective convexity spot checks
    base = initial_point(fs)
    r1 = project_feasible(fs, base + random_hermitian(rng, 4, 0.02))
    r2 = project_feasible(fs, base + random_hermitian(rng, 4, 0.02))
    g1, g2 = objective(specs[0], r1), objective(specs[0], r2)
    for a in (0.25, 0.5, 0.75):
        assert objective(specs[0], hermitize(a * r1 + (1 - a) * r2)) <= a * g1 + (1 - a) * g2 + 1e-9

    # observation-table normalization
    for spec, kind in ((specs[0], "isotropic-depolarizing"), (specs[2], "vacuum-depolarizing")):
        table = simulate_observations(spec, ChannelModel(kind, 0.07))
        assert table.total == pytest.approx(1.0, abs=1e-9)

    # sweep determinism: byte-identical rows on rerun
    sw = SweepSpec(protocol="dl04", eps_grid=(0.0, 0.1), optimizer=CFG)
    rows1 = "\n".join(format_row(sw, r) for r in run_sweep(sw).rows)
    rows2 = "\n".join(format_row(sw, r) for r in run_sweep(sw).rows)
    assert rows1.encode() == rows2.encode()

    elapsed = time.perf_counter() - t0
    assert elapsed < 60.0
    print(f"[criterion 8] PASS: structural suites green in {elapsed:.1f}s "
          "(full-suite runtime budget checked by the pytest run itself)")
