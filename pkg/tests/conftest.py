"""Shared fixtures and random-object helpers for the test suite."""

from __future__ import annotations

import numpy as np
import pytest

from captool import (
    ChannelModel,
    FeasibleSet,
    build_dl04,
    build_dl04_mismatch,
    build_dl04_six_state,
    constraints_from_observations,
    simulate_observations,
)

P_Z = 0.999
P_X_SIX = 0.0005


def random_hermitian(rng: np.random.Generator, dim: int, scale: float = 1.0) -> np.ndarray:
    a = rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))
    return scale * (a + a.conj().T) / 2.0


def random_density(rng: np.random.Generator, dim: int) -> np.ndarray:
    g = rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))
    rho = g @ g.conj().T
    return rho / np.trace(rho).real


def random_unitary(rng: np.random.Generator, dim: int) -> np.ndarray:
    g = rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))
    q, r = np.linalg.qr(g)
    return q * (np.diag(r) / np.abs(np.diag(r)))


@pytest.fixture(scope="session")
def dl04():
    return build_dl04(P_Z)


@pytest.fixture(scope="session")
def six_state():
    return build_dl04_six_state(P_Z, P_X_SIX)


@pytest.fixture(scope="session")
def mismatch():
    return build_dl04_mismatch(P_Z, 0.5, 0.8)


def feasible_set_for(spec, eps: float) -> FeasibleSet:
    kind = "vacuum-depolarizing" if spec.dim_a == 3 else "isotropic-depolarizing"
    table = simulate_observations(spec, ChannelModel(kind, eps))
    return FeasibleSet(constraints_from_observations(spec, table), spec.dim)


@pytest.fixture(scope="session")
def dl04_fs_01(dl04):
    """DL04 feasible set at eps = 0.1, the standard solver benchmark."""
    return feasible_set_for(dl04, 0.1)
