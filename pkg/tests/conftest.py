"""Shared fixtures: the bundled 2-d example system and small helpers."""

import pathlib

import numpy as np
import pytest

from mnlqr import CostWeights, ExplorationSignal, SystemModel

REPO_ROOT = pathlib.Path(__file__).resolve().parent.parent
CONFIG_PATH = REPO_ROOT / "configs" / "example2d.json"


@pytest.fixture(scope="session")
def example2d_model() -> SystemModel:
    """The bundled two-state, one-input system with multiplicative noise."""
    return SystemModel(
        A=[[0.0, -0.6], [0.6, -0.3]],
        B=[[0.05], [0.01]],
        C=[[-0.02, 0.03], [-0.05, 0.02]],
        D=[[0.001], [0.03]],
    )


@pytest.fixture(scope="session")
def example2d_cost() -> CostWeights:
    return CostWeights(Q=np.diag([1.0, 0.5]), R=[[1.0]])


@pytest.fixture(scope="session")
def zero_gain() -> np.ndarray:
    return np.zeros((1, 2))


@pytest.fixture(scope="session")
def three_sine() -> ExplorationSignal:
    """The exploration signal shipped in configs/example2d.json."""
    return ExplorationSignal(
        amplitudes=[[0.8, 0.5, 0.3]],
        frequencies=[[1.0, 3.7, 7.3]],
        phases=[[0.0, 0.9, 1.7]],
    )


@pytest.fixture(scope="session")
def config_path() -> pathlib.Path:
    assert CONFIG_PATH.exists(), f"bundled config missing: {CONFIG_PATH}"
    return CONFIG_PATH


def random_ms_stable(rng: np.random.Generator, n: int):
    """Random (Acl, Ccl) pair that is mean-square stable by construction.

    Shifting Acl by -(rho/2 + margin) I moves every eigenvalue of the
    second-moment generator left by 2 (rho/2 + margin), landing the
    abscissa at -2 * margin or better.
    """
    Acl = rng.normal(scale=1.0, size=(n, n))
    Ccl = rng.normal(scale=0.3, size=(n, n))
    gen = (
        np.kron(np.eye(n), Acl)
        + np.kron(Acl, np.eye(n))
        + np.kron(Ccl, Ccl)
    )
    rho = float(np.max(np.linalg.eigvals(gen).real))
    Acl = Acl - (rho / 2.0 + 0.25) * np.eye(n)
    return Acl, Ccl
