import numpy as np
import pytest

from conic_feasibility.instance import ConeInstance, generate_planted


@pytest.fixture
def orthant2():
    return ConeInstance.from_rows([[1.0, 0.0], [0.0, 1.0]])


@pytest.fixture
def infeasible_pair():
    return ConeInstance.from_rows([[1.0, 0.0], [-1.0, 0.0]])


@pytest.fixture
def planted_small():
    instance, _ = generate_planted(4, 12, 0.1, seed=3)
    return instance


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def thin_wedge(t: float, n: int = 3, rotation=None) -> ConeInstance:
    """{x : |x₁| < t·x_n}，沿 x₁ 方向很薄"""
    rows = np.zeros((2, n))
    rows[0, 0], rows[0, -1] = 1.0, t
    rows[1, 0], rows[1, -1] = -1.0, t
    rows /= np.linalg.norm(rows, axis=1, keepdims=True)
    if rotation is not None:
        rows = rows @ rotation
    return ConeInstance.from_rows(rows)


def random_simplex(rng, m):
    lam = rng.dirichlet(np.ones(m))
    return lam / lam.sum()


def random_unit_rows(rng, m, n):
    rows = rng.standard_normal((m, n))
    return rows / np.linalg.norm(rows, axis=1, keepdims=True)
