from __future__ import annotations

import random
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from scalebench.errors import SingularMatrix
from scalebench.kernels import (
    hpl_flops,
    lcg_uniform,
    lu_solve,
    random_system,
    run_builtin_linpack,
    scaled_residual,
)


def gauss_no_pivot(a: list[list[float]], b: list[float]) -> list[float]:
    """Textbook elimination on Python lists; only safe for diagonally dominant input."""
    n = len(a)
    m = [row[:] + [rhs] for row, rhs in zip(a, b)]
    for k in range(n):
        for i in range(k + 1, n):
            f = m[i][k] / m[k][k]
            for j in range(k, n + 1):
                m[i][j] -= f * m[k][j]
    x = [0.0] * n
    for i in reversed(range(n)):
        s = m[i][n] - sum(m[i][j] * x[j] for j in range(i + 1, n))
        x[i] = s / m[i][i]
    return x


def diag_dominant(n: int, rng: random.Random) -> tuple[list[list[float]], list[float]]:
    a = [[rng.uniform(-0.5, 0.5) for _ in range(n)] for _ in range(n)]
    for i in range(n):
        a[i][i] = sum(abs(v) for v in a[i]) + 1.0
    return a, [rng.uniform(-1, 1) for _ in range(n)]


def test_one_by_one():
    assert lu_solve([[2.0]], [4.0]).tolist() == [2.0]


def test_identity():
    assert lu_solve(np.eye(3), [1, 2, 3]).tolist() == [1.0, 2.0, 3.0]


def test_known_solution_seed_42():
    a, _ = random_system(64, 42)
    b = a @ np.ones(64)
    x = lu_solve(a, b)
    assert np.max(np.abs(x - 1.0)) < 1e-8


def test_pivoting_needed():
    # zero leading entry: elimination without row exchange would divide by zero
    x = lu_solve([[0.0, 1.0], [1.0, 1.0]], [2.0, 3.0])
    assert x.tolist() == pytest.approx([1.0, 2.0], abs=1e-15)


def test_singular_matrix():
    with pytest.raises(SingularMatrix):
        lu_solve([[1.0, 2.0], [2.0, 4.0]], [1.0, 1.0])
    with pytest.raises(SingularMatrix):
        lu_solve([[0.0]], [1.0])


def test_non_square_rejected():
    with pytest.raises(ValueError):
        lu_solve(np.ones((2, 3)), [1.0, 2.0])


@pytest.mark.parametrize("n, expected", [
    (1, Fraction(13, 6)),
    (2, Fraction(16, 3) + 6),
    (1000, Fraction(2, 3) * 1000**3 + Fraction(3, 2) * 1000**2),
])
def test_hpl_flops(n, expected):
    assert hpl_flops(n) == pytest.approx(float(expected), rel=1e-15)


def test_hpl_flops_1000_value():
    assert hpl_flops(1000) == pytest.approx(6.681667e8, rel=1e-7)


def test_agrees_with_elimination_oracle():
    rng = random.Random(2018)
    for _ in range(30):
        n = rng.randint(1, 32)
        a, b = diag_dominant(n, rng)
        assert np.max(np.abs(lu_solve(a, b) - gauss_no_pivot(a, b))) < 1e-10


def test_lcg_deterministic_and_in_range():
    a = lcg_uniform(7, 1000)
    assert np.array_equal(a, lcg_uniform(7, 1000))
    assert not np.array_equal(a, lcg_uniform(8, 1000))
    assert a.min() >= -0.5 and a.max() < 0.5
    assert abs(a.mean()) < 0.05


def test_builtin_linpack_passes():
    result = run_builtin_linpack(256, seed=7)
    assert result.passed and result.residual < 16
    assert result.gflops == pytest.approx(hpl_flops(256) / result.runtime_seconds / 1e9, rel=1e-12)


def test_builtin_linpack_n1():
    result = run_builtin_linpack(1, seed=0)
    assert result.gflops == pytest.approx((13 / 6) / result.runtime_seconds / 1e9, rel=1e-12)
    assert result.passed


def test_same_seed_same_system():
    a1, b1 = random_system(32, 5)
    a2, b2 = random_system(32, 5)
    assert np.array_equal(a1, a2) and np.array_equal(b1, b2)


@settings(max_examples=25, deadline=None)
@given(n=st.integers(1, 512), seed=st.integers(0, 2**63))
def test_backward_error_property(n, seed):
    a, b = random_system(n, seed)
    assert scaled_residual(a, lu_solve(a, b), b) < 16.0


@given(st.floats(1e-6, 1e3), st.floats(1e-6, 1e3))
def test_gflops_decreasing_in_runtime(t1, t2):
    flops = hpl_flops(128)
    g1, g2 = flops / t1 / 1e9, flops / t2 / 1e9
    if t1 < t2:
        assert g1 > g2
