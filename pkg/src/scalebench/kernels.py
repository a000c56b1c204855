"""Built-in Linpack-style kernel: dense LU solve with partial pivoting.

Lets the whole pipeline run live on a laptop without an HPL binary. The
operation count and residual test follow HPL conventions so records from
this kernel are directly comparable with parsed HPL output.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from .errors import SingularMatrix

RESIDUAL_THRESHOLD = 16.0
PIVOT_TOLERANCE = 1e-300

# Knuth's MMIX constants.
_LCG_MULTIPLIER = 6364136223846793005
_LCG_INCREMENT = 1442695040888963407
_MASK64 = (1 << 64) - 1


@dataclass(frozen=True)
class KernelResult:
    n: int
    runtime_seconds: float
    gflops: float
    residual: float
    passed: bool


def hpl_flops(n: int) -> float:
    """HPL operation count for solving an order-``n`` system: 2/3 n^3 + 3/2 n^2."""
    if n < 1:
        raise ValueError("n must be >= 1")
    return 2.0 / 3.0 * n**3 + 1.5 * n**2


def lcg_uniform(seed: int, count: int) -> np.ndarray:
    """``count`` deterministic doubles uniform in [-0.5, 0.5).

    64-bit LCG; the top 53 bits of each state form the mantissa. The seed is
    run through one step first so that seed 0 does not start at state 0.
    """
    state = (seed * _LCG_MULTIPLIER + _LCG_INCREMENT) & _MASK64
    out = np.empty(count, dtype=np.float64)
    scale = 1.0 / (1 << 53)
    for i in range(count):
        state = (state * _LCG_MULTIPLIER + _LCG_INCREMENT) & _MASK64
        out[i] = (state >> 11) * scale - 0.5
    return out


def random_system(n: int, seed: int) -> tuple[np.ndarray, np.ndarray]:
    values = lcg_uniform(seed, n * n + n)
    return values[: n * n].reshape(n, n), values[n * n:].copy()


def lu_factor(a) -> tuple[np.ndarray, np.ndarray]:
    """In-place style LU with row pivoting; returns (packed LU, row permutation)."""
    lu = np.array(a, dtype=np.float64, copy=True)
    if lu.ndim != 2 or lu.shape[0] != lu.shape[1] or lu.shape[0] < 1:
        raise ValueError(f"expected a non-empty square matrix, got shape {lu.shape}")
    n = lu.shape[0]
    perm = np.arange(n)
    for k in range(n):
        p = k + int(np.argmax(np.abs(lu[k:, k])))
        if abs(lu[p, k]) < PIVOT_TOLERANCE:
            raise SingularMatrix(f"pivot column {k} is numerically zero")
        if p != k:
            lu[[k, p]] = lu[[p, k]]
            perm[[k, p]] = perm[[p, k]]
        if k + 1 < n:
            lu[k + 1:, k] /= lu[k, k]
            lu[k + 1:, k + 1:] -= np.outer(lu[k + 1:, k], lu[k, k + 1:])
    return lu, perm


def lu_solve(a, b) -> np.ndarray:
    """Solve ``a @ x = b`` by LU factorization with partial pivoting."""
    lu, perm = lu_factor(a)
    n = lu.shape[0]
    rhs = np.asarray(b, dtype=np.float64).reshape(-1)
    if rhs.shape[0] != n:
        raise ValueError(f"rhs has length {rhs.shape[0]}, expected {n}")
    y = rhs[perm].copy()
    for i in range(1, n):
        y[i] -= lu[i, :i] @ y[:i]
    x = y
    for i in range(n - 1, -1, -1):
        x[i] = (x[i] - lu[i, i + 1:] @ x[i + 1:]) / lu[i, i]
    return x


def scaled_residual(a: np.ndarray, x: np.ndarray, b: np.ndarray) -> float:
    """||Ax-b||_oo / (eps * (||A||_oo * ||x||_oo + ||b||_oo) * n)."""
    n = a.shape[0]
    eps = np.finfo(np.float64).eps
    r = np.max(np.abs(a @ x - b))
    norm_a = np.max(np.sum(np.abs(a), axis=1))
    denom = eps * (norm_a * np.max(np.abs(x)) + np.max(np.abs(b))) * n
    return float(r / denom)


def run_builtin_linpack(n: int, seed: int = 0) -> KernelResult:
    if n < 1:
        raise ValueError("n must be >= 1")
    a, b = random_system(n, seed)
    start = time.perf_counter()
    x = lu_solve(a, b)
    runtime = time.perf_counter() - start
    # perf_counter can tick zero on coarse clocks for n=1.
    runtime = max(runtime, 1e-9)
    residual = scaled_residual(a, x, b)
    return KernelResult(
        n=n,
        runtime_seconds=runtime,
        gflops=hpl_flops(n) / runtime / 1e9,
        residual=residual,
        passed=residual < RESIDUAL_THRESHOLD,
    )
