"""Attention throughput benchmark with analytic intermediate-memory accounting.

Kernels here compute the same quantities as :mod:`linmotion.attention` but
work in place on the benchmark dtype so the quadratic methods hold a single
n x n buffer at a time.
"""

from __future__ import annotations

import os
import statistics
import time
from dataclasses import asdict, dataclass

import numpy as np
from threadpoolctl import threadpool_limits

from .attention import EPS_NORM
from .errors import BudgetError, ParameterError
from .tensor import Rng, randn

METHODS = ("softmax", "relu_linear", "cosine_linear_fast", "cosine_linear_naive")
DEFAULT_BUDGET = 400_000_000
BUDGET_ENV = "MK_ELEMENT_BUDGET"


@dataclass(frozen=True)
class BenchRecord:
    method: str
    seq_len: int
    dim: int
    dtype: str
    repeats: int
    median_wall_time_s: float
    analytic_peak_elements: int

    CSV_COLUMNS = ("method", "seq_len", "dim", "dtype", "repeats", "median_wall_time_s", "analytic_peak_elements")

    def row(self):
        return asdict(self)


def analytic_peak_elements(method: str, n: int, d: int, d_v: int | None = None) -> int:
    """Live intermediate scalars beyond the O(n d) input/output and per-row buffers.

    softmax / cosine_linear_naive hold the n x n score matrix; the linear
    methods hold only their key-value state (d x d_v plus the sum vectors).
    """
    d_v = d if d_v is None else d_v
    if method in ("softmax", "cosine_linear_naive"):
        return n * n
    if method == "relu_linear":
        return d * d_v + d
    if method == "cosine_linear_fast":
        return d * d_v + d + d_v
    raise ParameterError(f"unknown method {method!r}")


def io_elements(n: int, d: int, d_v: int | None = None) -> int:
    d_v = d if d_v is None else d_v
    return 2 * n * d + 2 * n * d_v + n


def element_budget() -> int:
    raw = os.environ.get(BUDGET_ENV)
    return DEFAULT_BUDGET if raw is None else int(raw)


def _softmax(q, k, v):
    s = q @ k.T
    s *= q.dtype.type(1.0 / np.sqrt(q.shape[1]))
    s -= s.max(axis=1, keepdims=True)
    np.exp(s, out=s)
    s /= s.sum(axis=1, keepdims=True)
    return s @ v


def _unit(x):
    norm = np.sqrt(np.einsum("ij,ij->i", x, x))
    return x / np.maximum(norm, x.dtype.type(EPS_NORM))[:, None]


def _cosine_naive(q, k, v):
    s = _unit(q) @ _unit(k).T
    s += 1
    den = s.sum(axis=1, keepdims=True)
    out = s @ v
    out /= den
    return out


def _cosine_fast(q, k, v):
    qh, kh = _unit(q), _unit(k)
    out = qh @ (kh.T @ v)
    out += v.sum(axis=0)
    den = qh @ kh.sum(axis=0)
    den += q.shape[0]
    out /= den[:, None]
    return out


def _relu_linear(q, k, v):
    # Rows with no positive query feature give 0/0; the library kernel
    # raises on them, timing only needs the arithmetic.
    fq, fk = np.maximum(q, 0), np.maximum(k, 0)
    with np.errstate(invalid="ignore", divide="ignore"):
        return (fq @ (fk.T @ v)) / (fq @ fk.sum(axis=0))[:, None]


KERNELS = {
    "softmax": _softmax,
    "relu_linear": _relu_linear,
    "cosine_linear_fast": _cosine_fast,
    "cosine_linear_naive": _cosine_naive,
}


def check_budget(methods, seq_lens, dim, budget: int | None = None):
    budget = element_budget() if budget is None else budget
    for m in methods:
        for n in seq_lens:
            need = analytic_peak_elements(m, n, dim) + io_elements(n, dim)
            if need > budget:
                raise BudgetError(
                    f"{m} at seq_len={n} needs ~{need} live elements, over the budget of {budget} "
                    f"(set {BUDGET_ENV} to raise it)"
                )


def run_attention_bench(seq_lens, dim: int = 64, repeats: int = 3, dtype: str = "f32",
                        methods=METHODS, seed: int = 0, budget: int | None = None) -> list[BenchRecord]:
    seq_lens = [int(n) for n in seq_lens]
    if repeats < 1:
        raise ParameterError(f"repeats must be >= 1, got {repeats}")
    if not seq_lens or any(b <= a for a, b in zip(seq_lens, seq_lens[1:])):
        raise ParameterError("seq-lens must be non-empty and strictly ascending")
    unknown = set(methods) - set(METHODS)
    if unknown:
        raise ParameterError(f"unknown methods {sorted(unknown)}")
    np_dtype = {"f32": np.float32, "f64": np.float64}.get(dtype)
    if np_dtype is None:
        raise ParameterError(f"dtype must be f32 or f64, got {dtype!r}")
    check_budget(methods, seq_lens, dim, budget)

    rng = Rng(seed)
    inputs = {}
    for i, n in enumerate(seq_lens):
        r = rng.split(i)
        inputs[n] = tuple(randn(r.split(j), (n, dim)).astype(np_dtype) for j in range(3))
    cases = [(m, n) for n in seq_lens for m in methods]
    times = {c: [] for c in cases}
    with threadpool_limits(limits=1):
        for m, n in cases:
            KERNELS[m](*inputs[n])  # warm-up, discarded
        # Rounds visit every case once so slow drift in machine load lands on
        # all sizes alike instead of biasing whichever size ran last.
        for _ in range(repeats):
            for m, n in cases:
                start = time.perf_counter()
                KERNELS[m](*inputs[n])
                times[m, n].append(time.perf_counter() - start)
    return [
        BenchRecord(m, n, dim, dtype, repeats, statistics.median(times[m, n]), analytic_peak_elements(m, n, dim))
        for m, n in cases
    ]


def fit_slopes(records) -> dict[str, float]:
    """Least-squares slope of log(time) against log(seq_len), per method."""
    slopes = {}
    for m in dict.fromkeys(r.method for r in records):
        pts = [(r.seq_len, r.median_wall_time_s) for r in records if r.method == m]
        if len(pts) < 2:
            continue
        x, y = np.log([p[0] for p in pts]), np.log([p[1] for p in pts])
        slopes[m] = float(np.polyfit(x, y, 1)[0])
    return slopes
