import csv

import numpy as np
import pytest

from linmotion import attention
from linmotion.bench import (
    KERNELS,
    METHODS,
    BenchRecord,
    analytic_peak_elements,
    check_budget,
    element_budget,
    fit_slopes,
    io_elements,
    run_attention_bench,
)
from linmotion.errors import BudgetError, ParameterError
from linmotion.tensor import Rng, randn


@pytest.mark.parametrize("n", [1, 7, 1024, 16384])
def test_peak_gap_is_n_squared_minus_constant(n):
    gap = analytic_peak_elements("softmax", n, 64) - analytic_peak_elements("cosine_linear_fast", n, 64)
    assert gap == n * n - (64 * 64 + 128)


def test_linear_peaks_constant_in_n():
    for m in ("relu_linear", "cosine_linear_fast"):
        assert analytic_peak_elements(m, 10, 16) == analytic_peak_elements(m, 10**6, 16)
    assert analytic_peak_elements("cosine_linear_naive", 300, 16) == 90000
    with pytest.raises(ParameterError):
        analytic_peak_elements("flash", 3, 4)


def test_kernels_agree_with_library():
    r = Rng(2)
    q, k, v = (randn(r.split(i), (40, 8)) for i in range(3))
    ref = {
        "softmax": attention.softmax_attention(q, k, v),
        "relu_linear": attention.relu_linear_attention(q, k, v),
        "cosine_linear_fast": attention.cosine_linear_attention_fast(q, k, v),
        "cosine_linear_naive": attention.cosine_linear_attention_naive(q, k, v),
    }
    for name, fn in KERNELS.items():
        assert np.allclose(fn(q.copy(), k.copy(), v.copy()), ref[name], rtol=1e-12, atol=1e-12), name


@pytest.mark.parametrize(
    "kwargs",
    [dict(repeats=0), dict(seq_lens=[64, 32]), dict(seq_lens=[]), dict(methods=["flash"]), dict(dtype="f16")],
)
def test_parameter_errors(kwargs):
    args = dict(seq_lens=[32, 64], dim=8, repeats=1)
    args.update(kwargs)
    with pytest.raises(ParameterError):
        run_attention_bench(**args)


def test_budget_refusal(monkeypatch):
    monkeypatch.setenv("MK_ELEMENT_BUDGET", "1000000")
    assert element_budget() == 1_000_000
    with pytest.raises(BudgetError, match="MK_ELEMENT_BUDGET"):
        run_attention_bench([2048], dim=8, repeats=1, methods=["softmax"])
    # the linear method fits the same cap
    check_budget(["cosine_linear_fast"], [2048], 8)
    need = analytic_peak_elements("softmax", 100, 8) + io_elements(100, 8)
    check_budget(["softmax"], [100], 8, budget=need)
    with pytest.raises(BudgetError):
        check_budget(["softmax"], [100], 8, budget=need - 1)


def test_records_and_csv(tmp_path):
    recs = run_attention_bench([32, 64, 128], dim=8, repeats=2, dtype="f64")
    assert [(r.method, r.seq_len) for r in recs] == [(m, n) for n in (32, 64, 128) for m in METHODS]
    assert all(r.median_wall_time_s > 0 and r.repeats == 2 for r in recs)
    path = tmp_path / "b.csv"
    with open(path, "w", newline="") as f:
        w = csv.DictWriter(f, fieldnames=BenchRecord.CSV_COLUMNS)
        w.writeheader()
        w.writerows(r.row() for r in recs)
    rows = list(csv.DictReader(open(path)))
    assert tuple(rows[0]) == BenchRecord.CSV_COLUMNS
    assert set(fit_slopes(recs)) == set(METHODS)


def test_fit_slopes_recovers_power_law():
    recs = [BenchRecord("softmax", n, 8, "f32", 1, 3e-9 * n**2, 0) for n in (100, 200, 400)]
    recs += [BenchRecord("relu_linear", n, 8, "f32", 1, 5e-7 * n, 0) for n in (100, 200, 400)]
    slopes = fit_slopes(recs)
    assert slopes["softmax"] == pytest.approx(2.0, abs=1e-12)
    assert slopes["relu_linear"] == pytest.approx(1.0, abs=1e-12)


def test_fast_cosine_doubling_ratio():
    recs = run_attention_bench([8192, 16384], dim=64, repeats=9, methods=["cosine_linear_fast"])
    ratio = recs[1].median_wall_time_s / recs[0].median_wall_time_s
    assert ratio <= 2.5, ratio
