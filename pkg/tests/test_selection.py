import numpy as np
import pytest

from efalrt.errors import InvalidInputError
from efalrt.factor_mle import SolverOptions, factor_dof
from efalrt.sampler import GeneratorSpec, build_example_model, sample
from efalrt.selection import default_k_max, select_num_factors

from conftest import ACCEPTANCE_SEED


def check_trail(sel):
    ks = [e.k for e in sel.trail]
    assert ks == list(range(len(ks)))
    assert all(e.rejected for e in sel.trail[:-1])
    assert all(e.rejected == e.result.rejected for e in sel.trail)
    if sel.stopped_reason == "non-rejection":
        assert not sel.trail[-1].rejected
        assert sel.k_hat == sel.trail[-1].k


def test_default_k_max():
    assert default_k_max(3) == 0
    assert default_k_max(5) == 2
    for p in range(2, 40):
        k = default_k_max(p)
        assert factor_dof(p, k) >= 1 and factor_dof(p, k + 1) < 1


def test_null_data_picks_zero():
    # whitened so the sample correlation is exactly I and T0 = 0
    x = np.random.default_rng(0).standard_normal((2000, 4))
    x -= x.mean(axis=0)
    x = x @ np.linalg.inv(np.linalg.cholesky(x.T @ x)).T
    sel = select_num_factors(x)
    assert sel.k_hat == 0 and len(sel.trail) == 1
    check_trail(sel)


def test_one_factor_data():
    spec = GeneratorSpec("factor-normal", model=build_example_model(1, 6), seed=4)
    sel = select_num_factors(sample(spec, 2000, 6), correction="bartlett")
    check_trail(sel)
    assert sel.k_hat == 1
    assert [e.rejected for e in sel.trail] == [True, False]


def test_df_exhausted():
    # strong 3-factor structure with k_max capped below it
    spec = GeneratorSpec("factor-normal", model=build_example_model(3, 9), seed=1)
    sel = select_num_factors(sample(spec, 1000, 9), k_max=1)
    assert sel.stopped_reason == "df-exhausted" and sel.exhausted
    assert sel.k_hat == 1
    check_trail(sel)


def test_df_exhausted_at_default_limit():
    # p = 3 allows only k = 0; a correlated design rejects it
    x = np.random.default_rng(2).standard_normal((500, 3)) @ np.array(
        [[1, 0.8, 0.8], [0, 0.6, 0.1], [0, 0, 0.5]]
    )
    sel = select_num_factors(x)
    assert sel.stopped_reason == "df-exhausted" and sel.k_hat == 0


def test_mle_failure_stops():
    spec = GeneratorSpec("factor-normal", model=build_example_model(3, 12), seed=3)
    sel = select_num_factors(sample(spec, 500, 12), solver=SolverOptions(max_iter=1))
    assert sel.stopped_reason == "mle-failure"
    assert not sel.trail[-1].result.converged
    assert sel.k_hat == sel.trail[-1].k == 1


def test_errors():
    x = np.random.default_rng(5).standard_normal((50, 4))
    with pytest.raises(InvalidInputError):
        select_num_factors(x, alpha=0)
    with pytest.raises(InvalidInputError):
        select_num_factors(x, k_max=-1)
    with pytest.raises(InvalidInputError):
        select_num_factors(x[:, :1])


def test_deterministic():
    spec = GeneratorSpec("factor-normal", model=build_example_model(1, 8), seed=6)
    x = sample(spec, 300, 8)
    a, b = select_num_factors(x), select_num_factors(x)
    assert (a.k_hat, a.stopped_reason) == (b.k_hat, b.stopped_reason)
    assert [e.result.statistic for e in a.trail] == [e.result.statistic for e in b.trail]


@pytest.mark.slow
def test_trail_invariants_and_coupling():
    for k0, p, N in ((1, 8, 300), (3, 12, 400), (1, 12, 120)):
        spec = GeneratorSpec("factor-normal", model=build_example_model(k0, p), seed=ACCEPTANCE_SEED)
        for r in range(30):
            sel = select_num_factors(sample(spec.with_stream(r), N, p), correction="bartlett")
            check_trail(sel)
            ks = {e.k: e for e in sel.trail}
            if k0 in ks and not ks[k0].rejected and all(ks[j].rejected for j in range(k0)):
                assert sel.k_hat == k0


@pytest.mark.slow
def test_null_selection_rate():
    spec = GeneratorSpec("iid-normal", seed=ACCEPTANCE_SEED)
    hits = sum(select_num_factors(sample(spec.with_stream(r), 2000, 5)).k_hat == 0 for r in range(400))
    # 1 - alpha = 0.95 with 3 binomial SE
    assert abs(hits / 400 - 0.95) <= 3 * np.sqrt(0.95 * 0.05 / 400)
