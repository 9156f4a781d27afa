import numpy as np
import pytest

from efalrt.core_stats import sample_covariance
from efalrt.errors import InvalidInputError, NotPositiveDefiniteError
from efalrt.sampler import FactorModel, GeneratorSpec, build_example_model, discretize, make_rng, sample


def test_example_model_k1():
    m = build_example_model(1, 4)
    np.testing.assert_array_equal(m.loadings, np.full((4, 1), 0.3))
    np.testing.assert_allclose(m.uniquenesses, 0.91)


def test_example_model_k3_blocks():
    m = build_example_model(3, 9)
    expected = np.zeros((9, 3))
    expected[0:3, 0] = expected[3:6, 1] = expected[6:9, 2] = 0.6
    np.testing.assert_array_equal(m.loadings, expected)
    np.testing.assert_allclose(m.uniquenesses, 0.64)


def test_example_model_k3_uneven_blocks():
    lam = build_example_model(3, 11).loadings
    assert [int((lam[:, j] > 0).sum()) for j in range(3)] == [3, 3, 5]


def test_implied_sigma_k1_p2():
    np.testing.assert_allclose(build_example_model(1, 2).implied_sigma(), [[1.0, 0.09], [0.09, 1.0]])


@pytest.mark.parametrize("k0,p", [(1, 2), (1, 50), (3, 4), (3, 40)])
def test_example_models_unit_diagonal(k0, p):
    np.testing.assert_allclose(np.diag(build_example_model(k0, p).implied_sigma()), 1.0, rtol=1e-15)


def test_example_model_errors():
    with pytest.raises(InvalidInputError):
        build_example_model(2, 10)
    with pytest.raises(InvalidInputError):
        build_example_model(3, 3)


def test_factor_model_validation():
    with pytest.raises(InvalidInputError):
        FactorModel(np.ones((3, 1)), [1.0, 0.0, 1.0])
    with pytest.raises(InvalidInputError):
        FactorModel(np.ones((3, 3)), np.ones(3))
    with pytest.raises(InvalidInputError):
        FactorModel(np.ones((2, 1)), np.ones(3))
    with pytest.raises(InvalidInputError):
        FactorModel(np.ones((3, 1)), np.ones(3), mean=np.zeros(2))


def test_spec_validation():
    with pytest.raises(InvalidInputError):
        GeneratorSpec("iid-cauchy")
    with pytest.raises(InvalidInputError):
        GeneratorSpec("factor-normal")
    with pytest.raises(InvalidInputError):
        GeneratorSpec("iid-t", df=0)
    with pytest.raises(InvalidInputError):
        GeneratorSpec("discretized", setting="IV")


def test_factor_normal_shape_mismatch():
    spec = GeneratorSpec("factor-normal", model=build_example_model(1, 5))
    with pytest.raises(InvalidInputError):
        sample(spec, 10, 6)


def test_null_factor_model_is_standard_normal():
    spec = GeneratorSpec("factor-normal", model=FactorModel(np.zeros((5, 1)), np.ones(5)), seed=3)
    s = sample_covariance(sample(spec, 10000, 5))
    off = s - np.diag(np.diag(s))
    assert np.abs(off).max() < 0.2
    np.testing.assert_allclose(np.diag(s), 1.0, atol=0.1)


def test_factor_normal_covariance():
    model = FactorModel([[0.8], [0.5], [-0.3]], [0.36, 0.75, 0.91], mean=[1.0, -2.0, 0.5])
    x = sample(GeneratorSpec("factor-normal", model=model, seed=11), 100_000, 3)
    np.testing.assert_allclose(sample_covariance(x), model.implied_sigma(), atol=0.03)
    np.testing.assert_allclose(x.mean(axis=0), model.mean, atol=0.02)


def test_discretize_table():
    z = np.array([-2.0, -1.0, -0.5, -0.4, 0.0, 0.39, 0.4, 0.5, 0.99, 1.0, 3.0])
    np.testing.assert_array_equal(discretize(z, "I"), [-1, -1, -1, -1, 1, 1, 1, 1, 1, 1, 1])
    np.testing.assert_array_equal(discretize(z, "II"), [-2, -1, -1, -1, 1, 1, 1, 1, 1, 2, 2])
    np.testing.assert_array_equal(discretize(z, "III"), [-3, -2, -2, -1, 1, 1, 2, 2, 2, 3, 3])
    assert discretize(np.array([0.5]), "III")[0] == 2


def test_discretized_setting_one_centered():
    N = 20000
    x = sample(GeneratorSpec("discretized", setting="I", seed=8), N, 4)
    assert set(np.unique(x)) == {-1.0, 1.0}
    assert np.all(np.abs(x.mean(axis=0)) < 3 / np.sqrt(N))


def test_t_entries_are_raw():
    # t5 has variance 5/3; entries are not rescaled
    x = sample(GeneratorSpec("iid-t", df=5, seed=2), 200_000, 1)
    assert x.var() == pytest.approx(5 / 3, rel=0.1)


@pytest.mark.parametrize(
    "spec",
    [
        GeneratorSpec("iid-normal", seed=99),
        GeneratorSpec("iid-t", df=10, seed=99),
        GeneratorSpec("discretized", setting="II", seed=99),
        GeneratorSpec("factor-normal", model=build_example_model(3, 6), seed=99),
    ],
    ids=lambda s: s.label,
)
def test_determinism(spec):
    a = sample(spec.with_stream((4, 7)), 30, 6)
    calls = [sample(spec.with_stream(r), 30, 6) for r in range(3)]  # interleaved calls
    b = sample(spec.with_stream((4, 7)), 30, 6)
    assert a.tobytes() == b.tobytes()
    assert not np.array_equal(calls[0], calls[1])


def test_streams_do_not_collide():
    spec = GeneratorSpec("iid-normal", seed=5)
    seen = {sample(spec.with_stream(r), 4, 3).tobytes() for r in range(100)}
    assert len(seen) == 100


def test_seeds_differ():
    assert not np.array_equal(make_rng(1, 0).standard_normal(5), make_rng(2, 0).standard_normal(5))


def test_non_pd_model_fails_early():
    with pytest.raises(InvalidInputError):
        FactorModel(np.ones((2, 1)), [-1.0, 1.0])
    m = FactorModel(np.ones((2, 1)), [1e-20, 1e-20])
    with pytest.raises(NotPositiveDefiniteError):
        GeneratorSpec("factor-normal", model=m)
