import numpy as np
import pytest

from coalition_forge.errors import ConfigError, ShapeError
from coalition_forge.pareto import LinearModel
from coalition_forge.tasks import (
    ClientSet,
    Dataset,
    SyntheticConfig,
    evaluate_mse,
    generate_synthetic_network,
    utility,
)


def test_flipped_clients_have_negated_labels():
    cs = generate_synthetic_network(SyntheticConfig(n_clients=6, n_train=2000, rho=0.1, flip_set={3, 4, 5}, seed=1))
    assert len(cs) == 6
    assert [c.sign for c in cs] == [1, 1, 1, -1, -1, -1]
    for c in cs:
        # noise-free test labels equal sign * X u
        np.testing.assert_allclose(c.test.labels, c.sign * c.test.features @ c.ground_truth)


def test_degenerate_network_shares_ground_truth():
    cs = generate_synthetic_network(SyntheticConfig(rho=0.0, sigma=0.0, seed=3))
    u0 = cs[0].ground_truth
    for c in cs:
        np.testing.assert_array_equal(c.ground_truth, u0)
        np.testing.assert_allclose(c.train.labels, c.train.features @ u0, atol=1e-12)


def test_same_seed_is_bit_identical():
    a = generate_synthetic_network(SyntheticConfig(seed=11))
    b = generate_synthetic_network(SyntheticConfig(seed=11))
    for ca, cb in zip(a, b):
        for split in ("train", "validation", "test"):
            assert getattr(ca, split).features.tobytes() == getattr(cb, split).features.tobytes()
            assert getattr(ca, split).labels.tobytes() == getattr(cb, split).labels.tobytes()


def test_split_sizes():
    cfg = SyntheticConfig(n_train=2000, val_fraction=0.13, n_test=300)
    c = generate_synthetic_network(cfg)[0]
    assert c.validation.n_samples == 260
    assert c.train.n_samples == 1740
    assert c.test.n_samples == 300


def test_feature_means_near_zero():
    cs = generate_synthetic_network(SyntheticConfig(n_train=1000, seed=5))
    bound = 4 * 2.0 / np.sqrt(12 * 1000)
    for c in cs:
        X = np.vstack([c.train.features, c.validation.features])
        assert np.all(np.abs(X.mean(axis=0)) <= bound)


@pytest.mark.parametrize("kwargs", [
    dict(n_clients=0), dict(n_train=1), dict(rho=-1.0), dict(val_fraction=1.0),
    dict(flip_set={9}), dict(seed=-1),
])
def test_bad_config_rejected(kwargs):
    with pytest.raises(ConfigError):
        SyntheticConfig(**kwargs)


def test_mse_hand_example():
    data = Dataset(np.array([[1.0], [2.0]]), np.array([1.0, 2.0]))
    assert evaluate_mse(LinearModel(np.array([0.5]), 0.0), data) == pytest.approx(0.625)


def test_perfect_model_has_zero_error():
    c = generate_synthetic_network(SyntheticConfig(sigma=0.0, seed=2))[0]
    model = LinearModel(c.ground_truth, 0.0)
    assert evaluate_mse(model, c.train) == pytest.approx(0.0, abs=1e-24)
    assert utility(model, c, "test") == pytest.approx(0.0, abs=1e-24)


def test_utility_is_negative_mse():
    c = generate_synthetic_network(SyntheticConfig(sigma=0.5, seed=2))[0]
    good = LinearModel(c.ground_truth, 0.0)
    bad = LinearModel(c.ground_truth * 0.5, 0.0)
    assert utility(good, c) == -evaluate_mse(good, c.validation)
    assert utility(good, c, "test") > utility(bad, c, "test")


def test_shape_mismatch():
    data = Dataset(np.zeros((3, 2)), np.zeros(3))
    with pytest.raises(ShapeError):
        evaluate_mse(LinearModel(np.zeros(3)), data)
    with pytest.raises(ShapeError):
        Dataset(np.zeros((3, 2)), np.zeros(4))


def test_moments_reproduce_mse():
    c = generate_synthetic_network(SyntheticConfig(sigma=0.3, seed=4))[1]
    model = LinearModel(np.linspace(-1, 1, 10), 0.2)
    G, r, k = c.validation.moments
    beta = np.append(model.coefficients, model.intercept)
    assert beta @ G @ beta - 2 * r @ beta + k == pytest.approx(evaluate_mse(model, c.validation), rel=1e-10)


def test_clientset_roster():
    cs = generate_synthetic_network(SyntheticConfig(n_clients=4))
    assert cs.ids == (0, 1, 2, 3)
    sub = cs.subset([3, 1])
    assert sub.ids == (1, 3) and 2 not in sub
    with pytest.raises(ValueError):
        ClientSet([cs[0], cs[0]])
