import numpy as np
import pytest

from src import linear_models
from src.exceptions import InvalidParamsError, WidthMismatchError
from src.linear_models import (
    CubistModel,
    DegenerateComponentWarning,
    LSSVMModel,
    MinMaxScaler,
    PLSRModel,
    SingularSystemWarning,
    TooFewSamplesError,
    cubist_fit,
    cubist_predict,
    lssvm_fit,
    lssvm_predict,
    plsr_component_rmse,
    plsr_fit,
    plsr_predict,
    plsr_transform,
)


def ols_predictions(X, y):
    design = np.hstack([np.ones((X.shape[0], 1)), X])
    beta = np.linalg.solve(design.T @ design, design.T @ y)
    return design @ beta


def ridge_oracle(T, y, gamma):
    """Ridge with an unpenalized intercept on min-max scaled features, lambda = 1 / gamma."""
    lo = T.min(axis=0)
    Z = (T - lo) / (T.max(axis=0) - lo)
    z_mean, y_mean = Z.mean(axis=0), y.mean()
    Zc = Z - z_mean
    w = np.linalg.solve(Zc.T @ Zc + np.eye(Z.shape[1]) / gamma, Zc.T @ (y - y_mean))
    return y_mean + (Z - z_mean) @ w


# --------------------------------------------------------------------------
# PLSR
# --------------------------------------------------------------------------

def test_plsr_rank_one_exact(rng):
    x = rng.normal(size=(30, 1))
    model = plsr_fit(x, 2.0 * x[:, 0], k=1)
    assert model.n_components == 1
    assert np.allclose(plsr_predict(model, x), 2.0 * x[:, 0], atol=1e-10)
    assert model.spectral_coefficients()[0] == pytest.approx(2.0, abs=1e-10)


def test_plsr_full_rank_matches_ols():
    rng = np.random.default_rng(5)
    for _ in range(50):
        X = rng.normal(size=(60, 20))
        y = X @ rng.normal(size=20) + rng.normal(scale=0.5, size=60) + 3.0
        model = plsr_fit(X, y, k=20)
        oracle = ols_predictions(X, y)
        assert np.allclose(plsr_predict(model, X), oracle, rtol=1e-8, atol=1e-8 * np.abs(oracle).max())


def test_plsr_scores_are_orthogonal(rng):
    X = rng.normal(size=(60, 20))
    y = X[:, :3].sum(axis=1) + rng.normal(scale=0.1, size=60)
    T = plsr_transform(plsr_fit(X, y, k=10), X)
    gram = T.T @ T
    norms = np.sqrt(np.diag(gram))
    off = np.abs(gram - np.diag(np.diag(gram))) / np.outer(norms, norms)
    assert off.max() < 1e-8


def test_plsr_transform_examples(rng):
    X = rng.normal(size=(25, 8))
    y = X[:, 0] - X[:, 3]
    model = plsr_fit(X, y, k=4)
    assert np.allclose(plsr_transform(model, model.x_mean), 0.0, atol=1e-12)
    doubled = plsr_transform(model, np.vstack([X[5], X[5]]))
    assert np.array_equal(doubled[0], doubled[1])
    with pytest.raises(WidthMismatchError):
        plsr_transform(model, X[:, :7])


def test_plsr_constant_target_predicts_mean(rng):
    X = rng.normal(size=(20, 5))
    with pytest.warns(DegenerateComponentWarning):
        model = plsr_fit(X, np.full(20, 4.5), k=3)
    assert model.n_components == 0
    assert np.allclose(plsr_predict(model, X), 4.5)


def test_plsr_shift_invariance(rng):
    X = rng.normal(size=(40, 10))
    y = X @ rng.normal(size=10)
    base = plsr_predict(plsr_fit(X, y, k=5), X)
    shifted = plsr_predict(plsr_fit(X, y + 100.0, k=5), X)
    assert np.allclose(shifted, base + 100.0, atol=1e-9)


def test_plsr_k_validation(rng):
    X = rng.normal(size=(10, 4))
    with pytest.raises(InvalidParamsError):
        plsr_fit(X, X[:, 0], k=0)
    with pytest.raises(InvalidParamsError):
        plsr_fit(X, X[:, 0], k=5)


def test_plsr_component_rmse_ends_at_full_model(rng):
    X = rng.normal(size=(50, 12))
    y = X[:, 0] + 0.1 * rng.normal(size=50)
    model = plsr_fit(X[:40], y[:40], k=6)
    scan = plsr_component_rmse(model, X[40:], y[40:])
    assert len(scan) == 6
    full = np.sqrt(np.mean((plsr_predict(model, X[40:]) - y[40:]) ** 2))
    assert scan[-1] == pytest.approx(full, rel=1e-12)


def test_plsr_arrays_round_trip(rng):
    X = rng.normal(size=(30, 7))
    y = X[:, 2] * 3.0
    model = plsr_fit(X, y, k=3, scale=True)
    restored = PLSRModel.from_arrays(model.to_arrays())
    assert np.array_equal(plsr_predict(restored, X), plsr_predict(model, X))
    assert np.allclose(X @ model.spectral_coefficients() + model.y_mean
                       - model.x_mean / model.x_scale @ model.coefficients, plsr_predict(model, X))


def test_plsr_is_deterministic(rng):
    X = rng.normal(size=(30, 7))
    y = rng.normal(size=30)
    a, b = plsr_fit(X, y, k=4), plsr_fit(X, y, k=4)
    assert a.coefficients.tobytes() == b.coefficients.tobytes()


# --------------------------------------------------------------------------
# Cubist
# --------------------------------------------------------------------------

def piecewise_data():
    t = np.linspace(-5.0, 5.0, 200)
    y = np.where(t < 0, 3.0 * t, -2.0 * t + 20.0)
    return t[:, np.newaxis], y


def test_cubist_recovers_piecewise_slopes():
    T, y = piecewise_data()
    model = cubist_fit(T, y, min_leaf=10)
    assert len(model.rules) >= 2
    for rule in model.rules:
        covered = T[rule.matches(T), 0]
        slope = -2.0 if covered.min() > 0 else 3.0
        assert np.all((covered > 0) == (slope < 0))
        assert rule.coefficients[0] == pytest.approx(slope, abs=1e-6)
    assert np.allclose(cubist_predict(model, T), y, atol=1e-8)


def test_cubist_single_linear_model_equals_ols(rng):
    T = rng.uniform(-1, 1, size=(120, 2))
    y = 1.5 * T[:, 0] - 0.5 * T[:, 1] + 2.0
    model = cubist_fit(T, y)
    assert len(model.rules) == 1
    assert model.rules[0].conditions == ()
    assert np.allclose(cubist_predict(model, T), ols_predictions(T, y), atol=1e-9)


def test_cubist_constant_target():
    T = np.arange(40.0)[:, np.newaxis]
    model = cubist_fit(T, np.full(40, 2.5))
    assert len(model.rules) == 1
    assert np.allclose(cubist_predict(model, T), 2.5)


def test_cubist_rules_partition_training_data(rng):
    T = rng.normal(size=(300, 3))
    y = np.sin(2 * T[:, 0]) + T[:, 1] ** 2 + 0.05 * rng.normal(size=300)
    model = cubist_fit(T, y, min_leaf=15)
    coverage = np.sum([rule.matches(T) for rule in model.rules], axis=0)
    assert np.all(coverage == 1)
    assert all(rule.n_samples >= 15 for rule in model.rules)
    assert np.all(np.isfinite(cubist_predict(model, T)))
    for rule in model.rules:
        keys = [(c.feature, c.op) for c in rule.conditions]
        assert len(keys) == len(set(keys))


def test_cubist_tie_break_prefers_lowest_feature():
    T, y = piecewise_data()
    model = cubist_fit(np.hstack([T, T]), y)
    features = {c.feature for rule in model.rules for c in rule.conditions}
    assert features == {0}


def test_cubist_smoothing_and_round_trip(rng):
    T = rng.normal(size=(200, 2))
    y = np.where(T[:, 0] > 0, T[:, 1], -T[:, 1]) + 0.01 * rng.normal(size=200)
    plain = cubist_fit(T, y, min_leaf=10)
    smoothed = cubist_fit(T, y, min_leaf=10, smoothing=True)
    assert len(plain.rules) == len(smoothed.rules)
    assert np.all(np.isfinite(cubist_predict(smoothed, T)))
    restored = CubistModel.from_arrays(smoothed.to_arrays())
    assert restored.smoothing
    assert np.array_equal(cubist_predict(restored, T), cubist_predict(smoothed, T))
    assert "if " in plain.rules[0].describe()


def test_cubist_too_few_samples():
    with pytest.raises(TooFewSamplesError):
        cubist_fit(np.zeros((15, 1)), np.zeros(15), min_leaf=10)


def test_cubist_width_mismatch():
    T, y = piecewise_data()
    model = cubist_fit(T, y)
    with pytest.raises(WidthMismatchError):
        cubist_predict(model, np.zeros((3, 2)))


# --------------------------------------------------------------------------
# LS-SVM
# --------------------------------------------------------------------------

def test_lssvm_two_points_line():
    model = lssvm_fit(np.array([[0.0], [1.0]]), np.array([1.0, 3.0]), gamma=1e6)
    assert lssvm_predict(model, np.array([[0.5]]))[0] == pytest.approx(2.0, abs=1e-5)
    assert lssvm_predict(model, np.array([[1.0]]))[0] == pytest.approx(3.0, abs=1e-5)


def test_lssvm_constant_target(rng):
    model = lssvm_fit(rng.normal(size=(30, 3)), np.full(30, 7.0), gamma=10.0)
    assert np.allclose(model.alphas, 0.0, atol=1e-9)
    assert model.bias == pytest.approx(7.0)


def test_lssvm_matches_ridge_oracle():
    rng = np.random.default_rng(17)
    for _ in range(50):
        T = rng.normal(size=(80, 5))
        y = T @ rng.normal(size=5) + rng.normal(scale=0.3, size=80)
        gamma = float(10 ** rng.uniform(-1, 3))
        model = lssvm_fit(T, y, gamma)
        oracle = ridge_oracle(T, y, gamma)
        assert np.allclose(lssvm_predict(model, T), oracle, rtol=1e-6, atol=1e-6 * np.abs(oracle).max())
        assert model.system_residual(y) < 1e-8


def test_lssvm_primal_path_matches_dual(rng, mocker):
    T = rng.normal(size=(60, 4))
    y = T @ np.array([1.0, -2.0, 0.5, 0.0]) + 0.1 * rng.normal(size=60)
    dual = lssvm_fit(T, y, gamma=50.0)
    mocker.patch.object(linear_models, "DUAL_MAX_SAMPLES", 10)
    primal = lssvm_fit(T, y, gamma=50.0)
    assert np.allclose(primal.alphas, dual.alphas, atol=1e-8)
    assert primal.bias == pytest.approx(dual.bias, abs=1e-9)
    assert primal.system_residual(y) < 1e-8


def test_lssvm_singular_system_falls_back_to_pinv(rng, mocker):
    T = rng.normal(size=(20, 2))
    y = T[:, 0]
    expected = lssvm_fit(T, y, gamma=5.0)
    mocker.patch("src.linear_models.np.linalg.solve", side_effect=np.linalg.LinAlgError("singular"))
    with pytest.warns(SingularSystemWarning):
        fallback = lssvm_fit(T, y, gamma=5.0)
    assert np.allclose(fallback.alphas, expected.alphas, atol=1e-8)


def test_lssvm_scaler_clamps_new_data():
    scaler = MinMaxScaler.fit(np.array([[0.0, 5.0], [10.0, 5.0]]))
    out = scaler.transform(np.array([[-5.0, 5.0], [20.0, 6.0]]))
    assert out.tolist() == [[0.0, 0.0], [1.0, 1.0]]


def test_lssvm_arrays_round_trip_and_gamma_validation(rng):
    T = rng.normal(size=(25, 3))
    y = T.sum(axis=1)
    model = lssvm_fit(T, y, gamma=100.0)
    restored = LSSVMModel.from_arrays(model.to_arrays())
    assert np.array_equal(lssvm_predict(restored, T), lssvm_predict(model, T))
    with pytest.raises(InvalidParamsError):
        lssvm_fit(T, y, gamma=0.0)
