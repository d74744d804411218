import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from beir_narrative.pls import (
    EarlyStopWarning,
    PlsError,
    PlsModel,
    category_profile,
    explained_variance_check,
    fit_baseline,
    fit_pls,
    max_abs_correlation,
    residuals,
    transform,
)
from beir_narrative.taxonomy import RETAINED, ThemeTaxonomy, load_rules


def _problem(seed, n=20, p=10):
    rng = np.random.default_rng(seed)
    return rng.normal(size=(n, p)), rng.normal(size=n)


# --- SIMPLS -----------------------------------------------------------------------

@pytest.mark.parametrize("seed", range(10))
def test_first_weight_is_normalized_cross_product(seed):
    X, y = _problem(seed)
    m = fit_pls(X, y, 5)
    Xc = X - X.mean(axis=0)
    xy = Xc.T @ (y - y.mean())
    r1 = m.weights[:, 0] / np.linalg.norm(m.weights[:, 0])
    np.testing.assert_allclose(r1, xy / np.linalg.norm(xy), atol=1e-8)


@pytest.mark.parametrize("seed", range(10))
def test_scores_orthogonal_and_nonincreasing_covariance(seed):
    X, y = _problem(seed, n=40, p=12)
    m = fit_pls(X, y, 5)
    C = np.corrcoef(m.scores.T)
    assert np.max(np.abs(C - np.eye(5))) < 1e-6
    assert np.all(np.diff(m.covariance) <= 1e-12)


@pytest.mark.parametrize("seed", range(5))
def test_predictions_match_sklearn_pls(seed):
    from sklearn.cross_decomposition import PLSRegression

    X, y = _problem(seed, n=50, p=8)
    m = fit_pls(X, y, 3)
    yhat = y.mean() + m.scores @ m.y_loadings
    ref = PLSRegression(n_components=3, scale=False).fit(X, y).predict(X).ravel()
    np.testing.assert_allclose(yhat, ref, atol=1e-8)


def test_single_column():
    rng = np.random.default_rng(0)
    x = rng.normal(size=(30, 1))
    y = 2 * x[:, 0] + rng.normal(size=30)
    with pytest.warns(EarlyStopWarning):
        m = fit_pls(x, y, 5)
    assert m.n_components == 1
    assert abs(np.corrcoef(m.scores[:, 0], x[:, 0])[0, 1]) == pytest.approx(1.0, abs=1e-12)


def test_exact_two_column_signal_explained():
    # orthogonal columns with distinct scales: y lies in a 2-D Krylov space
    rng = np.random.default_rng(1)
    Q, _ = np.linalg.qr(np.column_stack([np.ones(100), rng.normal(size=(100, 10))]))
    X = Q[:, 1:] * np.arange(1.0, 11.0)
    y = 1.5 * X[:, 2] - 0.7 * X[:, 6]
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", EarlyStopWarning)
        m = fit_pls(X, y, 2)
    assert m.explained[:2].sum() > 0.999
    ok, fr = explained_variance_check(m, 0.8)
    assert ok and fr.size == 2


def test_noise_target_fails_check():
    rng = np.random.default_rng(2)
    X = rng.normal(size=(500, 30))
    m = fit_pls(X, rng.normal(size=500), 5)
    ok, fr = explained_variance_check(m, 0.8)
    assert not ok and fr.sum() < 0.2
    assert explained_variance_check(m, 0.0)[0]


def test_zero_cross_covariance_stops():
    X = np.random.default_rng(3).normal(size=(20, 4))
    with pytest.raises(PlsError), pytest.warns(EarlyStopWarning):
        fit_pls(X, np.ones(20), 3)


def test_pls_input_checks():
    X, y = _problem(0, n=5, p=3)
    with pytest.raises(PlsError):
        fit_pls(X, y, 5)
    with pytest.raises(PlsError):
        fit_pls(X, y[:4], 2)


# --- transform ----------------------------------------------------------------------

def test_transform_reproduces_training_scores():
    X, y = _problem(4, n=60, p=10)
    m = fit_pls(X, y, 5)
    np.testing.assert_allclose(transform(m, X), m.scores, atol=1e-10)
    np.testing.assert_array_equal(m.transform(m.mean[None, :]), np.zeros((1, 5)))


def test_transform_matches_matrix_product_and_is_affine():
    X, y = _problem(5, n=60, p=10)
    m = fit_pls(X, y, 4)
    rng = np.random.default_rng(9)
    A, B = rng.normal(size=(7, 10)), rng.normal(size=(7, 10))
    np.testing.assert_allclose(m.transform(A), (A - m.mean) @ m.weights, atol=1e-12)
    a = 0.3
    np.testing.assert_allclose(m.transform(a * A + (1 - a) * B), a * m.transform(A) + (1 - a) * m.transform(B), atol=1e-10)


def test_transform_column_handling():
    X, y = _problem(6, n=40, p=4)
    cols = ["a", "b", "c", "d"]
    m = fit_pls(X, y, 2, columns=cols)
    perm = [2, 0, 3, 1]
    np.testing.assert_allclose(m.transform(X[:, perm], [cols[j] for j in perm]), m.scores, atol=1e-10)
    with pytest.raises(PlsError, match=r"missing \['d'\], extra \['e'\]"):
        m.transform(X, ["a", "b", "c", "e"])


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10_000), st.permutations(range(6)))
def test_column_permutation_leaves_scores(seed, perm):
    X, y = _problem(seed, n=30, p=6)
    cols = [f"t{j}" for j in range(6)]
    a = fit_pls(X, y, 3, columns=cols)
    b = fit_pls(X[:, list(perm)], y, 3, columns=[cols[j] for j in perm])
    np.testing.assert_allclose(a.scores, b.scores, atol=1e-9)


def test_model_json_round_trip():
    X, y = _problem(7, n=40, p=6)
    m = fit_pls(X, y, 3)
    back = PlsModel.from_json(m.to_json())
    np.testing.assert_allclose(back.transform(X), m.scores, atol=1e-10)


# --- baseline -----------------------------------------------------------------------

def test_baseline_independent_labels():
    rng = np.random.default_rng(10)
    X = rng.normal(size=(400, 3)) * 1e-3
    y = (rng.random(400) < 0.6).astype(int)
    b = fit_baseline(X, y)
    np.testing.assert_allclose(b.residuals, y - y.mean(), atol=1e-3)
    assert abs(b.residuals.mean()) < 1e-6


def test_baseline_residual_mean_direct():
    rng = np.random.default_rng(11)
    X = rng.normal(size=(300, 4))
    y = (X[:, 0] + rng.normal(size=300) > 0).astype(int)
    b = fit_baseline(X, y)
    p = b.model.predict_proba(X)
    assert b.residuals.mean() == pytest.approx(np.sum(y - p) / 300, abs=1e-12)
    assert np.all(np.abs(b.residuals) < 1)


def test_baseline_separable():
    x = np.r_[np.linspace(-3, -1, 60), np.linspace(1, 3, 60)][:, None]
    y = np.r_[np.zeros(60), np.ones(60)].astype(int)
    assert np.max(np.abs(fit_baseline(x, y).residuals)) < 0.1


def test_baseline_needs_100_rows():
    with pytest.raises(PlsError):
        fit_baseline(np.zeros((50, 2)), np.r_[np.zeros(25), np.ones(25)])


def test_residual_kinds():
    y = np.array([0, 1, 1])
    p = np.array([0.2, 0.5, 0.9])
    np.testing.assert_allclose(residuals(y, p), [-0.2, 0.5, 0.1])
    np.testing.assert_allclose(residuals(y, p, "pearson"), (y - p) / np.sqrt(p * (1 - p)))
    dev = residuals(y, p, "deviance")
    assert np.all(np.sign(dev) == np.sign(y - p))
    with pytest.raises(PlsError):
        residuals(y, p, "raw")


# --- category profiles ----------------------------------------------------------------

def _model_with_loadings(columns, loadings):
    p = len(columns)
    L = np.asarray(loadings, dtype=float)[:, None]
    return PlsModel(tuple(columns), np.zeros(p), L, L, np.ones(1), np.ones(1), np.ones(1))


def test_profile_all_ecofin():
    tax = load_rules()
    m = _model_with_loadings(["ECON_INFLATION", "EPU_POLICY", "PROTEST"], [0.5, -1.2, 0.0])
    prof = category_profile(m, tax, 0)
    assert prof["Ecofin"] == 1.0
    assert sum(prof.values()) == pytest.approx(1.0, abs=1e-9)


def test_profile_uniform():
    rules = tuple((f"CAT{i:02d}_", c) for i, c in enumerate(RETAINED))
    tax = ThemeTaxonomy(rules=rules)
    cols = [f"CAT{i:02d}_{k}" for i in range(25) for k in range(3)]
    m = _model_with_loadings(cols, np.where(np.arange(75) % 2, 1.0, -1.0))
    prof = category_profile(m, tax, 0)
    assert set(prof) == set(RETAINED)
    for v in prof.values():
        assert v == pytest.approx(0.04, abs=1e-12)


def test_profile_unmapped_reports_as_action():
    tax = load_rules()
    m = _model_with_loadings(["ZZZ_UNKNOWN", "ECON_DEBT"], [1.0, 1.0])
    prof = category_profile(m, tax, 0)
    assert prof["Action"] == 0.5 and prof["Ecofin"] == 0.5
    with pytest.raises(PlsError):
        category_profile(m, tax, 1)


def test_max_abs_correlation():
    a = np.arange(10.0)[:, None]
    assert max_abs_correlation(a, -2 * a) == pytest.approx(1.0)
    assert max_abs_correlation(a, np.ones((10, 1))) == 0.0
