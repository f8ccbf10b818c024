import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.stats import special_ortho_group

from gaitlab.errors import (
    DegenerateModelError,
    InsufficientClassesError,
    ParameterError,
    ShapeError,
)
from gaitlab.geometric import PRESETS
from gaitlab.learned import (
    FeatureModel,
    GaitTemplate,
    compute_scatter,
    fit_mmc,
    fit_model,
    fit_pcalda,
    load_model,
    project,
    raw_model,
    save_model,
    template_distance,
)
from gaitlab.mocap import vectorize_all
from gaitlab.skeleton import JointMask


def _blobs(n_classes, per_class, dim, seed, spread=3.0):
    rng = np.random.default_rng(seed)
    centers = rng.normal(scale=spread, size=(n_classes, dim))
    X = np.concatenate([c + rng.normal(size=(per_class, dim)) for c in centers])
    labels = [f"c{k}" for k in range(n_classes) for _ in range(per_class)]
    return X, labels


# -- scatter ------------------------------------------------------------------------

def test_scatter_two_singletons():
    sc = compute_scatter([[0.0], [2.0]], ["a", "b"])
    assert sc.mean.tolist() == [1.0]
    assert sc.between.tolist() == [[1.0]] and sc.within.tolist() == [[0.0]]


def test_scatter_identical_samples():
    sc = compute_scatter(np.ones((4, 3)), ["a", "a", "b", "b"])
    assert not sc.between.any() and not sc.within.any()


def test_scatter_two_pairs():
    sc = compute_scatter([[0.0], [2.0], [10.0], [12.0]], ["a", "a", "b", "b"])
    assert sc.between[0, 0] == pytest.approx(25.0)
    assert sc.within[0, 0] == pytest.approx(1.0)
    assert sc.priors.sum() == pytest.approx(1.0)


def test_scatter_needs_two_classes():
    with pytest.raises(InsufficientClassesError):
        compute_scatter([[0.0], [1.0]], ["a", "a"])


def test_scatter_properties():
    X, y = _blobs(4, 6, 5, seed=1)
    sc = compute_scatter(X, y)
    assert np.array_equal(sc.between, sc.between.T) and np.array_equal(sc.within, sc.within.T)
    assert np.linalg.eigvalsh(sc.within).min() > -1e-10
    # total scatter decomposes into between plus within
    Xc = X - X.mean(axis=0)
    assert np.allclose(sc.between + sc.within, Xc.T @ Xc / len(X), atol=1e-10)


# -- MMC ----------------------------------------------------------------------

def test_mmc_scalar_eigenvalue():
    m = fit_mmc([[0.0], [2.0], [10.0], [12.0]], ["a", "a", "b", "b"])
    assert m.d_out == 1
    assert m.eigenvalues[0] == pytest.approx(24.0)
    assert m.projection.tolist() == [[1.0]]


def test_mmc_ignores_constant_axis():
    rng = np.random.default_rng(0)
    X = np.column_stack([np.r_[rng.normal(0, 1, 5), rng.normal(8, 1, 5)], np.full(10, 3.0)])
    m = fit_mmc(X, ["a"] * 5 + ["b"] * 5)
    assert abs(m.projection[0, 1]) <= 1e-8


def test_mmc_trace_criterion_and_orthonormal_rows():
    X, y = _blobs(5, 8, 20, seed=2)
    m = fit_mmc(X, y)
    sc = compute_scatter(X, y)
    W = m.projection
    assert np.allclose(W @ W.T, np.eye(m.d_out), atol=1e-8)
    crit = np.trace(W @ (sc.between - sc.within) @ W.T)
    assert crit == pytest.approx(m.eigenvalues.sum(), abs=1e-8)
    assert np.all(np.diff(m.eigenvalues) <= 0) and np.all(m.eigenvalues > 0)


def test_mmc_eigen_residual():
    X, y = _blobs(5, 8, 20, seed=3)
    m = fit_mmc(X, y)
    sc = compute_scatter(X, y)
    A = sc.between - sc.within
    for w, lam in zip(m.projection, m.eigenvalues):
        assert np.linalg.norm(A @ w - lam * w) <= 1e-8 * np.linalg.norm(A, 2)


def test_mmc_keeps_all_positive_directions():
    X, y = _blobs(5, 8, 20, seed=4)
    sc = compute_scatter(X, y)
    evals = np.linalg.eigvalsh(sc.between - sc.within)
    tol = 1e-10 * np.trace(sc.between + sc.within)
    m = fit_mmc(X, y)
    assert m.d_out == int(np.sum(evals > tol))
    assert np.allclose(m.eigenvalues, np.sort(evals[evals > tol])[::-1], atol=1e-9)


def test_mmc_sign_canonical_and_deterministic():
    X, y = _blobs(3, 6, 7, seed=5)
    a, b = fit_mmc(X, y), fit_mmc(X, y)
    assert np.array_equal(a.projection, b.projection)
    for row in a.projection:
        first = row[np.abs(row) > 1e-12 * np.abs(row).max()][0]
        assert first > 0


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_mmc_rotation_invariance(seed):
    X, y = _blobs(4, 6, 10, seed=seed)
    R = special_ortho_group.rvs(10, random_state=seed)
    a = fit_mmc(X, y).eigenvalues.sum()
    b = fit_mmc(X @ R.T, y).eigenvalues.sum()
    assert a == pytest.approx(b, abs=1e-6)


def test_mmc_high_dimensional_small_sample():
    X, y = _blobs(4, 3, 500, seed=6)
    m = fit_mmc(X, y)
    assert m.d_in == 500
    assert np.allclose(m.projection @ m.projection.T, np.eye(m.d_out), atol=1e-8)
    np.linalg.cholesky(m.precision)


def test_mmc_degenerate():
    with pytest.raises(DegenerateModelError):
        fit_mmc(np.zeros((4, 3)), ["a", "a", "b", "b"])
    # identical class means: S_b = 0 so no positive eigenvalue
    X = np.array([[-1.0, 0], [1, 0], [0, -1], [0, 1]])
    with pytest.raises(DegenerateModelError):
        fit_mmc(X, ["a", "a", "b", "b"])


def test_precision_is_spd():
    X, y = _blobs(5, 8, 20, seed=7)
    for m in (fit_mmc(X, y), fit_pcalda(X, y)):
        P = m.precision
        assert np.allclose(P, P.T)
        assert np.linalg.eigvalsh(P).min() > 0


# -- PCA+LDA --------------------------------------------------------------------

def test_pcalda_two_classes_one_direction():
    X, y = _blobs(2, 10, 3, seed=8, spread=10)
    assert fit_pcalda(X, y).d_out == 1


def test_pcalda_identical_means():
    X = np.array([[-1.0, 0, 0], [1, 0, 0], [0, -1, 0], [0, 1, 0], [0, 0, 1], [0, 0, -1]])
    with pytest.raises(DegenerateModelError):
        fit_pcalda(X, ["a", "a", "b", "b", "c", "c"])


def test_pcalda_parameter_checks():
    X, y = _blobs(2, 4, 3, seed=0)
    for bad in (0.0, 1.5, -0.1):
        with pytest.raises(ParameterError):
            fit_pcalda(X, y, variance_keep=bad)
    with pytest.raises(DegenerateModelError):
        fit_pcalda(np.ones((6, 3)), ["a", "a", "b", "b", "c", "c"])


def _pcalda_oracle(X, labels, keep):
    """Dense textbook route: covariance eigh, then inv(B) A eigenproblem."""
    N = len(X)
    classes = sorted(set(labels))
    C = len(classes)
    mu = X.mean(axis=0)
    cov = (X - mu).T @ (X - mu) / N
    var, vecs = np.linalg.eigh(cov)
    var, vecs = var[::-1], vecs[:, ::-1]
    k = int(np.searchsorted(np.cumsum(var), keep * var.sum() * (1 - 1e-12)) + 1)
    k = min(k, N - C)
    P = vecs[:, :k]
    Y = (X - mu) @ P
    Sb = np.zeros((k, k))
    Sw = np.zeros((k, k))
    lab = np.array(labels)
    for c in classes:
        Yc = Y[lab == c]
        m = Yc.mean(axis=0)
        Sb += len(Yc) / N * np.outer(m, m)
        Sw += (Yc - m).T @ (Yc - m) / N
    B = Sw + 1e-6 * np.mean(np.diag(Sw)) * np.eye(k)
    evals, evecs = np.linalg.eig(np.linalg.solve(B, Sb))
    evals, evecs = evals.real, evecs.real
    order = np.argsort(evals)[::-1][: C - 1]
    V = evecs[:, order]
    V /= np.sqrt(np.einsum("ij,ij->j", V, B @ V))
    W = (P @ V).T
    means = np.array([X[lab == c].mean(axis=0) for c in classes])
    return means @ W.T, evals[order]


def test_pcalda_matches_generalized_eigen_oracle():
    X, y = _blobs(4, 10, 12, seed=9)
    m = fit_pcalda(X, y)
    want, want_evals = _pcalda_oracle(X, y, 0.99)
    lab = np.array(y)
    got = np.array([X[lab == c].mean(axis=0) for c in sorted(set(y))]) @ m.projection.T
    assert m.d_out == 3
    assert np.allclose(m.eigenvalues, want_evals, rtol=1e-6)
    for a in range(m.d_out):
        sign = np.sign(got[:, a] @ want[:, a])
        assert np.allclose(got[:, a], sign * want[:, a], atol=1e-6)


def test_pcalda_respects_variance_cap():
    X, y = _blobs(3, 4, 30, seed=10)
    # N - C = 9 caps the PCA stage even though 30 axes carry variance
    m = fit_pcalda(X, y, variance_keep=1.0)
    assert m.d_out <= 2


# -- project and distance ----------------------------------------------------------

def test_identity_projection(walker):
    m = raw_model(JointMask.full(), 4)
    v = np.arange(m.d_in, dtype=float)
    assert np.array_equal(project(m, v).features, v)
    assert np.array_equal(project(m, walker).features, vectorize_all([walker], frames=4)[0])


def test_zero_vector_projects_to_zero():
    X, y = _blobs(3, 5, 6, seed=11)
    m = fit_mmc(X, y)
    assert not project(m, np.zeros(6)).features.any()


def test_project_shape_error():
    X, y = _blobs(3, 5, 6, seed=11)
    with pytest.raises(ShapeError):
        project(fit_mmc(X, y), np.zeros(5))


def test_projected_learning_data_reproduces_eigenvalues():
    X, y = _blobs(5, 8, 20, seed=12)
    m = fit_mmc(X, y)
    Z = np.stack([project(m, x).features for x in X])
    sc = compute_scatter(Z, y)
    assert np.trace(sc.between - sc.within) == pytest.approx(m.eigenvalues.sum(), abs=1e-8)


def test_distance_examples():
    eu = FeatureModel("mmc", JointMask((0,)), 2, np.eye(2, 6), None)
    assert template_distance(eu, [0.0, 0.0], [3.0, 4.0]) == pytest.approx(5.0)
    mah = FeatureModel("mmc", JointMask((0,)), 2, np.eye(2, 6), np.diag([4.0, 1.0]))
    assert template_distance(mah, GaitTemplate(np.zeros(2)), GaitTemplate(np.ones(2))) == \
        pytest.approx(np.sqrt(5.0))
    assert template_distance(mah, [1.0, 2.0], [1.0, 2.0]) == 0.0
    with pytest.raises(ShapeError):
        template_distance(mah, [1.0, 2.0, 3.0], [1.0, 2.0, 3.0])


@settings(max_examples=60, deadline=None)
@given(seed=st.integers(0, 2**31 - 1))
def test_mahalanobis_metric_axioms(seed):
    rng = np.random.default_rng(seed)
    A = rng.normal(size=(4, 4))
    P = A @ A.T + 0.1 * np.eye(4)
    m = FeatureModel("mmc", JointMask((0,)), 2, np.eye(4, 6), P)
    a, b, c = rng.normal(scale=5, size=(3, 4))
    dab, dba = template_distance(m, a, b), template_distance(m, b, a)
    assert dab == pytest.approx(dba, rel=1e-12, abs=1e-12)
    assert template_distance(m, a, a) == 0.0
    assert template_distance(m, a, c) <= dab + template_distance(m, b, c) + 1e-9


def test_whitening_matches_distance():
    X, y = _blobs(4, 6, 9, seed=13)
    m = fit_mmc(X, y)
    Z = X @ m.projection.T
    W = m.whiten(Z)
    assert np.linalg.norm(W[0] - W[5]) == pytest.approx(template_distance(m, Z[0], Z[5]), rel=1e-9)


# -- fit by name and persistence ------------------------------------------------------

def test_fit_model_methods(small_dataset):
    learn = small_dataset.samples
    for method in ("mmc", "pcalda", "raw"):
        m = fit_model(method, learn, frames=8)
        assert m.method == method and m.d_out >= 1
    g = fit_model("geometric", learn, spec=PRESETS["preset-lower-body"], frame_rate=120.0)
    assert g.metric == "euclidean" and g.d_out == 20
    gm = fit_model("geometric", learn, spec=PRESETS["preset-lower-body"], frame_rate=120.0,
                   metric="mahalanobis")
    assert gm.metric == "mahalanobis"
    with pytest.raises(ParameterError):
        fit_model("lda", learn)
    with pytest.raises(ParameterError):
        fit_model("geometric", learn)


def test_fit_model_respects_mask(small_dataset):
    mask = JointMask.excluding(["lhand", "rhand"])
    m = fit_model("mmc", small_dataset.samples, mask=mask, frames=6)
    assert m.d_in == 3 * 29 * 6
    assert project(m, small_dataset.samples[0]).features.shape == (m.d_out,)


def test_cross_identity_projection_ignores_labels(small_dataset):
    m = fit_model("mmc", small_dataset.samples[:15], frames=8)
    s = small_dataset.samples[20]
    assert np.array_equal(project(m, s).features, project(m, s, label="zzz").features)


@pytest.mark.parametrize("method", ["mmc", "pcalda", "raw", "geometric"])
def test_model_file_roundtrip(method, small_dataset, tmp_path):
    m = fit_model(method, small_dataset.samples, frames=8, frame_rate=120.0,
                  spec=PRESETS["preset-broad"])
    path = tmp_path / "model.gm"
    save_model(m, path)
    back = load_model(path)
    s = small_dataset.samples[3]
    assert back.method == m.method and back.metric == m.metric
    assert np.array_equal(project(back, s).features, project(m, s).features)
    if m.precision is not None:
        assert np.array_equal(back.precision, m.precision)


def test_load_rejects_foreign_file(tmp_path):
    path = tmp_path / "x.gm"
    path.write_text('{"format": "other"}')
    with pytest.raises(ParameterError):
        load_model(path)
