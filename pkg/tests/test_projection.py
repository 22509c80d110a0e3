import numpy as np
import pytest
from sklearn.base import clone

from migdetect.exceptions import NumericError, ValidationError
from migdetect.geometry import MEASURES
from migdetect.means import geometric_mean, variance
from migdetect.projection import (
    LearnerConfig,
    ManifoldProjection,
    check_stiefel,
    compress,
    euclid_grad,
    learn_projection,
    orthonormality_defect,
    psi_loss,
    random_stiefel,
    retract,
    riem_grad,
)
from oracles import cosine, fd_gradient, random_hpd, rel


def _problem(rng, n=6, m=3, count=8):
    data = random_hpd(rng, n, size=count)
    W = random_stiefel(n, m, rng)
    return data, W


@pytest.mark.parametrize("measure", MEASURES)
def test_euclidean_gradient_matches_finite_differences(rng, measure):
    data, W = _problem(rng)
    Z = geometric_mean(measure, compress(W, data))
    G = euclid_grad(measure, W, data, Z)
    F = fd_gradient(lambda X: psi_loss(measure, X, data, Z), W)
    assert cosine(G, F) >= 0.999
    assert rel(G, F) < 1e-5


def test_psi_at_mean_is_negative_variance(rng):
    data, W = _problem(rng)
    Z = geometric_mean("JBLD", compress(W, data))
    assert psi_loss("JBLD", W, data, Z) == pytest.approx(
        -variance("JBLD", compress(W, data), Z))


def test_riemannian_gradient_is_tangent(rng):
    data, W = _problem(rng)
    G = rng.standard_normal(W.shape) + 1j * rng.standard_normal(W.shape)
    D = riem_grad(W, G)
    skew = W.conj().T @ D + D.conj().T @ W
    assert np.linalg.norm(skew) < 1e-12


def test_riemannian_gradient_of_tangent_vector_is_identity(rng):
    _, W = _problem(rng)
    G = rng.standard_normal(W.shape) + 1j * rng.standard_normal(W.shape)
    D = riem_grad(W, G)
    assert rel(riem_grad(W, D), D) < 1e-12


def test_retraction(rng):
    _, W = _problem(rng)
    D = riem_grad(W, rng.standard_normal(W.shape) + 0j)
    for step in (1e-3, 0.5, 10.0):
        assert orthonormality_defect(retract(W, D, step)) < 1e-12
    assert np.array_equal(retract(W, D, 0.0), W)
    # first-order agreement with W + step D
    step = 1e-6
    assert np.linalg.norm(retract(W, D, step) - W - step * D) < 1e-9


def test_retract_rank_deficient_raises():
    W = np.eye(3)[:, :2].astype(complex)
    D = -W
    with pytest.raises(NumericError):
        retract(W, D, 1.0)


def test_check_stiefel():
    with pytest.raises(ValidationError, match="orthonormal"):
        check_stiefel(np.ones((3, 2)))
    with pytest.raises(ValidationError):
        check_stiefel(np.eye(2, 3))


def test_compress_with_identity_columns_gives_principal_submatrix(rng):
    R = random_hpd(rng, 5)
    W = np.eye(5)[:, :3]
    assert np.allclose(compress(W, R), R[:3, :3])


@pytest.mark.parametrize("measure", MEASURES)
def test_learning_invariants(rng, measure):
    data = random_hpd(rng, 5, size=40) * np.exp(rng.normal(size=40))[:, None, None]
    res = learn_projection(measure, data, 2,
                           LearnerConfig(outer_iterations=8, rgd_iterations=5))
    assert res.max_orthonormality_defect <= 1e-10
    for steps in res.psi_traces:
        assert all(b < a for a, b in zip(steps, steps[1:]))
    trace = res.objective_trace
    assert all(b >= a for a, b in zip(trace, trace[1:]))
    assert trace[-1] > trace[0]
    Z = geometric_mean(measure, compress(res.W, data))
    assert res.variance == pytest.approx(
        variance(measure, compress(res.W, data), Z), rel=1e-8)


@pytest.mark.parametrize("measure", MEASURES)
def test_full_dimension_recovers_unprojected_variance(rng, measure):
    data = random_hpd(rng, 4, size=30)
    res = learn_projection(measure, data, 4,
                           LearnerConfig(outer_iterations=3, rgd_iterations=3))
    full = variance(measure, data, geometric_mean(measure, data))
    assert res.variance == pytest.approx(full, rel=1e-6)


def test_identical_data_flags_zero_variance(rng):
    P = random_hpd(rng, 4)
    res = learn_projection("LEM", np.stack([P] * 5), 2)
    assert res.zero_variance and res.variance == 0.0
    assert orthonormality_defect(res.W) < 1e-12


def test_learning_rejects_bad_dimensions(rng):
    data = random_hpd(rng, 4, size=5)
    with pytest.raises(ValidationError):
        learn_projection("LEM", data, 5)
    with pytest.raises(ValidationError):
        learn_projection("LEM", data, 0)


def test_learner_config_validation():
    with pytest.raises(ValidationError):
        LearnerConfig(armijo_shrink=1.0)
    with pytest.raises(ValidationError):
        LearnerConfig(outer_iterations=0)


def test_estimator_api(rng):
    data = random_hpd(rng, 5, size=30)
    est = ManifoldProjection(n_components=2, measure="SKLD",
                             outer_iterations=4, rgd_iterations=3)
    params = est.get_params()
    assert params["n_components"] == 2 and params["measure"] == "SKLD"
    assert clone(est).get_params() == params
    out = est.fit(data).transform(data)
    assert out.shape == (30, 2, 2)
    assert est.n_features_in_ == 5
    assert np.array_equal(est.fit_transform(data), out)
    wrapped = ManifoldProjection.from_matrix(est.W_, "SKLD")
    assert np.array_equal(wrapped.transform(data), out)


def test_transform_requires_fit(rng):
    from sklearn.exceptions import NotFittedError
    with pytest.raises(NotFittedError):
        ManifoldProjection().transform(random_hpd(rng, 3))


def test_learning_is_deterministic(rng):
    data = random_hpd(rng, 4, size=20)
    cfg = LearnerConfig(outer_iterations=3, rgd_iterations=3, seed=5)
    a = learn_projection("JBLD", data, 2, cfg)
    b = learn_projection("JBLD", data, 2, cfg)
    assert np.array_equal(a.W, b.W)
