import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from hsgdlab import build_problem, sample_dataset
from hsgdlab.rng import derive_stream
from hsgdlab.stats import (
    ContourPoint,
    QuadraticStatistic,
    SingularResolventError,
    c2_norm,
    cauchy_identity,
    contour_nodes,
    contour_point,
    empirical_risk,
    eval_quadratic,
    gradient,
    make_resolvent_statistic,
    norm_sq,
    population_risk,
    population_risk_statistic,
    regularized_empirical_risk,
    regularized_risk,
    resolvent_apply,
    resolvent_matrix,
    statistic_evaluator,
)

from helpers import random_spec, rotated

finite = st.floats(-10, 10, allow_nan=False)


def random_quadratic(d, rng, complex_=False):
    H = rng.standard_normal((d, d))
    H = H + H.T
    g = rng.standard_normal(d)
    c = rng.standard_normal()
    if complex_:
        B = rng.standard_normal((d, d))
        H = H + 1j * (B + B.T)
        g = g + 1j * rng.standard_normal(d)
        c = c + 1j
    return QuadraticStatistic(H, g, c)


class TestQuadratic:
    def test_norm_sq(self):
        assert eval_quadratic(norm_sq(3), [1.0, 2.0, 2.0]) == 9.0

    def test_identity_risk_matches_norm(self, identity_spec):
        spec = identity_spec(3, ground_truth=[0.0, 0.0, 0.0])
        assert population_risk(spec, [3.0, 4.0, 0.0]) == pytest.approx(12.5)

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError, match="dimension"):
            eval_quadratic(norm_sq(3), np.ones(4))

    def test_asymmetric_hessian_rejected(self):
        with pytest.raises(ValueError, match="symmetric"):
            QuadraticStatistic(np.array([[0.0, 1.0], [0.0, 0.0]]), np.zeros(2))

    def test_c2_norm_examples(self):
        q = QuadraticStatistic(np.array([3.0, -5.0]), np.array([3.0, 4.0]), -2.0)
        assert c2_norm(q) == 5.0 + 5.0 + 2.0

    @settings(max_examples=50)
    @given(st.integers(0, 2**31), st.floats(-5, 5, allow_nan=False))
    def test_c2_norm_homogeneous(self, seed, s):
        q = random_quadratic(4, np.random.default_rng(seed), complex_=True)
        assert c2_norm(q.scaled(s)) == pytest.approx(abs(s) * c2_norm(q), rel=1e-9, abs=1e-12)

    @settings(max_examples=50)
    @given(st.integers(0, 2**31))
    def test_c2_norm_triangle(self, seed):
        rng = np.random.default_rng(seed)
        q1, q2 = random_quadratic(5, rng), random_quadratic(5, rng)
        assert c2_norm(q1 + q2) <= c2_norm(q1) + c2_norm(q2) + 1e-9

    @settings(max_examples=30)
    @given(st.integers(0, 2**31), arrays(float, 4, elements=finite))
    def test_gradient_finite_difference(self, seed, x):
        q = random_quadratic(4, np.random.default_rng(seed))
        h = 1e-5
        fd = np.array([
            (eval_quadratic(q, x + h * e) - eval_quadratic(q, x - h * e)) / (2 * h) for e in np.eye(4)
        ])
        assert np.allclose(fd, gradient(q, x), rtol=1e-6, atol=1e-5)

    def test_population_risk_statistic_agrees(self):
        spec, _ = rotated(random_spec(6, 3), 3)
        q = population_risk_statistic(spec)
        x = np.random.default_rng(0).standard_normal(6)
        assert eval_quadratic(q, x) == pytest.approx(population_risk(spec, x), rel=1e-12)


class TestRisks:
    def test_regularized_adds_ridge(self):
        spec = random_spec(4, 1)
        x = np.ones(4) / 2
        assert regularized_risk(spec, x) == pytest.approx(population_risk(spec, x) + 0.5 * spec.delta)

    def test_risk_floor(self):
        spec = random_spec(5, 2)
        assert population_risk(spec, spec.ground_truth) == pytest.approx(0.5 * spec.noise_std**2)
        x = spec.ground_truth + 0.1
        assert population_risk(spec, x) >= 0.5 * spec.noise_std**2

    def test_empirical_risk_oracle(self):
        spec = random_spec(3, 5)
        data = sample_dataset(spec, 40, derive_stream(0, "t", 0))
        x = np.arange(3.0)
        direct = sum((data.rows[i] @ x - data.labels[i]) ** 2 for i in range(40)) / 80
        assert empirical_risk(data, x) == pytest.approx(direct, rel=1e-12)
        assert regularized_empirical_risk(data, 0.3, x) == pytest.approx(direct + 0.15 * 5, rel=1e-12)

    def test_empirical_risk_converges_to_population(self):
        spec = random_spec(4, 6)
        data = sample_dataset(spec, 400_000, derive_stream(1, "t", 0))
        x = np.zeros(4)
        assert empirical_risk(data, x) == pytest.approx(population_risk(spec, x), rel=0.02)

    def test_evaluators_match_direct(self):
        spec, _ = rotated(random_spec(5, 7), 7)
        x = np.random.default_rng(1).standard_normal(5) * 0.3
        v = spec.to_eigen(x - spec.ground_truth)
        for label, direct in [
            ("population_risk", population_risk(spec, x)),
            ("regularized_risk", regularized_risk(spec, x)),
            ("norm_sq", float(x @ x)),
            ("distance_sq_to_truth", float((x - spec.ground_truth) @ (x - spec.ground_truth))),
        ]:
            assert statistic_evaluator(label, spec)[1](v) == pytest.approx(direct, rel=1e-12)
        q = population_risk_statistic(spec)
        assert statistic_evaluator(q, spec)[1](v) == pytest.approx(population_risk(spec, x), rel=1e-10)

    def test_unknown_label(self):
        with pytest.raises(ValueError):
            statistic_evaluator("nope", random_spec(2, 0))


def _dense_resolvent(K, z):
    return np.linalg.inv(K - z * np.eye(K.shape[0]))


class TestResolvent:
    def test_contour_point_must_lie_on_circle(self):
        with pytest.raises(ValueError):
            ContourPoint(1.0 + 0j, 2.0)

    def test_contour_radius(self):
        spec = build_problem({"dim": 2, "spectrum": [2.0, 1.0]})
        assert contour_point(spec, 0.3).radius == 6.0
        assert contour_point(build_problem({"dim": 2, "spectrum": [0.1, 0.1]}), 0).radius == 1.0

    def test_singular_raises(self):
        spec = build_problem({"dim": 2, "spectrum": [2.0, 1.0]})
        with pytest.raises(SingularResolventError):
            resolvent_apply(spec, 1.0, np.ones(2))

    def test_apply_matches_dense(self):
        spec, _ = rotated(random_spec(6, 8), 8)
        z = contour_point(spec, 1.1)
        v = np.random.default_rng(2).standard_normal(6)
        assert np.allclose(resolvent_apply(spec, z, v), _dense_resolvent(spec.covariance(), z.value) @ v, atol=1e-12)

    def test_cauchy_identity(self):
        spec, _ = rotated(random_spec(8, 9), 9)
        assert np.max(np.abs(cauchy_identity(spec, 64) - np.eye(8))) <= 1e-6

    @pytest.mark.parametrize("kind", ["grad_x", "grad_xtilde", "hess_xx", "hess_xxtilde"])
    @pytest.mark.parametrize("d", [3, 16])
    def test_family_against_dense_oracle(self, kind, d):
        rng = np.random.default_rng(d)
        spec, _ = rotated(random_spec(d, d), d)
        q = random_quadratic(d, rng)
        z, y = contour_nodes(spec, 7)[2], contour_nodes(spec, 5)[1]
        stat = make_resolvent_statistic(q, spec, kind, z, y)
        K, xt = spec.covariance(), spec.ground_truth
        H, g = q.dense_hessian(), q.linear
        Rz, Ry = _dense_resolvent(K, z.value), _dense_resolvent(K, y.value)
        for _ in range(5):
            x = rng.standard_normal(d)
            grad = H @ x + g
            oracle = {
                "grad_x": grad @ Rz @ x,
                "grad_xtilde": grad @ Rz @ xt,
                "hess_xx": x @ Ry @ H @ Rz @ x,
                "hess_xxtilde": x @ Ry @ H @ Rz @ xt,
            }[kind]
            assert abs(eval_quadratic(stat, x) - oracle) <= 1e-10 * max(1.0, abs(oracle))

    def test_hess_requires_y(self):
        spec = random_spec(3, 0)
        with pytest.raises(ValueError, match="second contour point"):
            make_resolvent_statistic(norm_sq(3), spec, "hess_xx", contour_point(spec, 0))

    def test_resolvent_matrix_identity_basis(self):
        spec = build_problem({"dim": 3, "spectrum": [1.0, 2.0, 3.0]})
        z = 0.5j
        assert np.allclose(resolvent_matrix(spec, z), np.diag(1 / (spec.spectrum - z)))
