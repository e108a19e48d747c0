import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from hsgdlab import build_problem, empirical_covariance, sample_dataset
from hsgdlab.config import parse_config_text
from hsgdlab.problem import ConfigError, Dataset, ProblemSpec, SpectrumModel, stream_samples
from hsgdlab.rng import derive_stream

from helpers import random_spec


class TestBuildProblem:
    def test_identity(self):
        spec = build_problem({"dim": 4, "spectrum": "identity", "gamma": 1, "delta": 0, "noise_std": 0})
        assert np.array_equal(spec.spectrum, np.ones(4))
        assert spec.norm_K == 1.0
        assert spec.epsilon == 0.05
        assert np.isclose(np.linalg.norm(spec.ground_truth), 1.0)

    def test_gamma_must_be_positive(self):
        with pytest.raises(ConfigError, match="gamma must be positive"):
            build_problem({"dim": 2, "spectrum.kind": "explicit", "spectrum.params": [2, 1], "gamma": 0})

    @pytest.mark.parametrize(
        "key,value,msg",
        [("dim", 0, "dim"), ("delta", -1, "delta"), ("noise_std", -0.1, "noise_std")],
    )
    def test_rejections_name_the_key(self, key, value, msg):
        cfg = {"dim": 3, "gamma": 1.0}
        cfg[key] = value
        with pytest.raises(ConfigError, match=msg):
            build_problem(cfg)

    def test_negative_eigenvalue(self):
        with pytest.raises(ConfigError, match="spectrum"):
            build_problem({"dim": 2, "spectrum.kind": "explicit", "spectrum.params": [1, -1]})

    def test_power_law_trace(self):
        spec = build_problem({"dim": 1000, "spectrum.kind": "power_law", "spectrum.params": [1.0, 1.0]})
        direct = 0.0
        for i in range(1, 1001):
            direct += 1.0 / i
        assert spec.norm_K == 1.0
        assert spec.spectrum[9] == pytest.approx(0.1, rel=1e-15)
        assert spec.trace_K == pytest.approx(direct, rel=1e-12)

    def test_uniform_spectrum(self):
        lam = SpectrumModel("uniform", (0.5, 2.0)).eigenvalues(4)
        assert np.allclose(lam, [2.0, 1.5, 1.0, 0.5])

    def test_ground_truth_deterministic_from_seed(self):
        a = build_problem({"dim": 8, "seed": 5})
        b = build_problem({"dim": 8, "seed": 5})
        c = build_problem({"dim": 8, "seed": 6})
        assert np.array_equal(a.ground_truth, b.ground_truth)
        assert not np.array_equal(a.ground_truth, c.ground_truth)

    def test_ground_truth_norm_bound(self):
        with pytest.raises(ConfigError, match="ground_truth"):
            build_problem({"dim": 2, "ground_truth": [10.0, 0.0]})

    def test_non_orthogonal_basis_rejected(self):
        with pytest.raises(ConfigError, match="orthogonal"):
            ProblemSpec(d=2, spectrum=[1, 1], ground_truth=[0, 0], noise_std=0, delta=0, gamma=1,
                        eigenbasis=[[1, 0.1], [0, 1]])

    def test_spec_is_read_only(self):
        spec = build_problem({"dim": 3})
        with pytest.raises(ValueError):
            spec.spectrum[0] = 5.0

    def test_flat_config_text(self):
        flat = parse_config_text(
            "dim = 3  # comment\nspectrum.kind = explicit\nspectrum.params = 3, 2, 1\ngamma = 0.5\nseed = 2\n"
        )
        spec = build_problem(flat)
        assert np.array_equal(spec.spectrum, [3.0, 2.0, 1.0])
        assert spec.gamma == 0.5

    @given(st.lists(st.floats(0, 10), min_size=1, max_size=20))
    def test_operator_norm_is_max_of_spectrum(self, lam):
        spec = build_problem({"dim": len(lam), "spectrum": lam})
        assert spec.norm_K == max(lam)


class TestSampleDataset:
    def test_noiseless_labels(self, identity_spec):
        spec = identity_spec(5)
        data = sample_dataset(spec, 17, derive_stream(0, "t", 0))
        assert np.all(data.noise == 0)
        assert np.array_equal(data.labels, data.rows @ spec.ground_truth)

    def test_construction_identity(self):
        spec = random_spec(6, 1)
        data = sample_dataset(spec, 50, derive_stream(0, "t", 0))
        assert np.array_equal(data.labels, data.rows @ spec.ground_truth + data.noise)

    def test_identity_covariance_concentrates(self, identity_spec):
        d, n = 4, 100_000
        data = sample_dataset(identity_spec(d), n, derive_stream(1, "t", 0))
        err = np.linalg.norm(data.rows.T @ data.rows / n - np.eye(d), 2)
        assert err <= 5 * np.sqrt(d / n)

    def test_eigen_coordinate_variances(self):
        spec = build_problem({"dim": 2, "spectrum": [4.0, 1.0]})
        data = sample_dataset(spec, 100_000, derive_stream(2, "t", 0))
        var = data.rows.var(axis=0)
        assert np.allclose(var, [4.0, 1.0], rtol=0.05)

    def test_rotated_covariance(self):
        from helpers import rotated

        spec, Q = rotated(random_spec(3, 4), 4)
        data = sample_dataset(spec, 200_000, derive_stream(3, "t", 0))
        emp = data.rows.T @ data.rows / data.n
        assert np.linalg.norm(emp - spec.covariance(), 2) < 0.05

    def test_reproducible_bitwise(self):
        spec = random_spec(7, 2)
        a = sample_dataset(spec, 3000, derive_stream(9, "t", 0))
        b = sample_dataset(spec, 3000, derive_stream(9, "t", 0))
        assert np.array_equal(a.rows, b.rows) and np.array_equal(a.labels, b.labels)

    def test_stream_matches_materialised(self):
        spec = random_spec(5, 3)
        data = sample_dataset(spec, 2500, derive_stream(4, "t", 0))
        rows = np.concatenate([r for r, _ in stream_samples(spec, derive_stream(4, "t", 0), 2500)])
        assert np.array_equal(rows, spec.to_eigen(data.rows))

    def test_concentration_smoke(self):
        d = 20
        spec = build_problem({"dim": d, "spectrum.kind": "uniform", "spectrum.params": [0.5, 1.5]})
        K = spec.covariance()
        good = 0
        for trial in range(100):
            data = sample_dataset(spec, 50 * d, derive_stream(11, "conc", trial))
            good += np.linalg.norm(data.rows.T @ data.rows / data.n - K, 2) < 0.5
        assert good >= 99


def _eig2_oracle(m):
    a, b, c = m[0, 0], m[0, 1], m[1, 1]
    mid = 0.5 * (a + c)
    rad = np.hypot(0.5 * (a - c), b)
    return np.array([mid + rad, mid - rad])


class TestEmpiricalCovariance:
    def test_rank_one(self):
        data = Dataset(rows=[[1.0, 0.0]], labels=[0.0], noise=[0.0])
        lam, vecs = empirical_covariance(data)
        assert np.allclose(lam, [1.0, 0.0])
        assert np.allclose(np.abs(vecs[:, 0]), [1.0, 0.0])

    def test_matches_2x2_oracle(self, identity_spec):
        data = sample_dataset(identity_spec(2), 3, derive_stream(5, "t", 0))
        lam, _ = empirical_covariance(data)
        oracle = _eig2_oracle(data.rows.T @ data.rows / 3)
        assert np.allclose(lam, np.clip(oracle, 0, None), atol=1e-10)

    def test_homogeneity(self):
        data = sample_dataset(random_spec(4, 6), 10, derive_stream(6, "t", 0))
        lam, _ = empirical_covariance(data)
        lam2, _ = empirical_covariance(Dataset(2 * data.rows, data.labels, data.noise))
        assert np.allclose(lam2, 4 * lam, atol=1e-12)

    @settings(max_examples=25, deadline=None)
    @given(st.integers(1, 12), st.integers(1, 30), st.integers(0, 2**31))
    def test_nonnegative_descending(self, d, n, seed):
        data = sample_dataset(build_problem({"dim": d}), n, np.random.default_rng(seed))
        lam, vecs = empirical_covariance(data)
        assert np.all(lam >= 0) and np.all(np.diff(lam) <= 0)
        assert np.allclose(vecs.T @ vecs, np.eye(d), atol=1e-10)
