import numpy as np
import pytest

from graphvqe import bpdiag, qsim
from graphvqe.bpdiag import (
    BpRun,
    bp_hamiltonian,
    first_step_gradients,
    gradient_sweep,
    log2_fit,
    pretrain_bp_encoder,
    variance_stats,
)
from graphvqe.pauli import Hamiltonian


class TestGradientMatrix:
    def test_zero_hamiltonian_zero_gradients(self):
        run = BpRun(method="vqe", n=3, depth=1, trials=5)
        rows = first_step_gradients(run, Hamiltonian(3, {}, {}))
        assert rows.shape == (5, 24)
        assert np.array_equal(rows, np.zeros((5, 24)))

    def test_column_count_matches_parameter_count(self):
        run = BpRun(method="vqe", n=3, depth=1, trials=3)
        assert first_step_gradients(run, bp_hamiltonian(3)).shape[1] == 24

    def test_rows_match_per_trial_replay(self):
        h = bp_hamiltonian(3)
        run = BpRun(method="vqe", n=3, depth=1, trials=4, seed_base=9)
        rows = first_step_gradients(run, h)
        for t in range(4):
            rng = np.random.default_rng((9, 3, 1, t))
            theta = rng.uniform(0, 2 * np.pi, 24)
            replay = qsim.parameter_shift_grad(h, 3, 1, theta)
            assert np.abs(rows[t] - replay).max() < 1e-8

    def test_predictor_rows_at_standard_normal_weights(self):
        h = bp_hamiltonian(3)
        run = BpRun(method="nnvqe", n=3, depth=1, trials=3, seed_base=4)
        rows = first_step_gradients(run, h)
        assert rows.shape == (3, 24)
        assert not np.allclose(rows[0], rows[1])  # fresh weights per trial

    def test_reproducibility(self):
        h = bp_hamiltonian(4)
        run = BpRun(method="nnvqe", n=4, depth=2, trials=6, seed_base=2)
        a = first_step_gradients(run, h)
        b = first_step_gradients(run, h)
        assert np.array_equal(a, b)

    def test_latent_required_for_conditioned_runs(self):
        run = BpRun(method="egate", n=3, depth=1, trials=3)
        with pytest.raises(ValueError, match="latent"):
            first_step_gradients(run, bp_hamiltonian(3))

    def test_run_validation(self):
        with pytest.raises(ValueError):
            BpRun(method="vqe", n=3, depth=1, trials=1)
        with pytest.raises(ValueError):
            BpRun(method="egate", n=3, depth=1, trials=5, latent_mode="dim9")
        with pytest.raises(ValueError):
            BpRun(method="qaoa", n=3, depth=1, trials=5)


class TestVarianceStats:
    def test_constant_column_zero_variance(self):
        mat = np.column_stack([np.ones(10), np.arange(10.0)])
        stats = variance_stats(mat)
        assert stats.variances[0] == 0.0
        assert stats.mean_var == pytest.approx(stats.variances.mean())
        assert stats.sd_var == pytest.approx(stats.variances.std(ddof=1))

    def test_unbiased_estimator(self):
        mat = np.array([[0.0], [2.0]])
        assert variance_stats(mat).variances[0] == pytest.approx(2.0)  # ddof=1

    def test_needs_two_trials(self):
        with pytest.raises(ValueError):
            variance_stats(np.ones((1, 4)))


class TestLogFit:
    def test_exact_power_law(self):
        ns = np.arange(3, 9)
        fit = log2_fit(ns, 2.0 ** (-ns.astype(float)))
        assert fit.slope == pytest.approx(-1.0, abs=1e-12)
        assert fit.r2 == pytest.approx(1.0, abs=1e-12)

    def test_nonpositive_excluded_with_warning(self):
        with pytest.warns(UserWarning, match="excluded"):
            fit = log2_fit([3, 4, 5, 6], [0.125, 0.0625, 0.0, 0.015625])
        assert fit.slope == pytest.approx(-1.0, abs=1e-12)

    def test_too_few_points(self):
        with pytest.raises(ValueError):
            log2_fit([3, 4], [0.5, 0.25])


class TestEncoderPretraining:
    def test_reaches_threshold_and_freezes_latent(self):
        model, graph, steps, final = pretrain_bp_encoder(4, "dimn", seed=0)
        assert final < 1e-5 and steps <= 5000
        z1 = model.encode_latent(graph)
        z2 = model.encode_latent(graph)
        assert np.array_equal(z1, z2)
        assert z1.shape == (7,)

    def test_latent_mode_dimensions(self):
        for mode, expect in (("dim1", 1), ("dim5", 5), ("dimn2", 16)):
            model, graph, _, final = pretrain_bp_encoder(4, mode, seed=0)
            assert final < 1e-5
            assert model.encode_latent(graph).shape == (expect,)


class TestSweep:
    def test_sweep_shapes_and_direction_smoke(self):
        sizes = ((3, 1), (4, 2), (5, 3))
        rows = gradient_sweep("vqe", sizes=sizes, trials=20, seed_base=0)
        assert [r[0] for r in rows] == [3, 4, 5]
        assert [r[2] for r in rows] == [24, 52, 90]
        mean_vars = [r[3].mean_var for r in rows]
        assert mean_vars[0] > mean_vars[-1]  # variance decays with size
