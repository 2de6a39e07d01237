import numpy as np
import pytest

from graphvqe import diffnet as dn
from graphvqe import egate, hgraph, nnvqe, qsim
from graphvqe.hgraph import FeatureScheme
from graphvqe.nnvqe import (
    Baseline,
    EgateConditioned,
    InputExpanded,
    Predictor,
    PredictorConfig,
    TrainConfig,
    improvement,
    make_input,
)
from graphvqe.pauli import FamilySpec, Hamiltonian, build_family, exact_spectrum


def specs_1d(n, count, lo=-3.0, hi=3.0):
    return [FamilySpec("xxz_1d", n, {"Jzz": j}) for j in np.linspace(lo, hi, count)]


class TestInputs:
    def test_baseline_tuple(self):
        spec = FamilySpec("xxz_x_1d", 4, {"Jzz": 2.0, "Kx": -1.0})
        assert np.array_equal(make_input(Baseline(), spec), [2.0, -1.0])
        xyz = FamilySpec("xyz_2d33", 9, {"Jyy": 0.5, "Jzz1": 1.0, "Jzz2": 2.0})
        assert np.array_equal(make_input(Baseline(), xyz), [0.5, 1.0, 2.0])

    def test_replicated_input(self):
        spec = FamilySpec("xxz_1d", 4, {"Jzz": 3.0})
        assert np.array_equal(make_input(InputExpanded(7), spec), [3.0] * 7)
        two = FamilySpec("xxz_x_1d", 4, {"Jzz": 1.0, "Kx": 2.0})
        assert np.array_equal(make_input(InputExpanded(5), two), [1.0, 2.0, 1.0, 2.0, 1.0])

    def test_latent_input_dimension(self, rng):
        spec = FamilySpec("xxz_1d", 8, {"Jzz": 1.0})
        scheme = FeatureScheme("one_hot")
        model = egate.EgateModel(egate.EgateConfig(layers=2, node_dim=8, edge_dim=3), 8, 8, rng)
        x = make_input(EgateConditioned(scheme), spec, model)
        assert x.shape == (11,)

    def test_missing_encoder_rejected(self):
        with pytest.raises(ValueError, match="trained encoder"):
            make_input(EgateConditioned(FeatureScheme("one_hot")), specs_1d(4, 1)[0])


class TestCost:
    def test_zero_hamiltonian_costs_zero(self, rng):
        pred = Predictor(PredictorConfig(1, qsim.hea_param_count(2, 1), hidden=(4,)), rng)
        h0 = Hamiltonian(2, {}, {})
        assert nnvqe.cost_instances(pred, [(h0, np.array([1.0]))], 2, 1) == 0.0

    def test_cost_equals_sum_of_expectations(self, rng):
        specs = specs_1d(4, 3)
        pred = Predictor(PredictorConfig(1, qsim.hea_param_count(4, 2), hidden=(8,)), rng)
        total = nnvqe.cost(pred, specs, 2)
        manual = 0.0
        for s in specs:
            theta = pred.predict(make_input(Baseline(), s))
            manual += qsim.expectation(build_family(s), qsim.hea_prepare(4, 2, theta))
        assert total == pytest.approx(manual, abs=1e-12)

    def test_variational_lower_bound(self, rng):
        specs = specs_1d(4, 5)
        pred = Predictor(PredictorConfig(1, qsim.hea_param_count(4, 2), hidden=(8,)), rng)
        bound = sum(exact_spectrum(build_family(s)).ground_energy for s in specs)
        assert nnvqe.cost(pred, specs, 2) >= bound - 1e-8


class TestTraining:
    def test_zero_iterations_leaves_weights(self, rng):
        pred = Predictor(PredictorConfig(1, qsim.hea_param_count(3, 1), hidden=(6,)), rng)
        before = {k: v.copy() for k, v in pred.state_dict().items()}
        history = nnvqe.train(pred, specs_1d(3, 2), 1, TrainConfig(iters=0))
        assert history == []
        assert all(np.array_equal(before[k], pred.state_dict()[k]) for k in before)

    def test_chained_gradient_matches_end_to_end_fd(self, rng):
        # one-instance toy on 2 qubits: simulator adjoint seeded into the tape
        h = Hamiltonian(2, {(0, 1, "z", "z"): 1.0}, {(0, "x"): 0.5})
        x = np.array([0.7])
        pred = Predictor(PredictorConfig(1, qsim.hea_param_count(2, 1), hidden=(4,)), rng)
        theta_t = pred.forward_tensor(x)
        _, grad = qsim.hea_energy_and_grad(h, 2, 1, theta_t.data)
        dn.backward(theta_t, seed=grad)

        def objective():
            return nnvqe.cost_instances(pred, [(h, x)], 2, 1)

        for p in pred.parameters():
            fd = np.zeros_like(p.data)
            flat = p.data.ravel()
            for k in range(flat.size):
                orig = flat[k]
                flat[k] = orig + 1e-5
                plus = objective()
                flat[k] = orig - 1e-5
                minus = objective()
                flat[k] = orig
                fd.ravel()[k] = (plus - minus) / 2e-5
            assert np.all(np.abs(p.grad - fd) <= 1e-7 + 1e-4 * np.abs(fd))

    def test_descent_across_seeds(self):
        specs = specs_1d(4, 20)
        wins = 0
        for seed in range(10):
            pred = Predictor(
                PredictorConfig(1, qsim.hea_param_count(4, 2), hidden=(20,)),
                np.random.default_rng(seed),
            )
            history = nnvqe.train(pred, specs, 2, TrainConfig(iters=25, lr=3e-3, seed=seed))
            final = nnvqe.cost(pred, specs, 2)
            wins += final < history[0]
        assert wins >= 9

    def test_training_deterministic(self):
        specs = specs_1d(3, 4)
        outs = []
        for _ in range(2):
            pred = Predictor(
                PredictorConfig(1, qsim.hea_param_count(3, 1), hidden=(6,)),
                np.random.default_rng(7),
            )
            nnvqe.train(pred, specs, 1, TrainConfig(iters=5, lr=3e-3, seed=7))
            outs.append(pred.predict(np.array([1.0])))
        assert np.array_equal(outs[0], outs[1])


class TestInference:
    def test_angles_in_range_and_deterministic(self, rng):
        pred = Predictor(PredictorConfig(1, qsim.hea_param_count(4, 2), hidden=(20,)), rng)
        for j in (-10.0, 0.0, 10.0):
            spec = FamilySpec("xxz_1d", 4, {"Jzz": j})
            theta, psi, energy = nnvqe.infer(pred, spec, 2)
            assert np.all(theta >= 0.0) and np.all(theta <= 2 * np.pi)
            theta2, _, energy2 = nnvqe.infer(pred, spec, 2)
            assert np.array_equal(theta, theta2) and energy == energy2
            assert energy >= exact_spectrum(build_family(spec)).ground_energy - 1e-8


class _FixedPredictor:
    """Stub emitting a constant angle vector (bypasses the network)."""

    def __init__(self, theta):
        self._theta = np.asarray(theta, dtype=float)

    def predict(self, x):
        return self._theta.copy()


class TestEvaluation:
    def test_exact_ground_preparation_scores_perfectly(self):
        # deep longitudinal field: |0...0> is the exact, non-degenerate ground
        # state, and the all-zero angle circuit prepares it exactly
        spec = FamilySpec("xxz_z_1d", 4, {"Jzz": 1.0, "Kz": -10.0})
        spectrum = exact_spectrum(build_family(spec))
        zero_index_energy = 4 * 1.0 + 4 * (-10.0)
        assert spectrum.ground_energy == pytest.approx(zero_index_energy)
        assert spectrum.ground_degeneracy == 1
        stub = _FixedPredictor(np.zeros(qsim.hea_param_count(4, 2)))
        report = nnvqe.evaluate(stub, [spec], {spec.key(): spectrum}, 2)
        assert report.mse == pytest.approx(0.0, abs=1e-20)
        assert report.mre == pytest.approx(0.0, abs=1e-12)
        assert report.mf == pytest.approx(1.0, abs=1e-12)

    def test_metric_consistency_bit_for_bit(self, rng):
        specs = specs_1d(4, 6)
        spectra = {s.key(): exact_spectrum(build_family(s)) for s in specs}
        pred = Predictor(PredictorConfig(1, qsim.hea_param_count(4, 2), hidden=(8,)), rng)
        report = nnvqe.evaluate(pred, specs, spectra, 2, seed=3)
        assert report.mse == float(report.sq_err.mean())
        assert report.mre == float(report.rel_err.mean())
        assert report.mf == float(report.fidelity.mean())
        assert report.seed == 3

    def test_empty_test_set_rejected(self, rng):
        pred = Predictor(PredictorConfig(1, 24, hidden=(4,)), rng)
        with pytest.raises(ValueError):
            nnvqe.evaluate(pred, [], {}, 1)


class TestImprovement:
    def test_printed_percentages_reproduced(self):
        # Appendix-style fixtures: published mean values and printed rounding
        assert improvement(189.89, 620.77, "mse") == pytest.approx(69.4, abs=0.1)
        assert improvement(0.41, 0.33, "mf") == pytest.approx(24.2, abs=0.1)
        assert improvement(0.12, 0.25, "mre") == pytest.approx(52.0, abs=0.1)
        assert improvement(74.98, 127.37, "mse") == pytest.approx(41.1, abs=0.1)
        assert improvement(158.60, 127.37, "mse") == pytest.approx(-24.5, abs=0.1)

    def test_unknown_metric(self):
        with pytest.raises(ValueError):
            improvement(1.0, 2.0, "accuracy")
