import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cohsim.mitigation import (
    ConfusionModel,
    SimulatedDevice,
    SingularConfusionError,
    apply_readout_noise,
    calibrate,
    calibration_bitstrings,
    mitigate,
)
from cohsim.sim import OutcomeHistogram, SimulationError

prob = st.floats(0.55, 1.0)


def random_hist(n, seed):
    p = np.random.default_rng(seed).random(1 << n)
    return OutcomeHistogram(n, p / p.sum())


def random_model(n, seed):
    rng = np.random.default_rng(seed)
    return ConfusionModel(list(rng.uniform(0.8, 1.0, n)), list(rng.uniform(0.75, 1.0, n)))


def dense_oracle(model: ConfusionModel) -> np.ndarray:
    """Build A entry by entry from its definition: A[read, prep] = prod_q P(read_q | prep_q)."""
    n = model.n_qubits
    a = np.ones((1 << n, 1 << n))
    for r in range(1 << n):
        for p in range(1 << n):
            for q in range(n):
                rb, pb = (r >> q) & 1, (p >> q) & 1
                if pb == 0:
                    a[r, p] *= model.p00[q] if rb == 0 else 1 - model.p00[q]
                else:
                    a[r, p] *= model.p11[q] if rb == 1 else 1 - model.p11[q]
    return a


class TestModel:
    def test_validation(self):
        with pytest.raises(ValueError):
            ConfusionModel([1.1], [0.9])
        with pytest.raises(ValueError):
            ConfusionModel([0.9, 0.9], [0.9])

    def test_json_round_trip(self):
        m = ConfusionModel([0.95, 0.9], [0.9, 0.85])
        back = ConfusionModel.from_json(m.to_json())
        assert back == m
        assert set(m.to_dict()["1"]) == {"p00", "p11"}

    def test_from_dict_requires_contiguous_qubits(self):
        with pytest.raises(ValueError):
            ConfusionModel.from_dict({"0": {"p00": 1, "p11": 1}, "2": {"p00": 1, "p11": 1}})

    def test_dense_matches_oracle(self):
        m = random_model(3, 1)
        assert np.allclose(m.dense(), dense_oracle(m), atol=1e-14)


class TestForwardNoise:
    def test_identity(self):
        h = random_hist(4, 0)
        assert np.allclose(apply_readout_noise(h, ConfusionModel.identity(4)).probs, h.probs)

    def test_single_qubit(self):
        h = OutcomeHistogram(1, [1.0, 0.0])
        out = apply_readout_noise(h, ConfusionModel([0.9], [1.0]))
        assert out.probs == pytest.approx([0.9, 0.1])

    def test_five_qubit_dense_oracle(self):
        m, h = random_model(5, 2), random_hist(5, 3)
        assert np.abs(apply_readout_noise(h, m).probs - dense_oracle(m) @ h.probs).max() < 1e-12

    def test_size_mismatch(self):
        with pytest.raises(SimulationError):
            apply_readout_noise(random_hist(3, 0), ConfusionModel.identity(2))
        with pytest.raises(SimulationError):
            mitigate(random_hist(3, 0), ConfusionModel.identity(4))

    def test_sampled_needs_shots(self):
        with pytest.raises(SimulationError):
            apply_readout_noise(random_hist(2, 0), ConfusionModel.identity(2), seed=1)

    def test_sampled_matches_exact(self):
        shots = 200_000
        h = OutcomeHistogram(2, [0.5, 0.0, 0.0, 0.5], shots=shots)
        m = ConfusionModel([0.95, 0.9], [0.85, 0.92])
        sampled = apply_readout_noise(h, m, seed=5)
        exact = apply_readout_noise(OutcomeHistogram(2, h.probs), m)
        assert np.abs(sampled.probs - exact.probs).max() < 5 * np.sqrt(0.25 / shots)
        assert sampled.probs.sum() == pytest.approx(1)

    def test_sampled_reproducible(self):
        h = OutcomeHistogram(3, np.full(8, 1 / 8), shots=8000)
        m = random_model(3, 0)
        assert np.array_equal(apply_readout_noise(h, m, seed=2).probs, apply_readout_noise(h, m, seed=2).probs)


class TestMitigate:
    def test_round_trip_five_qubits(self):
        m, h = random_model(5, 7), random_hist(5, 8)
        back = mitigate(apply_readout_noise(h, m), m)
        assert np.abs(back.probs - h.probs).max() < 1e-10
        assert back.mitigated

    def test_identity_unchanged(self):
        h = random_hist(3, 1)
        assert np.allclose(mitigate(h, ConfusionModel.identity(3)).probs, h.probs)

    @pytest.mark.parametrize("n", [1, 2, 3, 4, 5])
    def test_factorwise_equals_dense_inverse(self, n):
        m, h = random_model(n, n), random_hist(n, 10 + n)
        assert np.abs(mitigate(h, m).probs - np.linalg.solve(m.dense(), h.probs)).max() < 1e-10

    @given(p00=st.lists(prob, min_size=3, max_size=3), p11=st.lists(prob, min_size=3, max_size=3),
           seed=st.integers(0, 1000))
    @settings(max_examples=40, deadline=None)
    def test_sum_preserved(self, p00, p11, seed):
        out = mitigate(random_hist(3, seed), ConfusionModel(p00, p11))
        assert out.probs.sum() == pytest.approx(1, abs=1e-10)

    @given(alpha=st.floats(-2, 2), beta=st.floats(-2, 2), seed=st.integers(0, 1000))
    @settings(max_examples=40, deadline=None)
    def test_linear(self, alpha, beta, seed):
        m = random_model(3, seed)
        h1, h2 = random_hist(3, seed + 1), random_hist(3, seed + 2)
        mixed = OutcomeHistogram(3, alpha * h1.probs + beta * h2.probs)
        lhs = mitigate(mixed, m).probs
        rhs = alpha * mitigate(h1, m).probs + beta * mitigate(h2, m).probs
        assert np.abs(lhs - rhs).max() < 1e-10

    def test_negative_entries_kept(self):
        # a pure outcome read through a model stronger than the one it was generated with
        out = mitigate(OutcomeHistogram(1, [1.0, 0.0]), ConfusionModel([0.9], [0.9]))
        assert out.has_negative
        assert out.probs[1] < 0

    def test_singular_block(self):
        with pytest.raises(SingularConfusionError, match="qubit 1"):
            mitigate(random_hist(2, 0), ConfusionModel([0.9, 0.5], [0.9, 0.5]))


class TestCalibration:
    @pytest.mark.parametrize("n,expected", [(1, ("0", "1")), (5, ("01010", "10101"))])
    def test_bitstrings(self, n, expected):
        assert calibration_bitstrings(n) == expected

    def test_noiseless(self):
        m = calibrate(SimulatedDevice(ConfusionModel.identity(5)), 1000)
        assert m.p00 == [1.0] * 5 and m.p11 == [1.0] * 5

    def test_uniform_recovery(self):
        m = calibrate(SimulatedDevice(ConfusionModel.uniform(5, 0.95, 0.9)), 100_000, seed=1)
        assert np.abs(np.array(m.p00) - 0.95).max() <= 0.01
        assert np.abs(np.array(m.p11) - 0.9).max() <= 0.01

    def test_asymmetric_recovery(self):
        truth = ConfusionModel([0.97, 0.93, 0.99, 0.9, 0.95], [0.88, 0.91, 0.86, 0.94, 0.9])
        dev = SimulatedDevice(truth)
        m = calibrate(dev, 100_000, seed=2)
        assert np.abs(np.array(m.p00) - truth.p00).max() <= 0.01
        assert np.abs(np.array(m.p11) - truth.p11).max() <= 0.01
        assert dev.calls == 2

    def test_deterministic(self):
        dev = SimulatedDevice(ConfusionModel.uniform(3, 0.9, 0.8))
        assert calibrate(dev, 5000, seed=4) == calibrate(dev, 5000, seed=4)

    def test_zero_shots(self):
        with pytest.raises(ValueError):
            calibrate(SimulatedDevice(ConfusionModel.identity(2)), 0)

    def test_device_bitstring_length(self):
        with pytest.raises(SimulationError):
            SimulatedDevice(ConfusionModel.identity(2)).run_bitstring("010", 10, 0)

    def test_mitigation_with_calibrated_model(self):
        truth = ConfusionModel.uniform(3, 0.93, 0.88)
        dev = SimulatedDevice(truth)
        est = calibrate(dev, 100_000, seed=3)
        ideal = random_hist(3, 4)
        noisy = dev.run_distribution(ideal, 100_000, seed=5)
        err_raw = np.abs(noisy.probs - ideal.probs).max()
        err_mit = np.abs(mitigate(noisy, est).probs - ideal.probs).max()
        assert err_mit < err_raw
