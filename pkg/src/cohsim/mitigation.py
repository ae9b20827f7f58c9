"""Readout-error model, calibration and confusion-matrix mitigation.

Each qubit ``q`` has a 2x2 column-stochastic matrix
``A_q = [[p00, 1 - p11], [1 - p00, p11]]`` (column = prepared bit, row = read
bit). The full model is their tensor product, which is never built: both the
forward map and its inverse are applied one qubit axis at a time.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .sim import SHOT_BLOCK, OutcomeHistogram, SimulationError, _block_rng, sample_distribution


class SingularConfusionError(SimulationError):
    pass


@dataclass
class ConfusionModel:
    """Per-qubit readout fidelities, indexed by classical slot."""

    p00: list[float]
    p11: list[float]

    def __post_init__(self):
        self.p00 = [float(p) for p in self.p00]
        self.p11 = [float(p) for p in self.p11]
        if len(self.p00) != len(self.p11):
            raise ValueError("p00 and p11 must have the same length")
        for name, vals in (("p00", self.p00), ("p11", self.p11)):
            for q, p in enumerate(vals):
                if not 0.0 <= p <= 1.0:
                    raise ValueError(f"{name}[{q}] = {p} is not a probability")

    @classmethod
    def uniform(cls, n: int, p00: float = 1.0, p11: float = 1.0) -> "ConfusionModel":
        return cls([p00] * n, [p11] * n)

    @classmethod
    def identity(cls, n: int) -> "ConfusionModel":
        return cls.uniform(n)

    @property
    def n_qubits(self) -> int:
        return len(self.p00)

    def block(self, q: int) -> np.ndarray:
        a, b = self.p00[q], self.p11[q]
        return np.array([[a, 1 - b], [1 - a, b]])

    def dense(self) -> np.ndarray:
        """Full ``2^n x 2^n`` matrix; for tests on small registers only."""
        m = np.ones((1, 1))
        for q in range(self.n_qubits):
            m = np.kron(self.block(q), m)
        return m

    def to_dict(self) -> dict:
        return {str(q): {"p00": self.p00[q], "p11": self.p11[q]} for q in range(self.n_qubits)}

    @classmethod
    def from_dict(cls, d: dict) -> "ConfusionModel":
        keys = sorted(d, key=int)
        if [int(k) for k in keys] != list(range(len(keys))):
            raise ValueError(f"confusion model qubits must be 0..n-1, got {keys}")
        return cls([d[k]["p00"] for k in keys], [d[k]["p11"] for k in keys])

    def to_json(self, **kw) -> str:
        return json.dumps(self.to_dict(), **kw)

    @classmethod
    def from_json(cls, text: str) -> "ConfusionModel":
        return cls.from_dict(json.loads(text))


def _apply_blocks(probs: np.ndarray, blocks: list[np.ndarray]) -> np.ndarray:
    n = len(blocks)
    t = probs.reshape((2,) * n)
    for q, m in enumerate(blocks):
        axis = n - 1 - q
        t = np.moveaxis(np.tensordot(m, t, axes=([1], [axis])), 0, axis)
    return t.reshape(-1)


def _check_size(hist: OutcomeHistogram, model: ConfusionModel):
    if hist.n_bits != model.n_qubits:
        raise SimulationError(f"histogram has {hist.n_bits} bits but the model covers {model.n_qubits} qubits")


def apply_readout_noise(hist: OutcomeHistogram, model: ConfusionModel, seed: int | None = None) -> OutcomeHistogram:
    """Forward readout model.

    With ``seed=None`` the probability vector is multiplied by ``A`` exactly.
    Otherwise the histogram must carry a shot count, and every shot has its
    bits flipped independently (reproducible for a fixed seed).
    """
    _check_size(hist, model)
    if seed is None:
        probs = _apply_blocks(hist.probs, [model.block(q) for q in range(model.n_qubits)])
        return OutcomeHistogram(hist.n_bits, probs, hist.shots, hist.seed, hist.mitigated)
    if hist.shots is None:
        raise SimulationError("sampled readout noise needs a shot histogram")
    counts = np.rint(hist.probs * hist.shots).astype(np.int64)
    outcomes = np.repeat(np.arange(counts.size), counts)
    flip_p0 = 1 - np.array(model.p00)  # P(flip | true bit 0)
    flip_p1 = 1 - np.array(model.p11)
    noisy = np.empty_like(outcomes)
    q_idx = np.arange(model.n_qubits)
    for block, start in enumerate(range(0, outcomes.size, SHOT_BLOCK)):
        chunk = outcomes[start:start + SHOT_BLOCK]
        bits = (chunk[:, None] >> q_idx) & 1
        p_flip = np.where(bits, flip_p1, flip_p0)
        flips = _block_rng(seed, block).random(bits.shape) < p_flip
        noisy[start:start + SHOT_BLOCK] = ((bits ^ flips) << q_idx).sum(axis=1)
    probs = np.bincount(noisy, minlength=counts.size) / hist.shots
    return OutcomeHistogram(hist.n_bits, probs, hist.shots, seed, hist.mitigated)


def mitigate(hist: OutcomeHistogram, model: ConfusionModel) -> OutcomeHistogram:
    """Multiply by ``A^-1`` factor-wise. Negative quasi-probabilities are kept."""
    _check_size(hist, model)
    blocks = []
    for q in range(model.n_qubits):
        if abs(model.p00[q] + model.p11[q] - 1) < 1e-12:
            raise SingularConfusionError(f"qubit {q}: p00 + p11 = 1, confusion block is singular")
        blocks.append(np.linalg.inv(model.block(q)))
    probs = _apply_blocks(hist.probs, blocks)
    return OutcomeHistogram(hist.n_bits, probs, hist.shots, hist.seed, mitigated=True)


def calibration_bitstrings(n: int) -> tuple[str, str]:
    """The two alternating preparations ``0101...`` and ``1010...`` (slot 0 first)."""
    a = "".join("01"[q % 2] for q in range(n))
    b = "".join("10"[q % 2] for q in range(n))
    return a, b


@dataclass
class SimulatedDevice:
    """Register that reads prepared bitstrings through a hidden confusion model."""

    model: ConfusionModel
    calls: int = field(default=0, repr=False)

    @property
    def n_qubits(self) -> int:
        return self.model.n_qubits

    def run_bitstring(self, bits: str, n_shots: int, seed: int) -> OutcomeHistogram:
        if len(bits) != self.n_qubits:
            raise SimulationError(f"bitstring {bits!r} does not have {self.n_qubits} bits")
        probs = np.zeros(1 << self.n_qubits)
        probs[sum(int(b) << s for s, b in enumerate(bits))] = 1.0
        ideal = OutcomeHistogram(self.n_qubits, probs, shots=n_shots, seed=seed)
        self.calls += 1
        return apply_readout_noise(ideal, self.model, seed=seed)

    def run_distribution(self, hist: OutcomeHistogram, n_shots: int, seed: int) -> OutcomeHistogram:
        """Sample ``n_shots`` from an ideal distribution and read them out noisily."""
        counts = sample_distribution(hist.probs, n_shots, seed)
        ideal = OutcomeHistogram(hist.n_bits, counts / n_shots, shots=n_shots, seed=seed)
        self.calls += 1
        return apply_readout_noise(ideal, self.model, seed=seed + 1)


def calibrate(device: SimulatedDevice, n_shots: int, seed: int = 0) -> ConfusionModel:
    """Estimate ``p00`` and ``p11`` per qubit from the two alternating preparations.

    Each qubit is prepared 0 in one run and 1 in the other, so every estimate
    uses ``n_shots`` samples.
    """
    if n_shots <= 0:
        raise ValueError("calibration needs a positive number of shots")
    n = device.n_qubits
    seeds = np.random.SeedSequence(seed).generate_state(2)
    read0 = np.zeros(n)  # fraction of shots reading 0 on qubits prepared 0
    read1 = np.zeros(n)
    for bits, s in zip(calibration_bitstrings(n), seeds):
        hist = device.run_bitstring(bits, n_shots, int(s))
        idx = np.arange(hist.probs.size)
        for q in range(n):
            p_one = float(hist.probs[(idx >> q) & 1 == 1].sum())
            if bits[q] == "0":
                read0[q] += 1 - p_one
            else:
                read1[q] += p_one
    return ConfusionModel(list(np.clip(read0, 0, 1)), list(np.clip(read1, 0, 1)))
