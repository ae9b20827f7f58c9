"""Benchmark many-body states: coherent, dephased, projected and noisy.

A particle is mapped to ``|0>`` and a hole to ``|1>``; the collective
``S_z = N/2 - (number of ones)``. Mixed states are weighted ensembles of pure
states, never density matrices.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .sim import IMPOSSIBLE_PROB, ImpossibleBranchError, QuantumState

TWO_PI = 2 * np.pi
EXHAUSTIVE_NOISY_MAX = 12


@dataclass(frozen=True)
class PhaseProfile:
    """Per-qubit XY-plane angles, stored mod 2*pi."""

    thetas: tuple[float, ...]

    def __post_init__(self):
        arr = np.asarray(self.thetas, dtype=float).reshape(-1)
        if not np.all(np.isfinite(arr)):
            raise ValueError("phase profile angles must be finite")
        object.__setattr__(self, "thetas", tuple(float(t) for t in np.mod(arr, TWO_PI)))

    @classmethod
    def uniform(cls, n: int, theta: float = 0.0) -> "PhaseProfile":
        return cls((theta,) * n)

    def __len__(self):
        return len(self.thetas)

    def as_array(self) -> np.ndarray:
        return np.array(self.thetas)


def _profile(n: int, thetas) -> np.ndarray:
    if thetas is None:
        return np.zeros(n)
    if isinstance(thetas, PhaseProfile):
        arr = thetas.as_array()
    else:
        arr = PhaseProfile(tuple(np.atleast_1d(np.asarray(thetas, dtype=float)))).as_array()
    if arr.size != n:
        raise ValueError(f"phase profile has {arr.size} angles for {n} qubits")
    return arr


def hamming_weights(n: int) -> np.ndarray:
    idx = np.arange(1 << n)
    w = np.zeros(1 << n, dtype=np.int64)
    for q in range(n):
        w += (idx >> q) & 1
    return w


def sz_values(n: int) -> np.ndarray:
    """S_z of every computational basis state."""
    return n / 2 - hamming_weights(n)


def prepare_coherent(n: int, thetas=None) -> QuantumState:
    """Product state of ``(|0> + e^{i theta_k}|1>)/sqrt(2)`` on every qubit."""
    if n < 1:
        raise ValueError("need at least one qubit")
    th = _profile(n, thetas)
    amps = np.ones(1, dtype=complex)
    for q in range(n):
        # qubit q is bit q: prepend as the more significant factor
        amps = np.kron(np.array([1.0, np.exp(1j * th[q])]) / np.sqrt(2), amps)
    return QuantumState(amps)


@dataclass
class StateEnsemble:
    """Weighted list of pure states sharing one qubit count."""

    members: list[tuple[float, QuantumState]]

    def __post_init__(self):
        if not self.members:
            raise ValueError("ensemble needs at least one member")
        self.members = [(float(w), s) for w, s in self.members]
        weights = np.array([w for w, _ in self.members])
        if np.any(weights <= 0):
            raise ValueError("ensemble weights must be positive")
        if abs(weights.sum() - 1) > 1e-12:
            raise ValueError(f"ensemble weights sum to {weights.sum():.15g}, not 1")
        ns = {s.n_qubits for _, s in self.members}
        if len(ns) != 1:
            raise ValueError(f"members have different qubit counts: {sorted(ns)}")

    @classmethod
    def pure(cls, state: QuantumState) -> "StateEnsemble":
        return cls([(1.0, state)])

    @classmethod
    def normalized(cls, members) -> "StateEnsemble":
        """Build from unnormalized positive weights."""
        total = math.fsum(w for w, _ in members)
        return cls([(w / total, s) for w, s in members])

    @property
    def n_qubits(self) -> int:
        return self.members[0][1].n_qubits

    @property
    def weights(self) -> np.ndarray:
        return np.array([w for w, _ in self.members])

    def __len__(self):
        return len(self.members)

    def __iter__(self):
        return iter(self.members)

    def average(self, fn) -> float | np.ndarray:
        """Weighted average of ``fn(state)`` in member order."""
        values = [w * np.asarray(fn(s)) for w, s in self.members]
        return sum(values[1:], values[0])

    def to_dict(self) -> dict:
        return {
            "n_qubits": self.n_qubits,
            "members": [{"weight": w, "state": s.to_dict()} for w, s in self.members],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "StateEnsemble":
        return cls([(m["weight"], QuantumState.from_dict(m["state"])) for m in d["members"]])

    def to_json(self, **kw) -> str:
        return json.dumps(self.to_dict(), **kw)


def as_ensemble(obj) -> StateEnsemble:
    if isinstance(obj, StateEnsemble):
        return obj
    if isinstance(obj, QuantumState):
        return StateEnsemble.pure(obj)
    raise TypeError(f"expected QuantumState or StateEnsemble, got {type(obj).__name__}")


def _sector_weight(n: int, s) -> int:
    # number of ones in the S_z = s sector
    w = Fraction(n, 2) - Fraction(s).limit_denominator(2)
    if w.denominator != 1 or not 0 <= w <= n:
        raise ValueError(f"S_z = {s} is not a sector of {n} qubits")
    return int(w)


def project_sz(state: QuantumState, s=0) -> tuple[float, QuantumState]:
    """Project onto the ``S_z = s`` sector; return (probability, renormalized state)."""
    n = state.n_qubits
    if s == 0 and n % 2:
        raise ValueError("S_z = 0 needs an even number of qubits; pass a half-integer s")
    w = _sector_weight(n, s)
    keep = hamming_weights(n) == w
    projected = np.where(keep, state.amplitudes, 0)
    prob = float(np.sum(np.abs(projected) ** 2))
    if prob < IMPOSSIBLE_PROB:
        raise ImpossibleBranchError(f"sector S_z = {s} has probability {prob:.3g}")
    return prob, QuantumState(projected / np.sqrt(prob))


def sector_probabilities(state: QuantumState) -> dict[float, float]:
    n = state.n_qubits
    w = hamming_weights(n)
    p = state.probabilities()
    return {n / 2 - k: float(p[w == k].sum()) for k in range(n + 1)}


def dephase_sz(state) -> StateEnsemble:
    """Ensemble of all non-empty S_z sectors weighted by their probabilities."""
    members = []
    for pure_w, pure in as_ensemble(state):
        n = pure.n_qubits
        weights = hamming_weights(n)
        for k in range(n + 1):
            projected = np.where(weights == k, pure.amplitudes, 0)
            prob = float(np.sum(np.abs(projected) ** 2))
            if prob >= IMPOSSIBLE_PROB:
                members.append((pure_w * prob, QuantumState(projected / np.sqrt(prob))))
    return StateEnsemble.normalized(members)


def prepare_projected(n: int, thetas=None) -> QuantumState:
    return project_sz(prepare_coherent(n, thetas), 0)[1]


def prepare_dephased(n: int, thetas=None) -> StateEnsemble:
    return dephase_sz(prepare_coherent(n, thetas))


def random_global_phase_ensemble(n: int, n_samples: int, seed=None) -> StateEnsemble:
    """Uniform mixture of coherent states sharing a random global phase."""
    if n_samples < 1:
        raise ValueError("n_samples must be >= 1")
    rng = np.random.default_rng(seed)
    thetas = rng.uniform(0, TWO_PI, size=n_samples)
    return StateEnsemble([(1 / n_samples, prepare_coherent(n, [t] * n)) for t in thetas])


def prepare_noisy(n: int, seed=None, exhaustive: bool | None = None, n_samples: int = 256) -> StateEnsemble:
    """Mixture of computational basis states with each qubit 0 or 1 at random.

    Exhaustive mode (default up to 12 qubits) lists all ``2**n`` bitstrings
    with equal weight; otherwise ``n_samples`` bitstrings are drawn with ``seed``.
    """
    if n < 1:
        raise ValueError("need at least one qubit")
    if exhaustive is None:
        exhaustive = n <= EXHAUSTIVE_NOISY_MAX
    if exhaustive:
        dim = 1 << n
        return StateEnsemble([(1 / dim, QuantumState.basis(i, n)) for i in range(dim)])
    rng = np.random.default_rng(seed)
    picks = rng.integers(0, 2, size=(n_samples, n))
    indices = (picks << np.arange(n)).sum(axis=1)
    return StateEnsemble([(1 / n_samples, QuantumState.basis(int(i), n)) for i in indices])


STATE_KINDS = ("coherent", "dephased", "projected", "noisy")


def prepare_state(kind: str, n: int, thetas=None, seed=None) -> StateEnsemble:
    """One of the four benchmark states as an ensemble."""
    if kind == "coherent":
        return StateEnsemble.pure(prepare_coherent(n, thetas))
    if kind == "dephased":
        return prepare_dephased(n, thetas)
    if kind == "projected":
        return StateEnsemble.pure(prepare_projected(n, thetas))
    if kind == "noisy":
        return prepare_noisy(n, seed=seed)
    raise ValueError(f"unknown state kind {kind!r}; expected one of {STATE_KINDS}")
