"""Dense state-vector simulation: gates, circuits, measurement and post-selection.

Conventions (fixed everywhere in the package):

* little-endian qubit order: qubit ``q`` is bit ``q`` of the amplitude index;
* ``RX(a) = exp(-i a X / 2)``, ``RZ(a) = exp(-i a Z / 2)``;
* ``CPHASE(p) = diag(1, 1, 1, e^{ip})``, ``CZ = CPHASE(pi)``;
* ``XY(b)`` is the Rigetti XY gate, so ``XY(pi)`` is iSWAP (``|01> -> i|10>``).

Two-qubit matrices act on the pair ``(qubits[0], qubits[1])`` with local index
``b0 + 2*b1``, i.e. the same little-endian rule restricted to the pair.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Sequence

import numpy as np

NORM_ATOL = 1e-12
IMPOSSIBLE_PROB = 1e-15
SHOT_BLOCK = 4096


class SimulationError(ValueError):
    """Invalid gate, qubit index or circuit structure."""


class ImpossibleBranchError(SimulationError):
    """A requested measurement branch has (numerically) zero probability."""


class GateKind(str, Enum):
    RX = "RX"
    RZ = "RZ"
    H = "H"
    CPHASE = "CPHASE"
    CZ = "CZ"
    SWAP = "SWAP"
    ISWAP = "iSWAP"
    XY = "XY"
    CRX = "CRX"
    MEASURE = "MEASURE"


NATIVE_KINDS = frozenset({GateKind.RX, GateKind.RZ, GateKind.CPHASE, GateKind.XY})
_ARITY = {
    GateKind.RX: 1, GateKind.RZ: 1, GateKind.H: 1, GateKind.MEASURE: 1,
    GateKind.CPHASE: 2, GateKind.CZ: 2, GateKind.SWAP: 2, GateKind.ISWAP: 2,
    GateKind.XY: 2, GateKind.CRX: 2,
}
_PARAMETRIC = frozenset({GateKind.RX, GateKind.RZ, GateKind.CPHASE, GateKind.XY, GateKind.CRX})
_DIAGONAL = frozenset({GateKind.RZ, GateKind.CPHASE, GateKind.CZ})


@dataclass(frozen=True)
class Gate:
    """A single gate. ``angle`` is radians, or a parameter name to bind later."""

    kind: GateKind
    qubits: tuple[int, ...]
    angle: float | str | None = None

    def __post_init__(self):
        kind = GateKind(self.kind)
        object.__setattr__(self, "kind", kind)
        object.__setattr__(self, "qubits", tuple(int(q) for q in self.qubits))
        if len(self.qubits) != _ARITY[kind]:
            raise SimulationError(f"{kind.value} acts on {_ARITY[kind]} qubit(s), got {self.qubits}")
        if len(set(self.qubits)) != len(self.qubits):
            raise SimulationError(f"{kind.value} qubits must be distinct, got {self.qubits}")
        if kind in _PARAMETRIC and self.angle is None:
            raise SimulationError(f"{kind.value} needs an angle")
        if kind not in _PARAMETRIC and self.angle is not None:
            raise SimulationError(f"{kind.value} takes no angle")

    @property
    def is_symbolic(self) -> bool:
        return isinstance(self.angle, str)

    @property
    def is_native(self) -> bool:
        return self.kind in NATIVE_KINDS

    def inverse(self) -> "Gate":
        if self.is_symbolic:
            raise SimulationError("cannot invert a gate with an unbound parameter")
        if self.kind in (GateKind.H, GateKind.CZ, GateKind.SWAP):
            return self
        if self.kind == GateKind.ISWAP:
            return Gate(GateKind.XY, self.qubits, -np.pi)
        if self.kind == GateKind.MEASURE:
            raise SimulationError("MEASURE has no inverse")
        return Gate(self.kind, self.qubits, -float(self.angle))

    def to_dict(self) -> dict:
        return {"kind": self.kind.value, "qubits": list(self.qubits), "angle": self.angle}

    @classmethod
    def from_dict(cls, d: dict) -> "Gate":
        return cls(GateKind(d["kind"]), tuple(d["qubits"]), d.get("angle"))


def RX(q, a):
    return Gate(GateKind.RX, (q,), a)


def RZ(q, a):
    return Gate(GateKind.RZ, (q,), a)


def CPHASE(q0, q1, phi):
    return Gate(GateKind.CPHASE, (q0, q1), phi)


def XY(q0, q1, beta):
    return Gate(GateKind.XY, (q0, q1), beta)


def SWAP(q0, q1):
    return Gate(GateKind.SWAP, (q0, q1))


def CRX(control, target, phi):
    return Gate(GateKind.CRX, (control, target), phi)


def gate_matrix(gate: Gate) -> np.ndarray:
    """Explicit unitary of ``gate`` (2x2 or 4x4, pair index ``b0 + 2*b1``)."""
    kind = gate.kind
    if gate.is_symbolic:
        raise SimulationError(f"unbound parameter {gate.angle!r} in {kind.value}")
    a = None if gate.angle is None else float(gate.angle)
    if kind == GateKind.RX:
        c, s = np.cos(a / 2), np.sin(a / 2)
        return np.array([[c, -1j * s], [-1j * s, c]])
    if kind == GateKind.RZ:
        return np.diag([np.exp(-0.5j * a), np.exp(0.5j * a)])
    if kind == GateKind.H:
        return np.array([[1, 1], [1, -1]], dtype=complex) / np.sqrt(2)
    if kind == GateKind.CPHASE:
        return np.diag([1, 1, 1, np.exp(1j * a)]).astype(complex)
    if kind == GateKind.CZ:
        return np.diag([1, 1, 1, -1]).astype(complex)
    if kind == GateKind.SWAP:
        return np.array([[1, 0, 0, 0], [0, 0, 1, 0], [0, 1, 0, 0], [0, 0, 0, 1]], dtype=complex)
    if kind in (GateKind.XY, GateKind.ISWAP):
        b = np.pi if kind == GateKind.ISWAP else a
        c, s = np.cos(b / 2), 1j * np.sin(b / 2)
        return np.array([[1, 0, 0, 0], [0, c, s, 0], [0, s, c, 0], [0, 0, 0, 1]], dtype=complex)
    if kind == GateKind.CRX:
        # control is qubits[0] (low bit of the pair index)
        p0, p1 = np.diag([1.0, 0.0]), np.diag([0.0, 1.0])
        return np.kron(np.eye(2), p0) + np.kron(gate_matrix(RX(0, a)), p1)
    raise SimulationError("MEASURE is not unitary")


class QuantumState:
    """Normalized amplitude vector over ``n_qubits`` qubits (little-endian)."""

    __slots__ = ("amplitudes",)

    def __init__(self, amplitudes, normalize: bool = False):
        amps = np.array(amplitudes, dtype=complex).reshape(-1)
        n = amps.size.bit_length() - 1
        if amps.size == 0 or (1 << n) != amps.size:
            raise SimulationError(f"amplitude vector length {amps.size} is not a power of two")
        norm = np.linalg.norm(amps)
        if normalize:
            if norm < np.sqrt(IMPOSSIBLE_PROB):
                raise SimulationError("cannot normalize a zero vector")
            amps = amps / norm
        elif abs(norm**2 - 1) > 1e-10:
            raise SimulationError(f"state is not normalized (norm^2 = {norm**2:.3g})")
        self.amplitudes = amps

    @property
    def n_qubits(self) -> int:
        return self.amplitudes.size.bit_length() - 1

    @classmethod
    def zero(cls, n_qubits: int) -> "QuantumState":
        amps = np.zeros(1 << n_qubits, dtype=complex)
        amps[0] = 1.0
        return cls(amps)

    @classmethod
    def basis(cls, bits: str | int, n_qubits: int | None = None) -> "QuantumState":
        """Computational basis state. A string lists qubit 0 first."""
        if isinstance(bits, str):
            n_qubits = len(bits)
            index = sum(int(b) << q for q, b in enumerate(bits))
        else:
            index = bits
        amps = np.zeros(1 << n_qubits, dtype=complex)
        amps[index] = 1.0
        return cls(amps)

    def probabilities(self) -> np.ndarray:
        return np.abs(self.amplitudes) ** 2

    def norm(self) -> float:
        return float(np.linalg.norm(self.amplitudes))

    def overlap(self, other: "QuantumState") -> complex:
        return complex(np.vdot(self.amplitudes, other.amplitudes))

    def fidelity(self, other: "QuantumState") -> float:
        return abs(self.overlap(other)) ** 2

    def copy(self) -> "QuantumState":
        return QuantumState(self.amplitudes.copy())

    def __repr__(self):
        return f"QuantumState(n_qubits={self.n_qubits})"

    def to_dict(self) -> dict:
        return {
            "n_qubits": self.n_qubits,
            "amplitudes": [[float(a.real), float(a.imag)] for a in self.amplitudes],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "QuantumState":
        amps = np.array([complex(re, im) for re, im in d["amplitudes"]])
        state = cls(amps)
        if state.n_qubits != d["n_qubits"]:
            raise SimulationError("n_qubits does not match amplitude length")
        return state


def _check_qubits(n: int, qubits: Iterable[int]):
    for q in qubits:
        if not 0 <= q < n:
            raise SimulationError(f"qubit index {q} out of range for {n} qubits")


def bit_mask(n: int, q: int) -> np.ndarray:
    """Boolean mask of basis indices with qubit ``q`` set."""
    return ((np.arange(1 << n) >> q) & 1).astype(bool)


def apply_matrix(amps: np.ndarray, matrix: np.ndarray, qubits: Sequence[int]) -> np.ndarray:
    """Apply a 2x2 / 4x4 matrix to ``qubits`` of a raw amplitude array (new array)."""
    n = amps.size.bit_length() - 1
    tensor = amps.reshape((2,) * n)
    axes = [n - 1 - q for q in qubits]
    k = len(qubits)
    # matrix index b0 + 2*b1 -> tensor axes ordered (b1, b0)
    op = matrix.reshape((2,) * (2 * k))
    in_axes = list(range(2 * k - 1, k - 1, -1))
    out = np.tensordot(op, tensor, axes=(in_axes, axes))
    # tensordot leaves output axes (b_{k-1} .. b0) first
    out = np.moveaxis(out, list(range(k)), axes[::-1])
    return out.reshape(-1)


def _apply_inplace_diag(amps: np.ndarray, gate: Gate) -> np.ndarray:
    n = amps.size.bit_length() - 1
    a = float(gate.angle) if gate.angle is not None else np.pi
    if gate.kind == GateKind.RZ:
        m = bit_mask(n, gate.qubits[0])
        return amps * np.where(m, np.exp(0.5j * a), np.exp(-0.5j * a))
    m = bit_mask(n, gate.qubits[0]) & bit_mask(n, gate.qubits[1])
    return np.where(m, amps * np.exp(1j * a), amps)


def apply_gate(state: QuantumState, gate: Gate) -> QuantumState:
    """Return the state after applying one unitary gate."""
    if gate.kind == GateKind.MEASURE:
        raise SimulationError("MEASURE cannot be applied as a unitary; use measure_qubit")
    _check_qubits(state.n_qubits, gate.qubits)
    if gate.is_symbolic:
        raise SimulationError(f"unbound parameter {gate.angle!r} in {gate.kind.value}")
    if gate.kind in _DIAGONAL:
        out = _apply_inplace_diag(state.amplitudes, gate)
    else:
        out = apply_matrix(state.amplitudes, gate_matrix(gate), gate.qubits)
    return QuantumState(out)


def _branch(state: QuantumState, q: int, bit: int) -> tuple[float, np.ndarray]:
    _check_qubits(state.n_qubits, [q])
    if bit not in (0, 1):
        raise SimulationError(f"measurement outcome must be 0 or 1, got {bit}")
    keep = bit_mask(state.n_qubits, q) == bool(bit)
    projected = np.where(keep, state.amplitudes, 0)
    return float(np.sum(np.abs(projected) ** 2)), projected


def postselect(state: QuantumState, q: int, bit: int) -> tuple[float, QuantumState]:
    """Born probability of ``bit`` on qubit ``q`` and the renormalized projection."""
    prob, projected = _branch(state, q, bit)
    if prob < IMPOSSIBLE_PROB:
        raise ImpossibleBranchError(f"qubit {q} = {bit} has probability {prob:.3g}")
    return prob, QuantumState(projected / np.sqrt(prob))


def measure_qubit(state: QuantumState, q: int, rng_seed=None) -> tuple[int, QuantumState]:
    """Projective Z measurement of qubit ``q`` with a Born-rule sample."""
    rng = np.random.default_rng(rng_seed)
    p1, _ = _branch(state, q, 1)
    bit = int(rng.random() < p1)
    return bit, postselect(state, q, bit)[1]


@dataclass
class Circuit:
    """Ordered gate list plus terminal (qubit, classical slot) measurements."""

    n_qubits: int
    gates: list[Gate] = field(default_factory=list)
    measurements: list[tuple[int, int]] = field(default_factory=list)

    def __post_init__(self):
        self.gates = list(self.gates)
        self.measurements = [(int(q), int(s)) for q, s in self.measurements]
        self.validate()

    def validate(self):
        for g in self.gates:
            if g.kind == GateKind.MEASURE:
                raise SimulationError("use Circuit.measure for measurements")
            _check_qubits(self.n_qubits, g.qubits)
        qubits = [q for q, _ in self.measurements]
        slots = [s for _, s in self.measurements]
        _check_qubits(self.n_qubits, qubits)
        if len(set(slots)) != len(slots):
            raise SimulationError(f"duplicate measurement slots: {slots}")
        if len(set(qubits)) != len(qubits):
            raise SimulationError(f"qubit measured twice: {qubits}")
        if slots and sorted(slots) != list(range(len(slots))):
            raise SimulationError(f"measurement slots must be 0..{len(slots) - 1}, got {slots}")

    def append(self, *gates: Gate) -> "Circuit":
        for g in gates:
            _check_qubits(self.n_qubits, g.qubits)
            self.gates.append(g)
        return self

    def measure(self, qubit: int, slot: int) -> "Circuit":
        self.measurements.append((int(qubit), int(slot)))
        self.validate()
        return self

    def measure_all(self, order: Sequence[int] | None = None) -> "Circuit":
        for slot, q in enumerate(range(self.n_qubits) if order is None else order):
            self.measure(q, slot)
        return self

    def copy(self) -> "Circuit":
        return Circuit(self.n_qubits, list(self.gates), list(self.measurements))

    def bind(self, **params: float) -> "Circuit":
        gates = []
        for g in self.gates:
            if g.is_symbolic:
                if g.angle not in params:
                    raise SimulationError(f"no value for parameter {g.angle!r}")
                g = Gate(g.kind, g.qubits, float(params[g.angle]))
            gates.append(g)
        return Circuit(self.n_qubits, gates, list(self.measurements))

    def inverse(self) -> "Circuit":
        return Circuit(self.n_qubits, [g.inverse() for g in reversed(self.gates)])

    def two_qubit_count(self) -> int:
        return sum(1 for g in self.gates if len(g.qubits) == 2)

    def is_native(self) -> bool:
        return all(g.is_native for g in self.gates)

    def to_dict(self) -> dict:
        return {
            "n_qubits": self.n_qubits,
            "gates": [g.to_dict() for g in self.gates],
            "measurements": [{"qubit": q, "slot": s} for q, s in self.measurements],
        }

    def to_json(self, **kw) -> str:
        return json.dumps(self.to_dict(), **kw)

    @classmethod
    def from_dict(cls, d: dict) -> "Circuit":
        return cls(
            d["n_qubits"],
            [Gate.from_dict(g) for g in d["gates"]],
            [(m["qubit"], m["slot"]) for m in d.get("measurements", [])],
        )

    @classmethod
    def from_json(cls, text: str) -> "Circuit":
        return cls.from_dict(json.loads(text))


def run_circuit(circuit: Circuit, initial: QuantumState | None = None) -> QuantumState:
    """Apply every gate (measurements are ignored) and return the final state."""
    state = QuantumState.zero(circuit.n_qubits) if initial is None else initial
    if state.n_qubits != circuit.n_qubits:
        raise SimulationError("initial state size does not match circuit")
    amps = state.amplitudes
    for g in circuit.gates:
        if g.is_symbolic:
            raise SimulationError(f"unbound parameter {g.angle!r} in {g.kind.value}")
        if g.kind in _DIAGONAL:
            amps = _apply_inplace_diag(amps, g)
        else:
            amps = apply_matrix(amps, gate_matrix(g), g.qubits)
    return QuantumState(amps)


def slot_probabilities(circuit: Circuit, state: QuantumState | None = None) -> np.ndarray:
    """Exact distribution over classical slots (index = sum(bit_slot << slot))."""
    if not circuit.measurements:
        raise SimulationError("circuit has no measurements")
    if state is None:
        state = run_circuit(circuit)
    n = circuit.n_qubits
    probs = state.probabilities().reshape((2,) * n)
    measured = [q for q, _ in sorted(circuit.measurements, key=lambda m: m[1])]
    unmeasured = [q for q in range(n) if q not in measured]
    if unmeasured:
        probs = probs.sum(axis=tuple(n - 1 - q for q in unmeasured))
        kept = [q for q in range(n) if q in measured]
    else:
        kept = list(range(n))
    # axes of `probs` are the kept qubits in descending order
    axis_of = {q: len(kept) - 1 - i for i, q in enumerate(kept)}
    order = [axis_of[q] for q in reversed(measured)]
    return np.transpose(probs, order).reshape(-1)


@dataclass
class OutcomeHistogram:
    """Distribution over ``n_bits`` classical slots.

    ``probs[i]`` is the (quasi-)probability of the outcome whose slot ``s`` bit
    is ``(i >> s) & 1``. Bitstring keys list slot 0 first (``"b0 b1 ..."``).
    ``shots`` is ``None`` for exact distributions.
    """

    n_bits: int
    probs: np.ndarray
    shots: int | None = None
    seed: int | None = None
    mitigated: bool = False

    def __post_init__(self):
        self.probs = np.asarray(self.probs, dtype=float).reshape(-1)
        if self.probs.size != 1 << self.n_bits:
            raise SimulationError(f"expected {1 << self.n_bits} entries, got {self.probs.size}")

    @classmethod
    def from_counts(cls, counts: dict[str, int], n_bits: int | None = None, **kw) -> "OutcomeHistogram":
        if n_bits is None:
            n_bits = len(next(iter(counts)))
        total = sum(counts.values())
        if total <= 0:
            raise SimulationError("histogram has no shots")
        probs = np.zeros(1 << n_bits)
        for key, c in counts.items():
            probs[bitstring_index(key)] += c
        return cls(n_bits, probs / total, shots=int(total), **kw)

    @property
    def counts(self) -> dict[str, int]:
        if self.shots is None:
            raise SimulationError("exact histogram has no integer counts")
        raw = np.rint(self.probs * self.shots).astype(int)
        return {index_bitstring(i, self.n_bits): int(c) for i, c in enumerate(raw) if c}

    @property
    def has_negative(self) -> bool:
        return bool(np.any(self.probs < 0))

    def total(self) -> float:
        return float(self.probs.sum())

    def to_dict(self) -> dict:
        return {
            "n_bits": self.n_bits,
            "shots": self.shots,
            "seed": self.seed,
            "mitigated": self.mitigated,
            "probs": {index_bitstring(i, self.n_bits): float(p) for i, p in enumerate(self.probs) if p != 0},
        }

    @classmethod
    def from_dict(cls, d: dict) -> "OutcomeHistogram":
        probs = np.zeros(1 << d["n_bits"])
        for key, p in d["probs"].items():
            probs[bitstring_index(key)] = p
        return cls(d["n_bits"], probs, d.get("shots"), d.get("seed"), d.get("mitigated", False))

    def postselect(self, slots: Sequence[int], value: int = 0) -> tuple[float, "OutcomeHistogram"]:
        """Condition on ``slots`` all reading ``value``; return (weight, histogram of the rest)."""
        tensor = self.probs.reshape((2,) * self.n_bits)
        index = [slice(None)] * self.n_bits
        for s in slots:
            index[self.n_bits - 1 - s] = value
        sub = tensor[tuple(index)].reshape(-1)
        weight = float(sub.sum())
        if abs(weight) < IMPOSSIBLE_PROB:
            raise ImpossibleBranchError(f"post-selection on slots {list(slots)} has weight {weight:.3g}")
        rest = self.n_bits - len(set(slots))
        return weight, OutcomeHistogram(rest, sub / weight, self.shots, self.seed, self.mitigated)


def bitstring_index(bits: str) -> int:
    return sum(int(b) << s for s, b in enumerate(bits))


def index_bitstring(index: int, n_bits: int) -> str:
    return "".join(str((index >> s) & 1) for s in range(n_bits))


def _block_rng(seed: int, block: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(block,)))


def sample_distribution(probs: np.ndarray, n_shots: int, seed: int) -> np.ndarray:
    """Counts per outcome. Shots are drawn in fixed-size blocks, each from a
    stream keyed by (seed, block index), so the result does not depend on the
    order in which blocks are evaluated."""
    if n_shots <= 0:
        raise SimulationError("n_shots must be positive")
    p = np.clip(np.asarray(probs, dtype=float), 0, None)
    p = p / p.sum()
    counts = np.zeros(p.size, dtype=np.int64)
    for block, start in enumerate(range(0, n_shots, SHOT_BLOCK)):
        size = min(SHOT_BLOCK, n_shots - start)
        counts += _block_rng(seed, block).multinomial(size, p)
    return counts


def sample_shots(
    circuit: Circuit,
    n_shots: int,
    seed: int,
    state: QuantumState | None = None,
    initial: QuantumState | None = None,
) -> OutcomeHistogram:
    """Sample terminal measurements of ``circuit``; reproducible for fixed seed.

    ``state`` is an already evolved final state; ``initial`` is an input state
    that the circuit is run on. Pass at most one of them.
    """
    if n_shots <= 0:
        raise SimulationError("n_shots must be positive")
    if not circuit.measurements:
        raise SimulationError("circuit has no measurements")
    if state is not None and initial is not None:
        raise SimulationError("pass either a final state or an initial state, not both")
    if state is None:
        state = run_circuit(circuit, initial)
    probs = slot_probabilities(circuit, state)
    counts = sample_distribution(probs, n_shots, seed)
    return OutcomeHistogram(len(circuit.measurements), counts / n_shots, shots=n_shots, seed=seed)
