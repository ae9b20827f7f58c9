"""Lowering of counting circuits to the native set {RX, RZ, CPHASE, XY}.

Two rewrites are used:

* a controlled X rotation on an ancilla becomes an XY-plane ancilla plus a
  CPHASE controlled by the system qubit (``lower_crx``);
* ``SWAP . CPHASE(phi)`` becomes ``XY(pi) . CPHASE(pi + phi)`` preceded by an
  RZ on each qubit (``fuse_cphase_swap``).

The RZ that a fused pair needs on the ancilla is merged into the ancilla's own
RZ. The one it needs on the system qubit commutes with everything that
follows on that qubit, so it is kept aside as a residual ``LocalCorrection``
and applied only when the circuit is executed (``NativeCircuit.corrected``).
That keeps the exported program identical to the hand-written 5-qubit one.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .counting import CountingPlan, build_counting_circuit, chain_schedule, _prep_gates
from .sim import (
    CPHASE, RX, RZ, XY, Circuit, Gate, GateKind, QuantumState, SimulationError,
    apply_matrix, gate_matrix, run_circuit,
)

TWO_PI = 2 * np.pi
EQUIV_ATOL = 1e-9
MAX_EQUIV_QUBITS = 12
DENSE_EQUIV_QUBITS = 10

# RZ angles on (qubit a, qubit b) and global phase such that
# XY(pi) . CPHASE(pi + phi) . (RZ(a) x RZ(b)) . e^{ig} = SWAP . CPHASE(phi).
# Independent of phi; produced by scripts/derive_fusion_corrections.py.
FUSION_RZ = (-np.pi / 2, -np.pi / 2)
FUSION_GLOBAL_PHASE = -np.pi / 2


def wrap_angle(a: float) -> float:
    """Map an angle to (-pi, pi]."""
    w = float(np.mod(a + np.pi, TWO_PI) - np.pi)
    return np.pi if math.isclose(w, -np.pi, abs_tol=1e-12) else w


class CompilationError(RuntimeError):
    """A rewrite failed to close or a gate budget was exceeded."""


@dataclass
class LocalCorrection:
    """Per-qubit RZ angles (applied after the gates they annotate) and a global phase."""

    rz: dict[int, float] = field(default_factory=dict)
    global_phase: float = 0.0

    def __post_init__(self):
        for q, a in self.rz.items():
            if not math.isfinite(a):
                raise ValueError(f"non-finite correction angle on qubit {q}")
        raw, self.rz = self.rz, {}
        for q, a in raw.items():
            self.add(int(q), a)
        self.global_phase = float(np.mod(self.global_phase, TWO_PI))

    def add(self, qubit: int, angle: float) -> None:
        """Accumulate an RZ angle, kept in [0, 2 pi).

        RZ has period 4 pi, so each odd number of 2 pi wraps moves a factor
        of -1 into the global phase.
        """
        total = self.rz.get(qubit, 0.0) + angle
        wraps = math.floor(total / TWO_PI)
        self.rz[qubit] = float(total - wraps * TWO_PI)
        if wraps % 2:
            self.global_phase = float(np.mod(self.global_phase + np.pi, TWO_PI))

    def gates(self, relabel=None) -> list[Gate]:
        return [RZ(q if relabel is None else relabel[q], a) for q, a in sorted(self.rz.items())
                if not math.isclose(a, 0.0, abs_tol=1e-14)]

    def inverse(self) -> "LocalCorrection":
        return LocalCorrection({q: -a for q, a in self.rz.items()}, -self.global_phase)

    def to_dict(self) -> dict:
        return {"rz": {str(q): a for q, a in self.rz.items()}, "global_phase": self.global_phase}


# -- single rewrites -----------------------------------------------------------


def lower_crx(phi: float, control: int = 0, target: int = 1) -> tuple[list[Gate], LocalCorrection]:
    """Native replacement for ``CRX(phi)`` from ``control`` onto ``target``.

    ``CRX(phi) = e^{-i phi/4} RZ_c(-phi/2) . S`` with the gate sequence ``S``
    (time order) ``RZ_t(pi/2), RX_t(pi/2), CPHASE(phi), RX_t(-pi/2), RZ_t(-pi/2)``.
    The returned correction is the part applied after ``S``. In a counting
    circuit the target RZs act on |0> or just before a Z readout, and the RX
    pairs of consecutive couplings cancel, so only the ancilla preparation,
    the CPHASE gates and the X-basis readout remain.
    """
    seq = [
        RZ(target, np.pi / 2), RX(target, np.pi / 2), CPHASE(control, target, phi),
        RX(target, -np.pi / 2), RZ(target, -np.pi / 2),
    ]
    return seq, LocalCorrection({control: -phi / 2}, -phi / 4)


def _sequence_unitary(gates: list[Gate], n: int = 2) -> np.ndarray:
    u = np.eye(1 << n, dtype=complex)
    for g in gates:
        u = np.column_stack([apply_matrix(u[:, j], gate_matrix(g), g.qubits) for j in range(1 << n)])
    return u


def solve_diagonal_correction(target: np.ndarray, composite: np.ndarray, tol: float = 1e-12):
    """Find RZ angles (a, b) and phase g with ``composite . (RZ(a) x RZ(b)) e^{ig} = target``.

    Works on 4x4 matrices in the pair index ``b0 + 2*b1`` (``a`` on b0).
    Raises ``CompilationError`` when no such correction exists.
    """
    d = composite.conj().T @ target
    if np.max(np.abs(d - np.diag(np.diag(d)))) > tol:
        raise CompilationError("composite differs from target by a non-diagonal factor")
    ph = np.angle(np.diag(d))
    # RZ(a) x RZ(b) e^{ig} has phases g + (-a-b, a-b, -a+b, a+b)/2
    a = float(np.angle(np.exp(1j * (ph[1] - ph[0]))))
    b = float(np.angle(np.exp(1j * (ph[2] - ph[0]))))
    g = float(ph[0] + (a + b) / 2)
    rebuilt = composite @ np.kron(gate_matrix(RZ(0, b)), gate_matrix(RZ(0, a))) * np.exp(1j * g)
    err = float(np.linalg.norm(rebuilt - target))
    if err > tol:
        raise CompilationError(f"no RZ correction closes the identity (residual {err:.3g})")
    return a, b, g


def fuse_cphase_swap(phi: float, qa: int = 0, qb: int = 1) -> tuple[list[Gate], LocalCorrection]:
    """``SWAP . CPHASE(phi)`` as ``CPHASE(pi + phi)`` then ``XY(pi)``.

    The returned correction holds RZ angles to apply *before* the pair (on
    ``qa`` and ``qb``) and the global phase. Being diagonal, they may equally
    be applied after the pair on the swapped qubits.
    """
    pair = [CPHASE(qa, qb, np.pi + phi), XY(qa, qb, np.pi)]
    local = [CPHASE(0, 1, np.pi + phi), XY(0, 1, np.pi)]
    target = gate_matrix(Gate(GateKind.SWAP, (0, 1))) @ gate_matrix(CPHASE(0, 1, phi))
    a, b, g = solve_diagonal_correction(target, _sequence_unitary(local))
    return pair, LocalCorrection({qa: a, qb: b}, g)


# -- measurement basis -----------------------------------------------------------


def s_theta_basis_change(qubits, theta) -> list[Gate]:
    """Gates after which a Z readout of ``qubits`` measures ``cos(t) S_x + sin(t) S_y``.

    Each qubit gets ``RZ(-theta - pi/2)`` then ``RX(-pi/2)``; outcome 0 means
    spin component +1/2. ``theta`` may be a parameter name, in which case the
    RZ angle is left symbolic (the hardware-frame angle).
    """
    if isinstance(theta, str):
        rz = [RZ(q, theta) for q in qubits]
    else:
        rz = [RZ(q, -float(theta) - np.pi / 2) for q in qubits]
    return rz + [RX(q, -np.pi / 2) for q in qubits]


def s_theta_matrix(theta: float) -> np.ndarray:
    """Single-qubit unitary of the basis change."""
    return gate_matrix(RX(0, -np.pi / 2)) @ gate_matrix(RZ(0, -theta - np.pi / 2))


# -- whole-circuit compilation -----------------------------------------------------


@dataclass
class NativeCircuit:
    """Native counting circuit (no readout) with its residual corrections.

    ``circuit.measurements`` maps physical wires to logical slots (system
    qubits first, then ancillas). ``residual`` is keyed by physical wire at
    the end of the circuit.
    """

    plan: CountingPlan
    circuit: Circuit
    residual: LocalCorrection
    system_wires: list[int]
    ancilla_wires: list[int]

    @property
    def two_qubit_count(self) -> int:
        return self.circuit.two_qubit_count()

    def corrected(self) -> Circuit:
        """Circuit with the residual RZs appended (unitarily matches the abstract one)."""
        c = self.circuit.copy()
        c.append(*self.residual.gates())
        return c

    def with_readout(self, theta=None, corrected: bool = True) -> Circuit:
        """Append ancilla X-basis readout and, optionally, the S_theta basis change
        on the system qubits, mirroring the 5-qubit program's measurement block."""
        c = self.corrected() if corrected else self.circuit.copy()
        measurements = list(c.measurements)
        c.measurements = []
        if theta is not None:
            c.append(*s_theta_basis_change(self.system_wires, theta))
        c.append(*[RX(w, -np.pi / 2) for w in self.ancilla_wires])
        c.measurements = measurements
        return c


def budget(plan: CountingPlan) -> int:
    return 2 * (plan.n_system * plan.n_ancillas - 1)


def compile_counting(plan: CountingPlan, thetas=None) -> NativeCircuit:
    """Lower the linear-chain counting circuit to native gates.

    Couplings without a swap are ``RZ(-phi/2)`` on the ancilla plus
    ``CPHASE(phi)``; couplings followed by a swap use the fused pair with
    the ancilla RZ shifted by the fusion correction.
    """
    if plan.layout != "linear-chain":
        plan = CountingPlan(plan.n_system, plan.n_ancillas, plan.phis, "linear-chain")
    n = plan.n_system
    sched = chain_schedule(plan)
    pos = {label: p for p, label in enumerate(sched.initial)}
    circ = Circuit(plan.n_total)
    circ.append(*_prep_gates(lambda i: pos[i], n, thetas))
    circ.append(*[RX(pos[a], np.pi / 2) for a in plan.ancillas])
    residual_logical = LocalCorrection()
    for st in sched.steps:
        phi = plan.phis[st.ancilla - n]
        if st.swap:
            pair, corr = fuse_cphase_swap(phi, st.system_pos, st.ancilla_pos)
            circ.append(RZ(st.ancilla_pos, -phi / 2 + wrap_angle(corr.rz[st.ancilla_pos])), *pair)
            residual_logical.add(st.system, corr.rz[st.system_pos])
        else:
            circ.append(RZ(st.ancilla_pos, -phi / 2), CPHASE(st.system_pos, st.ancilla_pos, phi))
    final = {label: p for p, label in enumerate(sched.final)}
    for label in range(plan.n_total):
        circ.measure(final[label], label)
    if circ.two_qubit_count() > budget(plan):
        raise CompilationError(
            f"{circ.two_qubit_count()} two-qubit gates exceed 2(N*N_a-1) = {budget(plan)}; "
            f"schedule: {[(s.system, s.ancilla, s.swap) for s in sched.steps]}"
        )
    if not circ.is_native():
        raise CompilationError("non-native gate left after lowering")
    residual = LocalCorrection({final[q]: a for q, a in residual_logical.rz.items()})
    return NativeCircuit(
        plan, circ, residual,
        system_wires=[final[i] for i in range(n)],
        ancilla_wires=[final[a] for a in plan.ancillas],
    )


# -- equivalence -------------------------------------------------------------------


def circuit_unitary(circuit: Circuit) -> np.ndarray:
    n = circuit.n_qubits
    if n > MAX_EQUIV_QUBITS:
        raise SimulationError(f"{n} qubits exceed the {MAX_EQUIV_QUBITS}-qubit equivalence limit")
    dim = 1 << n
    cols = []
    for j in range(dim):
        e = np.zeros(dim, dtype=complex)
        e[j] = 1
        cols.append(run_circuit(circuit, QuantumState(e)).amplitudes)
    return np.column_stack(cols)


def _fit_local_rz(u: np.ndarray, v: np.ndarray, n: int):
    """Best RZ-layer + phase estimate with ``u ~ e^{ig} R v`` from the diagonal of u v^dag."""
    d = np.sum(u * v.conj(), axis=1)  # diagonal of u v^dag
    base = d[0]
    angles = np.array([np.angle(d[1 << q] / base) if abs(base) > 1e-12 else 0.0 for q in range(n)])
    idx = np.arange(1 << n)
    bits = (idx[:, None] >> np.arange(n)) & 1
    phases = np.exp(1j * (np.angle(base) + bits @ angles))
    return phases


def unitary_equiv(a: Circuit, b: Circuit, up_to: str = "exact") -> tuple[bool, float]:
    """Compare two circuits' unitaries (gates only, measurements ignored).

    ``up_to`` is ``exact``, ``global-phase`` or ``local-rz+global-phase``
    (``a = e^{ig} (RZ layer) b``). Distance is the Frobenius norm of the
    residual after the best correction in the class; up to 10 qubits the
    full matrices are used, above that a few seeded random probe states.
    """
    if a.n_qubits != b.n_qubits:
        raise SimulationError("circuits act on different numbers of qubits")
    n = a.n_qubits
    if n > MAX_EQUIV_QUBITS:
        raise SimulationError(f"{n} qubits exceed the {MAX_EQUIV_QUBITS}-qubit equivalence limit")
    if up_to not in ("exact", "global-phase", "local-rz+global-phase"):
        raise ValueError(f"unknown equivalence class {up_to!r}")
    if n <= DENSE_EQUIV_QUBITS:
        u, v = circuit_unitary(a), circuit_unitary(b)
    else:
        rng = np.random.default_rng(20220131)
        probes = []
        for _ in range(4):
            r = rng.normal(size=1 << n) + 1j * rng.normal(size=1 << n)
            probes.append(QuantumState(r, normalize=True))
        u = np.column_stack([run_circuit(a, p).amplitudes for p in probes])
        v = np.column_stack([run_circuit(b, p).amplitudes for p in probes])
    if up_to == "exact":
        dist = float(np.linalg.norm(u - v))
    elif up_to == "global-phase":
        overlap = np.vdot(v, u)
        phase = overlap / abs(overlap) if abs(overlap) > 1e-15 else 1.0
        dist = float(np.linalg.norm(u - phase * v))
    else:
        if n <= DENSE_EQUIV_QUBITS:
            phases = _fit_local_rz(u, v, n)
        else:
            w = u[:, 0] / np.where(np.abs(v[:, 0]) > 1e-300, v[:, 0], 1)
            idx = np.arange(1 << n)
            bits = (idx[:, None] >> np.arange(n)) & 1
            angles = np.array([np.angle(w[1 << q] / w[0]) for q in range(n)])
            phases = np.exp(1j * (np.angle(w[0]) + bits @ angles))
        dist = float(np.linalg.norm(u - phases[:, None] * v))
    return dist < EQUIV_ATOL, dist


# -- text export ---------------------------------------------------------------------


def format_angle(angle) -> str:
    """Render radians as a pi fraction when it is one (``-3*pi/4``), else a float."""
    if isinstance(angle, str):
        return angle
    frac = Fraction(angle / np.pi).limit_denominator(64)
    if abs(float(frac) * np.pi - angle) > 1e-9:
        return repr(float(angle))
    if frac == 0:
        return "0"
    num, den = frac.numerator, frac.denominator
    sign = "-" if num < 0 else ""
    num = abs(num)
    head = "pi" if num == 1 else f"{num}*pi"
    return f"{sign}{head}" if den == 1 else f"{sign}{head}/{den}"


def _instruction(g: Gate) -> str:
    qubits = " ".join(str(q) for q in g.qubits)
    if g.angle is None:
        return f"{g.kind.value} {qubits}"
    return f"{g.kind.value}({format_angle(g.angle)}) {qubits}"


def to_quil(circuit: Circuit, header: bool = True) -> str:
    """Quil-style listing, one instruction per line, in gate order."""
    lines = []
    if header:
        lines.append('PRAGMA INITIAL_REWIRING "NAIVE"')
        if circuit.measurements:
            lines.append(f"DECLARE ro BIT[{len(circuit.measurements)}]")
    lines += [_instruction(g) for g in circuit.gates]
    lines += [f"MEASURE {q} ro[{s}]" for q, s in sorted(circuit.measurements, key=lambda m: m[1])]
    return "\n".join(lines) + "\n"


def export_s_theta_program(native: NativeCircuit, theta: str = "theta") -> str:
    """Full program measuring S_theta (symbolic, hardware-frame angle) after counting.

    The residual system-qubit RZs are left out, matching the hand-written
    program: they only shift the frame in which ``theta`` is read.
    """
    c = native.circuit.copy()
    measurements = list(c.measurements)
    c.measurements = []
    c.append(*[RZ(w, theta) for w in native.system_wires])
    c.append(*[RX(w, -np.pi / 2) for w in native.system_wires])
    c.append(*[RX(w, -np.pi / 2) for w in native.ancilla_wires])
    c.measurements = measurements
    return to_quil(c)
