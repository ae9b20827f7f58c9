"""Ancilla-based counting of the total S_z.

Ancilla ``n`` (``n = 0 .. N_a - 1``) is prepared in the XY plane with
``RX(pi/2)`` and picks up a relative phase ``-phi_n * S_z`` through one
``RZ(-phi_n/2)`` + ``CPHASE(phi_n)`` pair per coupled system qubit, with
``phi_n = pi / 2**n``. Reading it back with ``RX(-pi/2)`` gives outcome 1 with
certainty whenever ``phi_n * S_z`` is an odd multiple of pi, so keeping only
all-zero ancilla records leaves the ``S_z = 0`` sector.

Qubit layout of the generated circuits: system qubits ``0..N-1``, ancillas
``N..N+N_a-1``. Measurement slots follow the same logical order, which lets
linear-chain circuits (where SWAPs move qubits around) be read back in
logical order.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .sim import (
    CPHASE, CRX, RX, RZ, SWAP, Circuit, IMPOSSIBLE_PROB, ImpossibleBranchError,
    QuantumState, SimulationError, run_circuit,
)
from .states import StateEnsemble, _profile

LAYOUTS = ("all-to-all", "linear-chain")
MODES = ("postselect", "keep-all")


def default_ancillas(n_system: int) -> int:
    if n_system < 2:
        raise ValueError("counting needs at least two system qubits")
    return int(math.floor(math.log2(n_system)))


@dataclass(frozen=True)
class CountingPlan:
    """System size, ancilla count, ancilla phases and chip layout."""

    n_system: int
    n_ancillas: int | None = None
    phis: tuple[float, ...] | None = None
    layout: str = "all-to-all"

    def __post_init__(self):
        if self.n_system < 1:
            raise ValueError("n_system must be >= 1")
        na = self.n_ancillas
        if na is None:
            na = len(self.phis) if self.phis is not None else default_ancillas(self.n_system)
            object.__setattr__(self, "n_ancillas", na)
        if na < 1:
            raise ValueError("need at least one ancilla")
        phis = self.phis
        if phis is None:
            phis = tuple(np.pi / 2**k for k in range(na))
        else:
            phis = tuple(float(p) for p in np.atleast_1d(phis))
        if len(phis) != na:
            raise ValueError(f"{len(phis)} ancilla phases given for {na} ancillas")
        for a, b in zip(phis, phis[1:]):
            if not math.isclose(b, a / 2, rel_tol=1e-12):
                raise ValueError(f"ancilla phases must halve at each step, got {phis}")
        object.__setattr__(self, "phis", phis)
        if self.layout not in LAYOUTS:
            raise ValueError(f"layout must be one of {LAYOUTS}, got {self.layout!r}")

    @property
    def n_total(self) -> int:
        return self.n_system + self.n_ancillas

    @property
    def ancillas(self) -> list[int]:
        return list(range(self.n_system, self.n_total))

    def detects_all_sectors(self) -> bool:
        """True when every nonzero |S_z| <= N/2 sends some ancilla an odd multiple of pi."""
        return all(_caught(s, self.phis) for s in _nonzero_sz(self.n_system))


def _nonzero_sz(n: int) -> list[float]:
    return [n / 2 - w for w in range(n + 1) if n / 2 - w != 0]


def _caught(s: float, phis: Sequence[float]) -> bool:
    for phi in phis:
        m = s * phi / np.pi
        if abs(m - round(m)) < 1e-9 and round(m) % 2:
            return True
    return False


def ancilla_phase_table(plan: CountingPlan) -> list[tuple[float, list[float]]]:
    """Phase acquired by each ancilla for every S_z >= 0 (in radians)."""
    n = plan.n_system
    sectors = sorted({abs(n / 2 - w) for w in range(n + 1)})
    return [(s, [s * phi for phi in plan.phis]) for s in sectors]


# -- schedules ---------------------------------------------------------------


@dataclass(frozen=True)
class Interaction:
    """One ancilla-system coupling on chain positions (system_pos, ancilla_pos)."""

    system: int
    ancilla: int
    system_pos: int
    ancilla_pos: int
    swap: bool


@dataclass
class ChainSchedule:
    initial: list[int]
    steps: list[Interaction] = field(default_factory=list)
    final: list[int] = field(default_factory=list)


def chain_schedule(plan: CountingPlan, n_coupled: int | None = None) -> ChainSchedule:
    """Nearest-neighbour schedule on a line.

    The ancilla block sits at the left end; each system qubit in turn is
    bubbled leftwards through the block, coupling to (and swapping with) every
    ancilla it passes. The first and last swaps are dropped: the first by
    starting from the already-swapped layout, the last because nothing follows
    it. This uses ``N * N_a`` couplings of which all but two carry a swap.
    """
    n, na = plan.n_system, plan.n_ancillas
    k = n if n_coupled is None else n_coupled
    if not 0 <= k <= n:
        raise ValueError(f"n_coupled must be in 0..{n}")
    chain = plan.ancillas + list(range(n))
    order = [(j, n + a) for j in range(k) for a in reversed(range(na))]
    if not order:
        return ChainSchedule(list(chain), [], list(chain))
    steps, snapshots = [], []
    for idx, (q, anc) in enumerate(order):
        pa, pq = chain.index(anc), chain.index(q)
        if abs(pa - pq) != 1:
            raise SimulationError(f"qubits {q} and {anc} are not adjacent at step {idx}; cannot schedule")
        if idx == 0:
            # physical layout already holds the swapped pair
            steps.append(Interaction(q, anc, pa, pq, False))
        else:
            steps.append(Interaction(q, anc, pq, pa, idx < len(order) - 1))
        snapshots.append(list(chain))
        chain[pa], chain[pq] = chain[pq], chain[pa]
    if len(order) == 1:
        initial = final = chain
    else:
        initial, final = snapshots[1], snapshots[-1]
    return ChainSchedule(list(initial), steps, list(final))


# -- circuits ----------------------------------------------------------------


def _prep_gates(q_of, n: int, thetas) -> list:
    gates = [RX(q_of(i), np.pi / 2) for i in range(n)]
    if thetas is not None:
        th = _profile(n, thetas)
        for i in range(n):
            # RX(pi/2)|0> points along -y; rotate to theta_i
            a = float(np.mod(th[i] + np.pi / 2, 2 * np.pi))
            if not math.isclose(a, 0.0, abs_tol=1e-15):
                gates.append(RZ(q_of(i), a))
    return gates


def build_counting_circuit(
    plan: CountingPlan,
    thetas=None,
    n_coupled: int | None = None,
    readout: bool = True,
) -> Circuit:
    """Abstract counting circuit (RX, RZ, CPHASE and SWAP gates).

    ``thetas=None`` prepares every system qubit with ``RX(pi/2)`` only, i.e.
    the coherent state with all angles at ``-pi/2``; a profile adds the RZ that
    turns it into ``prepare_coherent(N, thetas)`` up to a global phase.
    ``n_coupled`` restricts the coupling to the first k system qubits.
    With ``readout`` the ancillas are rotated back and every qubit is measured
    into its logical slot.
    """
    n = plan.n_system
    k = n if n_coupled is None else n_coupled
    circ = Circuit(plan.n_total)
    if plan.layout == "all-to-all":
        pos = {q: q for q in range(plan.n_total)}
        circ.append(*_prep_gates(lambda i: i, n, thetas))
        circ.append(*[RX(a, np.pi / 2) for a in plan.ancillas])
        for j in range(k):
            for a_idx, anc in enumerate(plan.ancillas):
                phi = plan.phis[a_idx]
                circ.append(RZ(anc, -phi / 2), CPHASE(j, anc, phi))
    else:
        sched = chain_schedule(plan, k)
        pos = {label: p for p, label in enumerate(sched.initial)}
        circ.append(*_prep_gates(lambda i: pos[i], n, thetas))
        circ.append(*[RX(pos[a], np.pi / 2) for a in plan.ancillas])
        for st in sched.steps:
            phi = plan.phis[st.ancilla - n]
            circ.append(RZ(st.ancilla_pos, -phi / 2), CPHASE(st.system_pos, st.ancilla_pos, phi))
            if st.swap:
                circ.append(SWAP(st.system_pos, st.ancilla_pos))
        pos = {label: p for p, label in enumerate(sched.final)}
    if readout:
        circ.append(*[RX(pos[a], -np.pi / 2) for a in plan.ancillas])
        for label in range(plan.n_total):
            circ.measure(pos[label], label)
    return circ


def build_crx_counting_circuit(plan: CountingPlan, n_coupled: int | None = None) -> Circuit:
    """Textbook form: ancillas start in |0>, each system qubit drives a
    controlled X rotation (centred by an unconditional ``RX(-phi/2)``), and
    the ancillas are read in the Z basis. All-to-all only."""
    n = plan.n_system
    k = n if n_coupled is None else n_coupled
    circ = Circuit(plan.n_total)
    circ.append(*_prep_gates(lambda i: i, n, None))
    for j in range(k):
        for a_idx, anc in enumerate(plan.ancillas):
            phi = plan.phis[a_idx]
            circ.append(RX(anc, -phi / 2), CRX(j, anc, phi))
    circ.measure_all()
    return circ


def logical_state(circuit: Circuit, state: QuantumState) -> QuantumState:
    """Reorder a fully-measured circuit's physical state into slot order."""
    if len(circuit.measurements) != circuit.n_qubits:
        raise SimulationError("every qubit must be measured to define a logical order")
    n = circuit.n_qubits
    tensor = state.amplitudes.reshape((2,) * n)
    slot_of = dict(circuit.measurements)
    # new axis for slot s (axis n-1-s) takes old axis of the qubit measured into s
    qubit_for_slot = {s: q for q, s in slot_of.items()}
    order = [n - 1 - qubit_for_slot[n - 1 - ax] for ax in range(n)]
    return QuantumState(np.transpose(tensor, order).reshape(-1))


def _pre_readout_logical(plan: CountingPlan, circuit: Circuit) -> np.ndarray:
    state = run_circuit(circuit)
    return logical_state(circuit, state).amplitudes


def ancilla_branches(plan: CountingPlan, amps: np.ndarray) -> dict[tuple[int, ...], tuple[float, np.ndarray]]:
    """Split a logical-order state by ancilla record into (probability, system amplitudes)."""
    n = plan.n_system
    blocks = amps.reshape(1 << plan.n_ancillas, 1 << n)
    out = {}
    for index in range(1 << plan.n_ancillas):
        bits = tuple((index >> a) & 1 for a in range(plan.n_ancillas))
        sub = blocks[index]
        out[bits] = (float(np.sum(np.abs(sub) ** 2)), sub)
    return out


@dataclass
class CountingResult:
    """System ensemble after the ancilla readout.

    ``success_probability`` is the weight of the all-zero record (post-select
    mode) or 1 (keep-all mode); ``outcome_probs`` lists every ancilla record.
    """

    ensemble: StateEnsemble
    success_probability: float
    outcome_probs: dict[tuple[int, ...], float]
    mode: str

    @property
    def state(self) -> QuantumState:
        if len(self.ensemble) != 1:
            raise ValueError("keep-all result is a mixture; use .ensemble")
        return self.ensemble.members[0][1]


def run_counting(
    plan: CountingPlan,
    thetas=None,
    mode: str = "postselect",
    n_coupled: int | None = None,
    circuit: Circuit | None = None,
) -> CountingResult:
    """Exact counting protocol on a coherent input with profile ``thetas`` (default all zero)."""
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}, got {mode!r}")
    if thetas is None:
        thetas = np.zeros(plan.n_system)
    if circuit is None:
        circuit = build_counting_circuit(plan, thetas, n_coupled)
    amps = _pre_readout_logical(plan, circuit)
    branches = ancilla_branches(plan, amps)
    probs = {bits: p for bits, (p, _) in branches.items()}
    zero = tuple([0] * plan.n_ancillas)
    if mode == "postselect":
        p, sub = branches[zero]
        if p < IMPOSSIBLE_PROB:
            raise ImpossibleBranchError(f"all-zero ancilla record has probability {p:.3g}")
        ens = StateEnsemble.pure(QuantumState(sub / np.sqrt(p)))
        return CountingResult(ens, p, probs, mode)
    members = [
        (p, QuantumState(sub / np.sqrt(p)))
        for bits, (p, sub) in sorted(branches.items())
        if p >= IMPOSSIBLE_PROB
    ]
    return CountingResult(StateEnsemble.normalized(members), 1.0, probs, mode)


def sector_leakage(plan: CountingPlan, thetas=None) -> float:
    """Probability outside S_z = 0 in the post-selected output."""
    from .states import hamming_weights

    state = run_counting(plan, thetas).state
    w = hamming_weights(plan.n_system)
    return float(state.probabilities()[w != plan.n_system / 2].sum())


def all_outcome_records(n_ancillas: int):
    return list(itertools.product((0, 1), repeat=n_ancillas))
