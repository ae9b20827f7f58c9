"""Staged coupling sweep: couple the first k system qubits, then measure coherence.

Each staged point is an independent run from the coherent input. Without
readout noise and shots the point is evaluated on the exact post-measurement
ensemble. Otherwise the system is read out along ``S_x`` and ``S_y``
together with the ancillas, and the statistics are taken from the outcome
histograms after optional readout noise, mitigation and ancilla post-selection.
"""

from __future__ import annotations

import csv
import io
from dataclasses import asdict, dataclass, field

import numpy as np

from ._parallel import pmap
from .counting import MODES, CountingPlan, build_counting_circuit, run_counting
from .mitigation import ConfusionModel, apply_readout_noise, mitigate
from .nativegates import s_theta_basis_change
from .observables import spin_observables
from .sim import OutcomeHistogram, Circuit, sample_distribution, slot_probabilities, run_circuit
from .states import hamming_weights

MITIGATION_ORDERS = ("before-postselect", "after-postselect")
READOUT_ANGLES = (0.0, np.pi / 2)


@dataclass
class SweepPoint:
    k: int
    c2: float
    sx: float
    sy: float
    success_probability: float
    mode: str
    c2_err: float = 0.0
    sx_err: float = 0.0


@dataclass
class SweepResult:
    n: int
    points: list[SweepPoint]
    settings: dict = field(default_factory=dict)

    COLUMNS = ("k", "C2", "Sx", "success_probability", "mode", "Sy", "C2_err", "Sx_err")

    @property
    def ks(self) -> np.ndarray:
        return np.array([p.k for p in self.points])

    @property
    def c2(self) -> np.ndarray:
        return np.array([p.c2 for p in self.points])

    @property
    def sx(self) -> np.ndarray:
        return np.array([p.sx for p in self.points])

    @property
    def sx2_norm(self) -> np.ndarray:
        """``<S_x>^2 / N^2``, the second coherence parameter of the sweep."""
        return self.sx**2 / self.n**2

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.COLUMNS)
        for p in self.points:
            w.writerow([p.k, repr(p.c2), repr(p.sx), repr(p.success_probability), p.mode,
                        repr(p.sy), repr(p.c2_err), repr(p.sx_err)])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str, n: int) -> "SweepResult":
        rows = csv.DictReader(line for line in io.StringIO(text) if not line.startswith("#"))
        pts = [
            SweepPoint(int(r["k"]), float(r["C2"]), float(r["Sx"]), float(r.get("Sy") or 0.0),
                       float(r["success_probability"]), r["mode"],
                       float(r.get("C2_err") or 0.0), float(r.get("Sx_err") or 0.0))
            for r in rows
        ]
        return cls(n, pts)

    def to_records(self) -> list[dict]:
        return [asdict(p) for p in self.points]


def _readout_circuit(plan: CountingPlan, thetas, k: int, angle: float) -> Circuit:
    circ = build_counting_circuit(plan, thetas, n_coupled=k)
    meas = circ.measurements
    circ.measurements = []
    system_wires = [q for q, slot in sorted(meas, key=lambda m: m[1]) if slot < plan.n_system]
    # ancilla X-readout is already in the gate list; the basis change commutes with it
    circ.append(*s_theta_basis_change(system_wires, angle))
    circ.measurements = meas
    return circ


def _marginal(hist: OutcomeHistogram, keep: int) -> OutcomeHistogram:
    """Sum out every slot >= ``keep``."""
    probs = hist.probs.reshape(-1, 1 << keep).sum(axis=0)
    return OutcomeHistogram(keep, probs, hist.shots, hist.seed, hist.mitigated)


def _moments(hist: OutcomeHistogram, n: int):
    v = n / 2 - hamming_weights(n)
    p = hist.probs
    return float(p @ v), float(p @ v**2), float(p @ v**4)


@dataclass
class _Readout:
    weight: float
    mean: float
    m2: float
    m4: float
    n_eff: float | None


def _measure(plan, thetas, k, angle, mode, shots, seed, noise, mitigation, order) -> _Readout:
    n, na = plan.n_system, plan.n_ancillas
    circ = _readout_circuit(plan, thetas, k, angle)
    probs = slot_probabilities(circ, run_circuit(circ))
    if shots is None:
        hist = OutcomeHistogram(plan.n_total, probs)
    else:
        counts = sample_distribution(probs, shots, seed)
        hist = OutcomeHistogram(plan.n_total, counts / shots, shots=shots, seed=seed)
    if noise is not None:
        hist = apply_readout_noise(hist, noise, None if shots is None else seed + 1)
    if mitigation is not None and order == "before-postselect":
        hist = mitigate(hist, mitigation)
    anc_slots = list(range(n, n + na))
    if mode == "postselect":
        weight, sys_hist = hist.postselect(anc_slots, 0)
    else:
        weight, sys_hist = 1.0, _marginal(hist, n)
    if mitigation is not None and order == "after-postselect":
        sub = ConfusionModel(mitigation.p00[:n], mitigation.p11[:n])
        sys_hist = mitigate(sys_hist, sub)
        total = sys_hist.total()
        sys_hist = OutcomeHistogram(n, sys_hist.probs / total, sys_hist.shots, sys_hist.seed, True)
    n_eff = None if shots is None else max(weight * shots, 1.0)
    return _Readout(weight, *_moments(sys_hist, n), n_eff)


def _err(var: float, n_eff: float | None) -> float:
    return 0.0 if n_eff is None else float(np.sqrt(max(var, 0.0) / n_eff))


def staged_coupling_sweep(
    n: int,
    plan: CountingPlan | None = None,
    mode: str = "postselect",
    shots: int | None = None,
    seed: int = 0,
    thetas=None,
    noise: ConfusionModel | None = None,
    mitigation: ConfusionModel | None = None,
    mitigation_order: str = "before-postselect",
    ks=None,
) -> SweepResult:
    """Coherence after coupling the first k qubits, for every k in ``ks`` (default 0..N).

    ``noise`` and ``mitigation`` are confusion models over all ``N + N_a``
    readout slots (system first, then ancillas). Without noise and shots
    the exact ensemble is used directly. Standard errors are binomial
    estimates from the accepted shot count.
    """
    if plan is None:
        plan = CountingPlan(n)
    if plan.n_system != n:
        raise ValueError(f"plan is for {plan.n_system} system qubits, not {n}")
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}, got {mode!r}")
    if mitigation_order not in MITIGATION_ORDERS:
        raise ValueError(f"mitigation_order must be one of {MITIGATION_ORDERS}")
    if shots is not None and shots <= 0:
        raise ValueError("shots must be positive")
    for name, model in (("noise", noise), ("mitigation", mitigation)):
        if model is not None and model.n_qubits != plan.n_total:
            raise ValueError(f"{name} model covers {model.n_qubits} qubits; the sweep reads {plan.n_total}")
    thetas = np.zeros(n) if thetas is None else np.asarray(thetas, dtype=float)
    ks = list(range(n + 1)) if ks is None else [int(k) for k in ks]
    for k in ks:
        if not 0 <= k <= n:
            raise ValueError(f"k = {k} outside 0..{n}")

    if shots is None and noise is None and mitigation is None:
        def point(k):
            res = run_counting(plan, thetas, mode, n_coupled=k)
            obs = spin_observables(res.ensemble)
            return SweepPoint(k, obs.c2, obs.sx_mean, obs.sy_mean, res.success_probability, mode)
    else:
        seeds = np.random.SeedSequence(seed).generate_state(2 * len(ks)).reshape(len(ks), 2)
        # keep seeds apart from the +1 used for readout flips
        seeds = seeds.astype(np.int64) * 2

        def point(k):
            i = ks.index(k)
            rx, ry = (
                _measure(plan, thetas, k, a, mode, shots, int(s), noise, mitigation, mitigation_order)
                for a, s in zip(READOUT_ANGLES, seeds[i])
            )
            c2 = (rx.m2 + ry.m2) / n**2
            c2_err = np.hypot(_err(rx.m4 - rx.m2**2, rx.n_eff), _err(ry.m4 - ry.m2**2, ry.n_eff)) / n**2
            success = rx.weight if shots is None else (rx.weight + ry.weight) / 2
            return SweepPoint(k, c2, rx.mean, ry.mean, success, mode, float(c2_err),
                              _err(rx.m2 - rx.mean**2, rx.n_eff))

    settings = {
        "n": n, "n_ancillas": plan.n_ancillas, "phis": list(plan.phis), "layout": plan.layout,
        "mode": mode, "shots": shots, "seed": seed, "thetas": [float(t) for t in thetas],
        "noise": None if noise is None else noise.to_dict(),
        "mitigation": None if mitigation is None else mitigation.to_dict(),
        "mitigation_order": mitigation_order,
    }
    return SweepResult(n, pmap(point, ks), settings)


def max_deviation(result: SweepResult, reference: SweepResult) -> float:
    """Largest absolute C2 difference between two sweeps over matching k."""
    ref = {p.k: p.c2 for p in reference.points}
    return max(abs(p.c2 - ref[p.k]) for p in result.points)
