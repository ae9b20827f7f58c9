"""Coherence diagnostics on pure states and ensembles.

Spin operators use ``sigma = Pauli / 2``, so ``S_x`` has eigenvalues in
``[-N/2, N/2]``. The two-point coherence is
``C2 = <S+ S- + S- S+> / (2 N^2)``.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import asdict, dataclass

import numpy as np

from ._parallel import pmap
from .nativegates import s_theta_basis_change, s_theta_matrix
from .sim import RX, Circuit, QuantumState, apply_matrix, gate_matrix, sample_shots
from .states import StateEnsemble, as_ensemble, hamming_weights

DEFAULT_FCS_POINTS = 64
DEFAULT_WIGNER_SIGMA = 0.2
DEFAULT_WIGNER_STEP = 0.1


# -- collective operators on raw amplitudes --------------------------------------


def _idx(n):
    return np.arange(1 << n)


def apply_sx(amps: np.ndarray) -> np.ndarray:
    n = amps.size.bit_length() - 1
    idx = _idx(n)
    return 0.5 * sum(amps[idx ^ (1 << q)] for q in range(n))


def apply_sy(amps: np.ndarray) -> np.ndarray:
    # sigma_y |0> = i|1>, |1> -> -i|0>: (Y psi)[j] = +i psi[j^q] if bit q of j is 1
    n = amps.size.bit_length() - 1
    idx = _idx(n)
    out = np.zeros_like(amps)
    for q in range(n):
        sign = np.where((idx >> q) & 1, 1j, -1j)
        out += sign * amps[idx ^ (1 << q)]
    return 0.5 * out


def apply_sz(amps: np.ndarray) -> np.ndarray:
    n = amps.size.bit_length() - 1
    return (n / 2 - hamming_weights(n)) * amps


def apply_s_plus(amps: np.ndarray) -> np.ndarray:
    """Raise S_z by one: each |1> on a qubit becomes |0>."""
    n = amps.size.bit_length() - 1
    idx = _idx(n)
    out = np.zeros_like(amps)
    for q in range(n):
        src = idx ^ (1 << q)
        out += np.where((idx >> q) & 1, 0, amps[src])
    return out


def apply_s_minus(amps: np.ndarray) -> np.ndarray:
    n = amps.size.bit_length() - 1
    idx = _idx(n)
    out = np.zeros_like(amps)
    for q in range(n):
        src = idx ^ (1 << q)
        out += np.where((idx >> q) & 1, amps[src], 0)
    return out


@dataclass(frozen=True)
class SpinObservables:
    n: int
    sx_mean: float
    sy_mean: float
    sz_mean: float
    sx2: float
    sy2: float
    sz2: float
    c2: float

    @property
    def s2(self) -> float:
        return self.sx2 + self.sy2 + self.sz2

    def to_dict(self) -> dict:
        return asdict(self)


def _pure_moments(amps: np.ndarray) -> np.ndarray:
    sx, sy, sz = apply_sx(amps), apply_sy(amps), apply_sz(amps)
    sp, sm = apply_s_plus(amps), apply_s_minus(amps)
    return np.array([
        np.vdot(amps, sx).real,
        np.vdot(amps, sy).real,
        np.vdot(amps, sz).real,
        np.vdot(sx, sx).real,
        np.vdot(sy, sy).real,
        np.vdot(sz, sz).real,
        # <S+S-> + <S-S+> = |S- psi|^2 + |S+ psi|^2
        np.vdot(sm, sm).real + np.vdot(sp, sp).real,
    ])


def spin_observables(state) -> SpinObservables:
    """Exact spin moments and C2 of a state or ensemble."""
    ens = as_ensemble(state)
    n = ens.n_qubits
    m = ens.average(lambda s: _pure_moments(s.amplitudes))
    return SpinObservables(n, *map(float, m[:6]), c2=float(m[6] / (2 * n * n)))


def c2_closed_form(kind: str, n: int) -> float:
    """Closed-form C2 at uniform zero phase for the four benchmark states."""
    if kind in ("coherent", "dephased"):
        return (n + 1) / (4 * n)
    if kind == "projected":
        return (n + 2) / (4 * n)
    if kind == "noisy":
        # <S_x^2> = <S_y^2> = N/4 for any computational basis mixture
        return 1 / (2 * n)
    raise ValueError(f"unknown state kind {kind!r}")


# -- full counting statistics ------------------------------------------------------


@dataclass
class FcsDistribution:
    """``probs[i, j] = P(S_theta = values[j])`` at ``thetas[i]``."""

    n: int
    thetas: np.ndarray
    values: np.ndarray
    probs: np.ndarray
    shots: int | None = None

    def moment(self, k: int) -> np.ndarray:
        return self.probs @ self.values**k

    def to_rows(self):
        for i, t in enumerate(self.thetas):
            for j, v in enumerate(self.values):
                yield float(t), float(v), float(self.probs[i, j])

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["theta", "value", "prob"])
        for t, v, p in self.to_rows():
            w.writerow([repr(t), repr(v), repr(p)])
        return buf.getvalue()

    def to_polar_json(self) -> str:
        return json.dumps({
            "n": self.n,
            "theta": [float(t) for t in self.thetas],
            "radius": [float(v) for v in self.values],
            "prob": [[float(p) for p in row] for row in self.probs],
            "shots": self.shots,
        })

    @classmethod
    def from_csv(cls, text: str, n: int | None = None) -> "FcsDistribution":
        rows = list(csv.DictReader(line for line in io.StringIO(text) if not line.startswith("#")))
        thetas = sorted({float(r["theta"]) for r in rows})
        values = sorted({float(r["value"]) for r in rows})
        probs = np.zeros((len(thetas), len(values)))
        ti = {t: i for i, t in enumerate(thetas)}
        vi = {v: j for j, v in enumerate(values)}
        for r in rows:
            probs[ti[float(r["theta"])], vi[float(r["value"])]] = float(r["prob"])
        if n is None:
            n = int(round(2 * max(values)))
        return cls(n, np.array(thetas), np.array(values), probs)


def theta_grid(points: int = DEFAULT_FCS_POINTS) -> np.ndarray:
    return 2 * np.pi * np.arange(points) / points


def _rotate_all(amps: np.ndarray, u: np.ndarray, qubits) -> np.ndarray:
    for q in qubits:
        amps = apply_matrix(amps, u, (q,))
    return amps


# amplitudes held at once while building the FCS Gram tensor
_BATCH_AMPLITUDES = 1 << 22
_RX_HALF = gate_matrix(RX(0, -np.pi / 2))


def _rotate_batch(batch: np.ndarray, u: np.ndarray, n: int) -> np.ndarray:
    """Apply ``u`` to every qubit of each row of ``batch`` (rows are states)."""
    out = np.array(batch, dtype=complex)
    for q in range(n):
        t = out.reshape(out.shape[0], -1, 2, 1 << q)
        a0, a1 = t[:, :, 0, :].copy(), t[:, :, 1, :]
        t[:, :, 0, :] = u[0, 0] * a0 + u[0, 1] * a1
        t[:, :, 1, :] = u[1, 0] * a0 + u[1, 1] * a1
    return out


def _fcs_gram(ens: StateEnsemble) -> np.ndarray:
    """``G[w, k, l] = sum_members p <phi_l| Pi_w |phi_k>`` with ``phi_k = RX(-pi/2)^n psi_k``.

    ``psi_k`` is the Hamming-weight-k part of a member. The S_theta basis
    change is ``RX(-pi/2) RZ(a)`` per qubit with ``a = -theta - pi/2``, and
    ``RZ(a)^n`` multiplies ``psi_k`` by ``e^{iak}`` up to a global phase, so
    ``P_theta(w) = sum_kl e^{ia(k-l)} G[w, k, l]`` for every angle at once.
    Only sectors a member actually occupies are rotated.
    """
    n = ens.n_qubits
    w = hamming_weights(n)
    members = list(ens)
    per_batch = max(1, _BATCH_AMPLITUDES // ((n + 1) << n))
    gram = np.zeros((n + 1, n + 1, 1 << n), dtype=complex)
    for start in range(0, len(members), per_batch):
        chunk = members[start:start + per_batch]
        weights = np.array([p for p, _ in chunk])
        amps = np.stack([s.amplitudes for _, s in chunk])
        mass = np.stack([np.sum(np.abs(amps[:, w == k]) ** 2, axis=1) for k in range(n + 1)])  # (k, m)
        occupied = mass > 0
        ks, ms = np.nonzero(occupied)
        rotated = _rotate_batch(np.where(w[None, :] == ks[:, None], amps[ms], 0), _RX_HALF, n)
        row = {(k, m): i for i, (k, m) in enumerate(zip(ks, ms))}
        for k in range(n + 1):
            for l in range(n + 1):
                both = np.nonzero(occupied[k] & occupied[l])[0]
                if both.size == 0:
                    continue
                a = rotated[[row[k, m] for m in both]]
                b = rotated[[row[l, m] for m in both]]
                gram[k, l] += weights[both] @ (a * b.conj())
    out = np.zeros((n + 1, n + 1, n + 1), dtype=complex)
    np.add.at(out, w, np.moveaxis(gram, 2, 0))
    return out


def _exact_column(gram: np.ndarray, theta: float) -> np.ndarray:
    n = gram.shape[0] - 1
    ph = np.exp(1j * (-theta - np.pi / 2) * np.arange(n + 1))
    col = np.einsum("wkl,k,l->w", gram, ph, ph.conj()).real
    # value N/2 - w; order by ascending value
    return np.clip(col, 0.0, None)[::-1]


def _shot_column(ens: StateEnsemble, theta: float, shots: int, seed_seq: np.random.SeedSequence) -> np.ndarray:
    n = ens.n_qubits
    member_rng = np.random.default_rng(seed_seq.spawn(1)[0])
    alloc = member_rng.multinomial(shots, ens.weights / ens.weights.sum())
    circ = Circuit(n, s_theta_basis_change(range(n), theta)).measure_all()
    counts = np.zeros(n + 1)
    member_seeds = seed_seq.spawn(len(ens) + 1)[1:]
    w = hamming_weights(n)
    for (_, s), k, ss in zip(ens, alloc, member_seeds):
        if k == 0:
            continue
        seed = int(ss.generate_state(1)[0])
        hist = sample_shots(circ, int(k), seed, initial=s)
        counts += np.bincount(w, weights=hist.probs * k, minlength=n + 1)
    return counts[::-1] / shots


def fcs_s_theta(state, thetas=None, shots: int | None = None, seed: int = 0) -> FcsDistribution:
    """Distribution of ``S_theta`` on a theta grid, exactly or from shots.

    Both paths apply the same per-qubit basis change and bin outcomes by
    Hamming weight; the shot path samples through the circuit simulator.
    """
    ens = as_ensemble(state)
    n = ens.n_qubits
    thetas = theta_grid() if thetas is None else np.asarray(thetas, dtype=float)
    values = n / 2 - np.arange(n + 1)[::-1]
    if shots is None:
        gram = _fcs_gram(ens)
        cols = [_exact_column(gram, t) for t in thetas]
    else:
        seqs = np.random.SeedSequence(seed).spawn(len(thetas))
        cols = pmap(lambda args: _shot_column(ens, args[0], shots, args[1]), list(zip(thetas, seqs)))
    return FcsDistribution(n, thetas, values, np.array(cols), shots)


def c2_from_fcs(fcs: FcsDistribution) -> float:
    """``(1/pi) * integral_0^{2pi} <S_theta^2> dtheta / N^2`` on a uniform grid."""
    t = np.asarray(fcs.thetas)
    m = t.size
    if m < 3:
        raise ValueError("need at least 3 angles")
    expected = t[0] + 2 * np.pi * np.arange(m) / m
    if not np.allclose(t, expected, atol=1e-9):
        raise ValueError("theta grid must be uniform over [0, 2pi)")
    # <S_theta^2> is a degree-2 trig polynomial: the rectangle rule is exact
    return float(2 * np.mean(fcs.moment(2)) / fcs.n**2)


@dataclass
class SelectionRuleReport:
    thetas: np.ndarray
    even_mass: np.ndarray
    odd_mass: np.ndarray

    @property
    def even_total(self) -> float:
        return float(np.mean(self.even_mass))

    @property
    def odd_total(self) -> float:
        return float(np.mean(self.odd_mass))

    @property
    def max_even(self) -> float:
        return float(np.max(self.even_mass))


def selection_rule_report(fcs: FcsDistribution) -> SelectionRuleReport:
    """Probability on even vs odd S_theta outcomes, per angle and averaged."""
    if fcs.n % 2:
        raise ValueError("parity of outcomes needs an integer grid (even N)")
    even = np.isclose(np.mod(fcs.values, 2), 0)
    return SelectionRuleReport(fcs.thetas, fcs.probs[:, even].sum(axis=1), fcs.probs[:, ~even].sum(axis=1))


# -- Wigner function ---------------------------------------------------------------


@dataclass
class WignerGrid:
    sx_grid: np.ndarray
    sy_grid: np.ndarray
    values: np.ndarray  # values[i, j] at (sx_grid[i], sy_grid[j])
    sigma: float

    def argmax(self) -> tuple[float, float]:
        i, j = np.unravel_index(np.argmax(self.values), self.values.shape)
        return float(self.sx_grid[i]), float(self.sy_grid[j])

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["sx\\sy"] + [repr(float(y)) for y in self.sy_grid])
        for x, row in zip(self.sx_grid, self.values):
            w.writerow([repr(float(x))] + [repr(float(v)) for v in row])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str, sigma: float = float("nan")) -> "WignerGrid":
        rows = list(csv.reader(line for line in io.StringIO(text) if not line.startswith("#")))
        sy = np.array([float(v) for v in rows[0][1:]])
        sx = np.array([float(r[0]) for r in rows[1:]])
        vals = np.array([[float(v) for v in r[1:]] for r in rows[1:]])
        return cls(sx, sy, vals, sigma)


_H = np.array([[1, 1], [1, -1]], dtype=complex) / np.sqrt(2)
# columns are the sigma_y eigenvectors (|0> + i|1>)/sqrt2, (|0> - i|1>)/sqrt2
_YB = np.array([[1, 1], [1j, -1j]]) / np.sqrt(2)


def _sector_projections(amps: np.ndarray, basis: np.ndarray) -> np.ndarray:
    """Rows k: projection of ``amps`` on the eigenspace with ``k`` minus-signs
    of the single-qubit basis (eigenvalue N/2 - k)."""
    n = amps.size.bit_length() - 1
    coeffs = _rotate_all(amps, basis.conj().T, range(n))
    w = hamming_weights(n)
    out = np.empty((n + 1, amps.size), dtype=complex)
    for k in range(n + 1):
        out[k] = _rotate_all(np.where(w == k, coeffs, 0), basis, range(n))
    return out


def wigner_kernel(state) -> tuple[np.ndarray, np.ndarray]:
    """``K[u, v] = <Pi^x_u Pi^y_v>`` (ensemble averaged) and the eigenvalues u, v."""
    ens = as_ensemble(state)
    n = ens.n_qubits
    k = np.zeros((n + 1, n + 1), dtype=complex)
    for weight, s in ens:
        px = _sector_projections(s.amplitudes, _H)
        py = _sector_projections(s.amplitudes, _YB)
        k += weight * (px.conj() @ py.T)
    eig = n / 2 - np.arange(n + 1)
    return k, eig


def wigner(state, sigma: float = DEFAULT_WIGNER_SIGMA, sx_grid=None, sy_grid=None,
           step: float = DEFAULT_WIGNER_STEP) -> WignerGrid:
    """``|<delta(S_x - s_x) delta(S_y - s_y)>|`` with ``delta(x) = exp(-x^2/sigma^2)``."""
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    kernel, eig = wigner_kernel(state)
    n = as_ensemble(state).n_qubits
    if sx_grid is None:
        half = n / 2 + 1
        sx_grid = np.round(np.arange(-half, half + step / 2, step), 10)
    if sy_grid is None:
        sy_grid = sx_grid
    sx_grid, sy_grid = np.asarray(sx_grid, float), np.asarray(sy_grid, float)
    gx = np.exp(-((eig[None, :] - sx_grid[:, None]) ** 2) / sigma**2)
    gy = np.exp(-((eig[None, :] - sy_grid[:, None]) ** 2) / sigma**2)
    return WignerGrid(sx_grid, sy_grid, np.abs(gx @ kernel @ gy.T), sigma)


def wigner_at(kernel: np.ndarray, eig: np.ndarray, points, sigma: float) -> np.ndarray:
    """Wigner values at arbitrary ``(s_x, s_y)`` points."""
    pts = np.atleast_2d(np.asarray(points, float))
    gx = np.exp(-((eig[None, :] - pts[:, :1]) ** 2) / sigma**2)
    gy = np.exp(-((eig[None, :] - pts[:, 1:2]) ** 2) / sigma**2)
    return np.abs(np.einsum("pu,uv,pv->p", gx, kernel, gy))
