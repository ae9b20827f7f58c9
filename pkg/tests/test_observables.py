import json
from functools import reduce

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cohsim.observables import (
    FcsDistribution,
    WignerGrid,
    c2_closed_form,
    c2_from_fcs,
    fcs_s_theta,
    selection_rule_report,
    spin_observables,
    theta_grid,
    wigner,
    wigner_at,
    wigner_kernel,
)
from cohsim.sim import QuantumState
from cohsim.states import dephase_sz, prepare_coherent, prepare_noisy, prepare_projected, prepare_state

KINDS = ("coherent", "dephased", "projected", "noisy")
phase = st.floats(0, 2 * np.pi, allow_nan=False)

X = np.array([[0, 1], [1, 0]], dtype=complex)
Y = np.array([[0, -1j], [1j, 0]])
Z = np.diag([1.0 + 0j, -1.0])


def collective(pauli, n):
    """Dense sum_q pauli_q / 2 with qubit 0 as the least significant bit."""
    total = np.zeros((1 << n, 1 << n), dtype=complex)
    for q in range(n):
        factors = [pauli if k == q else np.eye(2) for k in reversed(range(n))]
        total += reduce(np.kron, factors)
    return total / 2


def dense_c2(ensemble, n):
    sx, sy = collective(X, n), collective(Y, n)
    sp, sm = sx + 1j * sy, sx - 1j * sy
    op = sp @ sm + sm @ sp
    return sum(w * np.vdot(s.amplitudes, op @ s.amplitudes).real for w, s in ensemble) / (2 * n * n)


class TestSpinObservables:
    def test_coherent_ten(self):
        obs = spin_observables(prepare_coherent(10))
        assert obs.c2 == pytest.approx(0.275, abs=1e-12)
        assert obs.sx_mean == pytest.approx(5, abs=1e-12)

    @given(t1=phase, t2=phase)
    @settings(max_examples=30, deadline=None)
    def test_two_qubit_projected(self, t1, t2):
        obs = spin_observables(prepare_projected(2, [t1, t2]))
        assert obs.sx2 == pytest.approx((1 + np.cos(t1 - t2)) / 2, abs=1e-12)
        assert obs.sy2 == pytest.approx((1 + np.cos(t1 - t2)) / 2, abs=1e-12)

    @given(t1=phase, t2=phase)
    @settings(max_examples=30, deadline=None)
    def test_two_qubit_dephased(self, t1, t2):
        obs = spin_observables(dephase_sz(prepare_coherent(2, [t1, t2])))
        assert obs.sx2 == pytest.approx(0.5 + np.cos(t1 - t2) / 4, abs=1e-12)

    @pytest.mark.parametrize("kind", KINDS)
    @pytest.mark.parametrize("n", [2, 4, 6])
    def test_against_dense_oracle(self, kind, n):
        ens = prepare_state(kind, n)
        obs = spin_observables(ens)
        assert obs.c2 == pytest.approx(dense_c2(ens, n), abs=1e-12)
        sz = collective(Z, n)
        sz2 = sum(w * np.vdot(s.amplitudes, sz @ sz @ s.amplitudes).real for w, s in ens)
        assert obs.sz2 == pytest.approx(sz2, abs=1e-12)

    @given(n=st.integers(1, 7), seed=st.integers(0, 10_000))
    @settings(max_examples=40, deadline=None)
    def test_variance_non_negative(self, n, seed):
        rng = np.random.default_rng(seed)
        obs = spin_observables(QuantumState(rng.normal(size=1 << n) + 1j * rng.normal(size=1 << n), normalize=True))
        assert obs.sx2 >= obs.sx_mean**2 - 1e-12
        assert obs.sy2 >= obs.sy_mean**2 - 1e-12
        assert obs.sz2 >= obs.sz_mean**2 - 1e-12

    @pytest.mark.parametrize("kind", ["coherent", "dephased", "projected"])
    @pytest.mark.parametrize("n", [2, 4, 6, 8, 10])
    def test_symmetric_identities(self, kind, n):
        obs = spin_observables(prepare_state(kind, n))
        assert obs.s2 == pytest.approx(n * (n + 2) / 4, abs=1e-10)
        assert obs.c2 * n * n == pytest.approx(n * (n + 2) / 4 - obs.sz2, abs=1e-10)

    @pytest.mark.parametrize("n", [2, 4, 6, 8, 10, 12])
    def test_ordering(self, n):
        c = {k: spin_observables(prepare_state(k, n)).c2 for k in ("coherent", "dephased", "projected")}
        assert c["projected"] > c["dephased"]
        assert c["dephased"] == pytest.approx(c["coherent"], abs=1e-12)

    @pytest.mark.parametrize("kind", KINDS)
    @pytest.mark.parametrize("n", [2, 4, 8])
    def test_closed_forms(self, kind, n):
        assert spin_observables(prepare_state(kind, n)).c2 == pytest.approx(c2_closed_form(kind, n), abs=1e-12)

    def test_noisy_brute_force(self):
        # average over all 16 basis states of <b|C2|b>
        ens = prepare_noisy(4)
        assert spin_observables(ens).c2 == pytest.approx(dense_c2(ens, 4), abs=1e-12)

    def test_to_dict(self):
        d = spin_observables(prepare_coherent(2)).to_dict()
        assert set(d) >= {"sx_mean", "c2", "sz2"}
        json.dumps(d)


class TestFcs:
    def test_coherent_point_mass(self):
        fcs = fcs_s_theta(prepare_coherent(10), [0.0])
        assert fcs.probs[0, -1] == pytest.approx(1, abs=1e-12)
        assert fcs.values[-1] == 5

    def test_two_qubit_eigenstate(self):
        fcs = fcs_s_theta(prepare_coherent(2), [0.0])
        assert list(fcs.values) == [-1, 0, 1]
        assert fcs.probs[0] == pytest.approx([0, 0, 1], abs=1e-12)

    @pytest.mark.parametrize("kind", KINDS)
    @pytest.mark.parametrize("n", [2, 4, 10])
    def test_c2_consistency(self, kind, n):
        ens = prepare_state(kind, n)
        assert c2_from_fcs(fcs_s_theta(ens)) == pytest.approx(spin_observables(ens).c2, abs=1e-8)

    @pytest.mark.parametrize("n,expected", [(10, 0.275)])
    def test_c2_coherent_value(self, n, expected):
        assert c2_from_fcs(fcs_s_theta(prepare_coherent(n), theta_grid(64))) == pytest.approx(expected, abs=1e-6)

    def test_c2_projected_value(self):
        assert c2_from_fcs(fcs_s_theta(prepare_projected(10))) == pytest.approx(0.3, abs=1e-10)

    @pytest.mark.parametrize("kind", KINDS)
    def test_columns_normalized(self, kind):
        fcs = fcs_s_theta(prepare_state(kind, 6), theta_grid(16))
        assert np.abs(fcs.probs.sum(axis=1) - 1).max() < 1e-12

    @pytest.mark.parametrize("kind", ["dephased", "projected"])
    def test_theta_independent(self, kind):
        fcs = fcs_s_theta(prepare_state(kind, 10), theta_grid(32))
        assert np.abs(fcs.probs - fcs.probs[0]).max() < 1e-10

    def test_odd_n_half_integer_grid(self):
        fcs = fcs_s_theta(prepare_coherent(3), [0.0])
        assert list(fcs.values) == [-1.5, -0.5, 0.5, 1.5]

    @pytest.mark.parametrize("kind", ["coherent", "projected"])
    def test_shots_converge(self, kind):
        shots = 100_000
        ens = prepare_state(kind, 6)
        thetas = [0.0, 0.7, 2.0]
        exact = fcs_s_theta(ens, thetas)
        sampled = fcs_s_theta(ens, thetas, shots=shots, seed=4)
        tv = 0.5 * np.abs(exact.probs - sampled.probs).sum(axis=1)
        assert tv.max() < 4 * np.sqrt(1 / shots)

    def test_shots_on_mixture_converge(self):
        shots = 100_000
        ens = dephase_sz(prepare_coherent(4))
        exact = fcs_s_theta(ens, [0.3])
        sampled = fcs_s_theta(ens, [0.3], shots=shots, seed=9)
        assert 0.5 * np.abs(exact.probs - sampled.probs).sum() < 4 * np.sqrt(1 / shots)

    def test_shots_reproducible(self):
        a = fcs_s_theta(prepare_projected(4), [0.0, 1.0], shots=500, seed=3)
        b = fcs_s_theta(prepare_projected(4), [0.0, 1.0], shots=500, seed=3)
        assert np.array_equal(a.probs, b.probs)
        assert a.shots == 500

    def test_thread_count_does_not_change_result(self, monkeypatch):
        ens = prepare_projected(4)
        monkeypatch.setenv("COHSIM_THREADS", "1")
        a = fcs_s_theta(ens, theta_grid(8), shots=200, seed=1)
        monkeypatch.setenv("COHSIM_THREADS", "4")
        b = fcs_s_theta(ens, theta_grid(8), shots=200, seed=1)
        assert np.array_equal(a.probs, b.probs)

    def test_non_uniform_grid(self):
        fcs = fcs_s_theta(prepare_coherent(2), [0.0, 0.1, 1.0, 2.0])
        with pytest.raises(ValueError, match="uniform"):
            c2_from_fcs(fcs)
        with pytest.raises(ValueError):
            c2_from_fcs(fcs_s_theta(prepare_coherent(2), [0.0, np.pi]))

    def test_shifted_uniform_grid_accepted(self):
        fcs = fcs_s_theta(prepare_coherent(4), 0.3 + theta_grid(8))
        assert c2_from_fcs(fcs) == pytest.approx(5 / 16, abs=1e-12)

    def test_csv_round_trip(self):
        fcs = fcs_s_theta(prepare_projected(4), theta_grid(4))
        back = FcsDistribution.from_csv("# header\n" + fcs.to_csv())
        assert back.n == 4
        assert np.allclose(back.thetas, fcs.thetas)
        assert np.allclose(back.probs, fcs.probs)

    def test_polar_json_shape(self):
        fcs = fcs_s_theta(prepare_coherent(2), theta_grid(4))
        d = json.loads(fcs.to_polar_json())
        assert len(d["theta"]) == 4 and len(d["radius"]) == 3
        assert np.array(d["prob"]).shape == (4, 3)


class TestSelectionRule:
    def test_projected_ten(self):
        rep = selection_rule_report(fcs_s_theta(prepare_projected(10)))
        assert rep.max_even < 1e-12
        assert rep.odd_total == pytest.approx(1, abs=1e-12)

    def test_dephased_ten(self):
        rep = selection_rule_report(fcs_s_theta(dephase_sz(prepare_coherent(10))))
        # brute force over the dephased mixture: sum over sectors of the sector weight times
        # its even-outcome mass; equal at every angle
        assert rep.max_even > 0.1
        assert np.allclose(rep.even_mass, rep.even_mass[0], atol=1e-10)

    @pytest.mark.parametrize("n", [2, 6, 10, 14])
    def test_half_n_odd_kills_even(self, n):
        assert selection_rule_report(fcs_s_theta(prepare_projected(n), theta_grid(8))).max_even < 1e-12

    @pytest.mark.parametrize("n", [4, 8, 12])
    def test_half_n_even_kills_odd(self, n):
        rep = selection_rule_report(fcs_s_theta(prepare_projected(n), theta_grid(8)))
        assert np.max(rep.odd_mass) < 1e-12

    def test_odd_n_rejected(self):
        with pytest.raises(ValueError):
            selection_rule_report(fcs_s_theta(prepare_coherent(3), [0.0]))


class TestWigner:
    def test_coherent_peak(self):
        w = wigner(prepare_coherent(10))
        assert w.argmax() == pytest.approx((5.0, 0.0))

    def test_non_negative(self):
        assert (wigner(dephase_sz(prepare_coherent(6))).values >= 0).all()

    @pytest.mark.parametrize("s", [-4, -2, 0, 2, 4])
    def test_projected_even_points_vanish(self, s):
        k, eig = wigner_kernel(prepare_projected(10))
        assert wigner_at(k, eig, [(s, 0.0)], 0.2)[0] < 1e-3
        assert wigner_at(k, eig, [(0.0, s)], 0.2)[0] < 1e-3

    @pytest.mark.parametrize("kind", ["dephased", "projected"])
    def test_quarter_turn_symmetry(self, kind):
        w = wigner(prepare_state(kind, 6))
        assert np.allclose(np.rot90(w.values), w.values, atol=1e-12)

    def test_sigma_convergence_at_nodes(self):
        k, eig = wigner_kernel(prepare_projected(6))
        node = [(3.0, 1.0)]
        vals = [wigner_at(k, eig, node, s)[0] for s in (0.2, 0.1, 0.05)]
        assert abs(vals[1] - vals[2]) < abs(vals[0] - vals[1]) + 1e-15

    def test_grid_matches_pointwise(self):
        st_ = prepare_coherent(4, [0.0, 0.3, 0.6, 0.9])
        w = wigner(st_, sx_grid=[1.0, 2.0], sy_grid=[0.0, 0.5, 1.0])
        k, eig = wigner_kernel(st_)
        pts = [(x, y) for x in (1.0, 2.0) for y in (0.0, 0.5, 1.0)]
        assert np.allclose(w.values.ravel(), wigner_at(k, eig, pts, 0.2))

    def test_default_grid(self):
        w = wigner(prepare_coherent(4))
        assert w.sx_grid[0] == pytest.approx(-3) and w.sx_grid[-1] == pytest.approx(3)
        assert w.sx_grid[1] - w.sx_grid[0] == pytest.approx(0.1)

    def test_bad_sigma(self):
        with pytest.raises(ValueError):
            wigner(prepare_coherent(2), sigma=0)

    def test_csv_round_trip(self):
        w = wigner(prepare_coherent(2), sx_grid=[0.0, 1.0], sy_grid=[-1.0, 0.0, 1.0])
        back = WignerGrid.from_csv(w.to_csv())
        assert np.allclose(back.values, w.values)
        assert np.allclose(back.sy_grid, [-1, 0, 1])
