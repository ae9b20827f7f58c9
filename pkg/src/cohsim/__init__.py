"""Exact state-vector simulator for phase coherence of qubit Bose-Einstein condensate states.

Modules:
    sim          dense state vectors, gates, circuits, sampling
    states       coherent, dephased, projected and noisy benchmark states
    counting     ancilla counting circuits and post-selection
    nativegates  lowering to RX, RZ, CPHASE and XY, with equivalence checks
    observables  spin moments, C2, full counting statistics, Wigner grids
    sweep        staged coupling sweeps, ideal or with readout noise
    mitigation   confusion-matrix readout model, calibration and inversion
"""

__version__ = "0.1.0"

from .counting import CountingPlan, build_counting_circuit, run_counting
from .mitigation import ConfusionModel, apply_readout_noise, calibrate, mitigate
from .nativegates import compile_counting, fuse_cphase_swap, lower_crx, unitary_equiv
from .observables import c2_from_fcs, fcs_s_theta, selection_rule_report, spin_observables, wigner
from .sim import Circuit, Gate, OutcomeHistogram, QuantumState
from .states import StateEnsemble, prepare_state, project_sz
from .sweep import staged_coupling_sweep
