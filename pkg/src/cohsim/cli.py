"""Command-line front end.

Usage:
    cohsim observe --state projected --n 10
    cohsim fcs --state dephased --n 10 --points 64 --format json --out fcs.json
    cohsim wigner --state coherent --n 10 --out wigner.csv
    cohsim sweep --n 4 --na 1 --phi pi/2 --postselect --exact --out sweep.csv
    cohsim compile --n 4 --na 1
    cohsim calibrate --noise model.json --shots 100000 --out calibrated.json
    cohsim mitigate --input hist.json --model calibrated.json

Every data file starts with a metadata block holding the resolved settings
(a ``#`` line in CSV, a ``metadata`` key in JSON). No timestamps are written,
so reruns with the same settings are byte-identical.
"""

from __future__ import annotations

import argparse
import json
import math
import re
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .counting import LAYOUTS, CountingPlan, default_ancillas
from .mitigation import ConfusionModel, SimulatedDevice, calibrate, mitigate
from .nativegates import compile_counting, export_s_theta_program, to_quil
from .observables import (
    DEFAULT_FCS_POINTS,
    DEFAULT_WIGNER_SIGMA,
    DEFAULT_WIGNER_STEP,
    fcs_s_theta,
    selection_rule_report,
    spin_observables,
    theta_grid,
    wigner,
)
from .sim import OutcomeHistogram
from .states import STATE_KINDS, StateEnsemble, prepare_state
from .sweep import MITIGATION_ORDERS, staged_coupling_sweep

DEFAULT_CALIBRATION_SHOTS = 100_000


class ConfigError(ValueError):
    """Invalid setting; ``field`` names the offending flag or config key."""

    def __init__(self, field: str, message: str):
        super().__init__(f"{field}: {message}")
        self.field = field


_ANGLE = re.compile(r"^([+-]?)(\d*\.?\d*(?:e[+-]?\d+)?)\*?(pi)?(?:/(\d+\.?\d*))?$")


def parse_angle(text, field: str = "angle") -> float:
    """Radians from ``"pi/2"``, ``"-3*pi/4"``, ``"2pi"``, ``"0.25"`` or a number."""
    if isinstance(text, (int, float)):
        value = float(text)
    else:
        s = str(text).strip().lower().replace(" ", "").replace("π", "pi")
        m = _ANGLE.match(s)
        if not s or m is None or (not m.group(2) and not m.group(3)):
            raise ConfigError(field, f"cannot parse angle {text!r}")
        sign, coef, pi, den = m.groups()
        value = float(coef) if coef else 1.0
        if pi:
            value *= math.pi
        if den:
            value /= float(den)
        if sign == "-":
            value = -value
    if not math.isfinite(value):
        raise ConfigError(field, f"angle {text!r} is not finite")
    return value


def parse_angles(text, field: str) -> list[float]:
    if isinstance(text, (list, tuple)):
        return [parse_angle(t, field) for t in text]
    return [parse_angle(t, field) for t in str(text).split(",") if t.strip()]


# -- settings resolution -----------------------------------------------------------

DEFAULTS = {
    "state": "coherent",
    "n": None,
    "na": None,
    "phi": None,
    "layout": "all-to-all",
    "theta": None,
    "thetas": None,
    "mode": "postselect",
    "shots": None,
    "seed": 0,
    "exact": False,
    "noise": None,
    "mitigate": None,
    "mitigation_order": "before-postselect",
    "calibration_shots": DEFAULT_CALIBRATION_SHOTS,
    "points": DEFAULT_FCS_POINTS,
    "sigma": DEFAULT_WIGNER_SIGMA,
    "step": DEFAULT_WIGNER_STEP,
    "format": None,
    "out": None,
    "input": None,
    "model": None,
}


def resolve_settings(args: argparse.Namespace) -> dict:
    """Defaults, then the config file, then explicit flags."""
    settings = dict(DEFAULTS)
    if getattr(args, "config", None):
        try:
            cfg = json.loads(Path(args.config).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError("--config", str(exc)) from None
        if not isinstance(cfg, dict):
            raise ConfigError("--config", "top level must be an object")
        for key, value in cfg.items():
            k = key.replace("-", "_")
            if k not in DEFAULTS:
                raise ConfigError(f"config key {key!r}", "unknown setting")
            settings[k] = value
    for key in DEFAULTS:
        value = getattr(args, key, None)
        if value is not None:
            settings[key] = value
    return settings


def _positive_int(settings, key, required=True):
    v = settings.get(key)
    if v is None:
        if required:
            raise ConfigError(f"--{key}", "is required")
        return None
    if isinstance(v, bool) or not isinstance(v, (int, float)) or int(v) != v or int(v) < 1:
        raise ConfigError(f"--{key.replace('_', '-')}", f"must be a positive integer, got {v!r}")
    return int(v)


def _thetas(settings, n) -> np.ndarray:
    if settings["thetas"] is not None and settings["theta"] is not None:
        raise ConfigError("--thetas", "give either --theta or --thetas, not both")
    if settings["thetas"] is not None:
        th = parse_angles(settings["thetas"], "--thetas")
        if len(th) != n:
            raise ConfigError("--thetas", f"expected {n} angles, got {len(th)}")
        return np.array(th)
    theta = 0.0 if settings["theta"] is None else parse_angle(settings["theta"], "--theta")
    return np.full(n, theta)


def _state(settings) -> tuple[StateEnsemble, dict]:
    if settings["input"]:
        try:
            ens = StateEnsemble.from_dict(json.loads(Path(settings["input"]).read_text())["data"])
        except (OSError, KeyError, ValueError) as exc:
            raise ConfigError("--input", str(exc)) from None
        return ens, {"input": str(settings["input"]), "n": ens.n_qubits}
    kind = settings["state"]
    if kind not in STATE_KINDS:
        raise ConfigError("--state", f"must be one of {', '.join(STATE_KINDS)}, got {kind!r}")
    n = _positive_int(settings, "n")
    thetas = _thetas(settings, n)
    if kind == "projected" and n % 2:
        raise ConfigError("--n", "the projected state needs an even number of qubits")
    ens = prepare_state(kind, n, thetas, seed=settings["seed"])
    return ens, {"state": kind, "n": n, "thetas": [float(t) for t in thetas], "seed": settings["seed"]}


def _plan(settings) -> CountingPlan:
    n = _positive_int(settings, "n")
    if n < 2:
        raise ConfigError("--n", "counting needs at least two system qubits")
    na = _positive_int(settings, "na", required=False)
    na = default_ancillas(n) if na is None else na
    layout = settings["layout"]
    if layout not in LAYOUTS:
        raise ConfigError("--layout", f"must be one of {', '.join(LAYOUTS)}, got {layout!r}")
    phis = None
    if settings["phi"] is not None:
        phis = parse_angles(settings["phi"], "--phi")
        if len(phis) == 1 and na > 1:
            phis = [phis[0] / 2**i for i in range(na)]
        if len(phis) != na:
            raise ConfigError("--phi", f"expected 1 or {na} angles, got {len(phis)}")
    try:
        return CountingPlan(n, na, None if phis is None else tuple(phis), layout)
    except ValueError as exc:
        raise ConfigError("--phi" if "phase" in str(exc) else "--na", str(exc)) from None


def _load_model(path, field) -> ConfusionModel:
    try:
        return ConfusionModel.from_json(Path(path).read_text())
    except (OSError, ValueError, KeyError, TypeError) as exc:
        raise ConfigError(field, f"cannot read confusion model {path!r}: {exc}") from None


# -- output ------------------------------------------------------------------------


def _metadata(command: str, settings: dict, kind: str) -> dict:
    return {"tool": "cohsim", "version": __version__, "command": command, "kind": kind, "settings": settings}


def _emit(text: str, out, summary: str):
    if out:
        Path(out).write_text(text)
        print(summary)
    else:
        sys.stdout.write(text)
        print(summary, file=sys.stderr)


def _csv_with_header(meta: dict, body: str) -> str:
    return "# " + json.dumps(meta, sort_keys=True) + "\n" + body


def _json_doc(meta: dict, data) -> str:
    return json.dumps({"metadata": meta, "data": data}, indent=2, sort_keys=True) + "\n"


def _fmt(settings, default: str, allowed=("json", "csv")) -> str:
    fmt = settings["format"] or default
    if fmt not in allowed:
        raise ConfigError("--format", f"must be one of {', '.join(allowed)} for this command, got {fmt!r}")
    return fmt


# -- commands ----------------------------------------------------------------------


def cmd_prepare(settings) -> int:
    ens, info = _state(settings)
    _fmt(settings, "json", ("json",))
    meta = _metadata("prepare", info, "state")
    _emit(_json_doc(meta, ens.to_dict()), settings["out"],
          f"prepared {info.get('state', 'input')} state: {ens.n_qubits} qubits, {len(ens)} members")
    return 0


def cmd_observe(settings) -> int:
    ens, info = _state(settings)
    _fmt(settings, "json", ("json",))
    obs = spin_observables(ens)
    meta = _metadata("observe", info, "observables")
    _emit(_json_doc(meta, obs.to_dict()), settings["out"],
          f"c2 = {obs.c2:.6g}  <Sx> = {obs.sx_mean:.6g}  <Sy> = {obs.sy_mean:.6g}")
    return 0


def cmd_fcs(settings) -> int:
    ens, info = _state(settings)
    points = _positive_int(settings, "points")
    shots = None if settings["exact"] else _positive_int(settings, "shots", required=False)
    fcs = fcs_s_theta(ens, theta_grid(points), shots=shots, seed=settings["seed"])
    info.update(points=points, shots=shots)
    fmt = _fmt(settings, "csv")
    meta = _metadata("fcs", info, "fcs")
    if fmt == "csv":
        text = _csv_with_header(meta, fcs.to_csv())
    else:
        text = _json_doc(meta, json.loads(fcs.to_polar_json()))
    summary = f"fcs: {points} angles, {fcs.values.size} outcomes"
    if ens.n_qubits % 2 == 0:
        rep = selection_rule_report(fcs)
        summary += f", even mass {rep.even_total:.3g}, odd mass {rep.odd_total:.3g}"
    _emit(text, settings["out"], summary)
    return 0


def cmd_wigner(settings) -> int:
    ens, info = _state(settings)
    sigma, step = float(settings["sigma"]), float(settings["step"])
    if not sigma > 0:
        raise ConfigError("--sigma", "must be positive")
    if not step > 0:
        raise ConfigError("--step", "must be positive")
    grid = wigner(ens, sigma=sigma, step=step)
    _fmt(settings, "csv", ("csv",))
    info.update(sigma=sigma, step=step)
    meta = _metadata("wigner", info, "wigner")
    sx, sy = grid.argmax()
    _emit(_csv_with_header(meta, grid.to_csv()), settings["out"],
          f"wigner: {grid.values.shape[0]}x{grid.values.shape[1]} grid, max at ({sx:.3g}, {sy:.3g})")
    return 0


def cmd_sweep(settings) -> int:
    plan = _plan(settings)
    n = plan.n_system
    thetas = _thetas(settings, n)
    mode = settings["mode"]
    if mode not in ("postselect", "keep-all"):
        raise ConfigError("--mode", f"must be postselect or keep-all, got {mode!r}")
    shots = None if settings["exact"] else _positive_int(settings, "shots", required=False)
    if settings["exact"] and settings["shots"] is not None:
        raise ConfigError("--shots", "cannot be combined with --exact")
    order = settings["mitigation_order"]
    if order not in MITIGATION_ORDERS:
        raise ConfigError("--mitigation-order", f"must be one of {', '.join(MITIGATION_ORDERS)}")
    noise = _load_model(settings["noise"], "--noise") if settings["noise"] else None
    for name, model in (("--noise", noise),):
        if model is not None and model.n_qubits != plan.n_total:
            raise ConfigError(name, f"model covers {model.n_qubits} qubits, the sweep reads {plan.n_total}")
    mitigation = None
    if settings["mitigate"]:
        if settings["mitigate"] == "calibrate":
            if noise is None:
                raise ConfigError("--mitigate", "calibration needs a --noise model to simulate")
            cal_shots = _positive_int(settings, "calibration_shots")
            mitigation = calibrate(SimulatedDevice(noise), cal_shots, seed=settings["seed"])
        else:
            mitigation = _load_model(settings["mitigate"], "--mitigate")
        if mitigation.n_qubits != plan.n_total:
            raise ConfigError("--mitigate", f"model covers {mitigation.n_qubits} qubits, the sweep reads {plan.n_total}")
    result = staged_coupling_sweep(
        n, plan, mode, shots=shots, seed=settings["seed"], thetas=thetas,
        noise=noise, mitigation=mitigation, mitigation_order=order,
    )
    fmt = _fmt(settings, "csv")
    meta = _metadata("sweep", result.settings, "sweep")
    if fmt == "csv":
        text = _csv_with_header(meta, result.to_csv())
    else:
        text = _json_doc(meta, result.to_records())
    curve = ", ".join(f"{c:.3f}" for c in result.c2)
    _emit(text, settings["out"], f"C2 = [{curve}]")
    return 0


def cmd_compile(settings) -> int:
    settings = dict(settings, layout="linear-chain")
    if settings["phi"] is None and settings["na"] == 1:
        # a lone ancilla filters S_z = +-2 at pi/2, as in the 4+1 qubit hardware run
        settings["phi"] = "pi/2"
    plan = _plan(settings)
    thetas = None if settings["theta"] is None and settings["thetas"] is None else _thetas(settings, plan.n_system)
    native = compile_counting(plan, thetas)
    fmt = _fmt(settings, "quil", ("quil", "json"))
    if fmt == "quil":
        text = export_s_theta_program(native) if thetas is None else to_quil(native.with_readout())
    else:
        meta = _metadata("compile", {"n": plan.n_system, "n_ancillas": plan.n_ancillas,
                                     "phis": list(plan.phis)}, "circuit")
        text = _json_doc(meta, {"circuit": native.circuit.to_dict(), "residual": native.residual.to_dict(),
                                "system_wires": native.system_wires, "ancilla_wires": native.ancilla_wires})
    _emit(text, settings["out"], f"two-qubit gates: {native.two_qubit_count} (budget {2 * (plan.n_system * plan.n_ancillas - 1)})")
    return 0


def cmd_calibrate(settings) -> int:
    if not settings["noise"]:
        raise ConfigError("--noise", "is required (the simulated device's true confusion model)")
    true_model = _load_model(settings["noise"], "--noise")
    shots = settings["shots"] if settings["shots"] is not None else settings["calibration_shots"]
    shots = _positive_int({"shots": shots}, "shots")
    model = calibrate(SimulatedDevice(true_model), shots, seed=settings["seed"])
    _fmt(settings, "json", ("json",))
    text = json.dumps(model.to_dict(), indent=2, sort_keys=True) + "\n"
    worst = max(max(abs(a - b) for a, b in zip(model.p00, true_model.p00)),
                max(abs(a - b) for a, b in zip(model.p11, true_model.p11)))
    _emit(text, settings["out"], f"calibrated {model.n_qubits} qubits from {shots} shots per state, max error {worst:.3g}")
    return 0


def cmd_mitigate(settings) -> int:
    if not settings["input"]:
        raise ConfigError("--input", "is required (histogram JSON)")
    if not settings["model"]:
        raise ConfigError("--model", "is required (confusion model JSON)")
    try:
        doc = json.loads(Path(settings["input"]).read_text())
        hist = OutcomeHistogram.from_dict(doc.get("data", doc))
    except (OSError, ValueError, KeyError) as exc:
        raise ConfigError("--input", str(exc)) from None
    model = _load_model(settings["model"], "--model")
    if model.n_qubits != hist.n_bits:
        raise ConfigError("--model", f"covers {model.n_qubits} qubits, histogram has {hist.n_bits} bits")
    out = mitigate(hist, model)
    _fmt(settings, "json", ("json",))
    meta = _metadata("mitigate", {"input": str(settings["input"]), "model": str(settings["model"])}, "histogram")
    _emit(_json_doc(meta, out.to_dict()), settings["out"],
          f"mitigated {hist.n_bits}-bit histogram; negative entries: {int(np.sum(out.probs < 0))}")
    return 0


COMMANDS = {
    "prepare": cmd_prepare,
    "observe": cmd_observe,
    "fcs": cmd_fcs,
    "wigner": cmd_wigner,
    "sweep": cmd_sweep,
    "compile": cmd_compile,
    "calibrate": cmd_calibrate,
    "mitigate": cmd_mitigate,
}


def _add_state_args(p):
    p.add_argument("--state", choices=STATE_KINDS, default=None)
    p.add_argument("--n", type=int, default=None, help="number of system qubits")
    p.add_argument("--theta", default=None, help="uniform phase, e.g. pi/4")
    p.add_argument("--thetas", default=None, help="comma-separated per-qubit phases")
    p.add_argument("--input", default=None, help="state JSON written by 'cohsim prepare'")


def _add_plan_args(p):
    p.add_argument("--n", type=int, default=None, help="number of system qubits")
    p.add_argument("--na", type=int, default=None, help="ancillas (default floor(log2 N))")
    p.add_argument("--phi", default=None, help="first ancilla angle or comma list, e.g. pi/2")
    p.add_argument("--theta", default=None)
    p.add_argument("--thetas", default=None)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cohsim", description="Phase coherence of simulated qubit condensate states.")
    parser.add_argument("--version", action="version", version=f"cohsim {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, formats):
        p.add_argument("--config", default=None, help="JSON file of settings; flags override it")
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--out", default=None, help="output path (default stdout)")
        p.add_argument("--format", choices=formats, default=None)

    p = sub.add_parser("prepare", help="write a benchmark state as JSON")
    _add_state_args(p)
    common(p, ["json"])

    p = sub.add_parser("observe", help="spin moments and C2")
    _add_state_args(p)
    common(p, ["json"])

    p = sub.add_parser("fcs", help="full counting statistics of S_theta")
    _add_state_args(p)
    p.add_argument("--points", type=int, default=None)
    p.add_argument("--shots", type=int, default=None)
    p.add_argument("--exact", action="store_true", default=None)
    common(p, ["csv", "json"])

    p = sub.add_parser("wigner", help="regularized spin Wigner function on a grid")
    _add_state_args(p)
    p.add_argument("--sigma", type=float, default=None)
    p.add_argument("--step", type=float, default=None)
    common(p, ["csv"])

    p = sub.add_parser("sweep", help="coherence versus number of coupled qubits")
    _add_plan_args(p)
    p.add_argument("--layout", choices=LAYOUTS, default=None)
    g = p.add_mutually_exclusive_group()
    g.add_argument("--postselect", dest="mode", action="store_const", const="postselect", default=None)
    g.add_argument("--keep-all", dest="mode", action="store_const", const="keep-all")
    p.add_argument("--shots", type=int, default=None)
    p.add_argument("--exact", action="store_true", default=None)
    p.add_argument("--noise", default=None, help="confusion model JSON applied to the readout")
    p.add_argument("--mitigate", nargs="?", const="calibrate", default=None,
                   help="confusion model JSON to invert; without a path, calibrate against --noise")
    p.add_argument("--mitigation-order", dest="mitigation_order", choices=MITIGATION_ORDERS, default=None)
    p.add_argument("--calibration-shots", dest="calibration_shots", type=int, default=None)
    common(p, ["csv", "json"])

    p = sub.add_parser("compile", help="native-gate counting circuit")
    _add_plan_args(p)
    common(p, ["quil", "json"])

    p = sub.add_parser("calibrate", help="estimate a confusion model on a simulated device")
    p.add_argument("--noise", default=None, help="true confusion model JSON of the simulated device")
    p.add_argument("--shots", type=int, default=None)
    common(p, ["json"])

    p = sub.add_parser("mitigate", help="apply an inverse confusion model to a histogram")
    p.add_argument("--input", default=None)
    p.add_argument("--model", default=None)
    common(p, ["json"])
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        settings = resolve_settings(args)
        if settings["seed"] is None or isinstance(settings["seed"], bool) or int(settings["seed"]) != settings["seed"]:
            raise ConfigError("--seed", f"must be an integer, got {settings['seed']!r}")
        return COMMANDS[args.command](settings)
    except ConfigError as exc:
        print(f"cohsim {args.command}: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
