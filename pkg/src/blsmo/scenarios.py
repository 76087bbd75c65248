"""Scenario configuration, built-in examples and the end-to-end pipeline.

A scenario is one JSON document with ``plant``, ``synthesis``,
``simulation``, ``reconstruction`` and optional ``reference``/``output``
blocks.  Documents are schema-checked (unknown keys rejected) before any
numerical work.
"""
from __future__ import annotations

import copy
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from typing import Any, Optional

import jsonschema
import numpy as np

from .descriptor import DescriptorSystem, PlantModel, build_descriptor, plant_from_dict
from .errors import BLSMOError, ConfigInvalid, UnknownParameter
from .multipliers import multiplier_from_dict
from .observer import (
    METHODS,
    ErrorMetrics,
    Scenario,
    SimulationTrace,
    error_metrics,
    simulate,
)
from .reconstruction import KERNELS, ReconstructionReport, WindowFilter, make_window, reconstruct_wx
from .signals import KINDS as WAVEFORM_KINDS, VectorSignal
from .synthesis import (
    ObserverGains,
    SynthesisConfig,
    compute_lambda1,
    estimate_modulus,
    select_rho,
    synthesize,
    ultimate_bound,
    verify_gains,
)

_num = {"type": "number"}
_pos = {"type": "number", "exclusiveMinimum": 0}
_matrix = {"type": "array", "minItems": 1,
           "items": {"anyOf": [_num, {"type": "array", "minItems": 1, "items": _num}]}}
_waveform = {
    "type": "object", "additionalProperties": False, "required": ["kind"],
    "properties": {"kind": {"enum": list(WAVEFORM_KINDS)}, "amplitude": _num, "freq": _num,
                   "phase": _num, "offset": _num},
}
_nl_ref = {"type": "object", "additionalProperties": False, "required": ["name"],
           "properties": {"name": {"type": "string"}, "params": {"type": "object"}}}

SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "required": ["plant", "synthesis", "simulation"],
    "properties": {
        "name": {"type": "string"},
        "seed": {"type": "integer", "minimum": 0},
        "plant": {
            "type": "object", "additionalProperties": False,
            "required": ["A", "Bf", "G", "C", "D", "Cq", "f"],
            "properties": {
                **{k: _matrix for k in ("A", "Bf", "Bg", "G", "C", "D", "Cq")},
                "f": _nl_ref, "g": {"anyOf": [_nl_ref, {"type": "null"}]},
                "rho_x": {"type": "number", "minimum": 0},
                "w_x": {"type": "array", "items": _waveform},
                "w_y": {"type": "array", "items": _waveform},
                "name": {"type": "string"},
            },
        },
        "synthesis": {
            "type": "object", "additionalProperties": False,
            "required": ["alpha", "L2", "multiplier", "eta"],
            "properties": {
                "alpha": _pos, "L2": _matrix, "eta": _pos,
                "multiplier": {"type": "object", "required": ["kind"]},
                "rho": {"anyOf": [{"type": "number", "minimum": 0}, {"const": "auto"}]},
                "rho_safety": {"type": "number", "minimum": 1},
                "minimize_mu": {"type": "boolean"},
                "solver_tolerance": _pos,
                "p_max": {"anyOf": [_pos, {"type": "null"}]},
                "y1_max": {"anyOf": [_pos, {"type": "null"}]},
                "zeta": {"anyOf": [_pos, {"type": "null"}]},
                "lmi_margin": {"type": "number", "minimum": 0},
                "solver": {"type": "string"},
                "modulus_domain": _pos,
            },
        },
        "gains": {"type": "object"},
        "simulation": {
            "type": "object", "additionalProperties": False,
            "required": ["t_span", "step", "x0"],
            "properties": {
                "t_span": {"type": "array", "items": _num, "minItems": 2, "maxItems": 2},
                "step": _pos,
                "x0": {"anyOf": [{"type": "array", "items": _num},
                                 {"type": "object", "additionalProperties": False,
                                  "required": ["random_scale"],
                                  "properties": {"random_scale": _pos}}]},
                "z0": {"type": "array", "items": _num},
                "method": {"enum": list(METHODS)},
                "rtol": _pos, "atol": _pos, "rk4_guard": _pos,
                "metrics_window": {"type": "number", "exclusiveMinimum": 0, "maximum": 1},
            },
        },
        "reconstruction": {
            "type": "object", "additionalProperties": False, "required": ["betas"],
            "properties": {
                "kernel": {"type": "object", "additionalProperties": False, "required": ["kind"],
                           "properties": {"kind": {"type": "string"}, "params": {"type": "object"}}},
                "betas": {"type": "array", "minItems": 1, "items": _pos},
                "T": {"anyOf": [_num, {"type": "null"}]},
                "t_end": {"anyOf": [_num, {"type": "null"}]},
                "discontinuities": {"anyOf": [
                    {"const": "auto"}, {"type": "null"},
                    {"type": "array", "items": {"type": "array", "items": _num}}]},
            },
        },
        "reference": {
            "type": "object", "additionalProperties": False,
            "properties": {"mu": _num, "zeta": _num, "bound": _num, "alternate_bound": _num,
                           "mse": _num, "rho": _num},
        },
        "output": {
            "type": "object", "additionalProperties": False,
            "properties": {"directory": {"type": "string"},
                           "formats": {"type": "array", "items": {"enum": ["csv", "json"]}}},
        },
    },
}


def validate_config(cfg: dict) -> dict:
    """Schema check plus the cross-field rules a schema cannot express."""
    try:
        jsonschema.validate(cfg, SCHEMA)
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ConfigInvalid(f"config invalid at {where}: {exc.message}") from None
    t0, tf = cfg["simulation"]["t_span"]
    if not t0 < tf:
        raise ConfigInvalid(f"simulation.t_span must have t0 < tf, got {[t0, tf]}")
    rec = cfg.get("reconstruction")
    if rec and rec.get("kernel", {}).get("kind", "standard_bump") not in KERNELS:
        raise ConfigInvalid(f"unknown kernel {rec['kernel']['kind']!r}")
    return cfg


def load_config(source) -> dict:
    if isinstance(source, dict):
        cfg = copy.deepcopy(source)
    else:
        try:
            with open(source, encoding="utf-8") as fh:
                cfg = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigInvalid(f"cannot read config {source}: {exc}") from None
    return validate_config(cfg)


# -- built-in scenarios ------------------------------------------------------

_C3 = [[1, 0, 0, 0], [0, 0, 1, 0], [0, 0, 0, 1]]

EXAMPLES: dict[str, dict] = {
    "example1": {
        "name": "example1",
        "seed": 0,
        "plant": {
            "name": "flexible-joint robot arm",
            "A": [[0, 1, 0, 0], [-3.75, -0.0015, 3.75, 0], [0, 0, 0, 1], [3.75, 0, -3.75, -0.0013]],
            "Bf": [0, -1.1104, 0, 1], "Bg": [0, -1.1104, 0, 1], "G": [1, 0.5, 0, 1.3],
            "C": _C3, "D": [0, 1, -2], "Cq": [[0, 1, 0, 0]],
            "f": {"name": "cos_of_q"}, "g": {"name": "sin_of_y", "params": {"gain": 2.3, "index": 0}},
            "rho_x": 1.0,
            "w_x": [{"kind": "sawtooth", "freq": 2, "phase": 1}],
            "w_y": [{"kind": "square", "freq": 4}],
        },
        "synthesis": {
            "alpha": 0.5, "L2": [[-16.55, -90.07, 80.54]], "eta": 1e-4, "rho": 100,
            "multiplier": {"kind": "lipschitz", "L_f": 1.0},
            "minimize_mu": True, "p_max": 37.7, "y1_max": 100,
        },
        "simulation": {"t_span": [0, 80], "step": 1e-3, "x0": [2.09, -2.17, -0.31, -8.58],
                       "method": "radau", "rtol": 1e-8, "atol": 1e-10},
        "reconstruction": {"kernel": {"kind": "standard_bump"}, "betas": [0.24], "T": 20,
                           "t_end": 80, "discontinuities": "auto"},
        "reference": {"mu": 18.5268, "zeta": 0.09, "bound": 0.082, "alternate_bound": 0.073,
                      "mse": 1.59e-5, "rho": 100},
    },
    "example2": {
        "name": "example2",
        "seed": 0,
        "plant": {
            "name": "randomly generated linear plant with q|q| nonlinearity",
            "A": [[2.44, 5.32, 9.29, 8.63], [1.1, -4.11, 1.82, 2.53],
                  [-0.09, 0.9, -2.91, 0.06], [-4.53, -3.45, -8.59, -12.14]],
            "Bf": [0, -1, 0, 1], "G": [[0.04, 1.77], [1.37, 0.3], [-6.14, -0.56], [-2.71, 0.05]],
            "C": _C3, "D": [1, 0, -1], "Cq": [[0, 2, 0, 0]],
            # f(x) = x2 |x2| with q = 2 x2
            "f": {"name": "q_abs_q", "params": {"scale": 0.25}}, "g": None,
            "rho_x": math.sqrt(34),
            "w_x": [{"kind": "cos", "amplitude": 3}, {"kind": "sawtooth", "amplitude": 5, "freq": 4}],
            "w_y": [{"kind": "sin", "amplitude": 10, "freq": 3}],
        },
        "synthesis": {
            "alpha": 0.5, "L2": [[-0.04, -0.23, 1.42]], "eta": 1e-4, "rho": 200,
            "multiplier": {"kind": "positively_real", "X": 1.0},
            "minimize_mu": True, "p_max": 24.6, "y1_max": 150,
        },
        "simulation": {"t_span": [0, 80], "step": 1e-3, "x0": [-32.94, -31.38, -26.19, -68.89],
                       "method": "radau", "rtol": 1e-8, "atol": 1e-10},
        "reconstruction": {"kernel": {"kind": "standard_bump"}, "betas": [0.3, 0.1], "T": 20,
                           "t_end": 80, "discontinuities": "auto"},
        "reference": {"mu": 4.71, "zeta": 12.59, "bound": 0.1048, "rho": 200},
    },
}


def example_config(name: str) -> dict:
    try:
        return validate_config(copy.deepcopy(EXAMPLES[name]))
    except KeyError:
        raise ConfigInvalid(f"unknown example {name!r}; available: {sorted(EXAMPLES)}") from None


# -- pipeline ----------------------------------------------------------------

@dataclass(frozen=True)
class SynthesisResult:
    plant: PlantModel
    descriptor: DescriptorSystem
    gains: ObserverGains
    diagnostics: dict

    def gains_document(self) -> dict:
        return {**self.gains.to_dict(), "diagnostics": self.diagnostics}


@dataclass(frozen=True)
class PipelineResult:
    synthesis: SynthesisResult
    scenario: Scenario
    trace: SimulationTrace
    metrics: ErrorMetrics
    reconstruction: Optional[ReconstructionReport]

    def summary(self) -> dict:
        out = {
            "name": self.scenario.name,
            "synthesis": self.synthesis.diagnostics,
            "simulation": {k: v for k, v in self.trace.info.items()},
            "metrics": self.metrics.to_dict(),
        }
        if self.reconstruction is not None:
            out["reconstruction"] = self.reconstruction.to_dict()
        return out


def _initial_state(cfg: dict, n_x: int) -> np.ndarray:
    x0 = cfg["simulation"]["x0"]
    if isinstance(x0, dict):
        rng = np.random.default_rng(cfg.get("seed", 0))
        return x0["random_scale"] * rng.standard_normal(n_x)
    return np.asarray(x0, dtype=float)


def build_plant(cfg: dict) -> PlantModel:
    try:
        return plant_from_dict(cfg["plant"])
    except BLSMOError:
        raise
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigInvalid(f"plant block invalid: {exc}") from None


def synthesis_config(cfg: dict, plant: PlantModel) -> SynthesisConfig:
    s = cfg["synthesis"]
    try:
        mult = multiplier_from_dict(s["multiplier"])
    except (KeyError, TypeError) as exc:
        raise ConfigInvalid(f"multiplier block invalid: {exc}") from None
    rho = s.get("rho", "auto")
    return SynthesisConfig(
        alpha=s["alpha"], L2=s["L2"], multiplier=mult, rho_x=plant.rho_x, eta=s["eta"],
        minimize_mu=s.get("minimize_mu", True), solver_tolerance=s.get("solver_tolerance", 1e-6),
        rho=None if rho == "auto" else float(rho), rho_safety=s.get("rho_safety", 1.0),
        p_max=s.get("p_max"), y1_max=s.get("y1_max"), zeta=s.get("zeta"),
        lmi_margin=s.get("lmi_margin", 1e-9), solver=s.get("solver", "CLARABEL"))


def _initial_error(cfg, plant, descriptor) -> float:
    x0 = _initial_state(cfg, plant.n_x)
    t0 = cfg["simulation"]["t_span"][0]
    wy0 = np.atleast_1d(plant.w_y(t0)) if plant.w_y is not None else np.zeros(plant.m_y)
    z0 = np.asarray(cfg["simulation"].get("z0", np.zeros(descriptor.n)), dtype=float)
    y0 = plant.C @ x0 + plant.D @ wy0
    return float(np.linalg.norm(np.r_[x0, wy0] - (z0 - descriptor.T2 @ y0)))


def _modulus(cfg, plant):
    if getattr(plant.f, "modulus", None) is not None:
        return plant.f.modulus
    domain = cfg["synthesis"].get("modulus_domain", 100.0)
    radii = np.geomspace(1e-3, 2 * domain, 60)
    table = estimate_modulus(plant.f_of_q, radii, n_q=plant.n_q, domain_radius=domain,
                             n_samples=400, seed=cfg.get("seed", 0))
    return table


def run_synthesis(cfg: dict) -> SynthesisResult:
    plant = build_plant(cfg)
    desc = build_descriptor(plant)
    scfg = synthesis_config(cfg, plant)
    diag: dict[str, Any] = {"condition_number": desc.condition_number,
                            "identity_residual": desc.identity_residual()}
    if "gains" in cfg:
        gains = ObserverGains.from_dict(cfg["gains"])
        gains = replace(gains, check=verify_gains(desc, gains, scfg.solver_tolerance))
        diag["source"] = "inline"
    else:
        gains = synthesize(desc, scfg)
        diag["source"] = "synthesized"
    if cfg["synthesis"].get("rho", "auto") == "auto":
        e_sup = _initial_error(cfg, plant, desc)
        rho = select_rho(gains, desc, e_sup, _modulus(cfg, plant))
        gains = gains.with_rho(max(rho, scfg.rho_x * scfg.rho_safety))
        diag["rho_auto"] = {"e_sup": e_sup, "rho": gains.rho}
    diag.update(
        mu=gains.mu, zeta=gains.zeta, rho=gains.rho, eta=gains.eta, alpha=gains.alpha,
        lambda1=compute_lambda1(gains.P, desc.T1, plant.G),
        ultimate_bound=ultimate_bound(gains.mu, gains.eta, plant.rho_x, gains.alpha)
        if plant.rho_x > 0 else 0.0,
        check=gains.check.to_dict() if gains.check is not None else None,
    )
    if "reference" in cfg:
        diag["reference"] = dict(cfg["reference"])
    return SynthesisResult(plant, desc, gains, diag)


def build_scenario(cfg: dict, syn: SynthesisResult) -> Scenario:
    s = cfg["simulation"]
    return Scenario(
        plant=syn.plant, gains=syn.gains, descriptor=syn.descriptor,
        x0=_initial_state(cfg, syn.plant.n_x), z0=s.get("z0"), t_span=tuple(s["t_span"]),
        step=s["step"], method=s.get("method", "radau"), rtol=s.get("rtol", 1e-8),
        atol=s.get("atol", 1e-10), rk4_guard=s.get("rk4_guard", 0.1), name=cfg.get("name", ""))


def build_filter(cfg: dict, step: float) -> WindowFilter:
    rec = cfg["reconstruction"]
    k = rec.get("kernel", {"kind": "standard_bump"})
    return WindowFilter(make_window(k["kind"], k.get("params")), tuple(rec["betas"]), step)


def run_reconstruction(cfg: dict, syn: SynthesisResult, trace: SimulationTrace):
    rec = cfg["reconstruction"]
    if len(rec["betas"]) != syn.plant.m_x:
        raise ConfigInvalid(f"reconstruction.betas needs {syn.plant.m_x} entries")
    filt = build_filter(cfg, cfg["simulation"]["step"])
    disc = rec.get("discontinuities")
    if disc == "auto":
        w_x = syn.plant.w_x
        disc = (w_x.discontinuities(trace.grid[0], trace.grid[-1])
                if isinstance(w_x, VectorSignal) else None)
    return reconstruct_wx(trace, filt, truth=trace.w_x, T=rec.get("T"),
                          discontinuities=disc, t_end=rec.get("t_end"))


def run_pipeline(cfg: dict, syn: Optional[SynthesisResult] = None) -> PipelineResult:
    cfg = validate_config(cfg)
    syn = syn or run_synthesis(cfg)
    sc = build_scenario(cfg, syn)
    trace = simulate(sc)
    ref = cfg.get("reference", {}).get("bound")
    metrics = error_metrics(trace, syn.gains, cfg["simulation"].get("metrics_window", 0.2), ref)
    rec = run_reconstruction(cfg, syn, trace) if "reconstruction" in cfg else None
    return PipelineResult(syn, sc, trace, metrics, rec)


# -- sweeps ------------------------------------------------------------------

SWEEP_PARAMETERS = ("eta", "beta", "rho", "alpha", "step")


def with_parameter(cfg: dict, parameter: str, value: float) -> dict:
    cfg = copy.deepcopy(cfg)
    if parameter in ("eta", "rho", "alpha"):
        cfg["synthesis"][parameter] = float(value)
    elif parameter == "step":
        cfg["simulation"]["step"] = float(value)
    elif parameter == "beta":
        if "reconstruction" not in cfg:
            raise ConfigInvalid("beta sweep needs a reconstruction block")
        cfg["reconstruction"]["betas"] = [float(value)] * len(cfg["reconstruction"]["betas"])
    else:
        raise UnknownParameter(f"cannot sweep {parameter!r}; choose from {SWEEP_PARAMETERS}")
    return cfg


def _sweep_row(args) -> dict:
    cfg, parameter, value = args
    res = run_pipeline(with_parameter(cfg, parameter, value))
    m = res.metrics
    row = {"parameter": parameter, "value": float(value), "mu": res.synthesis.gains.mu,
           "bound": m.bound, "terminal_sup_error": m.terminal_sup_error,
           "terminal_state_error": m.terminal_state_error, "terminal_wy_error": m.terminal_wy_error,
           "within_bound": m.within_bound, "t_S": m.t_S}
    if res.reconstruction is not None:
        r = res.reconstruction
        row["mse"] = r.mse
        for k, v in enumerate(r.mse_per_channel or ()):
            row[f"mse_ch{k}"] = v
        for k, v in enumerate(r.max_error_per_channel or ()):
            row[f"max_error_ch{k}"] = v
    return row


def sweep(cfg: dict, parameter: str, values, jobs: int = 1) -> list[dict]:
    """One pipeline run per value; rows come back in the order of ``values``."""
    if parameter not in SWEEP_PARAMETERS:
        raise UnknownParameter(f"cannot sweep {parameter!r}; choose from {SWEEP_PARAMETERS}")
    values = list(values)
    if not values:
        raise ConfigInvalid("sweep needs at least one value")
    cfg = validate_config(cfg)
    for v in values:
        with_parameter(cfg, parameter, v)
    tasks = [(cfg, parameter, v) for v in values]
    if jobs <= 1:
        return [_sweep_row(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(_sweep_row, tasks))
