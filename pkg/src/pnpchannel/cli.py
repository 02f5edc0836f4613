"""Command-line entry point: config parsing, dispatch, and serialization.

Commands
--------
steady-asymptotic   closed-form limiting fluxes, layer endpoints, regular layer
steady-bvp          finite-mu solve with flux comparison against the limit
layers              boundary-layer orbit integration with drift report
transient           time integration with invariant/Lyapunov monitors
sweep               one config axis, per-point flux/geometry summaries
validate            seeded cross-module property suite

Configs are JSON with defaults filled in; reports are JSON with sorted keys
and CSV files with fixed headers, byte-deterministic for a given config and
seed except for the single timestamp field.
"""

from __future__ import annotations

import argparse
import copy
import json
import math
import os
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from datetime import datetime, timezone
from typing import Optional

import numpy as np

from . import __version__, bvp, fastlayer, geometry, steady, transient
from .errors import (BadParameters, DegenerateGeometry, DivergentOrbit,
                     EndpointMismatch, InvalidProblem, IoError, LogSingularity,
                     NonConvergence, NonHyperbolic, NonpositiveConcentration,
                     NonpositiveW, NotConverged, OutOfDomain, ParseError,
                     QuadratureFailure, RootFindFailure, SingularSystem,
                     StagnantStep, StepRejected, ValidationError)

COMMANDS = ("steady-asymptotic", "steady-bvp", "layers", "transient",
            "sweep", "validate")

_VALIDATION_ERRORS = (ParseError, ValidationError, InvalidProblem,
                      BadParameters, OutOfDomain, DegenerateGeometry)
_SOLVER_ERRORS = (NonConvergence, NotConverged, StagnantStep, StepRejected,
                  DivergentOrbit, EndpointMismatch, RootFindFailure,
                  QuadratureFailure, NonHyperbolic, LogSingularity,
                  NonpositiveW, NonpositiveConcentration, SingularSystem)

_GEOMETRY_FIELDS = {
    "constant": {"value": 1.0},
    "affine": {"a": 1.0, "b": 2.0},
    "bump": {"base": 1.0, "amplitude": 0.8, "width": 0.25},
    "sampled": {"nodes": [0.0, 0.5, 1.0], "values": [1.0, 1.0, 1.0]},
}

_DEFAULTS = {
    "problem": {
        "geometry": {"kind": "constant", "normalize_volume": False},
        "species": {"alpha1": 1.0, "alpha2": 1.0, "D1": 1.0, "D2": 1.0},
        "boundary": {"phi0": 0.0, "l1": 1.0, "l2": 1.0, "r1": 2.0, "r2": 2.0},
        "mu": 0.01,
    },
    "solver": {
        "N": 801, "newton_tol": 1e-10, "max_newton": 50, "mu_start": 0.5,
        "continuation_ratio": 0.5, "grading": "tanh", "initial_guess": "linear",
    },
    "transient": {
        "T": 1.0, "N": 801, "grading": "tanh", "dt_init": 1e-5,
        "dt_max": 1e-2, "growth": 1.2, "gummel_iters": 2, "n_snapshots": 11,
        "relax_safety": 0.7,
        "initial": {"kind": "linear", "amplitude": 0.1, "frequency": 1},
    },
    "layers": {"tol": 1e-10, "xi_max": None},
    "sweep": {
        "parameter": "problem.boundary.phi0", "values": [],
        "command": "steady-asymptotic",
    },
    "output_dir": None,
    "seed": 0,
}

_NUMERIC_KEYS = {
    "alpha1", "alpha2", "D1", "D2", "phi0", "l1", "l2", "r1", "r2", "mu",
    "lambda", "value", "a", "b", "base", "amplitude", "width", "newton_tol",
    "mu_start", "continuation_ratio", "T", "dt_init", "dt_max", "growth",
    "tol", "frequency", "relax_safety",
}
_INT_KEYS = {"N", "max_newton", "gummel_iters", "n_snapshots", "seed"}


@dataclass(frozen=True)
class RunConfig:
    """A validated config; ``data`` is the canonical fully-defaulted dict."""
    data: dict

    def problem(self) -> steady.SteadyProblem:
        p = self.data["problem"]
        g = p["geometry"]
        kind = g["kind"]
        if kind == "constant":
            profile = geometry.ChannelProfile.constant(g["value"])
        elif kind == "affine":
            profile = geometry.ChannelProfile.affine_area(g["a"], g["b"])
        elif kind == "bump":
            profile = geometry.ChannelProfile.bump(g["base"], g["amplitude"],
                                                   g["width"])
        else:
            profile = geometry.ChannelProfile.sampled(g["nodes"], g["values"])
        if g["normalize_volume"]:
            profile = geometry.normalize_volume(profile)
        s = p["species"]
        species = steady.IonSpecies(alpha1=s["alpha1"], alpha2=s["alpha2"],
                                    D1=s["D1"], D2=s["D2"])
        b = p["boundary"]
        boundary = steady.BoundaryData(phi0=b["phi0"], l1=b["l1"], l2=b["l2"],
                                       r1=b["r1"], r2=b["r2"])
        return steady.SteadyProblem(profile, species, boundary, mu=p["mu"])

    def solver_options(self) -> bvp.SolverOptions:
        return bvp.SolverOptions(**self.data["solver"])

    def transient_options(self) -> transient.TransientOptions:
        t = self.data["transient"]
        return transient.TransientOptions(
            N=t["N"], grading=t["grading"], dt_init=t["dt_init"],
            dt_max=t["dt_max"], growth=t["growth"],
            gummel_iters=t["gummel_iters"], n_snapshots=t["n_snapshots"],
            relax_safety=t["relax_safety"])


def _check_value(path: str, key: str, value):
    if key in _INT_KEYS:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ValidationError(f"{path} must be an integer, got {value!r}")
    elif key in _NUMERIC_KEYS:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ValidationError(f"{path} must be a number, got {value!r}")
        if not math.isfinite(value):
            raise ValidationError(f"{path} must be finite, got {value!r}")


def _merge(defaults: dict, user: dict, path: str) -> dict:
    out = copy.deepcopy(defaults)
    for key, value in user.items():
        here = f"{path}.{key}" if path else key
        if key not in defaults:
            raise ParseError(f"unknown config key '{here}'")
        if isinstance(defaults[key], dict):
            if not isinstance(value, dict):
                raise ParseError(f"'{here}' must be an object")
            out[key] = _merge(defaults[key], value, here)
        else:
            _check_value(here, key, value)
            out[key] = copy.deepcopy(value)
    return out


def parse_config(text: str) -> RunConfig:
    """Validate a JSON config against the schema and fill every default.

    The canonical form keeps ``mu`` only: a ``lambda`` entry is converted
    via mu = 1/sqrt(lambda), and giving both is rejected.
    """
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(
            f"invalid JSON at line {exc.lineno} column {exc.colno}: {exc.msg}"
        ) from exc
    if not isinstance(raw, dict):
        raise ParseError("config must be a JSON object")

    raw = copy.deepcopy(raw)
    prob = raw.get("problem", {})
    if not isinstance(prob, dict):
        raise ParseError("'problem' must be an object")
    has_mu = "mu" in prob
    has_lam = "lambda" in prob
    if has_mu and has_lam:
        raise ValidationError(
            "exactly one of problem.mu and problem.lambda may be given")
    if has_lam:
        lam = prob.pop("lambda")
        _check_value("problem.lambda", "lambda", lam)
        if lam <= 0:
            raise ValidationError(f"problem.lambda must be positive, got {lam}")
        prob["mu"] = 1.0 / math.sqrt(lam)
        raw["problem"] = prob

    geo = prob.get("geometry", {})
    if not isinstance(geo, dict):
        raise ParseError("'problem.geometry' must be an object")
    kind = geo.get("kind", "constant")
    if kind not in _GEOMETRY_FIELDS:
        raise ValidationError(
            f"problem.geometry.kind must be one of {sorted(_GEOMETRY_FIELDS)}, "
            f"got {kind!r}")

    defaults = copy.deepcopy(_DEFAULTS)
    defaults["problem"]["geometry"].update(_GEOMETRY_FIELDS[kind])
    data = _merge(defaults, raw, "")

    b = data["problem"]["boundary"]
    for name in ("l1", "l2", "r1", "r2"):
        if b[name] <= 0:
            raise ValidationError(
                f"problem.boundary.{name} violates positivity: {b[name]}")
    s = data["problem"]["species"]
    for name in ("alpha1", "alpha2", "D1", "D2"):
        if s[name] <= 0:
            raise ValidationError(
                f"problem.species.{name} violates positivity: {s[name]}")
    if data["problem"]["mu"] <= 0:
        raise ValidationError(
            f"problem.mu must be positive, got {data['problem']['mu']}")
    if data["sweep"]["values"] and not isinstance(data["sweep"]["values"], list):
        raise ValidationError("sweep.values must be a list")
    if data["sweep"]["command"] not in ("steady-asymptotic", "steady-bvp"):
        raise ValidationError(
            "sweep.command must be steady-asymptotic or steady-bvp")
    out_dir = data["output_dir"]
    if out_dir is not None and not isinstance(out_dir, str):
        raise ValidationError("output_dir must be a string or null")
    return RunConfig(data=data)


def serialize_config(config: RunConfig) -> str:
    return json.dumps(config.data, indent=2, sort_keys=True) + "\n"


@dataclass
class RunReport:
    """Everything one dispatch produced, ready for write_outputs."""
    command: str
    config: dict
    version: str
    timestamp: str            # the single nondeterministic field
    counters: dict
    outputs: dict
    csv_files: dict = field(repr=False)   # name -> text content
    manifest: list = field(default_factory=list)


_UNITS = {
    "J1": "scaled flux density of species 1 (diffusivity-independent)",
    "J2": "scaled flux density of species 2 (diffusivity-independent)",
    "jbar1": "species-1 flux density, jbar1 = D1 * J1",
    "jbar2": "species-2 flux density, jbar2 = D2 * J2",
    "rho0": "integral of 1/h over (0,1); >= 1 at unit volume",
    "phi": "electric potential in thermal-voltage units",
    "L": "weighted relative entropy sum_j (1/Dj) int h (cj-cj0) ln(cj/cj0)",
}


def _fmt(value) -> str:
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return str(value)


def _csv(header: str, rows) -> str:
    lines = [header]
    for row in rows:
        lines.append(",".join(_fmt(v) for v in row))
    return "\n".join(lines) + "\n"


def _flux_dict(fx: steady.FluxPair) -> dict:
    return {"J1": fx.J1, "J2": fx.J2, "jbar1": fx.Jbar1, "jbar2": fx.Jbar2}


def _endpoint_dict(ep: steady.BoundaryLayerEndpoint) -> dict:
    return {"side": ep.side.name.lower(), "u_amplitude": ep.u_amplitude,
            "phi_limit": ep.phi_limit, "w_limit": ep.w_limit,
            "has_layer": bool(ep.has_layer)}


def _run_steady_asymptotic(config: RunConfig):
    problem = config.problem()
    fx = steady.limiting_fluxes(problem)
    reg = steady.regular_layer(problem)
    left = steady.boundary_layer_endpoint(problem, "left")
    right = steady.boundary_layer_endpoint(problem, "right")
    x = np.linspace(0.0, 1.0, 401)
    rows = zip(x, reg.phi(x), reg.c1(x), reg.c2(x), reg.w(x), reg.p(x))
    csvs = {"regular_layer.csv": _csv("x,phi,c1,c2,w,p", rows)}
    outputs = {
        "fluxes": _flux_dict(fx),
        "endpoints": {"left": _endpoint_dict(left),
                      "right": _endpoint_dict(right)},
        "rho0": reg.rho0,
        "units": {k: _UNITS[k] for k in ("J1", "J2", "jbar1", "jbar2",
                                         "rho0", "phi")},
    }
    return outputs, csvs, {}


def _run_steady_bvp(config: RunConfig):
    problem = config.problem()
    sol = bvp.solve_steady_bvp(problem, config.solver_options())
    fx = bvp.extract_fluxes(sol)
    lim = steady.limiting_fluxes(problem)
    denom = max(abs(lim.J1), abs(lim.J2), 1e-300)
    rows = zip(sol.mesh.nodes, sol.phi, sol.c1, sol.c2)
    csvs = {"solution.csv": _csv("x,phi,c1,c2", rows)}
    outputs = {
        "fluxes": _flux_dict(fx),
        "limiting_fluxes": _flux_dict(lim),
        "rel_flux_error_vs_limit": max(abs(fx.J1 - lim.J1),
                                       abs(fx.J2 - lim.J2)) / denom,
        "residual_norm": sol.residual_norm,
        "flux_spread": {"J1": float(np.ptp(sol.J1_cell)),
                        "J2": float(np.ptp(sol.J2_cell))},
        "units": {k: _UNITS[k] for k in ("J1", "J2", "jbar1", "jbar2")},
    }
    counters = {"newton_iterations": sol.newton_iterations}
    return outputs, csvs, counters


def _orbit_csv(orbit, problem) -> str:
    rows = []
    for i in range(orbit.xi.size):
        st = fastlayer.FastState(*orbit.states[:, i])
        H = fastlayer.integrals(st, problem.profile, problem.species)
        rows.append((orbit.xi[i], st.phi, st.u, st.v, st.w, H.H1, H.H2, H.H3))
    return _csv("xi,phi,u,v,w,H1,H2,H3", rows)


def _run_layers(config: RunConfig):
    problem = config.problem()
    tol = config.data["layers"]["tol"]
    xi_max = config.data["layers"]["xi_max"]
    csvs, drift = {}, {}
    for side in ("left", "right"):
        orbit = fastlayer.integrate_layer(problem, side, xi_max=xi_max, tol=tol)
        csvs[f"{side}_layer.csv"] = _orbit_csv(orbit, problem)
        drift[side] = {
            "integral_drift_H1": orbit.integral_drift[0],
            "integral_drift_H2": orbit.integral_drift[1],
            "integral_drift_H3": orbit.integral_drift[2],
            "terminal_error": orbit.terminal_error,
            "landing": {"phi": orbit.landing_state.phi,
                        "w": orbit.landing_state.w},
        }
    outputs = {"layers": drift, "units": {"phi": _UNITS["phi"]}}
    return outputs, csvs, {}


def _initial_profiles(config: RunConfig, problem):
    spec = config.data["transient"]["initial"]
    bd = problem.boundary
    kind = spec["kind"]
    if kind not in ("linear", "perturbed"):
        raise ValidationError(
            f"transient.initial.kind must be linear or perturbed, got {kind!r}")
    amp, freq = spec["amplitude"], spec["frequency"]

    def build(l, r):
        def f(x):
            base = l + (r - l) * x
            if kind == "perturbed":
                return base * (1.0 + amp * np.sin(np.pi * freq * x))
            return base
        return f

    return build(bd.l1, bd.r1), build(bd.l2, bd.r2)


def _run_transient(config: RunConfig):
    problem = config.problem()
    opts = config.transient_options()
    c1f, c2f = _initial_profiles(config, problem)
    res = transient.run_transient(problem, c1f, c2f,
                                  T=config.data["transient"]["T"],
                                  options=opts)
    rows = []
    for snap in res.snapshots:
        for i, xv in enumerate(res.mesh.nodes):
            rows.append((snap.t, xv, snap.c1[i], snap.c2[i], snap.phi[i]))
    csvs = {"trajectory.csv": _csv("t,x,c1,c2,phi", rows)}
    mon = res.monitor
    outputs = {
        "monitor": {"M": mon.M, "min_alpha_c": mon.min_alpha_c,
                    "max_alpha_c": mon.max_alpha_c,
                    "violated": bool(mon.violated), "tol": mon.tol},
        "units": {"phi": _UNITS["phi"]},
    }
    if res.lyapunov_trace is not None:
        tr = res.lyapunov_trace
        csvs["lyapunov.csv"] = _csv("t,L", zip(tr.t, tr.L))
        outputs["lyapunov"] = {"k": tr.k, "initial": float(tr.L[0]),
                               "final": float(tr.L[-1])}
        outputs["units"]["L"] = _UNITS["L"]
    counters = {"steps": res.n_steps, "rejected_steps": res.n_rejected}
    return outputs, csvs, counters


def _set_path(data: dict, path: str, value):
    parts = path.split(".")
    node = data
    for part in parts[:-1]:
        if not isinstance(node, dict) or part not in node:
            raise ValidationError(f"sweep.parameter path '{path}' not found")
        node = node[part]
    if not isinstance(node, dict) or parts[-1] not in node:
        raise ValidationError(f"sweep.parameter path '{path}' not found")
    node[parts[-1]] = value


def _sweep_point(config_data: dict, path: str, value, command: str,
                 point_seed: int) -> dict:
    data = copy.deepcopy(config_data)
    _set_path(data, path, value)
    cfg = parse_config(json.dumps(data))
    problem = cfg.problem()
    fx = steady.limiting_fluxes(problem)
    rho0 = geometry.geometry_factor(problem.profile).rho0
    row = {"value": value, "seed": point_seed, "rho0": rho0}
    row.update(_flux_dict(fx))
    if command == "steady-bvp":
        sol = bvp.solve_steady_bvp(problem, cfg.solver_options())
        row.update({f"bvp_{k}": v
                    for k, v in _flux_dict(bvp.extract_fluxes(sol)).items()})
    return row


def _run_sweep(config: RunConfig, seed: int):
    sw = config.data["sweep"]
    values = sw["values"]
    if not values:
        raise ValidationError("sweep.values must be a nonempty list")
    path, command = sw["parameter"], sw["command"]
    env = os.environ.get("PNP_NUM_THREADS", "")
    try:
        max_threads = max(1, int(env)) if env else (os.cpu_count() or 1)
    except ValueError:
        raise ValidationError(f"PNP_NUM_THREADS must be an integer, got {env!r}")
    workers = min(len(values), max_threads)
    seeds = [seed + 1000003 * i for i in range(len(values))]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        rows = list(pool.map(
            lambda iv: _sweep_point(config.data, path, iv[1], command,
                                    seeds[iv[0]]),
            enumerate(values)))
    keys = list(rows[0].keys())
    csvs = {"sweep.csv": _csv(",".join(keys),
                              ([row[k] for k in keys] for row in rows))}
    outputs = {
        "parameter": path, "command": command, "n_points": len(values),
        "rows": rows,
        "units": {k: _UNITS[k] for k in ("J1", "J2", "jbar1", "jbar2", "rho0")},
    }
    return outputs, csvs, {"workers": workers}


def _validate_checks(seed: int):
    """The cross-module property battery behind the validate command.

    Every check is deterministic for a given seed and cheap enough for a
    fresh-checkout smoke run; measures are recorded so a failure says how
    far off it was.
    """
    rng = np.random.default_rng(seed)
    checks = []

    def record(name, passed, measure):
        checks.append({"name": name, "passed": bool(passed),
                       "measure": float(measure)})

    # volume-normalized profiles have rho0 >= 1
    worst = np.inf
    for _ in range(20):
        prof = geometry.ChannelProfile.bump(rng.uniform(0.5, 2.0),
                                            rng.uniform(0.0, 2.0),
                                            rng.uniform(0.1, 0.6))
        rho0 = geometry.geometry_factor(
            geometry.normalize_volume(prof)).rho0
        worst = min(worst, rho0)
    record("geometry_rho0_at_least_one", worst >= 1.0 - 1e-10, worst - 1.0)

    # det(J^-1) = g^2 for the cylinder-straightening map
    worst = 0.0
    for _ in range(200):
        g, gx = rng.uniform(0.2, 3.0), rng.uniform(-2.0, 2.0)
        y, z = rng.uniform(-1.0, 1.0, 2)
        det = geometry.jacobian_products(g, gx, y, z)[3]
        worst = max(worst, abs(det - g * g) / max(1.0, g * g))
    record("jacobian_det_identity", worst <= 1e-12, worst)

    # limiting flux scales as 1/rho0 across profile rescalings
    species = steady.IonSpecies(alpha1=1.0, alpha2=2.0, D1=1.0, D2=0.5)
    bd = steady.BoundaryData(phi0=0.7, l1=2.0, l2=1.0, r1=1.0, r2=2.0)
    base = steady.SteadyProblem(geometry.ChannelProfile.bump(1.0, 0.6, 0.3),
                                species, bd)
    fx0 = steady.limiting_fluxes(base)
    rho0 = geometry.geometry_factor(base.profile).rho0
    worst = 0.0
    for _ in range(5):
        factor = rng.uniform(0.3, 3.0)
        scaled = steady.SteadyProblem(base.profile.scaled(factor), species, bd)
        fs = steady.limiting_fluxes(scaled)
        rs = geometry.geometry_factor(scaled.profile).rho0
        worst = max(worst, abs(fs.J1 * rs - fx0.J1 * rho0) / abs(fx0.J1 * rho0))
    record("flux_inverse_rho0_scaling", worst <= 1e-9, worst)

    # boundary-layer orbit lands on the slow manifold with conserved H
    problem = steady.SteadyProblem(
        geometry.ChannelProfile.constant(1.0),
        steady.IonSpecies(alpha1=1.0, alpha2=1.0, D1=1.0, D2=1.0),
        steady.BoundaryData(phi0=0.0, l1=4.0, l2=1.0, r1=2.0, r2=2.0),
        mu=0.01)
    orbit = fastlayer.integrate_layer(problem, "left")
    record("layer_terminal_error", orbit.terminal_error <= 1e-6,
           orbit.terminal_error)
    record("layer_integral_drift", max(orbit.integral_drift) <= 1e-8,
           max(orbit.integral_drift))

    # equal-k data reproduced exactly by the finite-mu solver
    k = 1.5
    eq = steady.SteadyProblem(
        geometry.ChannelProfile.bump(1.0, 0.8, 0.25),
        steady.IonSpecies(alpha1=1.0, alpha2=2.0, D1=1.0, D2=1.0),
        steady.BoundaryData(phi0=1.0, l1=k, l2=k / 2.0, r1=k, r2=k / 2.0),
        mu=0.1)
    fx = bvp.extract_fluxes(bvp.solve_steady_bvp(eq, bvp.SolverOptions(N=101)))
    lim = steady.limiting_fluxes(eq)
    err = max(abs(fx.J1 - lim.J1), abs(fx.J2 - lim.J2)) / abs(lim.J1)
    record("bvp_equal_k_exactness", err <= 1e-6, err)

    # zero-bias symmetric data carries no flux
    zb = steady.SteadyProblem(
        geometry.ChannelProfile.constant(1.0),
        steady.IonSpecies(alpha1=1.0, alpha2=2.0, D1=1.0, D2=1.0),
        steady.BoundaryData(phi0=0.0, l1=2.0, l2=1.0, r1=2.0, r2=1.0),
        mu=0.05)
    fx = bvp.extract_fluxes(bvp.solve_steady_bvp(zb, bvp.SolverOptions(N=101)))
    worst = max(abs(fx.J1), abs(fx.J2))
    record("bvp_zero_bias_zero_flux", worst <= 1e-8, worst)

    # short transient runs stay inside the charge box
    worst = 0.0
    topts = transient.TransientOptions(N=61, grading="uniform", dt_init=1e-4)
    for _ in range(3):
        a1, a2 = rng.uniform(0.5, 2.0, 2)
        sp = steady.IonSpecies(alpha1=a1, alpha2=a2, D1=rng.uniform(0.5, 2.0),
                               D2=rng.uniform(0.5, 2.0))
        l1, l2, r1, r2 = rng.uniform(0.5, 3.0, 4)
        bdr = steady.BoundaryData(phi0=rng.uniform(-1.0, 1.0),
                                  l1=l1, l2=l2, r1=r1, r2=r2)
        prob = steady.SteadyProblem(geometry.ChannelProfile.constant(1.0),
                                    sp, bdr, mu=0.05)
        M = transient.invariant_region_bound(bdr, sp)
        res = transient.run_transient(
            prob, lambda x: l1 + (r1 - l1) * x, lambda x: l2 + (r2 - l2) * x,
            T=0.02, options=topts)
        worst = max(worst, res.monitor.max_alpha_c - M,
                    -res.monitor.min_alpha_c)
        del M
    record("transient_invariant_region", worst <= 1e-10, worst)

    # Lyapunov functional decreases step by step in the equal-charge case
    lp = steady.SteadyProblem(
        geometry.ChannelProfile.constant(1.0),
        steady.IonSpecies(alpha1=1.0, alpha2=1.0, D1=1.0, D2=1.0),
        steady.BoundaryData(phi0=1.0, l1=1.0, l2=1.0, r1=1.0, r2=1.0),
        mu=0.05)
    res = transient.run_transient(
        lp, lambda x: 1.0 + 0.1 * np.sin(np.pi * x),
        lambda x: 1.0 + 0.1 * np.sin(np.pi * x),
        T=0.05, options=transient.TransientOptions(N=61, grading="uniform"))
    inc = float(np.max(np.diff(res.lyapunov_trace.L)))
    record("transient_lyapunov_monotone", inc <= 1e-12, inc)

    # config round-trip
    cfg = parse_config("{}")
    same = parse_config(serialize_config(cfg)) == cfg
    record("config_round_trip", same, 0.0 if same else 1.0)
    return checks


def _run_validate(config: RunConfig, seed: int):
    checks = _validate_checks(seed)
    outputs = {"checks": checks,
               "passed": all(c["passed"] for c in checks),
               "seed": seed}
    rows = ((c["name"], int(c["passed"]), c["measure"]) for c in checks)
    csvs = {"checks.csv": _csv("name,passed,measure", rows)}
    return outputs, csvs, {"n_checks": len(checks)}


def dispatch(command: str, config: RunConfig,
             seed: Optional[int] = None) -> RunReport:
    """Run one command and return the full report (nothing written yet)."""
    if command not in COMMANDS:
        raise ValidationError(f"unknown command {command!r}")
    eff_seed = config.data["seed"] if seed is None else seed
    started = time.perf_counter()
    if command == "steady-asymptotic":
        outputs, csvs, counters = _run_steady_asymptotic(config)
    elif command == "steady-bvp":
        outputs, csvs, counters = _run_steady_bvp(config)
    elif command == "layers":
        outputs, csvs, counters = _run_layers(config)
    elif command == "transient":
        outputs, csvs, counters = _run_transient(config)
    elif command == "sweep":
        outputs, csvs, counters = _run_sweep(config, eff_seed)
    else:
        outputs, csvs, counters = _run_validate(config, eff_seed)
    elapsed = time.perf_counter() - started
    stamp = (datetime.now(timezone.utc).isoformat()
             + f" elapsed={elapsed:.3f}s")
    report = RunReport(command=command, config=config.data,
                       version=__version__, timestamp=stamp,
                       counters=counters, outputs=outputs, csv_files=csvs)
    report.manifest = sorted(csvs) + ["report.json"]
    return report


def write_outputs(report: RunReport, out_dir: str) -> list:
    """Write every CSV plus report.json; returns the manifest."""
    try:
        os.makedirs(out_dir, exist_ok=True)
        for name, content in sorted(report.csv_files.items()):
            with open(os.path.join(out_dir, name), "w") as fh:
                fh.write(content)
        doc = {
            "command": report.command,
            "config": report.config,
            "version": report.version,
            "timestamp": report.timestamp,
            "counters": report.counters,
            "outputs": report.outputs,
            "manifest": report.manifest,
        }
        with open(os.path.join(out_dir, "report.json"), "w") as fh:
            json.dump(doc, fh, indent=2, sort_keys=True)
            fh.write("\n")
    except OSError as exc:
        raise IoError(f"cannot write outputs under {out_dir}: {exc}") from exc
    return list(report.manifest)


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="pnp",
        description="Steady and transient 1D electrodiffusion in a channel")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", help="JSON config file")
        p.add_argument("--out", help="output directory")
        p.add_argument("--seed", type=int, help="seed override")
    args = parser.parse_args(argv)

    try:
        if args.config is not None:
            try:
                with open(args.config) as fh:
                    text = fh.read()
            except OSError as exc:
                raise IoError(f"cannot read config {args.config}: {exc}") from exc
        else:
            text = "{}"
        config = parse_config(text)
        report = dispatch(args.command, config, seed=args.seed)
        out_dir = args.out or config.data["output_dir"] \
            or f"pnp_{args.command.replace('-', '_')}_out"
        write_outputs(report, out_dir)
    except _VALIDATION_ERRORS as exc:
        print(f"pnp: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2
    except _SOLVER_ERRORS as exc:
        print(f"pnp: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 3
    except (IoError, OSError) as exc:
        print(f"pnp: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 4

    if args.command == "validate" and not report.outputs["passed"]:
        failed = [c["name"] for c in report.outputs["checks"]
                  if not c["passed"]]
        print(f"pnp: validate failed: {', '.join(failed)}", file=sys.stderr)
        return 2
    print(os.path.join(out_dir, "report.json"))
    return 0


if __name__ == "__main__":
    sys.exit(main())
