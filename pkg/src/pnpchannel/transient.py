"""Transient integration of the limiting 1D electrodiffusion system.

Semi-implicit (Gummel-style) stepping: each step solves the Poisson
equation at the current concentrations by a symmetric tridiagonal solve,
then advances both species with implicit Euler and exponentially fitted
fluxes at frozen potential, optionally iterating the pair.  The species
matrices are M-matrices, so positivity is preserved for any dt; a
rejection/halving loop guards the remaining nonlinear coupling.

Two run-level monitors are maintained: the charge-box invariant region
0 <= alpha_i c_i <= M, and (for equal boundary charge k on both sides)
the weighted relative-entropy functional

    L(t) = sum_j (1/D_j) int_0^1 h (c_j - c_j0) ln(c_j / c_j0) dx,

whose decay to zero certifies relaxation to the constant steady state.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Callable, Optional, Union

import numpy as np
from scipy.linalg import solve_banded

from .bvp import Mesh, _bernoulli, _face_h, build_layer_mesh
from .errors import (BadParameters, InvalidProblem, NonpositiveConcentration,
                     SingularSystem, StagnantStep, StepRejected)
from .geometry import ChannelProfile
from .steady import BoundaryData, IonSpecies, SteadyProblem

_trapz = getattr(np, "trapezoid", np.trapz)


@dataclass(frozen=True)
class TransientState:
    """Nodal fields at one time; boundary nodes stay pinned to the data."""
    t: float
    mesh: Mesh
    c1: np.ndarray
    c2: np.ndarray
    phi: np.ndarray


@dataclass
class TransientOptions:
    N: int = 801
    grading: str = "tanh"
    dt_init: float = 1e-5
    dt_max: float = 1e-2
    growth: float = 1.2
    min_dt: float = 1e-12
    gummel_iters: int = 2
    n_snapshots: int = 11
    monitor_tol: float = 1e-10
    relax_safety: float = 0.7
    record_lyapunov: Optional[bool] = None   # None = when boundary data allows

    def __post_init__(self):
        if self.dt_init <= 0 or self.dt_max <= 0 or self.min_dt <= 0:
            raise BadParameters("time steps must be positive")
        if self.relax_safety <= 0:
            raise BadParameters("relax_safety must be positive")
        if self.growth < 1.0:
            raise BadParameters("growth factor must be >= 1")
        if self.gummel_iters < 1:
            raise BadParameters("need at least one Gummel iteration")
        if self.n_snapshots < 2:
            raise BadParameters("need at least initial and final snapshots")


@dataclass
class InvariantRegionMonitor:
    M: float
    min_alpha_c: float
    max_alpha_c: float
    violated: bool
    tol: float = 1e-10


@dataclass
class LyapunovTrace:
    t: np.ndarray
    L: np.ndarray
    k: float
    c1_ref: np.ndarray
    c2_ref: np.ndarray
    phi_ref: np.ndarray


@dataclass
class TransientResult:
    problem: SteadyProblem
    mesh: Mesh
    snapshots: tuple
    monitor: InvariantRegionMonitor
    lyapunov_trace: Optional[LyapunovTrace]
    n_steps: int
    n_rejected: int

    @property
    def final(self) -> TransientState:
        return self.snapshots[-1]


class _Workspace:
    """Mesh- and geometry-derived arrays shared by every step of a run."""

    def __init__(self, profile: ChannelProfile, mesh: Mesh):
        x = mesh.nodes
        self.mesh = mesh
        self.dx = np.diff(x)
        self.d = 0.5 * (x[2:] - x[:-2])
        self.hf = _face_h(profile, x)
        self.hn = profile.h(x)
        self.g = self.hf / self.dx


def poisson_solve(c1, c2, mesh: Mesh, profile: ChannelProfile,
                  species: IonSpecies, lam: float, phi0: float,
                  workspace: Optional[_Workspace] = None) -> np.ndarray:
    """Potential from (h phi')' / h = -lam (a1 c1 - a2 c2), phi(0)=phi0,
    phi(1)=0, with face-harmonic h; symmetric tridiagonal solve."""
    ws = workspace if workspace is not None else _Workspace(profile, mesh)
    g, d = ws.g, ws.d
    n = mesh.nodes.size - 2
    charge = ws.hn[1:-1] * (species.alpha1 * np.asarray(c1)[1:-1]
                            - species.alpha2 * np.asarray(c2)[1:-1])
    rhs = -lam * charge * d
    rhs[0] -= g[0] * phi0
    ab = np.zeros((3, n))
    ab[0, 1:] = g[1:-1]
    ab[1, :] = -(g[1:] + g[:-1])
    ab[2, :-1] = g[1:-1]
    try:
        inner = solve_banded((1, 1), ab, rhs)
    except (np.linalg.LinAlgError, ValueError) as exc:
        raise SingularSystem(f"Poisson solve failed: {exc}") from exc
    if not np.all(np.isfinite(inner)):
        raise SingularSystem("Poisson solve produced non-finite potential")
    return np.concatenate([[phi0], inner, [0.0]])


def _species_step(c_old, phi, dt, D, alpha, drift_sign, left, right,
                  ws: _Workspace) -> np.ndarray:
    """Implicit-Euler advance of one species at frozen potential."""
    z = drift_sign * alpha * np.diff(phi)
    Bp, Bm = _bernoulli(z), _bernoulli(-z)
    g = ws.g
    mass = ws.hn[1:-1] * ws.d / dt
    n = mass.size
    ab = np.zeros((3, n))
    ab[0, 1:] = -D * g[1:-1] * Bm[1:-1]
    ab[1, :] = mass + D * (g[1:] * Bp[1:] + g[:-1] * Bm[:-1])
    ab[2, :-1] = -D * g[1:-1] * Bp[1:-1]
    rhs = mass * np.asarray(c_old)[1:-1]
    rhs[0] += D * g[0] * Bp[0] * left
    rhs[-1] += D * g[-1] * Bm[-1] * right
    try:
        inner = solve_banded((1, 1), ab, rhs)
    except (np.linalg.LinAlgError, ValueError) as exc:
        raise SingularSystem(f"species solve failed: {exc}") from exc
    if np.any(inner <= 0.0) or not np.all(np.isfinite(inner)):
        raise StepRejected(f"nonpositive concentration after dt={dt:g}")
    return np.concatenate([[left], inner, [right]])


def step(problem: SteadyProblem, state: TransientState, dt: float,
         options: Optional[TransientOptions] = None,
         workspace: Optional[_Workspace] = None) -> TransientState:
    """One semi-implicit step of size dt from the given state."""
    if dt <= 0:
        raise BadParameters(f"need dt > 0, got {dt}")
    opts = options or TransientOptions()
    ws = workspace if workspace is not None else _Workspace(problem.profile,
                                                            state.mesh)
    sp, bd = problem.species, problem.boundary
    lam = problem.lambda_value
    c1, c2 = state.c1, state.c2
    for _ in range(opts.gummel_iters):
        phi = poisson_solve(c1, c2, state.mesh, problem.profile, sp, lam,
                            bd.phi0, ws)
        c1 = _species_step(state.c1, phi, dt, sp.D1, sp.alpha1, +1.0,
                           bd.l1, bd.r1, ws)
        c2 = _species_step(state.c2, phi, dt, sp.D2, sp.alpha2, -1.0,
                           bd.l2, bd.r2, ws)
    phi = poisson_solve(c1, c2, state.mesh, problem.profile, sp, lam,
                        bd.phi0, ws)
    return TransientState(t=state.t + dt, mesh=state.mesh, c1=c1, c2=c2,
                          phi=phi)


def invariant_region_bound(boundary: BoundaryData, species: IonSpecies) -> float:
    """M = max of the four boundary charge values alpha_i * data."""
    return max(species.alpha1 * boundary.l1, species.alpha1 * boundary.r1,
               species.alpha2 * boundary.l2, species.alpha2 * boundary.r2)


def common_boundary_charge(boundary: BoundaryData,
                           species: IonSpecies) -> Optional[float]:
    """The shared value k when all four boundary charges agree (else None)."""
    vals = (species.alpha1 * boundary.l1, species.alpha2 * boundary.l2,
            species.alpha1 * boundary.r1, species.alpha2 * boundary.r2)
    k = vals[0]
    if all(abs(v - k) <= 1e-12 * max(1.0, abs(k)) for v in vals[1:]):
        return k
    return None


def lyapunov(state: TransientState, k: float, profile: ChannelProfile,
             species: IonSpecies) -> float:
    """Relative-entropy functional against the constant reference
    (k/alpha1, k/alpha2); nonnegative, zero only at the reference."""
    if k <= 0:
        raise BadParameters(f"need k > 0, got {k}")
    c1, c2 = state.c1, state.c2
    if np.any(c1 <= 0.0) or np.any(c2 <= 0.0):
        raise NonpositiveConcentration("Lyapunov functional needs c > 0")
    x = state.mesh.nodes
    h = profile.h(x)
    ref1, ref2 = k / species.alpha1, k / species.alpha2
    term1 = _trapz(h * (c1 - ref1) * np.log(c1 / ref1), x) / species.D1
    term2 = _trapz(h * (c2 - ref2) * np.log(c2 / ref2), x) / species.D2
    return float(term1 + term2)


def _reference_potential(phi0: float, ws: _Workspace) -> np.ndarray:
    """phi(x) = phi0 * (int_x^1 1/h) / rho0, evaluated with the same face
    integrals the discrete Poisson operator uses, so the zero-charge steady
    potential matches it to roundoff."""
    seg = ws.dx / ws.hf
    tail = np.concatenate([np.cumsum(seg[::-1])[::-1], [0.0]])
    return phi0 * tail / tail[0]


def _resolve_initial(data, x, name):
    if callable(data):
        arr = np.asarray(data(x), dtype=float)
    else:
        arr = np.asarray(data, dtype=float)
    if arr.shape != x.shape:
        raise InvalidProblem(f"{name} has shape {arr.shape}, mesh has {x.shape}")
    if np.any(arr < 0.0) or not np.all(np.isfinite(arr)):
        raise InvalidProblem(f"{name} must be finite and nonnegative")
    return arr


def run_transient(problem: SteadyProblem,
                  c1_init: Union[np.ndarray, Callable],
                  c2_init: Union[np.ndarray, Callable],
                  T: float,
                  options: Optional[TransientOptions] = None) -> TransientResult:
    """Integrate to time T with positivity-rejection time-step control
    (halve on rejection, grow by the configured factor up to dt_max).

    The charge-box monitor is always on; the Lyapunov trace is recorded
    when the boundary data shares a common charge k (or when forced via
    options, which requires such data).
    """
    opts = options or TransientOptions()
    if T <= 0:
        raise BadParameters(f"need T > 0, got {T}")
    sp, bd = problem.species, problem.boundary
    mesh = build_layer_mesh(opts.N, problem.mu, opts.grading)
    x = mesh.nodes
    ws = _Workspace(problem.profile, mesh)

    c1 = _resolve_initial(c1_init, x, "c1_init")
    c2 = _resolve_initial(c2_init, x, "c2_init")
    c1[0], c1[-1] = bd.l1, bd.r1
    c2[0], c2[-1] = bd.l2, bd.r2

    k = common_boundary_charge(bd, sp)
    want_lyap = opts.record_lyapunov
    if want_lyap is None:
        want_lyap = k is not None
    elif want_lyap and k is None:
        raise InvalidProblem(
            "Lyapunov trace needs equal boundary charges alpha_i * c_i")

    M = invariant_region_bound(bd, sp)
    lam = problem.lambda_value
    state = TransientState(t=0.0, mesh=mesh, c1=c1, c2=c2,
                           phi=poisson_solve(c1, c2, mesh, problem.profile,
                                             sp, lam, bd.phi0, ws))

    lo = min(float(np.min(sp.alpha1 * c1)), float(np.min(sp.alpha2 * c2)))
    hi = max(float(np.max(sp.alpha1 * c1)), float(np.max(sp.alpha2 * c2)))
    times, values = [0.0], []
    if want_lyap:
        values.append(lyapunov(state, k, problem.profile, sp))

    targets = np.linspace(0.0, T, opts.n_snapshots)
    snapshots = [state]
    next_target = 1

    def relaxation_cap(s: TransientState) -> float:
        # The frozen-potential splitting is explicit in the charge-relaxation
        # term, whose local rate is lam * (D1 a1^2 c1 + D2 a2^2 c2); keeping
        # dt below safety/rate keeps the Gummel pair inside its linear
        # stability region (the positivity check alone only trips long after
        # the charge mode has started to oscillate).
        rate = lam * float(np.max(sp.D1 * sp.alpha1**2 * s.c1
                                  + sp.D2 * sp.alpha2**2 * s.c2))
        return opts.relax_safety / rate if rate > 0 else math.inf

    dt = opts.dt_init
    n_steps = n_rejected = 0
    t = 0.0
    eps_T = 1e-13 * max(1.0, T)
    while t < T - eps_T:
        dt_try = min(dt, relaxation_cap(state), T - t)
        try:
            new = step(problem, state, dt_try, opts, ws)
        except StepRejected:
            n_rejected += 1
            dt = 0.5 * dt_try
            if dt < opts.min_dt:
                raise StagnantStep(
                    f"time step underflow ({dt:g}) at t={t:g}")
            continue
        state, t = new, new.t
        n_steps += 1
        lo = min(lo, float(np.min(sp.alpha1 * state.c1)),
                 float(np.min(sp.alpha2 * state.c2)))
        hi = max(hi, float(np.max(sp.alpha1 * state.c1)),
                 float(np.max(sp.alpha2 * state.c2)))
        if want_lyap:
            times.append(t)
            values.append(lyapunov(state, k, problem.profile, sp))
        while next_target < targets.size and t >= targets[next_target] - eps_T:
            snapshots.append(state)
            next_target += 1
        dt = min(dt_try * opts.growth, opts.dt_max)

    if snapshots[-1] is not state:
        snapshots.append(state)
    monitor = InvariantRegionMonitor(
        M=M, min_alpha_c=lo, max_alpha_c=hi,
        violated=(lo < -opts.monitor_tol or hi > M + opts.monitor_tol),
        tol=opts.monitor_tol)
    trace = None
    if want_lyap:
        trace = LyapunovTrace(t=np.asarray(times), L=np.asarray(values), k=k,
                              c1_ref=np.full(x.size, k / sp.alpha1),
                              c2_ref=np.full(x.size, k / sp.alpha2),
                              phi_ref=_reference_potential(bd.phi0, ws))
    return TransientResult(problem=problem, mesh=mesh,
                           snapshots=tuple(snapshots), monitor=monitor,
                           lyapunov_trace=trace, n_steps=n_steps,
                           n_rejected=n_rejected)
