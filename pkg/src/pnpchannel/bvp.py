"""Finite-mu steady-state boundary-value solver on a layer-graded mesh.

Discretization: vertex-centered finite volumes with exponentially fitted
(Scharfetter-Gummel) cell fluxes for both species and centered differences
for the Poisson operator, with face-harmonic-averaged h.  Flux constancy
dJ/dx = 0 is imposed cell-to-cell, eliminating the flux unknowns.  The
nonlinear system is solved by damped Newton under geometric continuation
in mu; extracted cell fluxes cross-validate the closed-form limiting ones.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy import sparse
from scipy.optimize import brentq
from scipy.sparse.linalg import spsolve

from . import steady
from .errors import BadParameters, InvalidProblem, NonConvergence, NotConverged
from .geometry import ChannelProfile
from .steady import FluxPair, SteadyProblem

# 4-point Gauss-Legendre rule on [0, 1], used for exact-enough face averages
_GL_POINTS = np.array([0.069431844202973712, 0.33000947820757187,
                       0.66999052179242813, 0.93056815579702623])
_GL_WEIGHTS = np.array([0.17392742256872692, 0.32607257743127305,
                        0.32607257743127305, 0.17392742256872692])


@dataclass(frozen=True)
class Mesh:
    """Strictly increasing nodes on [0, 1] with a grading descriptor."""
    nodes: np.ndarray
    grading: str = "uniform"
    layer_width: Optional[float] = None

    def __post_init__(self):
        x = self.nodes
        if x[0] != 0.0 or x[-1] != 1.0:
            raise BadParameters("mesh endpoints must be exactly 0 and 1")
        if np.any(np.diff(x) <= 0.0):
            raise BadParameters("mesh nodes must be strictly increasing")

    @property
    def n_cells(self) -> int:
        return self.nodes.size - 1


def build_layer_mesh(N: int, mu: float, grading: str = "tanh") -> Mesh:
    """Mesh with N cells; tanh grading places half of all nodes within
    8*mu of the two endpoints (a quarter per side).

    The stretching map is m(xi) = (1 + tanh(s(xi - 1/2))/tanh(s/2))/2 with
    s chosen so that m(1/4) = 8*mu; for 8*mu >= 1/4 the map degenerates and
    a uniform mesh is returned instead.
    """
    if N < 11:
        raise BadParameters(f"need N >= 11 cells, got {N}")
    if mu <= 0:
        raise BadParameters(f"need mu > 0, got {mu}")
    if grading not in ("uniform", "tanh"):
        raise BadParameters(f"unknown grading {grading!r}")

    width = 8.0 * mu
    if grading == "uniform" or width >= 0.25:
        nodes = np.linspace(0.0, 1.0, N + 1)
        nodes[0], nodes[-1] = 0.0, 1.0
        return Mesh(nodes=nodes, grading="uniform")

    target = 1.0 - 2.0 * width
    sigma = brentq(lambda s: math.tanh(s / 4.0) / math.tanh(s / 2.0) - target,
                   1e-8, 200.0, xtol=1e-14)
    half = math.tanh(sigma / 2.0)
    nodes = np.empty(N + 1)
    for k in range(N // 2 + 1):
        xi = k / N
        nodes[k] = 0.5 * (1.0 + math.tanh(sigma * (xi - 0.5)) / half)
        nodes[N - k] = 1.0 - nodes[k]
    nodes[0], nodes[-1] = 0.0, 1.0
    return Mesh(nodes=nodes, grading="tanh", layer_width=width)


@dataclass(frozen=True)
class SolverOptions:
    N: int = 801
    newton_tol: float = 1e-10
    max_newton: int = 50
    min_damping: float = 2.0**-20
    mu_start: float = 0.5
    continuation_ratio: float = 0.5
    grading: str = "tanh"
    initial_guess: str = "linear"
    quadrature_tol: float = 1e-10

    def __post_init__(self):
        if self.N < 11:
            raise BadParameters(f"need N >= 11, got {self.N}")
        for name in ("newton_tol", "max_newton", "min_damping", "mu_start"):
            if getattr(self, name) <= 0:
                raise BadParameters(f"solver option {name} must be positive")
        if not 0.0 < self.continuation_ratio < 1.0:
            raise BadParameters("continuation_ratio must lie in (0, 1)")
        if self.initial_guess not in ("linear", "singular-orbit-composite"):
            raise BadParameters(f"unknown initial guess mode {self.initial_guess!r}")


@dataclass
class DiscreteSolution:
    """Converged nodal fields and cellwise fluxes of one BVP solve."""
    mesh: Mesh
    phi: np.ndarray
    c1: np.ndarray
    c2: np.ndarray
    J1_cell: np.ndarray
    J2_cell: np.ndarray
    converged: bool
    residual_norm: float
    newton_iterations: int
    problem: SteadyProblem = field(repr=False, default=None)


def _bernoulli(z):
    """B(z) = z/(e^z - 1), with series near 0 and saturation guards."""
    z = np.asarray(z, dtype=float)
    out = np.empty_like(z)
    small = np.abs(z) < 1e-5
    zs = z[small]
    out[small] = 1.0 - zs / 2.0 + zs**2 / 12.0
    zb = np.clip(z[~small], -500.0, 500.0)
    out[~small] = zb / np.expm1(zb)
    return out


def _bernoulli_prime(z):
    """dB/dz with the same guards."""
    z = np.asarray(z, dtype=float)
    out = np.empty_like(z)
    small = np.abs(z) < 1e-5
    zs = z[small]
    out[small] = -0.5 + zs / 6.0 - zs**3 / 180.0
    zb = np.clip(z[~small], -500.0, 500.0)
    em = np.expm1(zb)
    out[~small] = (em - zb * (em + 1.0)) / em**2
    return out


def _face_h(profile: ChannelProfile, nodes: np.ndarray) -> np.ndarray:
    """Harmonic average of h over each cell, h_f = dx / int_cell 1/h,
    by fixed Gauss quadrature (exact enough that the electroneutral
    equal-k family is a nodal fixed point of the scheme for any h)."""
    xl, dx = nodes[:-1], np.diff(nodes)
    pts = xl[:, None] + dx[:, None] * _GL_POINTS[None, :]
    inv_avg = (_GL_WEIGHTS[None, :] / profile.h(pts)).sum(axis=1)
    return 1.0 / inv_avg


class _Discretization:
    """Geometry-dependent arrays and residual/Jacobian assembly."""

    def __init__(self, problem: SteadyProblem, mesh: Mesh):
        sp, bd = problem.species, problem.boundary
        self.a1, self.a2 = sp.alpha1, sp.alpha2
        self.mesh = mesh
        x = mesh.nodes
        self.dx = np.diff(x)                      # cell widths, len N
        self.d = 0.5 * (x[2:] - x[:-2])           # dual widths, len N-1
        self.hf = _face_h(problem.profile, x)     # face-averaged h, len N
        self.hn = problem.profile.h(x)            # nodal h, len N+1
        self.n_int = x.size - 2
        self.bc_left = np.array([bd.phi0, bd.l1, bd.l2])
        self.bc_right = np.array([0.0, bd.r1, bd.r2])

    def full_fields(self, U: np.ndarray):
        n = self.n_int
        phi = np.concatenate([[self.bc_left[0]], U[0::3], [self.bc_right[0]]])
        c1 = np.concatenate([[self.bc_left[1]], U[1::3], [self.bc_right[1]]])
        c2 = np.concatenate([[self.bc_left[2]], U[2::3], [self.bc_right[2]]])
        assert phi.size == n + 2
        return phi, c1, c2

    def face_fluxes(self, phi, c1, c2):
        dphi = np.diff(phi)
        z1 = self.a1 * dphi
        z2 = -self.a2 * dphi
        g = self.hf / self.dx
        J1 = g * (_bernoulli(z1) * c1[:-1] - _bernoulli(-z1) * c1[1:])
        J2 = g * (_bernoulli(z2) * c2[:-1] - _bernoulli(-z2) * c2[1:])
        return J1, J2

    def residual(self, U: np.ndarray, mu: float) -> np.ndarray:
        phi, c1, c2 = self.full_fields(U)
        P = mu**2 * self.hf * np.diff(phi) / self.dx
        J1, J2 = self.face_fluxes(phi, c1, c2)
        F = np.empty(3 * self.n_int)
        charge = self.hn[1:-1] * (self.a1 * c1[1:-1] - self.a2 * c2[1:-1])
        F[0::3] = np.diff(P) / self.d + charge
        F[1::3] = np.diff(J1)
        F[2::3] = np.diff(J2)
        return F

    def jacobian(self, U: np.ndarray, mu: float) -> sparse.csc_matrix:
        n = self.n_int
        phi, c1, c2 = self.full_fields(U)
        dphi = np.diff(phi)
        g = self.hf / self.dx
        z1, z2 = self.a1 * dphi, -self.a2 * dphi
        B1p, B1m = _bernoulli(z1), _bernoulli(-z1)
        B2p, B2m = _bernoulli(z2), _bernoulli(-z2)
        # dJ/dphi_right on each face (minus that for phi_left)
        G1 = g * self.a1 * (_bernoulli_prime(z1) * c1[:-1] + _bernoulli_prime(-z1) * c1[1:])
        G2 = -g * self.a2 * (_bernoulli_prime(z2) * c2[:-1] + _bernoulli_prime(-z2) * c2[1:])
        pcoef = mu**2 * g                          # Poisson face conductances

        rows, cols, vals = [], [], []

        def add(r, c, v, keep):
            rows.append(r[keep])
            cols.append(c[keep])
            vals.append(v[keep])

        i = np.arange(1, n + 1)                    # interior node index
        rphi, rc1, rc2 = 3 * (i - 1), 3 * (i - 1) + 1, 3 * (i - 1) + 2
        cphi = lambda j: 3 * (j - 1)
        interior = lambda j: (j >= 1) & (j <= n)

        # Poisson rows
        d = self.d
        add(rphi, cphi(i - 1), pcoef[i - 1] / d, interior(i - 1))
        add(rphi, cphi(i), -(pcoef[i] + pcoef[i - 1]) / d, interior(i))
        add(rphi, cphi(i + 1), pcoef[i] / d, interior(i + 1))
        add(rphi, cphi(i) + 1, np.full(n, 0.0) + self.hn[i] * self.a1, interior(i))
        add(rphi, cphi(i) + 2, np.full(n, 0.0) - self.hn[i] * self.a2, interior(i))

        # species rows: R = J[i] - J[i-1]
        for rsp, Bp, Bm, G, off in ((rc1, B1p, B1m, G1, 1), (rc2, B2p, B2m, G2, 2)):
            add(rsp, cphi(i - 1) + off, -g[i - 1] * Bp[i - 1], interior(i - 1))
            add(rsp, cphi(i) + off, g[i] * Bp[i] + g[i - 1] * Bm[i - 1], interior(i))
            add(rsp, cphi(i + 1) + off, -g[i] * Bm[i], interior(i + 1))
            add(rsp, cphi(i - 1), G[i - 1], interior(i - 1))
            add(rsp, cphi(i), -G[i] - G[i - 1], interior(i))
            add(rsp, cphi(i + 1), G[i], interior(i + 1))

        A = sparse.coo_matrix(
            (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
            shape=(3 * n, 3 * n))
        return A.tocsc()


def _initial_guess(problem: SteadyProblem, mesh: Mesh, mode: str,
                   target_mu: float) -> np.ndarray:
    x = mesh.nodes[1:-1]
    bd = problem.boundary
    if mode == "singular-orbit-composite":
        orbit = steady.singular_orbit(
            SteadyProblem(problem.profile, problem.species, bd, mu=target_mu))
        phi, c1, c2 = orbit.phi(x), orbit.c1(x), orbit.c2(x)
        c1, c2 = np.maximum(c1, 1e-12), np.maximum(c2, 1e-12)
    else:
        phi = bd.phi0 * (1.0 - x)
        c1 = bd.l1 + (bd.r1 - bd.l1) * x
        c2 = bd.l2 + (bd.r2 - bd.l2) * x
    U = np.empty(3 * x.size)
    U[0::3], U[1::3], U[2::3] = phi, c1, c2
    return U


def _continuation_schedule(target_mu: float, opts: SolverOptions) -> list:
    if target_mu >= opts.mu_start:
        return [target_mu]
    mus = [opts.mu_start]
    while mus[-1] * opts.continuation_ratio > target_mu * (1.0 + 1e-12):
        mus.append(mus[-1] * opts.continuation_ratio)
    mus.append(target_mu)
    return mus


def _newton(disc: _Discretization, U: np.ndarray, mu: float, scale: float,
            opts: SolverOptions):
    # Residual rows are judged relative to their Jacobian row norms (times a
    # field scale): on strongly graded meshes the Poisson rows carry factors
    # ~mu^2/dx_min^2, so an absolute norm would stall at its roundoff floor.
    def weights(A):
        row_max = np.abs(A).max(axis=1).toarray().ravel()
        return np.maximum(1.0, row_max * scale)

    F = disc.residual(U, mu)
    for it in range(opts.max_newton):
        A = disc.jacobian(U, mu)
        w = weights(A)
        fn = np.max(np.abs(F) / w)
        if fn < opts.newton_tol:
            return U, fn, it
        try:
            step = spsolve(A, -F)
        except RuntimeError as exc:
            raise NonConvergence(f"linear solve failed at mu={mu:g}: {exc}") from exc
        if not np.all(np.isfinite(step)):
            raise NonConvergence(f"singular Newton system at mu={mu:g}")
        t = 1.0
        while True:
            U_new = U + t * step
            F_new = disc.residual(U_new, mu)
            fn_new = np.max(np.abs(F_new) / w)
            if fn_new < fn or t <= opts.min_damping:
                break
            t *= 0.5
        if fn_new >= fn:
            raise NonConvergence(
                f"Newton stalled at mu={mu:g} with residual {fn:g}; "
                "try a smaller continuation ratio or larger N")
        U, F = U_new, F_new
    fn = np.max(np.abs(F) / w)
    if fn >= opts.newton_tol:
        raise NonConvergence(
            f"no convergence in {opts.max_newton} Newton iterations at mu={mu:g} "
            f"(residual {fn:g}); try a smaller continuation ratio")
    return U, fn, opts.max_newton


def solve_steady_bvp(problem: SteadyProblem,
                     options: Optional[SolverOptions] = None) -> DiscreteSolution:
    """Solve the coupled steady system at the problem's mu > 0.

    Continuation runs geometrically from mu_start down to the target on a
    single mesh graded for the target layers, reusing each converged stage
    as the next initial guess.
    """
    opts = options or SolverOptions()
    if problem.mu <= 0:
        raise InvalidProblem("solve_steady_bvp needs mu > 0")
    mesh = build_layer_mesh(opts.N, problem.mu, opts.grading)
    disc = _Discretization(problem, mesh)
    bd = problem.boundary
    scale = max(1.0, disc.a1 * max(bd.l1, bd.r1), disc.a2 * max(bd.l2, bd.r2),
                abs(bd.phi0))

    U = _initial_guess(problem, mesh, opts.initial_guess, problem.mu)
    if opts.initial_guess == "singular-orbit-composite":
        schedule = [problem.mu]        # guess already resolves the target layers
    else:
        schedule = _continuation_schedule(problem.mu, opts)
    total_iters = 0
    fn = math.inf
    for mu in schedule:
        U, fn, iters = _newton(disc, U, mu, scale, opts)
        total_iters += iters

    phi, c1, c2 = disc.full_fields(U)
    J1, J2 = disc.face_fluxes(phi, c1, c2)
    return DiscreteSolution(mesh=mesh, phi=phi, c1=c1, c2=c2,
                            J1_cell=J1, J2_cell=J2, converged=True,
                            residual_norm=float(fn), newton_iterations=total_iters,
                            problem=problem)


def extract_fluxes(solution: DiscreteSolution) -> FluxPair:
    """Mean cellwise fluxes of a converged solution, with Jbar = D*J."""
    if not solution.converged:
        raise NotConverged("flux extraction needs a converged solution")
    sp = solution.problem.species
    J1 = float(np.mean(solution.J1_cell))
    J2 = float(np.mean(solution.J2_cell))
    return FluxPair(J1=J1, J2=J2, Jbar1=sp.D1 * J1, Jbar2=sp.D2 * J2)


@dataclass(frozen=True)
class MuStudyRow:
    mu: float
    J1_num: float
    J2_num: float
    rel_err_vs_theorem: float
    converged: bool
    message: str = ""


@dataclass(frozen=True)
class MuStudyResult:
    rows: tuple
    orders: tuple
    limit: FluxPair


def mu_convergence_study(problem: SteadyProblem, mu_list,
                         options: Optional[SolverOptions] = None) -> MuStudyResult:
    """Solve at each mu and compare extracted fluxes against the
    closed-form limit; empirical orders come from successive error ratios.
    Failed solves are kept as marked rows."""
    mu_list = list(mu_list)
    if any(m <= 0 for m in mu_list) or any(
            mu_list[i] <= mu_list[i + 1] for i in range(len(mu_list) - 1)):
        raise BadParameters("mu_list must be positive and strictly decreasing")
    limit = steady.limiting_fluxes(problem)
    denom = max(abs(limit.J1), abs(limit.J2))
    rows = []
    for mu in mu_list:
        sub = SteadyProblem(problem.profile, problem.species, problem.boundary, mu=mu)
        try:
            fx = extract_fluxes(solve_steady_bvp(sub, options))
        except NonConvergence as exc:
            rows.append(MuStudyRow(mu=mu, J1_num=math.nan, J2_num=math.nan,
                                   rel_err_vs_theorem=math.nan, converged=False,
                                   message=str(exc)))
            continue
        err = max(abs(fx.J1 - limit.J1), abs(fx.J2 - limit.J2))
        rows.append(MuStudyRow(mu=mu, J1_num=fx.J1, J2_num=fx.J2,
                               rel_err_vs_theorem=err / denom if denom > 1e-14 else err,
                               converged=True))
    orders = []
    for lo, hi in zip(rows[:-1], rows[1:]):
        if (lo.converged and hi.converged
                and lo.rel_err_vs_theorem > 0 and hi.rel_err_vs_theorem > 0):
            orders.append(math.log(lo.rel_err_vs_theorem / hi.rel_err_vs_theorem)
                          / math.log(lo.mu / hi.mu))
        else:
            orders.append(math.nan)
    return MuStudyResult(rows=tuple(rows), orders=tuple(orders), limit=limit)
