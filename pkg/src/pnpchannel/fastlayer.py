"""The layer (fast) dynamical system in the 7-dimensional phase space
(phi, u, v, w, J1, J2, tau): vector field with and without the mu-terms,
the six first integrals of the limiting field, eigen-structure on the slow
manifold Z0 = {u = v = 0}, boundary-layer orbit integration from the
boundary manifolds B_L/B_R, and stable/unstable-manifold membership tests.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.integrate import solve_ivp

from . import steady
from .errors import (
    DegenerateGeometry,
    DivergentOrbit,
    EndpointMismatch,
    InvalidProblem,
    LogSingularity,
    NonHyperbolic,
)
from .geometry import ChannelProfile
from .steady import BoundaryData, IonSpecies, Side, SteadyProblem, _as_side


@dataclass(frozen=True)
class FastState:
    """A point of the fast phase space."""
    phi: float
    u: float
    v: float
    w: float
    J1: float
    J2: float
    tau: float

    def as_array(self) -> np.ndarray:
        return np.array([self.phi, self.u, self.v, self.w, self.J1, self.J2, self.tau])

    @classmethod
    def from_array(cls, y) -> "FastState":
        return cls(*(float(c) for c in y))


@dataclass(frozen=True)
class IntegralVector:
    """Values of the six first integrals of the limiting fast field."""
    H1: float
    H2: float
    H3: float
    H4: float
    H5: float
    H6: float


@dataclass(frozen=True)
class EigenData:
    """Hyperbolic splitting data at a slow-manifold equilibrium."""
    lambda_plus: float
    lambda_minus: float
    n_plus: np.ndarray
    n_minus: np.ndarray


@dataclass(frozen=True)
class BoundaryManifoldPoint:
    side: Side
    state: FastState


def _h_at(profile: ChannelProfile, tau: float) -> float:
    h = float(profile.h(tau))
    if h <= 0.0:
        raise DegenerateGeometry(f"h({tau:g}) = {h:g} is not positive")
    return h


def _field_array(y: np.ndarray, profile: ChannelProfile, species: IonSpecies,
                 mu: float) -> np.ndarray:
    phi, u, v, w, J1, J2, tau = y
    a1, a2 = species.alpha1, species.alpha2
    h = _h_at(profile, tau)
    dy = np.empty(7)
    dy[0] = u / h
    dy[1] = v
    dy[2] = u * w
    dy[3] = (a1 * a2 / h**2) * u * v + ((a2 - a1) / h) * u * w
    if mu != 0.0:
        h_tau = float(profile.dh(tau))
        dy[2] += mu * (h_tau / h) * v + mu * (a1 * J1 - a2 * J2)
        dy[3] -= (mu / h) * (a1**2 * J1 + a2**2 * J2)
    dy[4] = 0.0
    dy[5] = 0.0
    dy[6] = mu
    return dy


def fast_field(state: FastState, profile: ChannelProfile, species: IonSpecies,
               mu: float = 0.0) -> FastState:
    """Right-hand side of the fast system; mu = 0 gives the limiting field
    (with tau frozen)."""
    return FastState.from_array(_field_array(state.as_array(), profile, species, mu))


def integrals(state: FastState, profile: ChannelProfile,
              species: IonSpecies) -> IntegralVector:
    """The six conserved quantities of the limiting fast field.

    H1 = w - (a2-a1)v/h - a1 a2 u^2/(2h^2),
    H2 = phi - ln|a1 v/h + w|/a2,  H3 = phi + ln|a2 v/h - w|/a1,
    H4 = J1, H5 = J2, H6 = tau.
    """
    a1, a2 = species.alpha1, species.alpha2
    h = _h_at(profile, state.tau)
    arg2 = a1 * state.v / h + state.w
    arg3 = a2 * state.v / h - state.w
    if abs(arg2) < 1e-300 or abs(arg3) < 1e-300:
        raise LogSingularity("first-integral logarithm evaluated at zero argument")
    return IntegralVector(
        H1=state.w - (a2 - a1) * state.v / h - a1 * a2 * state.u**2 / (2.0 * h**2),
        H2=state.phi - math.log(abs(arg2)) / a2,
        H3=state.phi + math.log(abs(arg3)) / a1,
        H4=state.J1, H5=state.J2, H6=state.tau)


def eigen_normal(equilibrium: FastState, species: IonSpecies,
                 profile: Optional[ChannelProfile] = None) -> EigenData:
    """Eigenvalues +-sqrt(w) and the transverse eigenvectors at a point of
    the slow manifold Z0.

    With no profile the channel is taken as h = 1 and the vectors reduce to
    the textbook display ((+-sqrt(w))^-1, 1, +-sqrt(w), +-(a2-a1)sqrt(w), 0, 0, 0);
    a nonunit h(tau) scales the phi and w components by 1/h, which is what
    the linearization of the limiting field actually requires.
    """
    if equilibrium.w <= 0.0:
        raise NonHyperbolic(f"need w > 0 on Z0, got w = {equilibrium.w:g}")
    scale = max(1.0, abs(equilibrium.w))
    if abs(equilibrium.u) > 1e-12 * scale or abs(equilibrium.v) > 1e-12 * scale:
        raise InvalidProblem("eigen-data requested off the slow manifold (u = v = 0)")
    a1, a2 = species.alpha1, species.alpha2
    h = 1.0 if profile is None else _h_at(profile, equilibrium.tau)
    root = math.sqrt(equilibrium.w)

    def vec(lam: float) -> np.ndarray:
        return np.array([1.0 / (lam * h), 1.0, lam, (a2 - a1) * lam / h, 0.0, 0.0, 0.0])

    return EigenData(lambda_plus=root, lambda_minus=-root,
                     n_plus=vec(root), n_minus=vec(-root))


def boundary_point(boundary: BoundaryData, profile: ChannelProfile,
                   species: IonSpecies, side, u_value: float,
                   J1: float, J2: float) -> BoundaryManifoldPoint:
    """The point of the boundary manifold B_L (tau=0) or B_R (tau=1) with
    the given u and flux values."""
    side = _as_side(side)
    a1, a2 = species.alpha1, species.alpha2
    if side is Side.LEFT:
        c1, c2, h, phi, tau = boundary.l1, boundary.l2, _h_at(profile, 0.0), boundary.phi0, 0.0
    else:
        c1, c2, h, phi, tau = boundary.r1, boundary.r2, _h_at(profile, 1.0), 0.0, 1.0
    state = FastState(phi=phi, u=float(u_value),
                      v=-h * (a1 * c1 - a2 * c2),
                      w=a1**2 * c1 + a2**2 * c2,
                      J1=float(J1), J2=float(J2), tau=tau)
    return BoundaryManifoldPoint(side=side, state=state)


@dataclass(frozen=True)
class LayerOrbit:
    """An integrated boundary-layer orbit in its inner variable xi >= 0
    (xi = x/mu on the left, (1-x)/mu on the right).

    ``state_at`` interpolates the integrated span and extends beyond it by
    the landing equilibrium.  ``integral_drift`` holds max |Hk - Hk(0)|
    over the samples for k = 1, 2, 3.
    """
    side: Side
    xi: np.ndarray
    states: np.ndarray            # shape (7, len(xi))
    terminal_state: FastState
    landing_state: FastState
    terminal_error: float
    integral_drift: tuple
    _dense: object = None
    _span: float = 0.0            # end of the integrated (pre-extension) range

    def state_at(self, xi):
        xi = np.asarray(xi, dtype=float)
        landing = self.landing_state.as_array()
        if self._dense is None:
            out = np.broadcast_to(landing[:, None], (7, xi.size)).copy()
        else:
            clamped = np.clip(xi.ravel(), 0.0, self._span)
            out = np.asarray(self._dense(clamped))
            beyond = xi.ravel() >= self._span
            out[:, beyond] = landing[:, None]
        return out[:, 0] if xi.ndim == 0 else out.reshape((7,) + xi.shape)


def _drift(states: np.ndarray, h: float, species: IonSpecies) -> tuple:
    a1, a2 = species.alpha1, species.alpha2
    phi, u, v, w = states[0], states[1], states[2], states[3]
    H1 = w - (a2 - a1) * v / h - a1 * a2 * u**2 / (2.0 * h**2)
    H2 = phi - np.log(np.abs(a1 * v / h + w)) / a2
    H3 = phi + np.log(np.abs(a2 * v / h - w)) / a1
    return tuple(float(np.max(np.abs(H - H[0]))) for H in (H1, H2, H3))


def integrate_layer(problem: SteadyProblem, side, xi_max: Optional[float] = None,
                    tol: float = 1e-10) -> LayerOrbit:
    """Integrate one boundary-layer orbit of the limiting (mu = 0) fast
    field from its boundary-manifold point to the slow manifold.

    The left layer is integrated forward in xi; the right layer is the
    time-reversed field integrated forward in its own inner variable.
    The initial u comes from the closed-form entry amplitude, so the orbit
    is verified (closest approach to the predicted landing point, conserved
    integrals) rather than shot.  Samples past the closest approach are the
    landing equilibrium; ``terminal_error`` records the approach distance.
    """
    side = _as_side(side)
    endpoint = steady.boundary_layer_endpoint(problem, side)
    fluxes = steady.limiting_fluxes(problem)
    if xi_max is None:
        xi_max = 40.0 / math.sqrt(endpoint.w_limit)
    tau_side = 0.0 if side is Side.LEFT else 1.0
    landing = FastState(phi=endpoint.phi_limit, u=0.0, v=0.0, w=endpoint.w_limit,
                        J1=fluxes.J1, J2=fluxes.J2, tau=tau_side)

    if not endpoint.has_layer:
        xi = np.array([0.0, xi_max])
        states = np.repeat(landing.as_array()[:, None], 2, axis=1)
        return LayerOrbit(side=side, xi=xi, states=states, terminal_state=landing,
                          landing_state=landing, terminal_error=0.0,
                          integral_drift=(0.0, 0.0, 0.0))

    start = boundary_point(problem.boundary, problem.profile, problem.species,
                           side, endpoint.u_amplitude, fluxes.J1, fluxes.J2)
    y0 = start.state.as_array()
    orientation = 1.0 if side is Side.LEFT else -1.0

    def rhs(_, y):
        return orientation * _field_array(y, problem.profile, problem.species, 0.0)

    norm0 = math.hypot(y0[1], y0[2])

    def blow_up(_, y):
        return math.hypot(y[1], y[2]) - 10.0 * norm0

    blow_up.terminal = True
    blow_up.direction = 1.0

    # Roundoff seeded near the boundary grows along the unstable saddle
    # direction at rate +sqrt(w*), so |(u,v)| bottoms out near
    # sqrt(rtol)*|(u,v)(0)| and then rebounds.  Integrate tighter than
    # requested, truncate the orbit at its closest approach to the slow
    # manifold, and extend by the landing equilibrium beyond it.
    rtol_int = min(tol, 1e-13)
    sol = solve_ivp(rhs, (0.0, xi_max), y0, method="RK45",
                    rtol=rtol_int, atol=min(tol * 1e-3, 1e-15),
                    dense_output=True, events=blow_up)
    if not sol.success and sol.status != 1:
        raise DivergentOrbit(f"{side.value} layer integration failed: {sol.message}")

    end = float(sol.t[-1])
    fine = np.linspace(0.0, end, 4001)
    amp = np.hypot(*np.asarray(sol.sol(fine))[1:3])
    i_min = int(np.argmin(amp))
    if amp[i_min] > 0.2 * norm0:
        raise DivergentOrbit(
            f"{side.value} layer orbit never approached the slow manifold "
            f"(min |(u,v)| = {amp[i_min]:g} from {norm0:g}); wrong entry sign?")
    span = float(fine[i_min]) if i_min > 0 else end

    xi = np.linspace(0.0, span, 800)
    states = np.asarray(sol.sol(xi))
    last = states[:, -1]
    if span < xi_max - 1e-12:
        xi = np.concatenate([xi, [xi_max]])
        states = np.column_stack([states, landing.as_array()])

    terminal_error = float(np.max(np.abs(last[:4] - landing.as_array()[:4])))
    threshold = max(100.0 * tol, 5e-4 * max(1.0, norm0, endpoint.w_limit))
    if terminal_error > threshold:
        raise EndpointMismatch(
            f"{side.value} layer closest approach {terminal_error:g} exceeds "
            f"{threshold:g}; landing-point formulas inconsistent with the orbit")

    h_side = float(problem.profile.h(tau_side))
    return LayerOrbit(side=side, xi=xi, states=states,
                      terminal_state=FastState.from_array(states[:, -1]),
                      landing_state=landing, terminal_error=terminal_error,
                      integral_drift=_drift(states[:, :800], h_side, problem.species),
                      _dense=sol.sol, _span=span)


def manifold_membership(state: FastState, equilibrium: FastState,
                        profile: ChannelProfile, species: IonSpecies,
                        tol: float) -> bool:
    """Whether ``state`` lies on W^s or W^u of the given Z0 equilibrium,
    tested through the first-integral characterization."""
    if equilibrium.w <= 0.0:
        raise NonHyperbolic(f"need w > 0 on Z0, got w = {equilibrium.w:g}")
    a1, a2 = species.alpha1, species.alpha2
    H = integrals(state, profile, species)
    targets = (
        (H.H1, equilibrium.w),
        (H.H2, equilibrium.phi - math.log(equilibrium.w) / a2),
        (H.H3, equilibrium.phi + math.log(equilibrium.w) / a1),
        (H.H4, equilibrium.J1),
        (H.H5, equilibrium.J2),
        (H.H6, equilibrium.tau),
    )
    return all(abs(got - want) <= tol for got, want in targets)
