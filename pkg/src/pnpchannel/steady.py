"""Singular (mu -> 0) steady-state structure of the 1D channel system:
closed-form limiting fluxes, boundary-layer endpoint data, the
electroneutral regular layer, and the assembled singular orbit with
composite field evaluators.

Scaled fluxes J1, J2 are the physical flux densities divided by the
diffusivities: Jbar_i = D_i * J_i.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
from scipy.integrate import solve_ivp

from .errors import EndpointMismatch, InvalidProblem, NonpositiveW
from .geometry import ChannelProfile, geometry_factor

_S_SERIES_CUTOFF = 1e-8
_ZERO_SUM_CUTOFF = 1e-10


class Side(enum.Enum):
    LEFT = "left"
    RIGHT = "right"


def _as_side(side) -> Side:
    if isinstance(side, Side):
        return side
    return Side(str(side).lower())


@dataclass(frozen=True)
class IonSpecies:
    """Valences (alpha1 cation, alpha2 anion magnitude) and diffusivities."""
    alpha1: float
    alpha2: float
    D1: float
    D2: float

    def __post_init__(self):
        for name in ("alpha1", "alpha2", "D1", "D2"):
            val = getattr(self, name)
            if not (val > 0 and math.isfinite(val)):
                raise InvalidProblem(f"species field {name} must be positive, got {val}")


@dataclass(frozen=True)
class BoundaryData:
    """Left potential phi0 and the four boundary concentrations."""
    phi0: float
    l1: float
    l2: float
    r1: float
    r2: float

    def __post_init__(self):
        if not math.isfinite(self.phi0):
            raise InvalidProblem(f"phi0 must be finite, got {self.phi0}")
        for name in ("l1", "l2", "r1", "r2"):
            val = getattr(self, name)
            if not (val > 0 and math.isfinite(val)):
                raise InvalidProblem(f"boundary concentration {name} must be positive, got {val}")


@dataclass(frozen=True)
class SteadyProblem:
    profile: ChannelProfile
    species: IonSpecies
    boundary: BoundaryData
    mu: float = 0.0

    def __post_init__(self):
        if not (self.mu >= 0 and math.isfinite(self.mu)):
            raise InvalidProblem(f"mu must be nonnegative and finite, got {self.mu}")

    @property
    def lambda_value(self) -> float:
        """Poisson coupling strength lambda = 1/mu^2 (inf at mu = 0)."""
        return math.inf if self.mu == 0.0 else 1.0 / self.mu**2

    @classmethod
    def with_lambda(cls, profile, species, boundary, lam: float) -> "SteadyProblem":
        if not (lam > 0 and math.isfinite(lam)):
            raise InvalidProblem(f"lambda must be positive and finite, got {lam}")
        return cls(profile, species, boundary, mu=1.0 / math.sqrt(lam))


@dataclass(frozen=True)
class LogRatioData:
    """Log concentration ratios and boundary geometric means.

    a = ln(r1/l1), b = ln(r2/l2), s = (alpha2*a + alpha1*b)/(alpha1+alpha2);
    gm_left/gm_right are the charge-weighted geometric means of the boundary
    concentrations.  gm_right = gm_left * e^s identically.
    """
    a: float
    b: float
    s: float
    gm_left: float
    gm_right: float


def _charge_geometric_mean(species: IonSpecies, c1: float, c2: float) -> float:
    a1, a2 = species.alpha1, species.alpha2
    return math.exp((a2 * math.log(a1 * c1) + a1 * math.log(a2 * c2)) / (a1 + a2))


def log_ratios(problem: SteadyProblem) -> LogRatioData:
    bd, sp = problem.boundary, problem.species
    a = math.log(bd.r1 / bd.l1)
    b = math.log(bd.r2 / bd.l2)
    s = (sp.alpha2 * a + sp.alpha1 * b) / (sp.alpha1 + sp.alpha2)
    gm_left = _charge_geometric_mean(sp, bd.l1, bd.l2)
    gm_right = _charge_geometric_mean(sp, bd.r1, bd.r2)
    assert abs(gm_right - gm_left * math.exp(s)) <= 1e-12 * max(gm_right, gm_left), \
        "geometric-mean identity gm_right = gm_left * e^s violated"
    return LogRatioData(a=a, b=b, s=s, gm_left=gm_left, gm_right=gm_right)


@dataclass(frozen=True)
class FluxPair:
    """Scaled fluxes J_i and physical fluxes Jbar_i = D_i * J_i."""
    J1: float
    J2: float
    Jbar1: float
    Jbar2: float


def _phi_factor(s: float) -> float:
    """(1 - e^s)/s, continued by -1 at s = 0."""
    if abs(s) < _S_SERIES_CUTOFF:
        return -1.0 - 0.5 * s
    return -math.expm1(s) / s


def limiting_fluxes(problem: SteadyProblem, quadrature_tol: float = 1e-10) -> FluxPair:
    """Closed-form limiting (mu -> 0) flux densities.

    Uses the numerically stable form J1 = (a - alpha1*phi0) * gm_left *
    Phi(s) / (alpha1 * rho0) with Phi(s) = (1 - e^s)/s, which agrees with
    the direct quotient of boundary geometric means for s != 0 and extends
    it continuously through s = 0.
    """
    sp, bd = problem.species, problem.boundary
    lr = log_ratios(problem)
    rho0 = geometry_factor(problem.profile, quadrature_tol).rho0
    phi_s = _phi_factor(lr.s)
    J1 = (lr.a - sp.alpha1 * bd.phi0) * lr.gm_left * phi_s / (sp.alpha1 * rho0)
    J2 = (lr.b + sp.alpha2 * bd.phi0) * lr.gm_left * phi_s / (sp.alpha2 * rho0)
    return FluxPair(J1=J1, J2=J2, Jbar1=sp.D1 * J1, Jbar2=sp.D2 * J2)


@dataclass(frozen=True)
class BoundaryLayerEndpoint:
    """Entry amplitude and slow-manifold landing data of one boundary layer."""
    side: Side
    u_amplitude: float
    phi_limit: float
    w_limit: float
    has_layer: bool


def boundary_layer_endpoint(problem: SteadyProblem, side) -> BoundaryLayerEndpoint:
    """Layer entry value of u and the landing values (phi, w) on the slow
    manifold for the requested side.

    An electroneutral side (alpha1*c1 = alpha2*c2) carries no layer and
    gets u_amplitude = 0.
    """
    side = _as_side(side)
    sp, bd = problem.species, problem.boundary
    a1, a2 = sp.alpha1, sp.alpha2
    if side is Side.LEFT:
        c1b, c2b = bd.l1, bd.l2
        hb = problem.profile.h(0.0)
        sign = -math.copysign(1.0, a2 * c2b - a1 * c1b)
        phi_limit = bd.phi0 + math.log(a1 * c1b / (a2 * c2b)) / (a1 + a2)
    else:
        c1b, c2b = bd.r1, bd.r2
        hb = problem.profile.h(1.0)
        sign = math.copysign(1.0, a2 * c2b - a1 * c1b)
        phi_limit = math.log(a1 * c1b / (a2 * c2b)) / (a1 + a2)
    gm = _charge_geometric_mean(sp, c1b, c2b)
    # weighted AM-GM makes the radicand nonnegative; clamp rounding noise
    radicand = max(c1b + c2b - (a1 + a2) * gm / (a1 * a2), 0.0)
    neutral = abs(a1 * c1b - a2 * c2b) <= 1e-14 * max(a1 * c1b, a2 * c2b)
    u_amp = 0.0 if neutral else sign * math.sqrt(2.0) * hb * math.sqrt(radicand)
    return BoundaryLayerEndpoint(
        side=side, u_amplitude=u_amp, phi_limit=phi_limit,
        w_limit=(a1 + a2) * gm, has_layer=not neutral)


@dataclass(frozen=True)
class RegularLayer:
    """Electroneutral slow orbit connecting the two layer landing points.

    Evaluators w, phi, p, c1, c2 act on x in [0, 1] (scalar or array).
    p(x) = (alpha2*J2 - alpha1*J1)/w(x) is the scaled potential slope
    carried by the slow flow.
    """
    nu0: float
    w0: float
    tau0: float
    fluxes: FluxPair
    rho0: float
    w: Callable
    phi: Callable
    p: Callable
    c1: Callable
    c2: Callable


def _inverse_area_integral(profile: ChannelProfile):
    """Dense evaluator of R(x) = int_0^x 1/h, built once per problem."""
    sol = solve_ivp(lambda x, _: [1.0 / profile.h(x)], (0.0, 1.0), [0.0],
                    method="RK45", rtol=1e-12, atol=1e-14, dense_output=True)
    dense = sol.sol

    def R(x):
        x = np.asarray(x, dtype=float)
        out = dense(np.clip(x.ravel(), 0.0, 1.0))[0]
        return float(out[0]) if x.ndim == 0 else out.reshape(x.shape)

    return R, float(sol.y[0, -1])


def regular_layer(problem: SteadyProblem, quadrature_tol: float = 1e-10) -> RegularLayer:
    """Slow-manifold (outer) solution determined by the limiting fluxes."""
    sp = problem.species
    a1, a2 = sp.alpha1, sp.alpha2
    fluxes = limiting_fluxes(problem, quadrature_tol)
    left = boundary_layer_endpoint(problem, Side.LEFT)
    right = boundary_layer_endpoint(problem, Side.RIGHT)
    R, rho0 = _inverse_area_integral(problem.profile)

    nu0, w0 = left.phi_limit, left.w_limit
    ksum = a1 * a2 * (fluxes.J1 + fluxes.J2)
    pdiff = a2 * fluxes.J2 - a1 * fluxes.J1

    def w(x):
        return w0 - ksum * R(x)

    # w is linear in R(x), hence monotone: endpoint positivity suffices
    if w0 <= 0 or w0 - ksum * rho0 <= 0:
        raise NonpositiveW(
            f"slow-layer density w reaches {min(w0, w0 - ksum * rho0):g} <= 0")

    if abs(ksum * rho0 / w0) < _ZERO_SUM_CUTOFF:
        def phi(x):
            return nu0 + (pdiff / w0) * R(x)
    else:
        def phi(x):
            return nu0 - (pdiff / ksum) * np.log(np.abs(1.0 - ksum * R(x) / w0))

    def p(x):
        return pdiff / w(x)

    def c1(x):
        return w(x) / (a1 * (a1 + a2))

    def c2(x):
        return w(x) / (a2 * (a1 + a2))

    w_end, phi_end = float(w(1.0)), float(phi(1.0))
    if abs(w_end - right.w_limit) > 1e-8 or abs(phi_end - right.phi_limit) > 1e-8:
        raise EndpointMismatch(
            f"slow orbit misses the right landing point: "
            f"w(1)={w_end:.12g} vs {right.w_limit:.12g}, "
            f"phi(1)={phi_end:.12g} vs {right.phi_limit:.12g}")

    return RegularLayer(nu0=nu0, w0=w0, tau0=0.0, fluxes=fluxes, rho0=rho0,
                        w=w, phi=phi, p=p, c1=c1, c2=c2)


@dataclass(frozen=True)
class SingularOrbit:
    """Assembled zeroth-order orbit: two boundary layers plus the regular
    layer, with matched composite evaluators for phi, c1, c2 at a given mu.
    """
    mu: float
    fluxes: FluxPair
    regular: RegularLayer
    left_endpoint: BoundaryLayerEndpoint
    right_endpoint: BoundaryLayerEndpoint
    left_orbit: Optional[object]
    right_orbit: Optional[object]
    phi: Callable
    c1: Callable
    c2: Callable


def _layer_fields(orbit, species, h_boundary):
    """Map an integrated layer orbit to (phi, c1, c2) evaluators of the
    inner variable, recovering concentrations from (v, w)."""
    a1, a2 = species.alpha1, species.alpha2

    def fields(xi):
        state = orbit.state_at(xi)
        phi, v, w = state[0], state[2], state[3]
        c1 = (w - a2 * v / h_boundary) / (a1 * (a1 + a2))
        c2 = (w + a1 * v / h_boundary) / (a2 * (a1 + a2))
        return phi, c1, c2

    return fields


def singular_orbit(problem: SteadyProblem, quadrature_tol: float = 1e-10,
                   xi_max: Optional[float] = None, layer_tol: float = 1e-10) -> SingularOrbit:
    """Assemble the full singular orbit and composite field evaluators.

    The composite approximation is outer + inner - common limit on each
    side, with inner corrections evaluated at xi = x/mu (left) and
    (1 - x)/mu (right) and extended by their equilibrium values beyond the
    integrated span.  At mu = 0 the composite reduces to the regular layer.
    """
    from . import fastlayer  # deferred: fastlayer imports this module

    reg = regular_layer(problem, quadrature_tol)
    left = boundary_layer_endpoint(problem, Side.LEFT)
    right = boundary_layer_endpoint(problem, Side.RIGHT)
    sp = problem.species
    mu = problem.mu

    left_orbit = right_orbit = None
    left_fields = right_fields = None
    if left.has_layer:
        left_orbit = fastlayer.integrate_layer(problem, Side.LEFT,
                                               xi_max=xi_max, tol=layer_tol)
        left_fields = _layer_fields(left_orbit, sp, problem.profile.h(0.0))
    if right.has_layer:
        right_orbit = fastlayer.integrate_layer(problem, Side.RIGHT,
                                                xi_max=xi_max, tol=layer_tol)
        right_fields = _layer_fields(right_orbit, sp, problem.profile.h(1.0))

    a1, a2 = sp.alpha1, sp.alpha2
    limits = {
        "left": (left.phi_limit, left.w_limit / (a1 * (a1 + a2)),
                 left.w_limit / (a2 * (a1 + a2))),
        "right": (right.phi_limit, right.w_limit / (a1 * (a1 + a2)),
                  right.w_limit / (a2 * (a1 + a2))),
    }

    def _composite(component: int):
        outer = (reg.phi, reg.c1, reg.c2)[component]

        def evaluate(x):
            x = np.asarray(x, dtype=float)
            total = np.asarray(outer(x), dtype=float).copy()
            if mu > 0.0:
                if left_fields is not None:
                    total += left_fields(x / mu)[component] - limits["left"][component]
                if right_fields is not None:
                    total += right_fields((1.0 - x) / mu)[component] - limits["right"][component]
            return float(total) if total.ndim == 0 else total

        return evaluate

    return SingularOrbit(
        mu=mu, fluxes=reg.fluxes, regular=reg,
        left_endpoint=left, right_endpoint=right,
        left_orbit=left_orbit, right_orbit=right_orbit,
        phi=_composite(0), c1=_composite(1), c2=_composite(2))
