"""Channel geometry: area profiles h(x), the thin-domain wall g(X, eps),
coordinate-change Jacobians, and the radial foliation used to extend a
boundary function into the channel interior.

The channel occupies 0 <= x <= 1 with cross-sectional area profile
h(x) = g0(x)^2 > 0.  Two integrals of the profile drive everything else:

    rho0   = int_0^1 1/h dx   (enters every flux denominator)
    volume = int_0^1 h dx     (normalization)
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy import integrate
from scipy.integrate import IntegrationWarning, solve_ivp
from scipy.interpolate import PchipInterpolator

from .errors import (
    BadParameters,
    DegenerateGeometry,
    OutOfDomain,
    QuadratureFailure,
    RootFindFailure,
)

_DOMAIN_EPS = 1e-12
_POSITIVITY_SAMPLES = 1001


class ChannelProfile:
    """Cross-sectional area profile h(x) on [0, 1].

    Four kinds are supported:

    - ``constant``: h(x) = c
    - ``affine``:   h(x) = a + b*x
    - ``bump``:     h(x) = base + amplitude * exp(-(x - 1/2)^2 / (2 width^2))
    - ``sampled``:  shape-preserving (PCHIP) interpolant of positive samples

    Profiles are immutable after construction.  Positivity on [0, 1] is
    checked by sampling at construction; degenerate profiles are rejected.
    """

    __slots__ = ("kind", "params", "_interp", "_interp_deriv")

    def __init__(self, kind: str, params: tuple):
        self.kind = kind
        self.params = params
        self._interp = None
        self._interp_deriv = None
        if kind == "sampled":
            nodes, values = params
            nodes = np.asarray(nodes, dtype=float)
            values = np.asarray(values, dtype=float)
            if nodes.ndim != 1 or nodes.shape != values.shape or nodes.size < 2:
                raise BadParameters("sampled profile needs matching 1-d node/value arrays")
            if np.any(np.diff(nodes) <= 0):
                raise BadParameters("sampled profile nodes must be strictly increasing")
            if nodes[0] > _DOMAIN_EPS or nodes[-1] < 1.0 - _DOMAIN_EPS:
                raise BadParameters("sampled profile nodes must cover [0, 1]")
            self._interp = PchipInterpolator(nodes, values, extrapolate=True)
            self._interp_deriv = self._interp.derivative()
        self._check_positive()

    # -- constructors -------------------------------------------------------

    @classmethod
    def constant(cls, c: float) -> "ChannelProfile":
        return cls("constant", (float(c),))

    @classmethod
    def affine_area(cls, a: float, b: float) -> "ChannelProfile":
        return cls("affine", (float(a), float(b)))

    @classmethod
    def bump(cls, base: float, amplitude: float, width: float) -> "ChannelProfile":
        if width <= 0:
            raise BadParameters(f"bump width must be positive, got {width}")
        return cls("bump", (float(base), float(amplitude), float(width)))

    @classmethod
    def sampled(cls, nodes, values) -> "ChannelProfile":
        return cls("sampled", (tuple(float(v) for v in nodes),
                               tuple(float(v) for v in values)))

    # -- evaluation ---------------------------------------------------------

    def h(self, x):
        """Evaluate h(x); accepts scalars or arrays."""
        x = np.asarray(x, dtype=float)
        if self.kind == "constant":
            out = np.full_like(x, self.params[0])
        elif self.kind == "affine":
            a, b = self.params
            out = a + b * x
        elif self.kind == "bump":
            base, amp, width = self.params
            out = base + amp * np.exp(-((x - 0.5) ** 2) / (2.0 * width**2))
        else:
            out = self._interp(x)
        return float(out) if out.ndim == 0 else out

    def dh(self, x):
        """Evaluate h'(x)."""
        x = np.asarray(x, dtype=float)
        if self.kind == "constant":
            out = np.zeros_like(x)
        elif self.kind == "affine":
            out = np.full_like(x, self.params[1])
        elif self.kind == "bump":
            base, amp, width = self.params
            out = amp * np.exp(-((x - 0.5) ** 2) / (2.0 * width**2)) * (-(x - 0.5) / width**2)
        else:
            out = self._interp_deriv(x)
        return float(out) if out.ndim == 0 else out

    def scaled(self, factor: float) -> "ChannelProfile":
        """Return the profile with h multiplied by a positive factor."""
        if factor <= 0:
            raise DegenerateGeometry(f"scale factor must be positive, got {factor}")
        if self.kind == "constant":
            return ChannelProfile.constant(self.params[0] * factor)
        if self.kind == "affine":
            a, b = self.params
            return ChannelProfile.affine_area(a * factor, b * factor)
        if self.kind == "bump":
            base, amp, width = self.params
            return ChannelProfile.bump(base * factor, amp * factor, width)
        nodes, values = self.params
        return ChannelProfile.sampled(nodes, tuple(v * factor for v in values))

    def _check_positive(self) -> None:
        xs = np.linspace(0.0, 1.0, _POSITIVITY_SAMPLES)
        hmin = float(np.min(self.h(xs)))
        if not math.isfinite(hmin) or hmin <= 0.0:
            raise DegenerateGeometry(
                f"profile {self.kind}{self.params} is nonpositive on [0,1] (min sample {hmin:g})")

    def __repr__(self) -> str:
        return f"ChannelProfile({self.kind!r}, {self.params!r})"


def eval_h(profile: ChannelProfile, x):
    """Evaluate the area profile at x in [0, 1].

    Raises OutOfDomain for positions outside the channel.
    """
    xa = np.asarray(x, dtype=float)
    if np.any(xa < -_DOMAIN_EPS) or np.any(xa > 1.0 + _DOMAIN_EPS):
        raise OutOfDomain(f"position {x} outside the channel interval [0, 1]")
    return profile.h(np.clip(xa, 0.0, 1.0))


@dataclass(frozen=True)
class GeometrySummary:
    """Scalar functionals of a profile: rho0 = int 1/h, volume = int h."""
    rho0: float
    volume_integral: float


def _quad(fun, tol: float, points=None) -> float:
    with warnings.catch_warnings():
        warnings.simplefilter("error", IntegrationWarning)
        try:
            val, _ = integrate.quad(fun, 0.0, 1.0, epsabs=tol, epsrel=tol,
                                    limit=200, points=points)
        except IntegrationWarning as exc:
            raise QuadratureFailure(f"quadrature did not reach tolerance {tol:g}: {exc}") from exc
    return val


def geometry_factor(profile: ChannelProfile, quadrature_tol: float = 1e-10) -> GeometrySummary:
    """Compute rho0 = int_0^1 h^-1 and the volume integral int_0^1 h."""
    points = None
    if profile.kind == "sampled":
        nodes = profile.params[0]
        interior = [t for t in nodes if 0.0 < t < 1.0]
        if len(interior) <= 50:
            points = interior or None
    rho0 = _quad(lambda x: 1.0 / profile.h(x), quadrature_tol, points)
    volume = _quad(profile.h, quadrature_tol, points)
    return GeometrySummary(rho0=rho0, volume_integral=volume)


def normalize_volume(profile: ChannelProfile, quadrature_tol: float = 1e-10) -> ChannelProfile:
    """Rescale the profile so that int_0^1 h = 1."""
    volume = geometry_factor(profile, quadrature_tol).volume_integral
    return profile.scaled(1.0 / volume)


def jacobian_products(g: float, g_x: float, y: float, z: float):
    """Jacobian J of the cylinder-straightening map, its inverse, J J^T,
    and det(J^-1), at a point with wall radius g, slope g_x and
    cross-sectional coordinates (y, z).

    det(J^-1) = g^2 identically; the computed determinant is asserted
    against that value to rounding.
    """
    if g <= 0:
        raise DegenerateGeometry(f"wall radius must be positive, got {g}")
    J = np.array([
        [1.0, 0.0, 0.0],
        [-g_x * y / g, 1.0 / g, 0.0],
        [-g_x * z / g, 0.0, 1.0 / g],
    ])
    J_inv = np.array([
        [1.0, 0.0, 0.0],
        [g_x * y, g, 0.0],
        [g_x * z, 0.0, g],
    ])
    JJt = J @ J.T
    det_J_inv = float(np.linalg.det(J_inv))
    assert abs(det_J_inv - g * g) <= 1e-12 * max(1.0, g * g), \
        f"det(J_inv)={det_J_inv} deviates from g^2={g * g}"
    return J, J_inv, JJt, det_J_inv


@dataclass(frozen=True)
class WallFunction:
    """Wall radius g(X, eps) of the thin tubular domain, at fixed eps.

    ``radius`` and ``radius_deriv`` evaluate g and dg/dX on [0, 1].
    Lemma-style preconditions (positivity, flat ends dg/dX = 0 at X = 0, 1)
    are checked numerically at construction.
    """

    radius: Callable[[float], float]
    radius_deriv: Callable[[float], float]
    eps: float

    def __post_init__(self):
        if self.eps <= 0:
            raise BadParameters(f"wall parameter eps must be positive, got {self.eps}")
        xs = np.linspace(0.0, 1.0, 101)
        gvals = np.array([self.radius(x) for x in xs])
        if np.any(~np.isfinite(gvals)) or np.any(gvals <= 0):
            raise DegenerateGeometry("wall radius must be positive on [0, 1]")
        for end in (0.0, 1.0):
            d = self.radius_deriv(end)
            if abs(d) > 1e-8:
                raise BadParameters(
                    f"wall radius must have zero slope at X={end:g}, got dg/dX={d:g}")

    @classmethod
    def cosine(cls, eps: float, depth: float) -> "WallFunction":
        """g(X) = eps * (1 + depth*(1 - cos(2 pi X))/2); flat at both ends."""
        if depth <= -1.0:
            raise DegenerateGeometry(f"cosine wall depth must exceed -1, got {depth}")
        return cls(
            radius=lambda X: eps * (1.0 + depth * (1.0 - math.cos(2.0 * math.pi * X)) / 2.0),
            radius_deriv=lambda X: eps * depth * math.pi * math.sin(2.0 * math.pi * X),
            eps=eps,
        )


class Foliation:
    """Radial extension H(X, Y, Z) of a boundary function into the channel.

    Characteristics solve dX/dt = -t g'(X)/g(X) with X(0) = X0; evaluating
    H at (X, Y, Z) root-finds the foot point X0 with psi(t, X0) = X for
    t = sqrt(Y^2 + Z^2) and returns h_boundary(X0).  The construction is
    rotation-invariant by definition and constant along wall normals.
    """

    def __init__(self, h_boundary: Callable[[float], float], wall: WallFunction,
                 ode_tol: float = 1e-10, root_tol: float = 1e-10):
        self.h_boundary = h_boundary
        self.wall = wall
        self.ode_tol = ode_tol
        self.root_tol = root_tol

    def _flow(self, t_star: float, x0: float) -> float:
        """psi(t_star, x0): characteristic foot-to-point map."""
        if t_star == 0.0 or x0 in (0.0, 1.0):
            # X = 0 and X = 1 are fixed points (flat wall ends)
            return x0
        sol = solve_ivp(
            lambda t, X: -t * self.wall.radius_deriv(X[0]) / self.wall.radius(X[0]),
            (0.0, t_star), [x0], method="RK45",
            rtol=self.ode_tol, atol=min(self.ode_tol, 1e-12))
        if not sol.success:
            raise RootFindFailure(f"characteristic ODE failed at t={t_star:g}, X0={x0:g}")
        return float(sol.y[0, -1])

    def __call__(self, X: float, Y: float, Z: float) -> float:
        if X < -_DOMAIN_EPS or X > 1.0 + _DOMAIN_EPS:
            raise OutOfDomain(f"axial position {X} outside [0, 1]")
        X = min(max(X, 0.0), 1.0)
        t_star = math.hypot(Y, Z)
        if t_star < 1e-14 or X in (0.0, 1.0):
            return self.h_boundary(X)
        lo, hi = 0.0, 1.0
        f_lo = self._flow(t_star, lo) - X
        f_hi = self._flow(t_star, hi) - X
        if f_lo > 1e-9 or f_hi < -1e-9:
            raise RootFindFailure(
                f"foot-point bracket failed at (X={X:g}, t={t_star:g}); "
                "wall likely violates the flat-end precondition")
        # psi(t, .) is a monotone flow map: plain bisection on [0, 1]
        for _ in range(60):
            mid = 0.5 * (lo + hi)
            f_mid = self._flow(t_star, mid) - X
            if f_mid < 0.0:
                lo = mid
            else:
                hi = mid
            if hi - lo <= self.root_tol:
                break
        return self.h_boundary(0.5 * (lo + hi))


def build_foliation(h_boundary: Callable[[float], float], wall: WallFunction,
                    ode_tol: float = 1e-10, root_tol: float = 1e-10) -> Foliation:
    """Build the radial-foliation evaluator H(X, Y, Z) for a given wall."""
    return Foliation(h_boundary, wall, ode_tol=ode_tol, root_tol=root_tol)
