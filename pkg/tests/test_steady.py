import math

import numpy as np
import pytest

from pnpchannel import geometry, steady
from pnpchannel.errors import InvalidProblem

UNIT = geometry.ChannelProfile.constant(1.0)
SYMMETRIC = steady.IonSpecies(alpha1=1.0, alpha2=1.0, D1=1.0, D2=1.0)


def standard_problem(mu=0.0):
    return steady.SteadyProblem(
        UNIT, SYMMETRIC,
        steady.BoundaryData(phi0=0.0, l1=1.0, l2=1.0, r1=2.0, r2=2.0), mu=mu)


def test_problem_validation():
    with pytest.raises(InvalidProblem):
        steady.IonSpecies(alpha1=1.0, alpha2=1.0, D1=-1.0, D2=1.0)
    with pytest.raises(InvalidProblem):
        steady.BoundaryData(phi0=0.0, l1=-1.0, l2=1.0, r1=1.0, r2=1.0)
    with pytest.raises(InvalidProblem):
        steady.SteadyProblem(UNIT, SYMMETRIC,
                             steady.BoundaryData(phi0=0.0, l1=1.0, l2=1.0,
                                                 r1=1.0, r2=1.0), mu=-0.1)


def test_lambda_mu_correspondence():
    bd = steady.BoundaryData(phi0=0.0, l1=1.0, l2=1.0, r1=1.0, r2=1.0)
    p = steady.SteadyProblem.with_lambda(UNIT, SYMMETRIC, bd, 10000.0)
    assert p.mu == pytest.approx(0.01)
    assert p.lambda_value == pytest.approx(10000.0)
    assert standard_problem().lambda_value == math.inf


def test_log_ratios_standard():
    lr = steady.log_ratios(standard_problem())
    assert lr.a == pytest.approx(math.log(2.0))
    assert lr.b == pytest.approx(math.log(2.0))
    assert lr.s == pytest.approx(math.log(2.0))
    assert lr.gm_left == pytest.approx(1.0)
    assert lr.gm_right == pytest.approx(2.0)


def test_log_ratios_geometric_mean_identity():
    rng = np.random.default_rng(3)
    for _ in range(100):
        sp = steady.IonSpecies(alpha1=rng.uniform(0.5, 3.0),
                               alpha2=rng.uniform(0.5, 3.0),
                               D1=1.0, D2=1.0)
        bd = steady.BoundaryData(phi0=rng.uniform(-2, 2),
                                 l1=rng.uniform(0.1, 5), l2=rng.uniform(0.1, 5),
                                 r1=rng.uniform(0.1, 5), r2=rng.uniform(0.1, 5))
        lr = steady.log_ratios(steady.SteadyProblem(UNIT, sp, bd))
        assert lr.gm_right == pytest.approx(lr.gm_left * math.exp(lr.s),
                                            rel=1e-12)


def test_standard_problem_fluxes():
    fx = steady.limiting_fluxes(standard_problem())
    assert fx.J1 == pytest.approx(-1.0, abs=1e-14)
    assert fx.J2 == pytest.approx(-1.0, abs=1e-14)
    assert fx.Jbar1 == fx.J1 and fx.Jbar2 == fx.J2


def test_zero_s_fluxes_closed_form():
    # a = -ln 2 and b = ln 2 cancel in s, so the s-factor takes its limit
    # value -1 and J1 = 2 (1 + ln 2) exactly
    problem = steady.SteadyProblem(
        UNIT, SYMMETRIC,
        steady.BoundaryData(phi0=1.0, l1=4.0, l2=1.0, r1=2.0, r2=2.0))
    fx = steady.limiting_fluxes(problem)
    assert steady.log_ratios(problem).s == pytest.approx(0.0, abs=1e-15)
    assert fx.J1 == pytest.approx(2.0 * (1.0 + math.log(2.0)), abs=1e-13)
    assert fx.J2 == pytest.approx(-2.0 * (1.0 + math.log(2.0)), abs=1e-13)


def test_equal_charge_fluxes():
    # alpha1 c1 = alpha2 c2 = k on both ends: J_i = k phi0 / rho0 up to sign
    k, phi0 = 1.5, 0.8
    prof = geometry.ChannelProfile.bump(1.0, 0.8, 0.25)
    sp = steady.IonSpecies(alpha1=1.0, alpha2=2.0, D1=1.3, D2=0.7)
    bd = steady.BoundaryData(phi0=phi0, l1=k, l2=k / 2.0, r1=k, r2=k / 2.0)
    fx = steady.limiting_fluxes(steady.SteadyProblem(prof, sp, bd))
    rho0 = geometry.geometry_factor(prof).rho0
    assert fx.J1 == pytest.approx(k * phi0 / rho0, rel=1e-10)
    assert fx.J2 == pytest.approx(-k * phi0 / rho0, rel=1e-10)
    assert fx.Jbar1 == pytest.approx(sp.D1 * k * phi0 / rho0, rel=1e-10)
    assert fx.Jbar2 == pytest.approx(-sp.D2 * k * phi0 / rho0, rel=1e-10)


def test_flux_scales_inversely_with_rho0():
    sp = steady.IonSpecies(alpha1=1.0, alpha2=2.0, D1=1.0, D2=0.5)
    bd = steady.BoundaryData(phi0=0.7, l1=2.0, l2=1.0, r1=1.0, r2=2.0)
    prof = geometry.ChannelProfile.bump(1.0, 0.6, 0.3)
    base = steady.limiting_fluxes(steady.SteadyProblem(prof, sp, bd))
    rho0 = geometry.geometry_factor(prof).rho0
    for factor in (0.5, 2.0, 3.7):
        scaled = prof.scaled(factor)
        fx = steady.limiting_fluxes(steady.SteadyProblem(scaled, sp, bd))
        rs = geometry.geometry_factor(scaled).rho0
        assert fx.J1 * rs == pytest.approx(base.J1 * rho0, rel=1e-10)
        assert fx.J2 * rs == pytest.approx(base.J2 * rho0, rel=1e-10)


def test_s_factor_continuous_through_zero():
    # r1 = e^{2s}, r2 = l = 1 makes J1 = 2 s Phi(s); Phi must continue
    # analytically through the series switchover near s = 0 (below 1e-9 the
    # exp/log round trip in the data itself dominates)
    for s in np.logspace(-9, -4, 11):
        bd = steady.BoundaryData(phi0=0.0, l1=1.0, l2=1.0,
                                 r1=math.exp(2.0 * s), r2=1.0)
        fx = steady.limiting_fluxes(steady.SteadyProblem(UNIT, SYMMETRIC, bd))
        phi_s = fx.J1 / (2.0 * s)
        assert abs(phi_s - (-1.0 - 0.5 * s)) <= 1e-7


def test_boundary_layer_endpoint_neutral_side():
    ep = steady.boundary_layer_endpoint(standard_problem(), "left")
    assert not ep.has_layer
    assert ep.u_amplitude == 0.0
    assert ep.phi_limit == pytest.approx(0.0)
    assert ep.w_limit == pytest.approx(2.0)


def test_boundary_layer_endpoint_charged_side():
    problem = steady.SteadyProblem(
        UNIT, SYMMETRIC,
        steady.BoundaryData(phi0=0.0, l1=4.0, l2=1.0, r1=2.0, r2=2.0))
    left = steady.boundary_layer_endpoint(problem, "left")
    assert left.has_layer
    # radicand 4 + 1 - 2*sqrt(4) = 1, entry carries the sign of the charge
    assert left.u_amplitude == pytest.approx(math.sqrt(2.0), rel=1e-12)
    assert left.phi_limit == pytest.approx(math.log(2.0), rel=1e-12)
    assert left.w_limit == pytest.approx(4.0, rel=1e-12)
    right = steady.boundary_layer_endpoint(problem, "right")
    assert not right.has_layer
    assert right.phi_limit == pytest.approx(0.0)
    assert right.w_limit == pytest.approx(4.0)


def test_regular_layer_standard_problem():
    reg = steady.regular_layer(standard_problem())
    x = np.linspace(0.0, 1.0, 41)
    assert np.max(np.abs(reg.phi(x))) <= 1e-10
    assert np.max(np.abs(reg.c1(x) - (1.0 + x))) <= 1e-10
    assert np.max(np.abs(reg.c2(x) - (1.0 + x))) <= 1e-10
    assert np.max(np.abs(reg.w(x) - 2.0 * (1.0 + x))) <= 1e-10
    assert np.max(np.abs(reg.p(x))) <= 1e-10
    assert reg.rho0 == pytest.approx(1.0, abs=1e-12)


def test_regular_layer_hits_right_landing_point():
    problem = steady.SteadyProblem(
        geometry.ChannelProfile.bump(1.0, 0.5, 0.3),
        steady.IonSpecies(alpha1=1.0, alpha2=2.0, D1=1.0, D2=1.0),
        steady.BoundaryData(phi0=1.0, l1=4.0, l2=1.0, r1=1.0, r2=1.0))
    reg = steady.regular_layer(problem)
    right = steady.boundary_layer_endpoint(problem, "right")
    assert float(reg.w(1.0)) == pytest.approx(right.w_limit, abs=1e-8)
    assert float(reg.phi(1.0)) == pytest.approx(right.phi_limit, abs=1e-8)


def test_regular_layer_electroneutral_combination():
    # alpha1 c1 - alpha2 c2 = 0 along the whole slow orbit
    problem = steady.SteadyProblem(
        UNIT, steady.IonSpecies(alpha1=2.0, alpha2=1.0, D1=1.0, D2=3.0),
        steady.BoundaryData(phi0=0.5, l1=1.0, l2=2.0, r1=1.5, r2=3.0))
    reg = steady.regular_layer(problem)
    x = np.linspace(0.0, 1.0, 31)
    assert np.max(np.abs(2.0 * reg.c1(x) - reg.c2(x))) <= 1e-12


def test_regular_layer_w_endpoints_extreme_contrast():
    # w(x) interpolates between the charge geometric means even under a
    # six-decade concentration contrast; it stays positive throughout
    problem = steady.SteadyProblem(
        UNIT, SYMMETRIC,
        steady.BoundaryData(phi0=0.0, l1=1.0, l2=1.0, r1=1e-6, r2=1e-6))
    reg = steady.regular_layer(problem)
    assert float(reg.w(0.0)) == pytest.approx(2.0, rel=1e-10)
    assert float(reg.w(1.0)) == pytest.approx(2e-6, rel=1e-6)
    x = np.linspace(0.0, 1.0, 101)
    assert np.min(reg.w(x)) > 0.0


def test_singular_orbit_composite_boundary_values():
    problem = steady.SteadyProblem(
        UNIT, SYMMETRIC,
        steady.BoundaryData(phi0=1.0, l1=4.0, l2=1.0, r1=2.0, r2=2.0),
        mu=0.01)
    orbit = steady.singular_orbit(problem)
    assert float(orbit.phi(0.0)) == pytest.approx(1.0, abs=1e-7)
    assert float(orbit.c1(0.0)) == pytest.approx(4.0, abs=1e-6)
    assert float(orbit.c2(0.0)) == pytest.approx(1.0, abs=1e-6)
    assert float(orbit.phi(1.0)) == pytest.approx(0.0, abs=1e-7)
    assert float(orbit.c1(1.0)) == pytest.approx(2.0, abs=1e-6)
    # far from both layers the composite follows the regular layer
    mid = float(orbit.c1(0.5)) - float(orbit.regular.c1(0.5))
    assert abs(mid) <= 1e-7


def test_singular_orbit_skips_neutral_layers():
    orbit = steady.singular_orbit(standard_problem(0.01))
    assert orbit.left_orbit is None and orbit.right_orbit is None
    x = np.linspace(0.0, 1.0, 21)
    assert np.max(np.abs(orbit.c1(x) - (1.0 + x))) <= 1e-10
