import numpy as np
import pytest

from pnpchannel import bvp, geometry, steady
from pnpchannel.errors import BadParameters, NonConvergence, NotConverged

UNIT = geometry.ChannelProfile.constant(1.0)
SYMMETRIC = steady.IonSpecies(alpha1=1.0, alpha2=1.0, D1=1.0, D2=1.0)


def standard_problem(mu):
    return steady.SteadyProblem(
        UNIT, SYMMETRIC,
        steady.BoundaryData(phi0=0.0, l1=1.0, l2=1.0, r1=2.0, r2=2.0), mu=mu)


def layered_problem(mu):
    return steady.SteadyProblem(
        UNIT, steady.IonSpecies(alpha1=1.0, alpha2=2.0, D1=1.0, D2=1.0),
        steady.BoundaryData(phi0=1.0, l1=4.0, l2=1.0, r1=1.0, r2=1.0), mu=mu)


# -- meshes ------------------------------------------------------------------

def test_layer_mesh_basic_structure():
    mesh = bvp.build_layer_mesh(801, 0.01)
    assert mesh.nodes[0] == 0.0 and mesh.nodes[-1] == 1.0
    assert mesh.n_cells == 801
    assert np.all(np.diff(mesh.nodes) > 0)
    # graded symmetrically about the midpoint
    assert np.max(np.abs(mesh.nodes + mesh.nodes[::-1] - 1.0)) <= 1e-14


def test_layer_mesh_concentrates_in_layers():
    mu = 0.01
    mesh = bvp.build_layer_mesh(801, mu)
    width = 8.0 * mu
    frac = np.count_nonzero(mesh.nodes <= width) / mesh.nodes.size
    assert frac >= 0.2
    uniform_frac = width  # a uniform mesh would put only this share there
    assert frac > 3.0 * uniform_frac


def test_layer_mesh_uniform_fallback_for_large_mu():
    mesh = bvp.build_layer_mesh(101, 0.2)
    spacings = np.diff(mesh.nodes)
    assert np.max(spacings) - np.min(spacings) <= 1e-12


def test_layer_mesh_rejects_bad_parameters():
    with pytest.raises(BadParameters):
        bvp.build_layer_mesh(5, 0.01)
    with pytest.raises(BadParameters):
        bvp.build_layer_mesh(101, -0.1)
    with pytest.raises(BadParameters):
        bvp.build_layer_mesh(101, 0.01, grading="cubic")


def test_solver_options_validation():
    with pytest.raises(BadParameters):
        bvp.SolverOptions(N=4)
    with pytest.raises(BadParameters):
        bvp.SolverOptions(continuation_ratio=1.5)
    with pytest.raises(BadParameters):
        bvp.SolverOptions(initial_guess="random")


# -- steady solves -----------------------------------------------------------

def test_standard_problem_solved_exactly():
    # electroneutral data with zero bias: phi = 0, c = 1 + x solves the
    # discrete system at every mu, so the solver reproduces it to rounding
    sol = bvp.solve_steady_bvp(standard_problem(0.02),
                               bvp.SolverOptions(N=201))
    assert sol.converged
    x = sol.mesh.nodes
    assert np.max(np.abs(sol.phi)) <= 1e-10
    assert np.max(np.abs(sol.c1 - (1.0 + x))) <= 1e-10
    assert np.max(np.abs(sol.c2 - (1.0 + x))) <= 1e-10
    fx = bvp.extract_fluxes(sol)
    assert fx.J1 == pytest.approx(-1.0, abs=1e-10)
    assert fx.J2 == pytest.approx(-1.0, abs=1e-10)


@pytest.mark.parametrize("mu", [0.1, 0.01])
def test_equal_charge_data_reproduced_to_rounding(mu):
    k, phi0 = 1.5, 1.0
    prof = geometry.ChannelProfile.bump(1.0, 0.8, 0.25)
    sp = steady.IonSpecies(alpha1=1.0, alpha2=2.0, D1=1.0, D2=1.0)
    bd = steady.BoundaryData(phi0=phi0, l1=k, l2=k / 2.0, r1=k, r2=k / 2.0)
    problem = steady.SteadyProblem(prof, sp, bd, mu=mu)
    sol = bvp.solve_steady_bvp(problem, bvp.SolverOptions(N=201))
    reg = steady.regular_layer(problem)
    assert np.max(np.abs(sol.c1 - k)) <= 1e-6
    assert np.max(np.abs(sol.c2 - k / 2.0)) <= 1e-6
    assert np.max(np.abs(sol.phi - reg.phi(sol.mesh.nodes))) <= 1e-6
    fx = bvp.extract_fluxes(sol)
    lim = steady.limiting_fluxes(problem)
    assert fx.J1 == pytest.approx(lim.J1, rel=1e-6)
    assert fx.J2 == pytest.approx(lim.J2, rel=1e-6)


def test_zero_bias_symmetric_data_carries_no_flux():
    problem = steady.SteadyProblem(
        UNIT, steady.IonSpecies(alpha1=1.0, alpha2=2.0, D1=1.0, D2=1.0),
        steady.BoundaryData(phi0=0.0, l1=2.0, l2=1.0, r1=2.0, r2=1.0),
        mu=0.05)
    fx = bvp.extract_fluxes(
        bvp.solve_steady_bvp(problem, bvp.SolverOptions(N=201)))
    assert abs(fx.J1) <= 1e-8
    assert abs(fx.J2) <= 1e-8


def test_discrete_max_principle_for_charge():
    problem = layered_problem(0.02)
    sol = bvp.solve_steady_bvp(problem, bvp.SolverOptions(N=201))
    sp = problem.species
    M = max(sp.alpha1 * 4.0, sp.alpha2 * 1.0, sp.alpha1 * 1.0,
            sp.alpha2 * 1.0)
    worst = max(np.max(sp.alpha1 * sol.c1), np.max(sp.alpha2 * sol.c2))
    assert worst <= M + 1e-8
    assert min(np.min(sol.c1), np.min(sol.c2)) > 0.0


def test_flux_constant_across_cells():
    sol = bvp.solve_steady_bvp(layered_problem(0.02),
                               bvp.SolverOptions(N=201))
    assert np.ptp(sol.J1_cell) <= 1e-6
    assert np.ptp(sol.J2_cell) <= 1e-6


def test_mesh_refinement_changes_flux_below_tenth_percent():
    problem = layered_problem(0.01)
    f_coarse = bvp.extract_fluxes(
        bvp.solve_steady_bvp(problem, bvp.SolverOptions(N=401)))
    f_fine = bvp.extract_fluxes(
        bvp.solve_steady_bvp(problem, bvp.SolverOptions(N=801)))
    assert abs(f_fine.J1 - f_coarse.J1) / abs(f_fine.J1) <= 1e-3
    assert abs(f_fine.J2 - f_coarse.J2) / abs(f_fine.J2) <= 1e-3


def test_flux_error_shrinks_linearly_in_mu():
    study = bvp.mu_convergence_study(layered_problem(0.0),
                                     [0.04, 0.02, 0.01],
                                     bvp.SolverOptions(N=401))
    errs = [row.rel_err_vs_theorem for row in study.rows]
    assert errs[0] > errs[1] > errs[2]
    for order in study.orders:
        assert 0.7 <= order <= 1.3


def test_mu_study_on_exactly_reproduced_data():
    # no resolvable error at any mu, hence no empirical order either
    study = bvp.mu_convergence_study(standard_problem(0.0), [0.04, 0.02],
                                     bvp.SolverOptions(N=101))
    for row in study.rows:
        assert row.rel_err_vs_theorem <= 1e-12


def test_composite_asymptotics_agree_with_bvp_to_order_mu():
    mu = 0.005
    problem = layered_problem(mu)
    sol = bvp.solve_steady_bvp(problem, bvp.SolverOptions(N=801))
    orbit = steady.singular_orbit(problem)
    x = sol.mesh.nodes
    tol = 5.0 * mu
    assert np.max(np.abs(sol.phi - orbit.phi(x))) <= tol
    assert np.max(np.abs(sol.c1 - orbit.c1(x))) <= tol * np.max(sol.c1)
    assert np.max(np.abs(sol.c2 - orbit.c2(x))) <= tol * np.max(sol.c2)


def test_singular_orbit_initial_guess_skips_continuation():
    problem = layered_problem(0.01)
    opts = bvp.SolverOptions(N=401, initial_guess="singular-orbit-composite")
    sol = bvp.solve_steady_bvp(problem, opts)
    assert sol.converged
    assert sol.newton_iterations <= 12
    fx = bvp.extract_fluxes(sol)
    ref = bvp.extract_fluxes(
        bvp.solve_steady_bvp(problem, bvp.SolverOptions(N=401)))
    assert fx.J1 == pytest.approx(ref.J1, rel=1e-9)


def test_nonconvergence_reported():
    opts = bvp.SolverOptions(N=51, max_newton=1)
    with pytest.raises(NonConvergence):
        bvp.solve_steady_bvp(layered_problem(0.02), opts)


def test_extract_fluxes_requires_convergence():
    sol = bvp.solve_steady_bvp(standard_problem(0.05),
                               bvp.SolverOptions(N=101))
    import dataclasses
    broken = dataclasses.replace(sol, converged=False)
    with pytest.raises(NotConverged):
        bvp.extract_fluxes(broken)
