"""Tests for the Galerkin basis, IMEX solvers, Newton inversion, and IO.

Oracles: closed-form heat decay and the decaying vortex (whose nonlinear
term is a pure gradient, making it an exact solution of the full
equations), scheme self-convergence under step halving, and exact
algebraic identities of the discrete quadratic forward map.
"""

import numpy as np
import pytest

from oracles import observed_order, taylor_green_pressure, taylor_green_velocity
from torusforms.nonlinear import navier_stokes_config, nonlinear_term, zero_config
from torusforms.solver import (
    GalerkinBasis,
    SolverConfig,
    SolverDivergenceError,
    apply_inverse,
    assemble_linearized,
    build_basis,
    discrete_forward_data,
    discrete_linearized_data,
    discrete_residual,
    energy_identity_residual,
    format_solver_config,
    galerkin_convergence_study,
    lions_identity_residual,
    load_solution,
    load_solver_config,
    newton_local_inverse,
    parse_solver_config,
    project_state,
    save_solution,
    solve_linearized,
    solve_nonlinear,
)
from torusforms.spectral import (
    ConsistencyError,
    FormField,
    SpectralGrid,
    codifferential,
    exterior_derivative,
    fractional_power,
    harmonic_projection,
    hodge_laplacian,
    inner_product,
    l2_norm,
    random_form,
    remove_harmonic,
)

G16 = SpectralGrid(2, 16)
NS2 = navier_stokes_config(2)


def _taylor_green(grid: SpectralGrid, t: float = 0.0, mu: float = 0.1) -> FormField:
    return FormField.from_physical(
        grid, 1, taylor_green_velocity(grid.meshes(), t, mu)
    )


def _two_band_state(grid: SpectralGrid) -> FormField:
    """Divergence-free state whose nonlinear term has a nonzero
    divergence-free part (unlike the vortex alone)."""
    x, y = grid.meshes()
    extra = FormField.from_physical(grid, 1, [np.sin(x + 2 * y), np.zeros(grid.shape)])
    return project_state(_taylor_green(grid) + extra * 0.5)


class TestSolverConfig:
    def test_validation(self):
        with pytest.raises(ValueError, match="mu"):
            SolverConfig(mu=0.0, T=1.0, dt=0.1)
        with pytest.raises(ValueError, match="positive"):
            SolverConfig(mu=1.0, T=-1.0, dt=0.1)
        with pytest.raises(ValueError, match="scheme"):
            SolverConfig(mu=1.0, T=1.0, dt=0.1, scheme="leapfrog")
        with pytest.raises(ValueError, match="divide"):
            SolverConfig(mu=1.0, T=1.0, dt=0.3)
        with pytest.raises(ValueError, match="newton"):
            SolverConfig(mu=1.0, T=1.0, dt=0.1, newton_max_iter=0)

    def test_steps_and_times(self):
        cfg = SolverConfig(mu=0.1, T=1.0, dt=0.25)
        assert cfg.steps == 4
        assert np.allclose(cfg.times(), [0.0, 0.25, 0.5, 0.75, 1.0])

    def test_parse_all_keys(self):
        text = """
        # full configuration
        mu = 0.3
        T = 2.0
        dt 0.1          # bare key-value also accepted
        res = 24
        degree = 1
        scheme = imex-euler
        preset = zero
        newton.max_iter = 7
        newton.tol = 1e-9
        n = 3
        """
        cfg = parse_solver_config(text)
        assert cfg == SolverConfig(
            mu=0.3, T=2.0, dt=0.1, res=24, degree=1, scheme="imex-euler",
            preset="zero", newton_max_iter=7, newton_tol=1e-9, n=3,
        )

    def test_parse_defaults_and_errors(self):
        cfg = parse_solver_config("mu = 1.0\nT = 1.0\ndt = 0.5\n")
        assert cfg.res == 32 and cfg.scheme == "imex-rk2"
        assert cfg.preset == "navier-stokes-i1" and cfg.n == 2
        with pytest.raises(ValueError, match="missing required"):
            parse_solver_config("mu = 1.0\nT = 1.0\n")
        with pytest.raises(ValueError, match="unknown configuration key"):
            parse_solver_config("mu = 1.0\nT = 1.0\ndt = 0.5\nfoo = 1\n")
        with pytest.raises(ValueError, match="duplicate"):
            parse_solver_config("mu = 1.0\nmu = 2.0\nT = 1.0\ndt = 0.5\n")
        with pytest.raises(ValueError, match="bad value"):
            parse_solver_config("mu = fast\nT = 1.0\ndt = 0.5\n")

    def test_format_round_trip(self, tmp_path):
        cfg = SolverConfig(mu=0.1, T=1.0, dt=1e-3, res=48, scheme="imex-euler")
        path = tmp_path / "solver.cfg"
        path.write_text(format_solver_config(cfg))
        assert load_solver_config(path) == cfg


class TestGalerkinBasis:
    def test_lowest_shell_on_t2(self):
        # |k| = 1 contributes four unit fields: {cos, sin}(x_j) along the
        # perpendicular axis, scaled sqrt(2).
        basis = build_basis(G16, 1, 4)
        assert np.allclose(basis.eigenvalues, 1.0)
        x, y = G16.meshes()
        root2 = np.sqrt(2.0)
        expected = [
            [np.zeros(G16.shape), root2 * np.cos(x)],
            [np.zeros(G16.shape), root2 * np.sin(x)],
            [root2 * np.cos(y), np.zeros(G16.shape)],
            [root2 * np.sin(y), np.zeros(G16.shape)],
        ]
        got = {tuple(np.round(basis.project(
            FormField.from_physical(G16, 1, comps)), 12)) for comps in expected}
        # each expected field is (up to sign) one basis element
        for coeffs in got:
            arr = np.abs(np.array(coeffs))
            assert np.isclose(arr.max(), 1.0, atol=1e-12)
            assert np.isclose(np.linalg.norm(arr), 1.0, atol=1e-12)

    def test_fibre_dimension_on_t3(self):
        grid = SpectralGrid(3, 12)
        basis = build_basis(grid, 1, 12)
        # three canonical |k|^2 = 1 modes, two fibre vectors, two phases
        assert np.allclose(basis.eigenvalues, 1.0)

    @pytest.mark.parametrize("grid", [G16, SpectralGrid(3, 12)])
    def test_invariants(self, grid):
        basis = build_basis(grid, 1, 24)
        gram = np.array([[inner_product(a, b) for b in basis.fields]
                         for a in basis.fields])
        assert np.max(np.abs(gram - np.eye(basis.m))) <= 1e-12
        for b, lam in zip(basis.fields, basis.eigenvalues):
            assert l2_norm(codifferential(b)) <= 1e-12
            assert l2_norm(hodge_laplacian(b) - b * lam) <= 1e-12
            assert l2_norm(harmonic_projection(b)) == 0.0
        assert np.all(np.diff(basis.eigenvalues) >= 0)

    def test_projection_round_trip(self):
        basis = build_basis(G16, 1)
        u = project_state(random_form(G16, 1, np.random.default_rng(2)))
        back = basis.synthesize(basis.project(u))
        assert l2_norm(back - u) <= 1e-12 * max(l2_norm(u), 1.0)

    def test_parameter_errors(self):
        with pytest.raises(ValueError, match="exceeds"):
            build_basis(G16, 1, 10_000)
        with pytest.raises(ValueError, match="degree"):
            build_basis(G16, 5)
        basis = build_basis(G16, 1, 4)
        with pytest.raises(ValueError, match="permutation"):
            basis.reordered([0, 0, 1, 2])


class TestExactDecay:
    @pytest.mark.parametrize("scheme", ["imex-euler", "imex-rk2"])
    def test_single_eigenfield_heat_decay(self, scheme):
        # With no nonlinearity the integrating factor is exact at any dt.
        basis = build_basis(G16, 1, 1)
        u0 = basis.fields[0]
        cfg = SolverConfig(mu=0.7, T=1.0, dt=0.25, res=16, scheme=scheme,
                           preset="zero")
        sol = solve_nonlinear(None, u0, cfg, with_pressure=False)
        lam = basis.eigenvalues[0]
        for t, u in zip(sol.times, sol.u):
            exact = u0 * float(np.exp(-cfg.mu * lam * t))
            assert l2_norm(u - exact) <= 1e-10

    def test_zero_data_zero_solution(self):
        cfg = SolverConfig(mu=0.5, T=0.1, dt=0.05, res=16)
        sol = solve_nonlinear(None, FormField.zeros(G16, 1), cfg)
        assert all(l2_norm(u) == 0.0 for u in sol.u)


class TestTaylorGreen:
    def test_velocity_and_pressure_reproduced(self):
        # The vortex's nonlinear term is a pure gradient, so the
        # divergence-free dynamics reduce to exact heat decay and the
        # recovered pressure must match the closed form.
        grid = SpectralGrid(2, 32)
        mu = 0.1
        cfg = SolverConfig(mu=mu, T=0.25, dt=1e-3, res=32, scheme="imex-rk2")
        sol = solve_nonlinear(None, _taylor_green(grid, 0.0, mu), cfg,
                              store_every=50, derivatives=0)
        meshes = grid.meshes()
        for t, u, p in zip(sol.times, sol.u, sol.p):
            u_exact = FormField.from_physical(
                grid, 1, taylor_green_velocity(meshes, t, mu))
            p_exact = FormField.from_physical(
                grid, 0, [taylor_green_pressure(meshes, t, mu)])
            assert l2_norm(u - u_exact) <= 1e-12 * l2_norm(u_exact)
            assert l2_norm(p - p_exact) <= 1e-12 * l2_norm(p_exact)

    def test_divergence_free_invariance(self):
        cfg = SolverConfig(mu=0.1, T=0.1, dt=5e-3, res=16)
        sol = solve_nonlinear(None, _two_band_state(G16), cfg,
                              derivatives=0, with_pressure=False)
        for u in sol.u:
            assert l2_norm(codifferential(u)) <= 1e-12


class TestSolveLinearized:
    def test_zero_preset_matches_linearized(self):
        rng = np.random.default_rng(3)
        f = project_state(random_form(G16, 1, rng, kmax=3))
        u0 = project_state(random_form(G16, 1, rng, kmax=3))
        cfg = SolverConfig(mu=0.2, T=0.2, dt=5e-3, res=16, preset="zero")
        a = solve_nonlinear(f, u0, cfg, store_every=cfg.steps)
        b = solve_linearized(None, f, u0, cfg, store_every=cfg.steps)
        assert l2_norm(a.u[-1] - b.u[-1]) == 0.0

    def test_gradient_forcing_gives_zero_velocity_and_recovers_potential(self):
        # f = d q has no divergence-free part: velocity stays zero and the
        # pressure equals the (mean-free) potential at every sample.
        x, y = G16.meshes()
        q = FormField.from_physical(G16, 0, [np.cos(x) * np.cos(2 * y)])
        f = exterior_derivative(q)
        cfg = SolverConfig(mu=0.3, T=0.1, dt=0.02, res=16)
        sol = solve_linearized(None, f, FormField.zeros(G16, 1), cfg)
        q_free = remove_harmonic(q)
        for u, p in zip(sol.u, sol.p):
            assert l2_norm(u) <= 1e-14
            assert l2_norm(p - q_free) <= 1e-12

    def test_non_divergence_free_initial_datum_rejected(self):
        x, _ = G16.meshes()
        bad = FormField.from_physical(G16, 1, [np.sin(x), np.zeros(G16.shape)])
        cfg = SolverConfig(mu=0.1, T=0.1, dt=0.05, res=16)
        with pytest.raises(ConsistencyError, match="divergence"):
            solve_linearized(None, None, bad, cfg)

    def test_series_length_mismatch_rejected(self):
        cfg = SolverConfig(mu=0.1, T=0.1, dt=0.05, res=16)
        f = [FormField.zeros(G16, 1)] * 2  # needs steps + 1 = 3
        with pytest.raises(ValueError, match="samples"):
            solve_linearized(None, f, FormField.zeros(G16, 1), cfg)

    def test_derivative_cache_depth_limited(self):
        cfg = SolverConfig(mu=0.1, T=0.1, dt=0.05, res=16)
        with pytest.raises(ValueError, match="order 1"):
            solve_linearized(None, None, FormField.zeros(G16, 1), cfg,
                             derivatives=2)

    def test_blowup_guard_raises(self):
        basis = build_basis(G16, 1, 1)
        huge = basis.fields[0] * 1e15
        cfg = SolverConfig(mu=0.1, T=0.2, dt=0.1, res=16)
        with pytest.raises(SolverDivergenceError, match="exceeded"):
            solve_linearized(None, huge, FormField.zeros(G16, 1), cfg)


class TestSecondDerivativeCache:
    def test_heat_decay_second_derivative(self):
        # Zero nonlinearity: d^2u/dt^2 = mu^2 Lap^2 u along the flow.
        basis = build_basis(G16, 1, 1)
        u0 = basis.fields[0]
        cfg = SolverConfig(mu=0.4, T=0.2, dt=0.05, res=16, preset="zero")
        sol = solve_nonlinear(None, u0, cfg, derivatives=2, with_pressure=False)
        lam = basis.eigenvalues[0]
        for u, ddu in zip(sol.u, sol.dt_cache[2]):
            assert l2_norm(ddu - u * float(cfg.mu**2 * lam**2)) <= 1e-12

    def test_sampled_forcing_needs_derivative_series(self):
        cfg = SolverConfig(mu=0.1, T=0.1, dt=0.05, res=16)
        f = [FormField.zeros(G16, 1)] * (cfg.steps + 1)
        with pytest.raises(ValueError, match="f_dt_series"):
            solve_nonlinear(f, FormField.zeros(G16, 1), cfg, derivatives=2)


class TestSchemeOrders:
    def _final_states(self, scheme, dts):
        u0 = _two_band_state(G16)
        out = []
        for dt in dts:
            cfg = SolverConfig(mu=0.1, T=0.24, dt=dt, res=16, scheme=scheme)
            sol = solve_nonlinear(None, u0, cfg, store_every=cfg.steps,
                                  derivatives=0, with_pressure=False)
            out.append(sol.u[-1])
        return out

    def test_euler_first_order(self):
        s = self._final_states("imex-euler", (4e-3, 2e-3, 1e-3, 5e-4))
        diffs = [l2_norm(a - b) for a, b in zip(s, s[1:])]
        assert observed_order(diffs) >= 0.9

    def test_rk2_second_order(self):
        s = self._final_states("imex-rk2", (4e-3, 2e-3, 1e-3, 5e-4))
        diffs = [l2_norm(a - b) for a, b in zip(s, s[1:])]
        assert observed_order(diffs) >= 1.9


class TestEnergyLaw:
    def test_energy_identity_residual_second_order(self):
        u0 = _two_band_state(G16)
        residuals = []
        for dt in (8e-3, 4e-3, 2e-3):
            cfg = SolverConfig(mu=0.2, T=0.16, dt=dt, res=16, scheme="imex-rk2")
            sol = solve_nonlinear(None, u0, cfg, with_pressure=False)
            residuals.append(
                energy_identity_residual(sol, cfg.mu, ns_cfg=NS2, nonlinear=True))
        assert observed_order(residuals) >= 1.9

    def test_energy_monotone_without_forcing(self):
        cfg = SolverConfig(mu=0.2, T=0.3, dt=5e-3, res=16, scheme="imex-rk2")
        sol = solve_nonlinear(None, _two_band_state(G16), cfg,
                              derivatives=0, with_pressure=False)
        energies = [l2_norm(u) for u in sol.u]
        assert all(b <= a + 1e-14 for a, b in zip(energies, energies[1:]))

    def test_energy_balance_against_dissipation(self):
        # |u(T)|^2 + 2 mu int |grad u|^2 = |u(0)|^2 up to scheme error.
        u0 = _two_band_state(G16)
        cfg = SolverConfig(mu=0.2, T=0.2, dt=1e-3, res=16, scheme="imex-rk2")
        sol = solve_nonlinear(None, u0, cfg, derivatives=0, with_pressure=False)
        grads = [l2_norm(fractional_power(u, 1)) ** 2 for u in sol.u]
        dissipated = 2 * cfg.mu * float(np.trapezoid(grads, sol.times))
        gap = abs(l2_norm(sol.u[-1]) ** 2 + dissipated - l2_norm(sol.u[0]) ** 2)
        assert gap <= 1e-6 * l2_norm(sol.u[0]) ** 2

    def test_lions_identity_residual_second_order(self):
        u0 = _two_band_state(G16)
        residuals = []
        for dt in (8e-3, 4e-3, 2e-3):
            cfg = SolverConfig(mu=0.2, T=0.16, dt=dt, res=16, scheme="imex-rk2")
            sol = solve_nonlinear(None, u0, cfg, with_pressure=False)
            residuals.append(lions_identity_residual(sol))
        assert observed_order(residuals) >= 1.9

    def test_lions_needs_cached_derivative(self):
        cfg = SolverConfig(mu=0.2, T=0.1, dt=5e-3, res=16)
        sol = solve_nonlinear(None, _two_band_state(G16), cfg,
                              derivatives=0, with_pressure=False)
        with pytest.raises(ValueError, match="derivative"):
            lions_identity_residual(sol)


class TestLinearizedOperator:
    def test_stokes_block_diagonal_without_advection(self):
        basis = build_basis(G16, 1, 12)
        times = np.linspace(0.0, 0.1, 3)
        op = assemble_linearized(None, 0.7, basis, times, NS2)
        for mat in op.matrices:
            assert np.max(np.abs(mat - 0.7 * np.diag(basis.eigenvalues))) == 0.0

    def test_diffusion_block_symmetric_and_constant_for_constant_advection(self):
        rng = np.random.default_rng(11)
        w = project_state(random_form(G16, 1, rng, kmax=2))
        basis = build_basis(G16, 1, 12)
        times = np.linspace(0.0, 0.1, 3)
        op = assemble_linearized(w, 0.3, basis, times, NS2)
        diffusion = 0.3 * np.diag(basis.eigenvalues)
        assert np.max(np.abs(diffusion - diffusion.T)) == 0.0
        assert np.array_equal(op.matrices[0], op.matrices[1])
        assert np.array_equal(op.matrices[0], op.matrices[2])


class TestApplyInverse:
    def _data(self, rng_seed=3, kmax=3):
        rng = np.random.default_rng(rng_seed)
        w = project_state(random_form(G16, 1, rng, kmax=kmax))
        f = project_state(random_form(G16, 1, rng, kmax=kmax))
        u0 = project_state(random_form(G16, 1, rng, kmax=kmax))
        return w, f, u0

    def test_full_band_matches_field_solver(self):
        w, f, u0 = self._data()
        cfg = SolverConfig(mu=0.2, T=0.2, dt=5e-3, res=16, scheme="imex-rk2")
        basis = build_basis(G16, 1)
        op = assemble_linearized(w, cfg.mu, basis, cfg.times(), NS2)
        inv = apply_inverse(op, f, u0, cfg, store_every=cfg.steps)
        lin = solve_linearized(w, f, u0, cfg, store_every=cfg.steps)
        assert l2_norm(inv.u[-1] - lin.u[-1]) <= 1e-12

    @pytest.mark.parametrize("scheme,floor", [("imex-euler", 0.9),
                                              ("imex-rk2", 1.9)])
    def test_forward_inverse_round_trip_order(self, scheme, floor):
        grid = SpectralGrid(2, 8)
        rng = np.random.default_rng(5)
        w = project_state(random_form(grid, 1, rng, kmax=2))
        f = project_state(random_form(grid, 1, rng, kmax=2))
        u0 = project_state(random_form(grid, 1, rng, kmax=2))
        basis = build_basis(grid, 1)
        residuals = []
        for dt in (8e-3, 4e-3, 2e-3):
            cfg = SolverConfig(mu=0.2, T=0.16, dt=dt, res=8, scheme=scheme)
            op = assemble_linearized(w, cfg.mu, basis, cfg.times(), NS2)
            sol = apply_inverse(op, f, u0, cfg)
            residuals.append(
                discrete_residual(sol, cfg, w_series=w, f_series=f, ns_cfg=NS2))
        assert observed_order(residuals) >= floor

    def test_uniqueness_under_basis_reordering(self):
        w, f, u0 = self._data(kmax=2)
        cfg = SolverConfig(mu=0.2, T=0.1, dt=5e-3, res=16, scheme="imex-rk2")
        basis = build_basis(G16, 1, 40)
        flipped = basis.reordered(list(reversed(range(basis.m))))
        s1 = apply_inverse(assemble_linearized(w, cfg.mu, basis, cfg.times(), NS2),
                           f, u0, cfg, store_every=cfg.steps)
        s2 = apply_inverse(assemble_linearized(w, cfg.mu, flipped, cfg.times(), NS2),
                           f, u0, cfg, store_every=cfg.steps)
        assert l2_norm(s1.u[-1] - s2.u[-1]) <= 1e-10

    def test_zero_data_zero_solution(self):
        basis = build_basis(G16, 1, 8)
        cfg = SolverConfig(mu=0.2, T=0.1, dt=0.05, res=16)
        op = assemble_linearized(None, cfg.mu, basis, cfg.times(), NS2)
        sol = apply_inverse(op, None, FormField.zeros(G16, 1), cfg)
        assert all(l2_norm(u) == 0.0 for u in sol.u)

    def test_time_grid_mismatch_rejected(self):
        basis = build_basis(G16, 1, 8)
        op = assemble_linearized(None, 0.2, basis, np.linspace(0, 1, 5), NS2)
        cfg = SolverConfig(mu=0.2, T=1.0, dt=0.1, res=16)
        with pytest.raises(ValueError, match="time grid"):
            apply_inverse(op, None, FormField.zeros(G16, 1), cfg)


class TestFrechetDerivative:
    def test_discrete_forward_map_quadratic_expansion_exact(self):
        rng = np.random.default_rng(5)
        cfg = SolverConfig(mu=0.1, T=0.05, dt=5e-3, res=16, scheme="imex-euler")
        u_traj = [project_state(random_form(G16, 1, rng, kmax=3))
                  for _ in range(cfg.steps + 1)]
        v_traj = [project_state(random_form(G16, 1, rng, kmax=3))
                  for _ in range(cfg.steps + 1)]
        eps = 1e-2
        f_u, head_u = discrete_forward_data(u_traj, cfg)
        f_shift, head_shift = discrete_forward_data(
            [a + b * eps for a, b in zip(u_traj, v_traj)], cfg)
        lin, head_lin = discrete_linearized_data(u_traj, v_traj, cfg)
        scale = max(l2_norm(c) for c in f_u)
        for j in range(cfg.steps):
            quadratic = project_state(nonlinear_term(v_traj[j], NS2)) * eps**2
            defect = l2_norm(f_shift[j] - f_u[j] - lin[j] * eps - quadratic)
            assert defect <= 1e-12 * scale
        assert l2_norm(head_shift - head_u - head_lin * eps) <= 1e-12 * scale


class TestNewton:
    def _base(self, steps=50):
        cfg = SolverConfig(mu=0.1, T=steps * 2e-3, dt=2e-3, res=16,
                           scheme="imex-euler")
        base = solve_nonlinear(None, _taylor_green(G16), cfg,
                               derivatives=0, with_pressure=False)
        f_cells, _ = discrete_forward_data(base.u, cfg)
        return cfg, base, f_cells

    def test_exact_seed_needs_no_iterations(self):
        cfg, base, f_cells = self._base()
        result = newton_local_inverse(f_cells, base.u[0], base, cfg)
        assert result.converged and result.iterations == 0

    def test_quadratic_convergence_from_nearby_seed(self):
        cfg, base, f_cells = self._base()
        rng = np.random.default_rng(9)
        bump = project_state(random_form(G16, 1, rng, kmax=2, mean_free=True))
        bump = bump * (1e-3 / l2_norm(bump))
        seed = [u + bump for u in base.u]
        result = newton_local_inverse(f_cells, base.u[0], seed, cfg)
        assert result.converged
        assert result.iterations <= 2
        assert result.residual_history[-1] <= 1e-10

    def test_perturbed_data_recovered_with_linear_displacement(self):
        cfg, base, f_cells = self._base()
        rng = np.random.default_rng(13)
        direction = project_state(random_form(G16, 1, rng, kmax=2, mean_free=True))
        direction = direction * (1.0 / l2_norm(direction))
        displacements = []
        for eps in (1e-3, 5e-4):
            target = [c + direction * eps for c in f_cells]
            result = newton_local_inverse(target, base.u[0], base, cfg)
            assert result.converged
            assert result.iterations <= 6
            assert result.residual_history[-1] <= 1e-8
            displacements.append(
                max(l2_norm(a - b) for a, b in zip(result.solution.u, base.u)))
        ratio = displacements[1] / displacements[0]
        assert 0.4 <= ratio <= 0.6

    def test_solution_satisfies_discrete_equations(self):
        cfg, base, f_cells = self._base(steps=20)
        rng = np.random.default_rng(15)
        bump = project_state(random_form(G16, 1, rng, kmax=2, mean_free=True))
        target = [c + bump * (1e-4 / l2_norm(bump)) for c in f_cells]
        result = newton_local_inverse(target, base.u[0], base, cfg)
        cells, head = discrete_forward_data(result.solution.u, cfg)
        gap = max(l2_norm(a - b) for a, b in zip(cells, target))
        assert gap <= 1e-9
        assert l2_norm(head - base.u[0]) <= 1e-10

    def test_non_convergence_reported_not_raised(self):
        cfg, base, f_cells = self._base(steps=10)
        cfg = SolverConfig(mu=cfg.mu, T=cfg.T, dt=cfg.dt, res=16,
                           scheme="imex-euler", newton_max_iter=1,
                           newton_tol=1e-14)
        rng = np.random.default_rng(17)
        bump = project_state(random_form(G16, 1, rng, kmax=2, mean_free=True))
        target = [c + bump for c in f_cells]
        result = newton_local_inverse(target, base.u[0], base, cfg)
        assert not result.converged
        assert len(result.residual_history) == 2

    def test_usage_errors(self):
        cfg, base, f_cells = self._base(steps=10)
        rk2 = SolverConfig(mu=0.1, T=0.02, dt=2e-3, res=16, scheme="imex-rk2")
        with pytest.raises(ValueError, match="imex-euler"):
            newton_local_inverse(f_cells, base.u[0], base, rk2)
        with pytest.raises(ValueError, match="trajectory length"):
            newton_local_inverse(f_cells, base.u[0], base.u[:3], cfg)
        with pytest.raises(ValueError, match="cell per time step"):
            newton_local_inverse(f_cells[:2], base.u[0], base, cfg)


class TestGalerkinStudy:
    def test_uniform_bound_and_cauchy_decay(self):
        cfg = SolverConfig(mu=0.2, T=0.2, dt=5e-3, res=16)
        study = galerkin_convergence_study(
            None, _two_band_state(G16), cfg, ms=(16, 32, 64, 120))
        first = study.bounded_quantities[0]
        assert np.all(study.bounded_quantities <= first * 1.01)
        ratios = study.cauchy_differences[:-1] / study.cauchy_differences[1:]
        assert np.all(ratios >= 2.0)

    def test_bounded_quantity_stable_beyond_band_limit(self):
        cfg = SolverConfig(mu=0.2, T=0.1, dt=5e-3, res=16)
        study = galerkin_convergence_study(
            None, _two_band_state(G16), cfg, ms=(60, 120))
        a, b = study.bounded_quantities
        assert abs(b - a) <= 1e-3 * a

    def test_full_band_matches_field_solver(self):
        u0 = _two_band_state(G16)
        cfg = SolverConfig(mu=0.2, T=0.1, dt=5e-3, res=16)
        study = galerkin_convergence_study(None, u0, cfg, ms=(120,))
        sol = solve_nonlinear(None, u0, cfg, derivatives=0, with_pressure=False)
        grads = [l2_norm(fractional_power(u, 2)) ** 2 for u in sol.u]
        sup_part = max(l2_norm(fractional_power(u, 1)) ** 2 for u in sol.u)
        int_part = cfg.mu * float(np.trapezoid(grads, sol.times))
        assert study.bounded_quantities[0] == pytest.approx(
            sup_part + int_part, rel=1e-10)


class TestSolutionIO:
    def test_round_trip(self, tmp_path):
        cfg = SolverConfig(mu=0.1, T=0.1, dt=0.01, res=16)
        sol = solve_nonlinear(None, _taylor_green(G16), cfg, store_every=2)
        save_solution(sol, tmp_path / "run")
        back = load_solution(tmp_path / "run")
        assert np.allclose(back.times, sol.times)
        assert max(l2_norm(a - b) for a, b in zip(back.u, sol.u)) <= 1e-14
        assert max(l2_norm(a - b) for a, b in zip(back.p, sol.p)) <= 1e-14

    def test_manifest_layout(self, tmp_path):
        cfg = SolverConfig(mu=0.1, T=0.1, dt=0.05, res=16)
        sol = solve_nonlinear(None, _taylor_green(G16), cfg)
        save_solution(sol, tmp_path / "run")
        lines = (tmp_path / "run" / "manifest.csv").read_text().splitlines()
        assert lines[0] == "t,file,energy,grad_energy"
        first = lines[1].split(",")
        assert first[0] == "0.0" and first[1] == "u_00000.hpform"
        assert float(first[2]) == pytest.approx(l2_norm(sol.u[0]) ** 2)
        assert float(first[3]) == pytest.approx(
            l2_norm(fractional_power(sol.u[0], 1)) ** 2)

    def test_pressure_optional(self, tmp_path):
        cfg = SolverConfig(mu=0.1, T=0.1, dt=0.05, res=16)
        sol = solve_nonlinear(None, _taylor_green(G16), cfg, with_pressure=False)
        save_solution(sol, tmp_path / "run")
        back = load_solution(tmp_path / "run")
        assert back.p is None

    def test_bad_manifest_rejected(self, tmp_path):
        run = tmp_path / "run"
        run.mkdir()
        (run / "manifest.csv").write_text("time,file\n0.0,u_00000.hpform\n")
        with pytest.raises(ValueError, match="manifest columns"):
            load_solution(run)
