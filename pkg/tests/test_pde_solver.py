"""Finite-difference solver: reductions to closed forms, structure
preservation, and fundamental-solution machinery."""

import math

import numpy as np
import pytest

from driftlab.bound_calculus import BoundParams, CoefficientSeries, g_bound
from driftlab.exceptions import (
    CflError,
    DomainError,
    ResolutionError,
    SetupError,
)
from driftlab.pde_solver import (
    SolverConfig,
    SpatialGrid,
    Scheme,
    chapman_kolmogorov_error,
    check_symmetry_S,
    field_norms,
    fundamental_row_adjoint,
    fundamental_solution,
    geometric_grid,
    solve_linear,
    solve_nonlocal,
)
from driftlab.special_functions import DriftFamily, DriftSign, DriftSpec

from _oracles import heat_erf, heat_gaussian

H0 = DriftSpec(DriftFamily.H0_EXACT, beta=0.5)
HEPS = DriftSpec(DriftFamily.H_EPS_MOLLIFIED, beta=0.5, mollify_eps=0.01)


@pytest.fixture(scope="module")
def grid():
    return geometric_grid()


class TestGrid:
    def test_default_shape(self, grid):
        assert 1950 <= grid.n <= 2050
        assert grid.x[grid.izero] == 0.0
        assert grid.half_width == 20.0
        assert grid.min_dx <= 2.1e-3

    def test_symmetry_required(self):
        with pytest.raises(SetupError):
            SpatialGrid(np.array([-1.0, 0.0, 0.5, 1.0, 2.0]))

    def test_cell_widths_partition(self, grid):
        assert np.sum(grid.cell_widths) == pytest.approx(2 * grid.half_width, rel=1e-12)


class TestHeatReduction:
    def test_linf_error(self, grid):
        w = 3.0
        cfg = SolverConfig(dt=1e-4, store_times=(0.5,))
        sol = solve_linear(
            lambda x: np.exp(-(x**2) / w**2), H0, 0.0, 0.0, 0.0, None, cfg, grid, 0.5
        )
        exact = heat_gaussian(0.5, grid.x, w)
        assert np.max(np.abs(sol.final - exact)) <= 1e-4

    def test_spatial_convergence_order(self):
        w = 2.0
        errs = []
        for scale in [1.0, 0.5]:
            g = geometric_grid(min_dx=2e-3 * scale, max_dx=0.0206 * scale)
            sol = solve_linear(
                lambda x: np.exp(-(x**2) / w**2), H0, 0.0, 0.0, 0.0, None,
                SolverConfig(dt=2e-6), g, 0.25,
            )
            errs.append(np.max(np.abs(sol.final - heat_gaussian(0.25, g.x, w))))
        order = math.log2(errs[0] / errs[1])
        assert order >= 1.8


class TestConservationPositivity:
    def test_divergence_form_mass(self, grid):
        sol = solve_linear(
            lambda x: np.exp(-(x**2)), HEPS, 1.0, 1.0, 1.0, None,
            SolverConfig(dt=2.5e-4), grid, 1.0,
        )
        m = sol.l1_trail  # V stays non-negative, so L1 = mass
        assert abs(m[-1] - m[0]) / m[0] <= 1e-6
        assert sol.final.min() >= -1e-8

    def test_positivity_with_forcing(self, grid):
        d = (lambda s: 1.0, lambda x: np.exp(-(x**2)))
        sol = solve_linear(
            lambda x: np.exp(-(x**2)), HEPS, 2.0, 1.0, 1.0, [d],
            SolverConfig(dt=1e-4), grid, 0.5,
        )
        assert sol.final.min() >= -1e-8

    def test_randomized_configs(self, grid):
        rng = np.random.default_rng(11)
        for _ in range(5):
            beta = float(rng.uniform(0.25, 0.75))
            mu1 = float(rng.uniform(0.5, 3.0))
            spec = DriftSpec(DriftFamily.H_EPS_MOLLIFIED, beta=beta, mollify_eps=0.01)
            gv = float(rng.uniform(0.2, 1.5))
            w = float(rng.uniform(0.5, 2.0))
            sol = solve_linear(
                lambda x: np.exp(-(x**2) / w**2), spec, mu1, mu1, gv, None,
                SolverConfig(dt=2e-4), grid, 0.4,
            )
            m = sol.l1_trail
            assert abs(m[-1] - m[0]) / m[0] <= 1e-6
            assert sol.final.min() >= -1e-8


class TestSymmetryPreservation:
    @pytest.mark.parametrize("beta", [0.25, 0.5, 0.75])
    @pytest.mark.parametrize("mu1", [1.0, 4.0])
    def test_s_class_preserved(self, grid, beta, mu1):
        spec = DriftSpec(DriftFamily.H_EPS_MOLLIFIED, beta=beta, mollify_eps=0.01)
        sol = solve_linear(
            lambda x: np.exp(-(x**2)), spec, mu1, mu1, 1.0, None,
            SolverConfig(dt=1e-4), grid, 0.5,
        )
        ok, worst, _ = check_symmetry_S(sol.final, grid, tol=1e-6)
        assert ok, f"violation {worst}"

    def test_check_rejects_odd_part(self, grid):
        vals = grid.x * np.exp(-grid.x**2)
        ok, _, detail = check_symmetry_S(vals, grid, tol=1e-6)
        assert not ok and detail["evenness"] > 1e-3

    def test_check_tolerates_small_noise(self, grid):
        rng = np.random.default_rng(0)
        vals = np.exp(-grid.x**2) + 1e-6 * rng.uniform(-1, 1, grid.n)
        ok, worst, _ = check_symmetry_S(vals, grid, tol=1e-5)
        assert ok and worst <= 1e-5

    def test_asymmetric_grid_rejected(self):
        with pytest.raises(SetupError):
            check_symmetry_S(np.ones(5), _fake_half_grid(), 1e-6)


def _fake_half_grid():
    import dataclasses

    g = geometric_grid(half_width=1.0, min_dx=0.01, max_dx=0.1)
    return dataclasses.replace(g, x=g.x + 0.01) if False else _Shifted(g.x)


class _Shifted:
    def __init__(self, x):
        self.x = x + 0.005
        self.izero = x.size // 2


class TestCfl:
    def test_violation_reports_required_dt(self, grid):
        with pytest.raises(CflError) as exc:
            solve_linear(
                lambda x: np.exp(-(x**2)), H0, 4.0, 4.0, 1.0, None,
                SolverConfig(dt=0.05), grid, 0.5,
            )
        assert exc.value.required_dt < 0.05

    def test_fully_implicit_ignores_cfl(self, grid):
        cfgA = SolverConfig(dt=2.5e-4, store_times=(0.25,))
        cfgB = SolverConfig(dt=2.5e-4, store_times=(0.25,), scheme=Scheme.FULLY_IMPLICIT)
        a = solve_linear(lambda x: np.exp(-(x**2)), HEPS, 1.0, 1.0, 1.0, None, cfgA, grid, 0.25)
        b = solve_linear(lambda x: np.exp(-(x**2)), HEPS, 1.0, 1.0, 1.0, None, cfgB, grid, 0.25)
        assert np.max(np.abs(a.final - b.final)) <= 5e-3


class TestFieldNorms:
    def test_constant_field(self):
        g = geometric_grid(half_width=2.0, min_dx=0.01, max_dx=0.05)
        sol = solve_linear(
            np.ones(g.n), DriftSpec(DriftFamily.H0_EXACT, beta=0.5),
            0.0, 0.0, 0.0, None, SolverConfig(dt=1e-3, store_times=(0.01,)), g, 0.01,
        )
        norms = field_norms(sol, p_list=(2.0,))
        assert norms["l1"][-1] == pytest.approx(4.0, rel=1e-6)

    def test_gaussian_closed_forms(self, grid):
        v = np.exp(-grid.x**2)
        sol_like = solve_linear(
            v, H0, 0.0, 0.0, 0.0, None, SolverConfig(dt=1e-3, store_times=(0.0,)), grid, 1e-3
        )
        norms = field_norms(sol_like, p_list=(2.0,))
        assert norms["l1"][0] == pytest.approx(math.sqrt(math.pi), rel=1e-4)
        assert norms["l2"][0] == pytest.approx((math.pi / 2.0) ** 0.25, rel=1e-4)

    def test_zero_field(self, grid):
        sol = solve_linear(
            np.zeros(grid.n), H0, 0.0, 0.0, 0.0, None,
            SolverConfig(dt=1e-3, store_times=(0.0,)), grid, 1e-3,
        )
        norms = field_norms(sol)
        assert norms["linf"][0] == 0.0 and norms["l1"][0] == 0.0


class TestNonlocal:
    def test_halfline_heat_reduction(self, grid):
        w = 2.0
        cfg = SolverConfig(dt=1e-4, store_times=(0.5,))
        sol = solve_nonlocal(
            lambda x: heat_erf(0.0, x, w), H0, 0.0, 0.0, 0.0, None, cfg, grid, 0.5
        )
        exact = heat_erf(0.5, sol.grid.x, w)
        assert np.max(np.abs(sol.final - exact)) <= 1e-4

    def test_origin_pinned(self, grid):
        cfg = SolverConfig(dt=2e-4, store_times=(0.25, 0.5))
        sol = solve_nonlocal(
            lambda x: np.tanh(x), H0, 4.0, 1.0, 1.0, None, cfg, grid, 0.5
        )
        assert all(v[0] == 0.0 for v in sol.values)

    def test_cross_consistency_with_differentiated_equation(self, grid):
        # d/dxi of the nonlocal solve matches the linear solve with the
        # enlarged zeroth-order amplitude
        beta, mu1, C = 0.5, 4.0, 1.0
        cfg = SolverConfig(dt=1e-4, store_times=(1.0,))
        om = solve_nonlocal(
            lambda x: np.tanh(2.0 * x) / 2.0, H0, mu1, C, 1.0, None, cfg, grid, 1.0
        )
        v = solve_linear(
            lambda x: 1.0 / np.cosh(2.0 * x) ** 2, H0, mu1, mu1 + C / beta, 1.0,
            None, cfg, grid, 1.0,
        )
        xh = om.grid.x
        dom = np.gradient(om.final, xh)
        vh = np.interp(xh, grid.x, v.final)
        gap = np.max(np.abs(dom - vh)[1:-1])
        assert gap <= 5e-3

    def test_initial_data_must_vanish(self, grid):
        with pytest.raises(SetupError):
            solve_nonlocal(
                lambda x: x + 1.0, H0, 1.0, 0.0, 1.0, None, SolverConfig(dt=1e-3),
                grid, 0.1,
            )


class TestFundamentalSolution:
    def test_heat_row_unit_mass(self, grid):
        cfg = SolverConfig(dt=5e-4)
        fs = fundamental_solution(
            0.0, 1.0, HEPS, 1.0, 1.0, 0.0, cfg, grid, 0.05,
            source_half_width=13.0, source_dx=0.5, richardson=True,
        )
        assert fs.row_l1 == pytest.approx(1.0, abs=1e-4)
        # column equals the heat kernel at t=1
        peak = (16.0 * math.pi) ** -0.5
        assert fs.column[grid.izero] == pytest.approx(peak, rel=2e-3)
        assert np.isfinite(fs.richardson_l1_shift)

    def test_adjoint_heat_row(self, grid):
        adj = fundamental_row_adjoint(0.0, 1.0, HEPS, 1.0, 0.0, SolverConfig(dt=5e-4), grid, 0.05)
        assert adj.row_l1 == pytest.approx(1.0, abs=1e-4)

    def test_adjoint_matches_sources(self, grid):
        cfg = SolverConfig(dt=2.5e-4)
        adj = fundamental_row_adjoint(0.0, 1.0, HEPS, 1.0, 1.0, cfg, grid, 0.05)
        fs = fundamental_solution(
            0.0, 1.0, HEPS, 1.0, 1.0, 1.0, cfg, grid, 0.05,
            source_half_width=4.0, source_dx=1.0, richardson=False,
        )
        direct = np.interp(fs.row_sigma, grid.x, adj.row)
        assert np.max(np.abs(fs.row - direct)) <= 5e-3 * adj.row_sup + 1e-4

    def test_row_bounds_desk_case(self, grid):
        cfg = SolverConfig(dt=2.5e-4)
        adj = fundamental_row_adjoint(0.0, 1.0, HEPS, 1.0, 1.0, cfg, grid, 0.05)
        p = BoundParams(nu=1.0, beta=0.5, mu1=1.0)
        G = g_bound(CoefficientSeries.constant(1.0, 1.0), 0.0, 1.0, p)
        assert adj.row_l1 <= G
        sup_bound = 1.0 + 1.0 * CoefficientSeries.constant(1.0, 1.0).weighted_integral(
            0.0, 1.0, (0.5 - 2.0) / 2.0
        )
        assert adj.row_sup <= sup_bound

    def test_chapman_kolmogorov(self, grid):
        cfg = SolverConfig(dt=5e-4)
        err = chapman_kolmogorov_error(
            0.0, 0.5, 1.0, HEPS, 1.0, 1.0, 1.0, cfg, grid, 0.05,
            source_half_width=6.0, source_dx=0.75,
        )
        assert err <= 1e-3

    def test_underresolved_delta(self, grid):
        with pytest.raises(ResolutionError):
            fundamental_solution(
                0.0, 1.0, HEPS, 1.0, 1.0, 0.0, SolverConfig(dt=1e-3), grid,
                grid.min_dx,
            )

    def test_order_error(self, grid):
        with pytest.raises(DomainError):
            fundamental_row_adjoint(1.0, 1.0, HEPS, 1.0, 0.0, SolverConfig(dt=1e-3), grid, 0.05)
