"""Finite-difference solution of the 1D linear equation with singular drift
and zeroth-order term, the nonlocal half-line equation, and estimation of the
fundamental solution.

Spatial discretization: symmetric grid geometrically refined toward 0,
flux-form upwind transport (explicit), flux-form diffusion (implicit backward
Euler), explicit zeroth-order term. With matched transport/zeroth-order
amplitudes the update is in pure divergence form, so total mass telescopes to
boundary fluxes.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from enum import Enum

import numpy as np

from . import _kernels
from .accel import numba_enabled
from .bound_calculus import CoefficientSeries
from .exceptions import (
    CflError,
    DivergenceError,
    DomainError,
    ResolutionError,
    SetupError,
)
from .special_functions import (
    DriftFamily,
    DriftSpec,
    drift_deriv,
    drift_eval,
)

# ---------------------------------------------------------------------------
# Grid
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SpatialGrid:
    """Mirror-symmetric node set with 0 as a node."""

    x: np.ndarray

    def __post_init__(self):
        x = np.asarray(self.x, dtype=float)
        object.__setattr__(self, "x", x)
        if x.ndim != 1 or x.size < 5:
            raise SetupError("grid needs at least 5 nodes")
        if np.any(np.diff(x) <= 0):
            raise SetupError("grid nodes must be strictly increasing")
        if not np.allclose(x + x[::-1], 0.0, atol=1e-12):
            raise SetupError("grid must be mirror-symmetric about 0")
        if x[self.izero] != 0.0:
            raise SetupError("grid must contain 0 as a node")

    @property
    def n(self) -> int:
        return self.x.size

    @property
    def izero(self) -> int:
        return self.x.size // 2

    @property
    def half_width(self) -> float:
        return float(self.x[-1])

    @property
    def spacings(self) -> np.ndarray:
        return np.diff(self.x)

    @property
    def min_dx(self) -> float:
        return float(np.min(self.spacings))

    @property
    def cell_widths(self) -> np.ndarray:
        h = self.spacings
        cw = np.empty(self.n)
        cw[0] = h[0] / 2.0
        cw[-1] = h[-1] / 2.0
        cw[1:-1] = (h[:-1] + h[1:]) / 2.0
        return cw

    @property
    def half(self) -> np.ndarray:
        """Non-negative nodes (including 0)."""
        return self.x[self.izero :]


def geometric_grid(
    half_width: float = 20.0,
    min_dx: float | None = None,
    ratio: float = 1.05,
    max_dx: float = 0.0206,
) -> SpatialGrid:
    """Symmetric grid refined toward 0: spacing grows geometrically from
    ``min_dx`` (default 1e-4 * half_width) until capped at ``max_dx``.

    Spacings are rescaled so the last node lands exactly on the half width.
    """
    if min_dx is None:
        min_dx = 1e-4 * half_width
    if not (0 < min_dx <= max_dx <= half_width):
        raise SetupError("need 0 < min_dx <= max_dx <= half_width")
    steps = []
    dx = min_dx
    total = 0.0
    while total < half_width:
        steps.append(dx)
        total += dx
        dx = min(dx * ratio, max_dx)
    steps = np.asarray(steps)
    steps *= half_width / total
    pos = np.concatenate([[0.0], np.cumsum(steps)])
    pos[-1] = half_width
    x = np.concatenate([-pos[::-1][:-1], pos])
    return SpatialGrid(x)


# ---------------------------------------------------------------------------
# Solver configuration and solution container
# ---------------------------------------------------------------------------


class Scheme(Enum):
    IMEX = "imex"
    FULLY_IMPLICIT = "fully_implicit"


class Boundary(Enum):
    DIRICHLET_FARFIELD = "dirichlet_farfield"
    HOMOGENEOUS_AT_ZERO_HALFLINE = "zero_at_origin_halfline"


@dataclass(frozen=True)
class SolverConfig:
    dt: float | None = None
    scheme: Scheme = Scheme.IMEX
    boundary: Boundary = Boundary.DIRICHLET_FARFIELD
    tol: float = 1e-12
    store_times: tuple | None = None  # None: initial + final
    threads: int = 1

    def __post_init__(self):
        if self.dt is not None and self.dt <= 0:
            raise SetupError("dt must be positive")


@dataclass
class SolutionField:
    """Space-time samples of a scalar field plus per-step norm trails."""

    grid: SpatialGrid
    times: np.ndarray          # stored snapshot times
    values: np.ndarray         # (n_stored, n_nodes)
    times_all: np.ndarray      # every step time
    linf_trail: np.ndarray
    l1_trail: np.ndarray
    boundary_flux_trail: np.ndarray | None = None
    meta: dict = field(default_factory=dict)

    def value_at(self, t: float) -> np.ndarray:
        idx = int(np.argmin(np.abs(self.times - t)))
        if abs(self.times[idx] - t) > 1e-9 * max(1.0, abs(t)):
            raise DomainError(f"time {t} was not stored (have {self.times})")
        return self.values[idx]

    @property
    def final(self) -> np.ndarray:
        return self.values[-1]

    def lp_norm(self, t: float, p: float) -> float:
        v = self.value_at(t)
        cw = self.grid.cell_widths
        if math.isinf(p):
            return float(np.max(np.abs(v)))
        return float(np.dot(cw, np.abs(v) ** p) ** (1.0 / p))

    def norms_rows(self, p_list=()) -> list[dict]:
        rows = []
        for i, t in enumerate(self.times):
            row = {
                "t": repr(float(t)),
                "linf": repr(float(np.max(np.abs(self.values[i])))),
                "l1": repr(float(np.dot(self.grid.cell_widths, np.abs(self.values[i])))),
            }
            for p in p_list:
                row[f"lp:{p:g}"] = repr(self.lp_norm(float(t), float(p)))
            rows.append(row)
        return rows


# ---------------------------------------------------------------------------
# Coefficient preparation
# ---------------------------------------------------------------------------


def _g_steps(g, t0: float, dt: float, n_steps: int) -> np.ndarray:
    """Left-endpoint samples of the time coefficient."""
    ts = t0 + dt * np.arange(n_steps)
    if isinstance(g, CoefficientSeries):
        return np.asarray(g.eval(ts), dtype=float)
    if callable(g):
        return np.asarray([float(g(t)) for t in ts], dtype=float)
    return np.full(n_steps, float(g))


def _normalize_forcing(d, x: np.ndarray, t0: float, dt: float, n_steps: int):
    """Forcing as a sum of separable terms f_k(t) D_k(xi) -> sampled arrays."""
    if d is None:
        return np.zeros((0, n_steps)), np.zeros((0, x.size))
    if isinstance(d, tuple):
        d = [d]
    f_rows, s_rows = [], []
    for time_factor, shape in d:
        f_rows.append(_g_steps(time_factor, t0, dt, n_steps))
        s = shape(x) if callable(shape) else np.asarray(shape, dtype=float)
        if s.shape != x.shape:
            raise SetupError("forcing shape does not match the grid")
        s_rows.append(s)
    return np.asarray(f_rows), np.asarray(s_rows)


def _drift_node_arrays(spec: DriftSpec, grid: SpatialGrid):
    """h at interfaces and h' at nodes.

    For the exact power family the node coefficient is the exact cell average
    of h' (increments of h across the cell edges): the pointwise value is
    infinite at the origin and first-order inconsistent next to it, while the
    average is the quantity the equation integrates. Mollified families use
    pointwise values (matching the path-simulation convention).
    """
    mids = 0.5 * (grid.x[:-1] + grid.x[1:])
    a_iface = np.asarray(drift_eval(spec, mids), dtype=float)
    hprime = np.empty(grid.n)
    if spec.family is DriftFamily.H0_EXACT:
        edges = np.concatenate([[grid.x[0]], mids, [grid.x[-1]]])
        h_at_edges = np.asarray(drift_eval(spec, edges), dtype=float)
        widths = np.diff(edges)
        hprime[:] = np.diff(h_at_edges) / widths
    else:
        hprime[:] = drift_deriv(spec, grid.x)
    return a_iface, hprime


def _diffusion_matrix(grid: SpatialGrid, nu: float, dt: float, left_row: str, right_row: str):
    """Backward-Euler matrix I - dt*Ldiff in (lo, di, up) and banded forms.

    ``left_row``/``right_row``: 'dirichlet' pins the value, 'neumann' closes
    the flux form with a zero exterior flux.
    """
    n = grid.n
    h = grid.spacings
    cw = grid.cell_widths
    lo = np.zeros(n)
    di = np.ones(n)
    up = np.zeros(n)
    coef = 4.0 * nu * dt
    di[1:-1] = 1.0 + coef / cw[1:-1] * (1.0 / h[1:] + 1.0 / h[:-1])
    lo[1:-1] = -coef / (cw[1:-1] * h[:-1])
    up[1:-1] = -coef / (cw[1:-1] * h[1:])
    if left_row == "neumann":
        di[0] = 1.0 + coef / (cw[0] * h[0])
        up[0] = -coef / (cw[0] * h[0])
    if right_row == "neumann":
        di[-1] = 1.0 + coef / (cw[-1] * h[-1])
        lo[-1] = -coef / (cw[-1] * h[-1])
    banded = np.zeros((3, n))
    banded[0, 1:] = up[:-1]
    banded[1, :] = di
    banded[2, :-1] = lo[1:]
    return lo, di, up, banded


def cfl_required_dt(
    grid: SpatialGrid,
    a_iface: np.ndarray,
    react_node: np.ndarray,
    g_max: float,
    vel_coef: float,
    react_coef: float,
) -> float:
    """Largest stable explicit step for the upwind transport + reaction stage."""
    cw = grid.cell_widths
    aval = np.abs(vel_coef) * g_max * np.abs(a_iface)
    denom = np.zeros(grid.n)
    denom[1:-1] = (aval[1:] + aval[:-1]) / cw[1:-1]
    c_neg = np.maximum(0.0, -react_coef * g_max * react_node)
    denom += c_neg
    dmax = float(np.max(denom))
    return math.inf if dmax == 0.0 else 1.0 / dmax


def stable_dt(
    grid: SpatialGrid,
    spec: DriftSpec,
    mu1: float,
    mu2: float,
    g_max: float,
    target: float = 2.5e-4,
) -> float:
    """A time step meeting the explicit-stage stability bound, capped at
    ``target`` for accuracy."""
    a_iface, hprime = _drift_node_arrays(spec, grid)
    vel_coef = -spec.sign_factor * mu1
    react_coef = mu2 - spec.sign_factor * mu1
    required = cfl_required_dt(grid, a_iface, hprime, g_max, vel_coef, react_coef)
    return min(target, 0.45 * required)


def _resolve_steps(t0: float, t1: float, dt: float | None, required: float):
    span = t1 - t0
    if span <= 0:
        raise DomainError("horizon must exceed the start time")
    if dt is None:
        dt = min(0.45 * required, span / 100.0)
    if dt > required * (1.0 + 1e-9):
        raise CflError(dt, required)
    n_steps = max(1, int(math.ceil(span / dt - 1e-9)))
    return span / n_steps, n_steps


def _store_steps(cfg: SolverConfig, t0: float, dt: float, n_steps: int):
    """Map requested snapshot times to their nearest step indices."""
    if cfg.store_times is None:
        wanted = [t0, t0 + dt * n_steps]
    else:
        wanted = list(cfg.store_times)
    steps = sorted({min(n_steps, max(0, int(round((t - t0) / dt)))) for t in wanted})
    return np.asarray(steps, dtype=np.int64)


# ---------------------------------------------------------------------------
# solve_linear
# ---------------------------------------------------------------------------


def solve_linear(
    v0,
    spec: DriftSpec,
    mu1: float,
    mu2: float,
    g,
    d,
    cfg: SolverConfig,
    grid: SpatialGrid,
    horizon: float,
    nu: float = 1.0,
    t0: float = 0.0,
) -> SolutionField:
    """March dV/dt - 4 nu V'' - sign*mu1 g h V' = mu2 g h' V + d on the line.

    The transport and the matched part of the zeroth-order term are stepped in
    divergence form; the remainder (mu2 - sign*mu1) g h' V is an explicit
    reaction. Far-field boundary values are pinned to the initial data.
    """
    v = np.asarray(v0(grid.x) if callable(v0) else v0, dtype=float).copy()
    if v.shape != grid.x.shape:
        raise SetupError("initial data does not match the grid")
    if not np.all(np.isfinite(v)):
        raise SetupError("initial data must be finite")
    a_iface, hprime = _drift_node_arrays(spec, grid)
    vel_coef = -spec.sign_factor * mu1
    react_coef = mu2 - spec.sign_factor * mu1

    probe = _g_steps(g, t0, (horizon - t0) / 1024.0, 1024)
    g_max = float(np.max(probe)) if probe.size else 0.0
    required = cfl_required_dt(grid, a_iface, hprime, g_max, vel_coef, react_coef)
    if cfg.scheme is Scheme.FULLY_IMPLICIT:
        dt, n_steps = _resolve_steps(t0, horizon, cfg.dt, math.inf)
    else:
        dt, n_steps = _resolve_steps(t0, horizon, cfg.dt, required)

    g_steps = _g_steps(g, t0, dt, n_steps)
    f_steps, d_shapes = _normalize_forcing(d, grid.x, t0, dt, n_steps)
    store = _store_steps(cfg, t0, dt, n_steps)

    lo, di, up, banded = _diffusion_matrix(grid, nu, dt, "dirichlet", "dirichlet")
    cp, den = _kernels.thomas_factor(lo, di, up)

    n = grid.n
    out_fields = np.zeros((store.size, n))
    linf = np.zeros(n_steps + 1)
    l1 = np.zeros(n_steps + 1)
    bflux = np.zeros(n_steps + 1)
    rhs = np.zeros(n)
    flux = np.zeros(n - 1)

    if cfg.scheme is Scheme.FULLY_IMPLICIT:
        status, at = _fully_implicit_march(
            v, grid, nu, a_iface, hprime, g_steps, f_steps, d_shapes,
            vel_coef, react_coef, dt, store, out_fields, linf, l1, bflux,
        )
    else:
        status, at = _kernels.linear_loop(
            v, grid.cell_widths, 1.0 / grid.spacings, a_iface, hprime,
            g_steps, f_steps, d_shapes, vel_coef, react_coef, dt,
            float(v[0]), float(v[-1]), True,
            lo, cp, den, store, out_fields, linf, l1, bflux, rhs, flux,
            banded=banded,
        )
    if status != _kernels.OK:
        raise DivergenceError(int(at), t0 + dt * int(at))
    times = t0 + dt * store.astype(float)
    return SolutionField(
        grid=grid,
        times=times,
        values=out_fields,
        times_all=t0 + dt * np.arange(n_steps + 1),
        linf_trail=linf,
        l1_trail=l1,
        boundary_flux_trail=bflux,
        meta={
            "dt": dt,
            "n_steps": n_steps,
            "scheme": cfg.scheme.value,
            "mu1": mu1,
            "mu2": mu2,
            "nu": nu,
            "beta": spec.beta,
            "family": spec.family.value,
            "sign": spec.sign.value,
            "cfl_required_dt": required,
        },
    )


def _fully_implicit_march(
    v, grid, nu, a_iface, hprime, g_steps, f_steps, d_shapes,
    vel_coef, react_coef, dt, store, out_fields, linf, l1, bflux,
):
    """Backward-Euler treatment of transport and reaction as well (scipy path;
    the matrix changes with g(t), so it is refactorized per step)."""
    from scipy.linalg import solve_banded

    n = grid.n
    cw = grid.cell_widths
    isnap = 0
    linf[0] = np.max(np.abs(v))
    l1[0] = float(np.dot(cw, np.abs(v)))
    if store.size and store[0] == 0:
        out_fields[0] = v
        isnap = 1
    base_lo, base_di, base_up, _ = _diffusion_matrix(grid, nu, dt, "dirichlet", "dirichlet")
    for k in range(g_steps.size):
        g = g_steps[k]
        lo = base_lo.copy()
        di = base_di.copy()
        up = base_up.copy()
        vel = vel_coef * g * a_iface
        # implicit upwind fluxes in divergence form
        for i in range(1, n - 1):
            vl, vr = vel[i - 1], vel[i]
            if vr >= 0:
                di[i] += dt * vr / cw[i]
            else:
                up[i] += dt * vr / cw[i]
            if vl >= 0:
                lo[i] -= dt * vl / cw[i]
            else:
                di[i] -= dt * vl / cw[i]
            di[i] -= dt * react_coef * g * hprime[i]
        rhs = v.copy()
        if f_steps.shape[0]:
            rhs[1:-1] += dt * (f_steps[:, k] @ d_shapes[:, 1:-1])
        banded = np.zeros((3, n))
        banded[0, 1:] = up[:-1]
        banded[1] = di
        banded[2, :-1] = lo[1:]
        v[:] = solve_banded((1, 1), banded, rhs)
        linf[k + 1] = np.max(np.abs(v))
        l1[k + 1] = float(np.dot(cw, np.abs(v)))
        bflux[k + 1] = 0.0
        if not np.isfinite(linf[k + 1]):
            return _kernels.NONFINITE, k
        if isnap < store.size and store[isnap] == k + 1:
            out_fields[isnap] = v
            isnap += 1
    return _kernels.OK, g_steps.size


# ---------------------------------------------------------------------------
# solve_nonlocal
# ---------------------------------------------------------------------------


def solve_nonlocal(
    om0,
    spec: DriftSpec,
    mu1: float,
    C: float,
    g,
    a,
    cfg: SolverConfig,
    grid: SpatialGrid,
    horizon: float,
    nu: float = 1.0,
    t0: float = 0.0,
    bc_left=0.0,
) -> SolutionField:
    """Half-line problem with a cumulative lower-order term and zero boundary
    value at the origin (equivalent to evolving the odd extension).

    The cumulative term is (C/beta) g(t) int_0^xi h'(eta) dOmega(eta); its
    cell weights integrate h' exactly, so the origin cell costs no accuracy
    even for the exact power-law family.
    """
    xh = grid.half
    hgrid = SpatialGridHalf(xh)
    om = np.asarray(om0(xh) if callable(om0) else om0, dtype=float).copy()
    if om.shape != xh.shape:
        raise SetupError("initial data does not match the half grid")
    if abs(om[0]) > 1e-12:
        raise SetupError("initial data must vanish at the origin")

    h_node = np.asarray(drift_eval(spec, xh), dtype=float)
    h_vals = h_node  # antiderivative increments of h' are increments of h
    wcell = np.diff(h_vals) / np.diff(xh)
    k_nl = C / spec.beta
    vel_coef = -spec.sign_factor * mu1

    probe = _g_steps(g, t0, (horizon - t0) / 1024.0, 1024)
    g_max = float(np.max(probe)) if probe.size else 0.0
    cw = hgrid.cell_widths
    aval = np.abs(vel_coef) * g_max * np.abs(h_node)
    denom = np.zeros(xh.size)
    denom[1:-1] = (aval[1:-1]) * (1.0 / np.diff(xh)[:-1] + 1.0 / np.diff(xh)[1:])
    # cumulative term growth is bounded by k_nl * g * 2 h(L) * sup-slope; it is
    # mild, keep a conservative surcharge
    dmax = float(np.max(denom))
    required = math.inf if dmax == 0.0 else 1.0 / dmax
    dt, n_steps = _resolve_steps(t0, horizon, cfg.dt, required)

    g_steps = _g_steps(g, t0, dt, n_steps)
    f_steps, d_shapes = _normalize_forcing(a, xh, t0, dt, n_steps)
    for s_row in d_shapes:
        if abs(s_row[0]) > 1e-12:
            raise SetupError("forcing must vanish at the origin")
    if callable(bc_left):
        bc_steps = np.asarray([float(bc_left(t0 + dt * k)) for k in range(n_steps + 1)])
    else:
        bc_steps = np.full(n_steps + 1, float(bc_left))
    if abs(om[0] - bc_steps[0]) > 1e-12:
        raise SetupError("initial data inconsistent with the origin boundary value")
    store = _store_steps(cfg, t0, dt, n_steps)

    lo, di, up, banded = _half_diffusion_matrix(xh, cw, nu, dt)
    cp, den = _kernels.thomas_factor(lo, di, up)

    m = xh.size
    out_fields = np.zeros((store.size, m))
    linf = np.zeros(n_steps + 1)
    l1 = np.zeros(n_steps + 1)
    rhs = np.zeros(m)
    cum = np.zeros(m)
    status, at = _kernels.nonlocal_loop(
        om, cw, 1.0 / np.diff(xh), h_node, wcell, g_steps, f_steps, d_shapes,
        vel_coef, k_nl, dt, bc_steps, lo, cp, den, store, out_fields,
        linf, l1, rhs, cum,
        banded=banded,
    )
    if status != _kernels.OK:
        raise DivergenceError(int(at), t0 + dt * int(at))
    return SolutionField(
        grid=hgrid,
        times=t0 + dt * store.astype(float),
        values=out_fields,
        times_all=t0 + dt * np.arange(n_steps + 1),
        linf_trail=linf,
        l1_trail=l1,
        meta={
            "dt": dt,
            "n_steps": n_steps,
            "mu1": mu1,
            "C": C,
            "nu": nu,
            "beta": spec.beta,
            "family": spec.family.value,
            "half_line": True,
        },
    )


class SpatialGridHalf(SpatialGrid):
    """Half-line node set; relaxes the mirror-symmetry invariant."""

    def __post_init__(self):
        x = np.asarray(self.x, dtype=float)
        object.__setattr__(self, "x", x)
        if x.ndim != 1 or x.size < 3:
            raise SetupError("half grid needs at least 3 nodes")
        if x[0] != 0.0:
            raise SetupError("half grid must start at 0")
        if np.any(np.diff(x) <= 0):
            raise SetupError("half grid nodes must be strictly increasing")

    @property
    def izero(self) -> int:
        return 0

    @property
    def half(self) -> np.ndarray:
        return self.x


def _half_diffusion_matrix(xh, cw, nu, dt):
    m = xh.size
    h = np.diff(xh)
    lo = np.zeros(m)
    di = np.ones(m)
    up = np.zeros(m)
    coef = 4.0 * nu * dt
    di[1:-1] = 1.0 + coef / cw[1:-1] * (1.0 / h[1:] + 1.0 / h[:-1])
    lo[1:-1] = -coef / (cw[1:-1] * h[:-1])
    up[1:-1] = -coef / (cw[1:-1] * h[1:])
    # origin: Dirichlet; far end: zero-flux closure
    di[-1] = 1.0 + coef / (cw[-1] * h[-1])
    lo[-1] = -coef / (cw[-1] * h[-1])
    banded = np.zeros((3, m))
    banded[0, 1:] = up[:-1]
    banded[1] = di
    banded[2, :-1] = lo[1:]
    return lo, di, up, banded


# ---------------------------------------------------------------------------
# Norms and symmetry checks
# ---------------------------------------------------------------------------


def field_norms(fieldobj: SolutionField, p_list=(2.0,)) -> dict:
    """Per-stored-time norms; the L-inf/L1 trails are per step."""
    out = {
        "times": fieldobj.times.copy(),
        "linf": np.array([np.max(np.abs(v)) for v in fieldobj.values]),
        "l1": np.array(
            [np.dot(fieldobj.grid.cell_widths, np.abs(v)) for v in fieldobj.values]
        ),
    }
    for p in p_list:
        out[f"l{p:g}"] = np.array(
            [fieldobj.lp_norm(float(t), float(p)) for t in fieldobj.times]
        )
    return out


def check_symmetry_S(values: np.ndarray, grid: SpatialGrid, tol: float = 1e-6):
    """Evenness, non-negativity, and non-increase away from 0, up to ``tol``.

    Returns (ok, max_violation, detail dict).
    """
    x = grid.x
    if not np.allclose(x + x[::-1], 0.0, atol=1e-12):
        raise SetupError("symmetry check requires a mirror-symmetric grid")
    v = np.asarray(values, dtype=float)
    even_gap = float(np.max(np.abs(v - v[::-1])))
    neg_gap = float(max(0.0, -np.min(v)))
    right = v[grid.izero :]
    inc_gap = float(max(0.0, np.max(np.diff(right))))
    worst = max(even_gap, neg_gap, inc_gap)
    return worst <= tol, worst, {
        "evenness": even_gap,
        "negativity": neg_gap,
        "monotonicity": inc_gap,
    }


# ---------------------------------------------------------------------------
# Fundamental solution
# ---------------------------------------------------------------------------


@dataclass
class FundamentalSlice:
    """Column xi -> Z(t, xi; s, sigma0) and row sigma -> Z(t, 0; s, sigma)."""

    grid: SpatialGrid
    s: float
    t: float
    sigma0: float
    column: np.ndarray          # on grid.x
    row_sigma: np.ndarray       # source positions
    row: np.ndarray
    delta_width: float
    richardson_l1_shift: float  # |L1(w) - L1(w/2)| from the width halving
    richardson_sup_shift: float
    meta: dict = field(default_factory=dict)

    @property
    def row_l1(self) -> float:
        return float(np.trapezoid(self.row, self.row_sigma))

    @property
    def row_sup(self) -> float:
        return float(np.max(self.row))


def _delta_profile(x: np.ndarray, center: float, w: float, cw: np.ndarray) -> np.ndarray:
    prof = np.exp(-((x - center) ** 2) / (2.0 * w * w))
    mass = float(np.dot(cw, prof))
    return prof / mass


def _single_source_value_at_zero(args):
    (sigma, s, t, spec, mu1, mu2, g, cfg, grid, w, nu) = args
    prof = _delta_profile(grid.x, sigma, w, grid.cell_widths)
    sol = solve_linear(
        prof, spec, mu1, mu2, g, None,
        replace(cfg, store_times=(t,)), grid, horizon=t, t0=s, nu=nu,
    )
    return float(sol.final[grid.izero])


def fundamental_solution(
    s: float,
    t: float,
    spec: DriftSpec,
    mu1: float,
    mu2: float,
    g,
    cfg: SolverConfig,
    grid: SpatialGrid,
    delta_width: float,
    sigma0: float = 0.0,
    source_half_width: float | None = None,
    source_dx: float = 0.25,
    richardson: bool = True,
    nu: float = 1.0,
) -> FundamentalSlice:
    """Smoothed-delta estimate of the propagator of the divergence-form
    operator.

    Column: one forward solve from a normalized Gaussian at ``sigma0``.
    Row: forward solves from sources on a grid, reading the value at 0
    (linearity). Halving the delta width gives the recorded Richardson shift.
    """
    if delta_width < 3.0 * grid.min_dx:
        raise ResolutionError(
            f"delta width {delta_width} under-resolved: need >= {3.0 * grid.min_dx}"
        )
    if not s < t:
        raise DomainError("need s < t")
    prof = _delta_profile(grid.x, sigma0, delta_width, grid.cell_widths)
    col = solve_linear(
        prof, spec, mu1, mu2, g, None, replace(cfg, store_times=(t,)), grid,
        horizon=t, t0=s, nu=nu,
    ).final
    if source_half_width is None:
        source_half_width = min(grid.half_width * 0.75, 15.0)
    sig = np.arange(-source_half_width, source_half_width + source_dx / 2, source_dx)
    tasks = [
        (float(sg), s, t, spec, mu1, mu2, g, cfg, grid, delta_width, nu) for sg in sig
    ]
    if cfg.threads > 1:
        with ThreadPoolExecutor(max_workers=cfg.threads) as ex:
            row = np.asarray(list(ex.map(_single_source_value_at_zero, tasks)))
    else:
        row = np.asarray([_single_source_value_at_zero(a) for a in tasks])
    rich_l1 = rich_sup = math.nan
    if richardson:
        half_w = delta_width / 2.0
        if half_w >= 3.0 * grid.min_dx:
            sub = sig[:: max(1, sig.size // 16)]
            coarse = np.interp(sub, sig, row)
            tasks2 = [
                (float(sg), s, t, spec, mu1, mu2, g, cfg, grid, half_w, nu) for sg in sub
            ]
            fine = np.asarray([_single_source_value_at_zero(a) for a in tasks2])
            rich_sup = float(np.max(np.abs(fine - coarse)))
            rich_l1 = float(np.trapezoid(np.abs(fine - coarse), sub))
    return FundamentalSlice(
        grid=grid,
        s=s,
        t=t,
        sigma0=sigma0,
        column=col,
        row_sigma=sig,
        row=row,
        delta_width=delta_width,
        richardson_l1_shift=rich_l1,
        richardson_sup_shift=rich_sup,
        meta={"mu1": mu1, "mu2": mu2, "beta": spec.beta, "method": "sources"},
    )


@dataclass
class AdjointRow:
    """Row sigma -> Z(t, 0; s, sigma), and its norms for every intermediate
    start time, from one backward sweep of the adjoint transport-diffusion
    equation."""

    grid: SpatialGrid
    s: float
    t: float
    row: np.ndarray             # on grid.x, at start time s
    r_times: np.ndarray         # intermediate start times (descending from t)
    sup_trail: np.ndarray       # sup_sigma Z(t,0;r,.)
    l1_trail: np.ndarray
    snapshots: dict             # r -> row array
    delta_width: float

    @property
    def row_l1(self) -> float:
        return float(np.dot(self.grid.cell_widths, np.abs(self.row)))

    @property
    def row_sup(self) -> float:
        return float(np.max(self.row))

    def sup_at(self, r: float) -> float:
        idx = int(np.argmin(np.abs(self.r_times - r)))
        return float(self.sup_trail[idx])


def fundamental_row_adjoint(
    s: float,
    t: float,
    spec: DriftSpec,
    mu1: float,
    g,
    cfg: SolverConfig,
    grid: SpatialGrid,
    delta_width: float,
    snapshot_times: tuple = (),
    nu: float = 1.0,
) -> AdjointRow:
    """One solve for the whole row: for fixed observation point (t, 0) the
    propagator solves, backwards in the start time, a pure transport-diffusion
    equation whose singular zeroth-order term is absent."""
    if delta_width < 3.0 * grid.min_dx:
        raise ResolutionError(
            f"delta width {delta_width} under-resolved: need >= {3.0 * grid.min_dx}"
        )
    if not s < t:
        raise DomainError("need s < t")
    y = _delta_profile(grid.x, 0.0, delta_width, grid.cell_widths)
    a_iface, _ = _drift_node_arrays(spec, grid)
    h_node = np.asarray(drift_eval(spec, grid.x), dtype=float)
    cw = grid.cell_widths
    # CFL for the adjoint transport
    g_probe = _g_steps(g, s, (t - s) / 1024.0, 1024)
    g_max = float(np.max(g_probe))
    h_sp = np.diff(grid.x)
    vmax = mu1 * g_max * np.abs(h_node[1:-1])
    denom = vmax * (1.0 / h_sp[:-1] + 1.0 / h_sp[1:])
    dmax = float(np.max(denom)) if denom.size else 0.0
    required = math.inf if dmax == 0.0 else 1.0 / dmax
    dt, n_steps = _resolve_steps(0.0, t - s, cfg.dt, required)
    # g evaluated at t - tau (left endpoint in tau)
    taus = dt * np.arange(n_steps)
    if isinstance(g, CoefficientSeries):
        g_rev = np.asarray(g.eval(t - taus), dtype=float)
    elif callable(g):
        g_rev = np.asarray([float(g(t - tau)) for tau in taus])
    else:
        g_rev = np.full(n_steps, float(g))
    snap_steps = sorted({int(round((t - r) / dt)) for r in snapshot_times})
    snap_steps = [k for k in snap_steps if 0 <= k <= n_steps]
    store = np.asarray(snap_steps, dtype=np.int64)
    lo, di, up, banded = _diffusion_matrix(grid, nu, dt, "dirichlet", "dirichlet")
    cp, den = _kernels.thomas_factor(lo, di, up)
    out_fields = np.zeros((store.size, grid.n))
    sup_trail = np.zeros(n_steps + 1)
    l1_trail = np.zeros(n_steps + 1)
    rhs = np.zeros(grid.n)
    status, at = _kernels.adjoint_loop(
        y, cw, 1.0 / h_sp, h_node, g_rev, mu1, dt, lo, cp, den,
        store, out_fields, sup_trail, l1_trail, rhs,
        banded=banded,
    )
    if status != _kernels.OK:
        raise DivergenceError(int(at), t - dt * int(at))
    snapshots = {float(t - k * dt): out_fields[i] for i, k in enumerate(store)}
    return AdjointRow(
        grid=grid,
        s=s,
        t=t,
        row=y,
        r_times=t - dt * np.arange(n_steps + 1),
        sup_trail=sup_trail,
        l1_trail=l1_trail,
        snapshots=snapshots,
        delta_width=delta_width,
    )


def chapman_kolmogorov_error(
    s: float,
    r: float,
    t: float,
    spec: DriftSpec,
    mu1: float,
    mu2: float,
    g,
    cfg: SolverConfig,
    grid: SpatialGrid,
    delta_width: float,
    source_half_width: float = 8.0,
    source_dx: float = 0.5,
) -> float:
    """L1 gap between the direct row Z(t,0;s,.) and its composition through
    the intermediate time r. Exercises the forward per-source and backward
    adjoint routes against each other."""
    if not s < r < t:
        raise DomainError("need s < r < t")
    adj = fundamental_row_adjoint(s, t, spec, mu1, g, cfg, grid, delta_width)
    adj_r = fundamental_row_adjoint(r, t, spec, mu1, g, cfg, grid, delta_width)
    row_r = adj_r.row  # Z(t,0;r,mu) on grid.x
    sig = np.arange(-source_half_width, source_half_width + source_dx / 2, source_dx)
    composed = np.zeros_like(sig)
    cw = grid.cell_widths
    for j, sg in enumerate(sig):
        prof = _delta_profile(grid.x, float(sg), delta_width, cw)
        mid = solve_linear(
            prof, spec, mu1, mu2, g, None, replace(cfg, store_times=(r,)),
            grid, horizon=r, t0=s,
        ).final
        composed[j] = float(np.dot(cw, row_r * mid))
    direct = np.interp(sig, grid.x, adj.row)
    return float(np.trapezoid(np.abs(composed - direct), sig))
