"""Monte-Carlo simulation of the stochastic flow driven by the singular drift,
its spatial derivative, the inverse flow, and Feynman-Kac reconstruction of
solutions to the linear equation.

Paths use counter-based substreams keyed by (seed, path index), so enlarging
the ensemble never reshuffles earlier paths, and identical configurations
reproduce bitwise-identical output.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import _kernels
from .bound_calculus import CoefficientSeries
from .exceptions import DomainError, ExtrapolationError, SetupError
from .special_functions import (
    DriftFamily,
    DriftSign,
    DriftSpec,
    get_mc_drift_tables,
)


def default_start_grid(half_width: float = 20.0, core: float = 4.0) -> tuple:
    """Starting points dense where the flow derivative varies (near 0) and
    coarse in the far field."""
    left = np.arange(-half_width, -core, 1.0)
    mid = np.arange(-core, core + 1e-9, 0.2)
    right = np.arange(core + 1.0, half_width + 1e-9, 1.0)
    return tuple(np.concatenate([left, mid, right]))


@dataclass(frozen=True)
class McConfig:
    n_paths: int = 10_000
    dt_sde: float = 1e-3
    seed: int = 0
    start_grid: tuple = default_start_grid()
    antithetic: bool = False
    output_times: tuple | None = None  # None: horizon only
    escape_radius: float = 200.0
    h0_cell_delta: float = 2e-3  # averaging width for the exact family's h'
    chunk_paths: int = 4096

    def __post_init__(self):
        if self.n_paths < 1:
            raise SetupError("n_paths must be >= 1")
        if self.dt_sde <= 0:
            raise SetupError("dt_sde must be positive")
        sg = np.asarray(self.start_grid, dtype=float)
        if sg.ndim != 1 or sg.size < 2 or np.any(np.diff(sg) <= 0):
            raise SetupError("start_grid must be strictly increasing")
        if self.antithetic and self.n_paths % 2:
            raise SetupError("antithetic sampling needs an even path count")


@dataclass
class PathEnsemble:
    """Flow samples Phi and the accumulated integral of g h'(Phi) per
    (output time, path, starting point)."""

    spec: DriftSpec
    mu1: float
    nu: float
    cfg: McConfig
    horizon: float
    times: np.ndarray
    starts: np.ndarray
    phi: np.ndarray       # (n_out, n_paths, n_start)
    psi_exponent: np.ndarray  # same shape; integral of g h'(Phi) ds
    escaped: np.ndarray   # (n_paths,) bool
    meta: dict = field(default_factory=dict)

    def psi(self, it: int) -> np.ndarray:
        """d Phi / d xi along each path at output index ``it``; equals
        exp(-sign mu1 int g h'(Phi)), in (0, 1] for the stabilizing sign."""
        return np.exp(-self.spec.sign_factor * self.mu1 * self.psi_exponent[it])

    def time_index(self, t: float) -> int:
        idx = int(np.argmin(np.abs(self.times - t)))
        if abs(self.times[idx] - t) > 1e-9 * max(1.0, abs(t)):
            raise DomainError(f"time {t} not among the stored output times")
        return idx

    def dump(self, path) -> None:
        """Binary layout: one JSON header line (seed, shapes, dtype '<f8',
        array order) followed by the raw bytes of phi then psi_exponent."""
        path = Path(path)
        header = {
            "seed": self.cfg.seed,
            "dtype": "<f8",
            "order": "C",
            "arrays": ["phi", "psi_exponent"],
            "shape": list(self.phi.shape),
            "times": [float(t) for t in self.times],
            "starts": [float(s) for s in self.starts],
        }
        with path.open("wb") as fh:
            fh.write((json.dumps(header, sort_keys=True) + "\n").encode())
            fh.write(self.phi.astype("<f8").tobytes(order="C"))
            fh.write(self.psi_exponent.astype("<f8").tobytes(order="C"))


def _path_normals(seed: int, indices: np.ndarray, n_steps: int, antithetic: bool):
    """Normals per path from Philox substreams keyed by (seed, path index).

    With antithetic pairing, odd paths mirror their even partner's stream.
    """
    out = np.empty((indices.size, n_steps))
    for row, idx in enumerate(indices):
        if antithetic:
            base = int(idx) - (int(idx) % 2)
            gen = np.random.Generator(
                np.random.Philox(key=np.array([seed, base], dtype=np.uint64))
            )
            z = gen.standard_normal(n_steps)
            out[row] = z if int(idx) % 2 == 0 else -z
        else:
            gen = np.random.Generator(
                np.random.Philox(key=np.array([seed, int(idx)], dtype=np.uint64))
            )
            out[row] = gen.standard_normal(n_steps)
    return out


def simulate_flow(
    spec: DriftSpec,
    mu1: float,
    g,
    nu: float,
    cfg: McConfig,
    horizon: float,
) -> PathEnsemble:
    """Euler-Maruyama flow with noise shared across starting points per path.

    The flow derivative is accumulated as the exact exponential of the
    left-endpoint quadrature of g h'(Phi), which keeps it in (0, 1] for the
    stabilizing orientation. ``nu = 0`` runs the deterministic characteristics
    (validation against ODE integrators).
    """
    if horizon <= 0:
        raise DomainError("horizon must be positive")
    if nu < 0:
        raise DomainError("nu must be non-negative")
    n_steps = max(1, int(math.ceil(horizon / cfg.dt_sde - 1e-9)))
    dt = horizon / n_steps
    wanted = cfg.output_times if cfg.output_times is not None else (horizon,)
    out_steps = sorted({min(n_steps, max(0, int(round(t / dt)))) for t in wanted})
    out_steps = np.asarray(out_steps, dtype=np.int64)
    times = dt * out_steps.astype(float)

    starts = np.asarray(cfg.start_grid, dtype=float)
    if isinstance(g, CoefficientSeries):
        g_steps = np.asarray(g.eval(dt * np.arange(n_steps)), dtype=float)
    elif callable(g):
        g_steps = np.asarray([float(g(dt * k)) for k in range(n_steps)])
    else:
        g_steps = np.full(n_steps, float(g))

    tab = get_mc_drift_tables(spec)
    noise_scale = math.sqrt(8.0 * nu * dt)

    n_out = out_steps.size
    phi = np.empty((n_out, cfg.n_paths, starts.size))
    acc = np.empty((n_out, cfg.n_paths, starts.size))
    escaped = np.zeros(cfg.n_paths, dtype=np.bool_)

    for lo in range(0, cfg.n_paths, cfg.chunk_paths):
        hi = min(cfg.n_paths, lo + cfg.chunk_paths)
        idx = np.arange(lo, hi)
        normals = _path_normals(cfg.seed, idx, n_steps, cfg.antithetic)
        esc_chunk = np.zeros(hi - lo, dtype=np.bool_)
        phi_chunk = np.empty((n_out, hi - lo, starts.size))
        acc_chunk = np.empty((n_out, hi - lo, starts.size))
        _kernels.em_loop(
            starts, normals, g_steps, out_steps,
            float(mu1), spec.sign_factor, dt, noise_scale,
            tab.family_id, spec.beta, tab.eps_pow, cfg.h0_cell_delta,
            tab.fine_dx, tab.fine_h, tab.fine_hp,
            tab.coarse_x0, tab.coarse_dx, tab.coarse_h, tab.coarse_hp,
            tab.plateau,
            cfg.escape_radius,
            phi_chunk, acc_chunk, esc_chunk,
        )
        phi[:, lo:hi, :] = phi_chunk
        acc[:, lo:hi, :] = acc_chunk
        escaped[lo:hi] = esc_chunk
    return PathEnsemble(
        spec=spec,
        mu1=mu1,
        nu=nu,
        cfg=cfg,
        horizon=horizon,
        times=times,
        starts=starts,
        phi=phi,
        psi_exponent=acc,
        escaped=escaped,
        meta={"dt": dt, "n_steps": n_steps},
    )


@dataclass
class FlowInversion:
    """Samples of the inverse flow A and of B = dA/dxi at query points."""

    query: np.ndarray
    A: np.ndarray          # (n_paths, n_query)
    B: np.ndarray
    retained: np.ndarray   # bool mask, False where the query left the image
    n_monotone_violations: int


def invert_flow(
    ensemble: PathEnsemble, t: float, query_points, bracket: str = "interp"
) -> FlowInversion:
    """Monotone piecewise-linear inversion of Phi(t, .) per path.

    B = 1/psi at the inverse point: ``bracket='interp'`` (default) linearly
    interpolates the accumulated exponent between the bracketing starting
    points (log-linear in psi, so B >= 1 survives exactly for the stabilizing
    orientation); ``bracket='left'`` evaluates at the left bracketing start.
    Queries outside a path's image interval are dropped (counted, never
    extrapolated).
    """
    it = ensemble.time_index(t)
    q = np.asarray(query_points, dtype=float)
    xs = ensemble.phi[it]                       # (P, S)
    acc = ensemble.psi_exponent[it]             # (P, S)
    P, S = xs.shape
    mono_ok = np.all(np.diff(xs, axis=1) > 0.0, axis=1)
    n_bad = int(P - mono_ok.sum())
    retained = mono_ok[:, None] & (q[None, :] >= xs[:, :1]) & (q[None, :] <= xs[:, -1:])
    # vectorized bracketing index per (path, query)
    idx = (xs[:, :, None] <= q[None, None, :]).sum(axis=1) - 1
    idx = np.clip(idx, 0, S - 2)
    x_lo = np.take_along_axis(xs, idx, axis=1)
    x_hi = np.take_along_axis(xs, idx + 1, axis=1)
    s_lo = ensemble.starts[idx]
    s_hi = ensemble.starts[idx + 1]
    frac = np.where(x_hi > x_lo, (q[None, :] - x_lo) / (x_hi - x_lo), 0.0)
    A = s_lo + frac * (s_hi - s_lo)
    a_lo = np.take_along_axis(acc, idx, axis=1)
    if bracket == "left":
        acc_q = a_lo
    else:
        a_hi = np.take_along_axis(acc, idx + 1, axis=1)
        frac_s = (A - s_lo) / (s_hi - s_lo)
        acc_q = a_lo + frac_s * (a_hi - a_lo)
    B = np.exp(ensemble.spec.sign_factor * ensemble.mu1 * acc_q)
    return FlowInversion(q, A, B, retained, n_bad)


@dataclass
class PointEstimates:
    query: np.ndarray
    mean: np.ndarray
    se: np.ndarray
    n_retained: np.ndarray
    insufficient: np.ndarray  # True where fewer than 100 samples survived


def _mean_se(samples: np.ndarray, retained: np.ndarray, antithetic: bool):
    """Column-wise mean and standard error; antithetic pairs count as units."""
    vals = np.where(retained, samples, np.nan)
    if antithetic:
        P = vals.shape[0]
        vals = vals.reshape(P // 2, 2, -1)
        both = retained.reshape(P // 2, 2, -1).all(axis=1)
        unit = np.where(both, vals.mean(axis=1), np.nan)
    else:
        unit = vals
        both = retained
    n = both.sum(axis=0)
    mean = np.nanmean(np.where(both, unit, np.nan), axis=0)
    sd = np.nanstd(np.where(both, unit, np.nan), axis=0, ddof=1)
    se = np.where(n > 1, sd / np.sqrt(np.maximum(n, 1)), np.inf)
    return mean, se, n


def estimate_Bbar(ensemble: PathEnsemble, t: float, grid) -> PointEstimates:
    """Path average of B over the ensemble with standard errors per point."""
    inv = invert_flow(ensemble, t, grid)
    mean, se, n = _mean_se(inv.B, inv.retained, ensemble.cfg.antithetic)
    return PointEstimates(inv.query, mean, se, n, n < 100)


def estimate_b_moment(ensemble: PathEnsemble, t: float, lam: float, grid) -> PointEstimates:
    """Empirical lambda-moment of B.

    Exploratory diagnostic only: for lambda > 1 no sup-norm bound is asserted
    anywhere in the package; the estimate is reported as data.
    """
    inv = invert_flow(ensemble, t, grid)
    mean, se, n = _mean_se(inv.B**lam, inv.retained, ensemble.cfg.antithetic)
    return PointEstimates(inv.query, mean, se, n, n < 100)


def _interp_over_starts(starts: np.ndarray, table: np.ndarray, pts: np.ndarray):
    """Per-path linear interpolation of ``table`` (P, S) at ``pts`` (P, Q),
    with the interpolation variable being the shared ``starts`` grid."""
    S = starts.size
    idx = np.clip(np.searchsorted(starts, pts) - 1, 0, S - 2)
    s_lo = starts[idx]
    s_hi = starts[idx + 1]
    frac = (pts - s_lo) / (s_hi - s_lo)
    v_lo = np.take_along_axis(table, idx, axis=1)
    v_hi = np.take_along_axis(table, idx + 1, axis=1)
    return v_lo + frac * (v_hi - v_lo)


def reconstruct_solution(
    v0,
    lam: float,
    d,
    ensemble: PathEnsemble,
    query_points,
    t: float | None = None,
) -> PointEstimates:
    """Feynman-Kac estimate of the solution with exponent ratio ``lam``:

        V(t, xi) = E[ v0(A) B^lam ]
                 + E[ B^lam * int_0^t d(s, Phi(s, A)) B(s, Phi(s, A))^(-lam) ds ]

    where B(s, Phi(s, A)) reduces to 1/psi(s, A) along each path. The forcing
    integral uses the stored output times (trapezoid).
    """
    if not (0.0 <= lam <= 2.0):
        raise DomainError("lambda must lie in [0, 2]")
    t = ensemble.times[-1] if t is None else t
    it = ensemble.time_index(t)
    inv = invert_flow(ensemble, t, query_points)
    term = np.asarray(v0(inv.A) if callable(v0) else v0, dtype=float) * inv.B**lam
    if d is not None:
        times = ensemble.times[: it + 1]
        if times.size < 2:
            raise SetupError(
                "forcing reconstruction needs intermediate output times"
            )
        sign_mu1 = ensemble.spec.sign_factor * ensemble.mu1
        vals = np.zeros((times.size,) + inv.A.shape)
        for k, s in enumerate(times):
            phi_s = _interp_over_starts(ensemble.starts, ensemble.phi[k], inv.A)
            acc_s = _interp_over_starts(ensemble.starts, ensemble.psi_exponent[k], inv.A)
            psi_s_lam = np.exp(-sign_mu1 * lam * acc_s)
            vals[k] = _eval_forcing(d, float(s), phi_s) * psi_s_lam
        integral = np.trapezoid(vals, times, axis=0)
        term = term + inv.B**lam * integral
    mean, se, n = _mean_se(term, inv.retained, ensemble.cfg.antithetic)
    return PointEstimates(inv.query, mean, se, n, n < 100)


def _eval_forcing(d, s: float, x: np.ndarray) -> np.ndarray:
    if isinstance(d, tuple):
        f_t, shape = d
        fval = float(f_t.eval(s)) if isinstance(f_t, CoefficientSeries) else (
            float(f_t(s)) if callable(f_t) else float(f_t)
        )
        return fval * shape(x)
    return d(s, x)


def bbar_rows(est: PointEstimates, t: float) -> list[dict]:
    """CSV-ready rows: xi, t, mean_B, se_B, n_retained."""
    rows = []
    for i, xi in enumerate(est.query):
        rows.append(
            {
                "xi": repr(float(xi)),
                "t": repr(float(t)),
                "mean_B": repr(float(est.mean[i])),
                "se_B": repr(float(est.se[i])),
                "n_retained": str(int(est.n_retained[i])),
            }
        )
    return rows
