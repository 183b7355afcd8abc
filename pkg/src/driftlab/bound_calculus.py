"""Closed-form a-priori bound evaluators over sampled coefficient series.

All weighted time integrals against kernels (t-r)^kappa with kappa in (-1, 0]
are integrated exactly per cell of the series interpolant, so the integrable
endpoint singularity at r = t costs no accuracy.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace
from enum import Enum
from pathlib import Path

import numpy as np
from scipy import integrate

from .exceptions import (
    DomainError,
    InadmissibleExponentError,
    NonConvergenceError,
)
from .special_functions import Modulus, ModulusKind


class SeriesInterp(Enum):
    PIECEWISE_CONSTANT_LEFT = "pc_left"
    LINEAR = "linear"


@dataclass(frozen=True)
class CoefficientSeries:
    """A sampled non-negative function of time with exact quadrature accessors."""

    times: np.ndarray
    values: np.ndarray
    interpolation: SeriesInterp = SeriesInterp.LINEAR

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float)
        v = np.asarray(self.values, dtype=float)
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "values", v)
        if t.ndim != 1 or t.shape != v.shape or t.size < 2:
            raise DomainError("series needs matching 1-d time/value samples (>= 2)")
        if np.any(np.diff(t) <= 0):
            raise DomainError("series times must be strictly increasing")
        if np.any(v < 0) or not np.all(np.isfinite(v)):
            raise DomainError("series values must be finite and non-negative")

    # -- constructors -------------------------------------------------------
    @staticmethod
    def constant(value: float, t_end: float, t_start: float = 0.0) -> "CoefficientSeries":
        return CoefficientSeries(
            np.array([t_start, t_end]), np.array([value, value]), SeriesInterp.LINEAR
        )

    @staticmethod
    def from_callable(fn, t_start: float, t_end: float, n: int = 2001) -> "CoefficientSeries":
        ts = np.linspace(t_start, t_end, n)
        return CoefficientSeries(ts, np.asarray([fn(t) for t in ts], dtype=float))

    @staticmethod
    def from_csv(path) -> "CoefficientSeries":
        """Read a two-column ``time,value`` CSV (header required)."""
        path = Path(path)
        with path.open(newline="") as fh:
            reader = csv.reader(fh)
            try:
                header = next(reader)
            except StopIteration:
                raise DomainError(f"{path}: empty file, expected a time,value header")
            if len(header) < 2 or header[0].strip().lower() != "time" or header[1].strip().lower() != "value":
                raise DomainError(f"{path}: expected header 'time,value', got {header!r}")
            times, values = [], []
            for i, row in enumerate(reader, start=2):
                if not row:
                    continue
                try:
                    times.append(float(row[0]))
                    values.append(float(row[1]))
                except (IndexError, ValueError):
                    raise DomainError(f"{path}: malformed row {i}: {row!r}")
        t = np.asarray(times)
        v = np.asarray(values)
        if t.size < 2:
            raise DomainError(f"{path}: need at least two samples")
        if np.any(np.diff(t) <= 0):
            bad = int(np.argmax(np.diff(t) <= 0)) + 2
            raise DomainError(f"{path}: times not strictly increasing at data row {bad}")
        if np.any(v < 0):
            bad = int(np.argmax(v < 0)) + 2
            raise DomainError(f"{path}: negative value at data row {bad}")
        return CoefficientSeries(t, v)

    # -- evaluation ---------------------------------------------------------
    @property
    def support(self) -> tuple[float, float]:
        return float(self.times[0]), float(self.times[-1])

    def _check_range(self, *ts):
        lo, hi = self.support
        for t in ts:
            if t < lo - 1e-12 or t > hi + 1e-12:
                raise DomainError(f"time {t} outside series support [{lo}, {hi}]")

    def eval(self, t):
        t_arr = np.asarray(t, dtype=float)
        self._check_range(float(np.min(t_arr)), float(np.max(t_arr)))
        if self.interpolation is SeriesInterp.LINEAR:
            return np.interp(t_arr, self.times, self.values)
        idx = np.clip(np.searchsorted(self.times, t_arr, side="right") - 1, 0, self.values.size - 1)
        return self.values[idx]

    def integral(self, s: float, t: float) -> float:
        """Exact integral of the interpolant over [s, t]."""
        return self.weighted_integral(s, t, 0.0)

    def weighted_integral(self, s: float, t: float, kappa: float) -> float:
        """Exact integral of (t - r)^kappa g(r) over [s, t] for kappa > -1."""
        if s > t:
            raise DomainError(f"need s <= t, got s={s} > t={t}")
        if kappa <= -1:
            raise DomainError(f"weight exponent must exceed -1, got {kappa}")
        self._check_range(s, t)
        if s == t:
            return 0.0
        edges = np.unique(np.clip(self.times, s, t))
        edges = np.union1d(edges, [s, t])
        total = 0.0
        k1 = kappa + 1.0
        for lo, hi in zip(edges[:-1], edges[1:]):
            if hi <= lo:
                continue
            u_lo = t - lo  # largest u in the cell
            u_hi = t - hi
            if self.interpolation is SeriesInterp.PIECEWISE_CONSTANT_LEFT:
                gval = float(self.eval(lo))
                total += gval * (u_lo**k1 - u_hi**k1) / k1
            else:
                g_lo = float(self.eval(lo))
                g_hi = float(self.eval(hi))
                m = (g_hi - g_lo) / (hi - lo)
                a_coef = g_lo + m * (t - lo)
                term1 = a_coef * (u_lo**k1 - u_hi**k1) / k1
                term2 = m * (u_lo ** (k1 + 1.0) - u_hi ** (k1 + 1.0)) / (k1 + 1.0)
                total += term1 - term2
        return total

    def scaled_parabolic(self, lam: float, beta: float) -> "CoefficientSeries":
        """Companion series of the parabolic rescaling: amplitude lam^(1+beta),
        time argument compressed by lam^2 (support shrinks accordingly)."""
        return CoefficientSeries(
            self.times / lam**2, self.values * lam ** (1.0 + beta), self.interpolation
        )


@dataclass(frozen=True)
class BoundParams:
    """Parameters shared by the growth-envelope evaluators."""

    nu: float = 1.0
    beta: float = 0.5
    mu1: float = 1.0
    exponent_eps: float = 1.0
    c_d: float = 1.0

    def __post_init__(self):
        if self.nu <= 0:
            raise DomainError("nu must be positive")
        if not (0.0 < self.beta < 1.0):
            raise DomainError("beta must lie in (0,1)")
        if self.mu1 < 0:
            raise DomainError("mu1 must be non-negative")
        if not (0.0 < self.exponent_eps <= 1.0):
            raise DomainError("exponent_eps must lie in (0,1]")
        if self.c_d < 1.0:
            raise DomainError("c_d must be >= 1")

    @property
    def mu_dimensional(self) -> float:
        """Drift amplitude used by the dimensional envelope: c_d/(beta(1-beta)eps)."""
        return self.c_d / (self.beta * (1.0 - self.beta) * self.exponent_eps)


def gamma(g: CoefficientSeries, s: float, t: float) -> float:
    """Integral of the coefficient series over [s, t]."""
    if s > t:
        raise DomainError(f"need s <= t, got s={s} > t={t}")
    return g.integral(s, t)


def g_bound(g: CoefficientSeries, s: float, t: float, p: BoundParams) -> float:
    """Two-time growth envelope for sup norms of symmetric solutions.

    Equals 1 when the coefficient vanishes, and is non-decreasing in t, in the
    drift amplitude, and under pointwise increase of g.
    """
    if s > t:
        raise DomainError(f"need s <= t, got s={s} > t={t}")
    if s == t:
        return 1.0
    beta, nu, mu1 = p.beta, p.nu, p.mu1
    gam = g.integral(s, t)
    i1 = g.weighted_integral(s, t, (beta - 1.0) / 2.0)
    i2 = g.weighted_integral(s, t, (beta - 2.0) / 2.0)
    return 1.0 + 8.0 * mu1 * nu ** ((beta - 2.0) / 2.0) * math.exp(2.0 * mu1 * gam) * (
        math.sqrt(nu) * i1 + mu1 * gam * i2
    )


def g_theorem1(g: CoefficientSeries, t: float, p: BoundParams) -> float:
    """One-time growth envelope with the dimension-dependent drift amplitude."""
    if t < 0:
        raise DomainError("t must be non-negative")
    if t == 0:
        return 1.0
    beta, nu = p.beta, p.nu
    mu = p.mu_dimensional
    gam = g.integral(0.0, t)
    i1 = g.weighted_integral(0.0, t, (beta - 1.0) / 2.0)
    i2 = g.weighted_integral(0.0, t, (beta - 2.0) / 2.0)
    return 1.0 + mu * math.exp(mu * gam) * (
        nu ** ((beta - 1.0) / 2.0) * i1 + nu ** ((beta - 2.0) / 2.0) * mu * gam * i2
    )


def g_tilde(g: CoefficientSeries, t: float, p: BoundParams, n_outer: int = 1200) -> float:
    """Dimensionless growth envelope (no exponential in the coefficient mass).

    Invariant under the parabolic rescaling of (t, g) with the viscosity held
    fixed. The outer integral uses the substitution s = t - tau^2 so the
    (t-s)^(-1/2) endpoint is integrated smoothly; the inner singular weight is
    exact per series cell.
    """
    if t < 0:
        raise DomainError("t must be non-negative")
    if t == 0:
        return 1.0
    beta, nu, eps, c_d = p.beta, p.nu, p.exponent_eps, p.c_d
    pref = 2.0 * c_d * (1.0 - beta) ** (beta - 1.0) / (eps * beta)
    inner_coef = c_d * nu ** ((beta - 2.0) / 2.0) / (eps * beta * (1.0 - beta))
    taus = np.linspace(0.0, math.sqrt(t), n_outer + 1)
    vals = np.zeros_like(taus)
    for i, tau in enumerate(taus):
        if tau == 0.0:
            continue  # integrand vanishes like tau^beta
        s = t - tau * tau
        if s < 0:
            s = 0.0
        bracket = 1.0 / (math.sqrt(nu) * tau) + inner_coef * g.weighted_integral(
            s, t, (beta - 2.0) / 2.0
        )
        vals[i] = float(g.eval(s)) * bracket ** (1.0 - beta) * 2.0 * tau
    outer = float(np.trapezoid(vals, taus))
    return (1.0 + pref * outer) ** (1.0 / (1.0 - beta))


def nse_apriori_sup(
    u0_sup: float,
    f: CoefficientSeries | None,
    g: CoefficientSeries,
    t: float,
    p: BoundParams,
) -> float:
    """Sup-norm a-priori bound: (3 |u0| + forcing mass) times the envelope^eps."""
    if u0_sup < 0:
        raise DomainError("u0_sup must be non-negative")
    forcing = 0.0 if f is None else f.integral(0.0, t)
    return (3.0 * u0_sup + forcing) * g_theorem1(g, t, p) ** p.exponent_eps


def nse_apriori_lq(
    q: float,
    u0_sup: float,
    f: CoefficientSeries | None,
    g: CoefficientSeries,
    horizon: float,
    p: BoundParams,
    n_t: int = 201,
) -> float:
    """Time-integrated q-th power of the sup bound, with eps pinned to 1/q."""
    if q < 1:
        raise DomainError("q must be >= 1")
    p_q = replace(p, exponent_eps=1.0 / q)
    ts = np.linspace(0.0, horizon, n_t)
    vals = np.array([nse_apriori_sup(u0_sup, f, g, t, p_q) ** q for t in ts])
    return float(np.trapezoid(vals, ts))


# ---------------------------------------------------------------------------
# Pressure-gradient modulus and sup bound
# ---------------------------------------------------------------------------


def _near_zero_exponent(m: Modulus) -> float:
    if m.kind is ModulusKind.POWER:
        return m.params["exponent"]
    if m.kind is ModulusKind.CHI_FORCING:
        return m.params["alpha"]
    return 1.0  # tanh, two-branch, tabulated: locally Lipschitz at 0


def _tail_integral(m: Modulus, xi: float, cutoff: float) -> float:
    """integral_xi^inf m(eta)/eta^2 d eta; analytic power-law continuation
    beyond the cutoff."""
    a = m.tail_exponent
    if a >= 1.0:
        raise NonConvergenceError(
            f"tail integral of a modulus growing like eta^{a} does not converge"
        )
    val, _ = integrate.quad(lambda e: float(m.value(e)) / e**2, xi, cutoff, limit=200)
    tail = float(m.value(cutoff)) / (cutoff * (1.0 - a))
    return val + tail


def pressure_modulus(
    omega_u: Modulus,
    omega_b: Modulus,
    xi: float,
    c_d: float = 1.0,
    cutoff: float | None = None,
) -> float:
    """Modulus of continuity inherited by a pressure gradient built from two
    fields with moduli ``omega_u`` and ``omega_b``."""
    if xi <= 0:
        raise DomainError("xi must be positive")
    cut = cutoff if cutoff is not None else max(1e3, 100.0 * xi)
    probe = np.array([xi / 2.0, xi, cut])
    zero_u = bool(np.all(omega_u.value(probe) == 0.0))
    zero_b = bool(np.all(omega_b.value(probe) == 0.0))
    if zero_u or zero_b:
        # the pressure built from a constant field has no increment at all
        if zero_u and zero_b:
            return 0.0
        live = omega_b if zero_u else omega_u
        dead_val = 0.0
        return c_d * dead_val * _tail_integral(live, xi, cut)
    if _near_zero_exponent(omega_u) + _near_zero_exponent(omega_b) <= 1.0:
        raise NonConvergenceError(
            "product modulus decays too slowly at 0 for the local integral"
        )
    t1, _ = integrate.quad(
        lambda e: float(omega_u.value(e)) * float(omega_b.value(e)) / e**2,
        0.0,
        xi,
        limit=200,
    )
    tail_u = _tail_integral(omega_u, xi, cut)
    tail_b = _tail_integral(omega_b, xi, cut)
    return c_d * (t1 + float(omega_b.value(xi)) * tail_u + float(omega_u.value(xi)) * tail_b)


def pressure_sup(grad_u_sup: float, u_sup: float, c_d: float = 1.0) -> float:
    """Sup bound on a pressure gradient: c_d |grad u| |u|."""
    if grad_u_sup < 0 or u_sup < 0 or c_d < 0:
        raise DomainError("pressure_sup arguments must be non-negative")
    return c_d * grad_u_sup * u_sup


# ---------------------------------------------------------------------------
# Singular Gronwall bound
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class GronwallBound:
    """Evaluable bound h(t) + C exp(C |g|_q^q(t)) (int_0^t h^q g^q)^(1/q)."""

    h: CoefficientSeries
    g: CoefficientSeries
    q: float
    alpha: float
    horizon: float
    constant: float

    def evaluate(self, t: float, n_quad: int = 2001) -> float:
        if t < 0 or t > self.horizon:
            raise DomainError(f"t={t} outside [0, {self.horizon}]")
        if t == 0:
            return float(self.h.eval(0.0))
        rs = np.linspace(0.0, t, n_quad)
        hq = np.asarray(self.h.eval(rs), dtype=float) ** self.q
        gq = np.asarray(self.g.eval(rs), dtype=float) ** self.q
        gnorm_q = float(np.trapezoid(gq, rs))
        corr = float(np.trapezoid(hq * gq, rs)) ** (1.0 / self.q)
        c = self.constant
        base = float(self.h.eval(t))
        if corr == 0.0:
            return base
        # assemble in log space; near the admissibility boundary the explicit
        # constant is astronomically large and the bound saturates to +inf
        log_term = math.log(c) + c * gnorm_q + math.log(corr)
        if log_term > 700.0:
            return math.inf
        return base + math.exp(log_term)

    def sample(self, ts) -> np.ndarray:
        return np.array([self.evaluate(float(t)) for t in ts])


def singular_gronwall(
    h: CoefficientSeries, g: CoefficientSeries, q: float, alpha: float, horizon: float
) -> GronwallBound:
    """Bounding function for f <= h + int (t-s)^(-alpha) g f ds.

    The constant is assembled from the conjugate-exponent Hoelder step applied
    to the singular kernel plus the 2^q splitting of the resulting ordinary
    Gronwall inequality:

        C1 = (int_0^T s^(-alpha p) ds)^(1/p),  1/p + 1/q = 1,
        C  = max(2 C1, 2^q C1^q / q).

    Any constant validating the inequality is admissible; this one is fully
    explicit and reported alongside results.
    """
    if not (0.0 <= alpha < 1.0):
        raise DomainError(f"alpha must lie in [0,1), got {alpha}")
    if q * (1.0 - alpha) <= 1.0:
        raise InadmissibleExponentError(
            f"need q(1-alpha) > 1, got q={q}, alpha={alpha}"
        )
    if horizon <= 0:
        raise DomainError("horizon must be positive")
    p_conj = q / (q - 1.0)
    c1 = (horizon ** (1.0 - alpha * p_conj) / (1.0 - alpha * p_conj)) ** (1.0 / p_conj)
    c = max(2.0 * c1, 2.0**q * c1**q / q)
    return GronwallBound(h, g, q, alpha, horizon, c)


def holder_from_lp(lp_norm: float, p: float, xi: float) -> float:
    """Increment bound xi^(1/q) |v|_p with q conjugate to p."""
    if p <= 1.0:
        raise DomainError(f"conjugate exponent undefined for p={p}")
    if lp_norm < 0 or xi < 0:
        raise DomainError("lp_norm and xi must be non-negative")
    q = p / (p - 1.0)
    return xi ** (1.0 / q) * lp_norm


# ---------------------------------------------------------------------------
# Bound reports
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class BoundReport:
    """One measured-vs-theoretical comparison at a parameter point."""

    bound_id: str
    params: dict
    measured: float
    bound: float
    tol: float
    meta: dict = field(default_factory=dict)

    @property
    def ratio(self) -> float:
        if self.bound == 0.0:
            return math.inf if self.measured > 0 else 0.0
        return self.measured / self.bound

    @property
    def passed(self) -> bool:
        return self.ratio <= 1.0 + self.tol

    def to_row(self) -> dict:
        row = {
            "bound_id": self.bound_id,
            "measured": repr(float(self.measured)),
            "bound": repr(float(self.bound)),
            "ratio": repr(float(self.ratio)),
            "tol": repr(float(self.tol)),
            "passed": str(self.passed),
        }
        for k in sorted(self.params):
            row[f"param:{k}"] = str(self.params[k])
        for k in sorted(self.meta):
            row[f"meta:{k}"] = str(self.meta[k])
        return row
