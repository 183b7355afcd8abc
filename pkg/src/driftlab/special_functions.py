"""Closed-form kernels, singular drift coefficient families, and explicit
moduli of continuity.

Everything here is deterministic and side-effect free; the only shared state
is a pair of read-only caches (Gaussian-moment constants and drift coefficient
tables) that are populated on first use.
"""

from __future__ import annotations

import math
import threading
from dataclasses import dataclass, field
from enum import Enum
from typing import NamedTuple

import numpy as np
from scipy import integrate

from .exceptions import (
    DegenerateDataError,
    DomainError,
    SingularityError,
)

# ---------------------------------------------------------------------------
# Heat kernel of d/dt - 4 nu d^2/dxi^2 and its absolute moments
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class KernelParams:
    """Viscosity parameter bundle; ``nu`` has units length^2/time."""

    nu: float = 1.0

    def __post_init__(self):
        if not (self.nu > 0 and math.isfinite(self.nu)):
            raise DomainError(f"nu must be positive and finite, got {self.nu}")


def heat_kernel(t, y, params: KernelParams = KernelParams()):
    """Gaussian kernel (16 pi nu t)^(-1/2) exp(-y^2 / (16 nu t)).

    Even in ``y`` and of unit mass for every t > 0.
    """
    t = np.asarray(t, dtype=float)
    if np.any(t <= 0):
        raise DomainError("heat_kernel requires t > 0")
    y = np.asarray(y, dtype=float)
    s = 16.0 * params.nu * t
    return np.exp(-(y * y) / s) / np.sqrt(np.pi * s)


_CR_CACHE: dict[float, float] = {}
_CR_LOCK = threading.Lock()


def _gaussian_abs_moment_constant(r: float) -> float:
    # C_r = 4^r / sqrt(pi) * integral |s|^r exp(-s^2) ds, by adaptive quadrature.
    val, _ = integrate.quad(
        lambda s: s**r * math.exp(-s * s), 0.0, np.inf, epsabs=1e-14, epsrel=1e-13
    )
    return 4.0**r / math.sqrt(math.pi) * 2.0 * val


def heat_kernel_moment(r: float, t: float, params: KernelParams = KernelParams()) -> float:
    """Absolute spatial moment of the heat kernel: C_r (nu t)^(r/2).

    The constant C_r is computed once per exponent by quadrature and cached.
    """
    if not r > -1:
        raise DomainError(f"moment exponent must satisfy r > -1, got {r}")
    if not t > 0:
        raise DomainError("heat_kernel_moment requires t > 0")
    key = float(r)
    c = _CR_CACHE.get(key)
    if c is None:
        with _CR_LOCK:
            c = _CR_CACHE.get(key)
            if c is None:
                c = _gaussian_abs_moment_constant(key)
                _CR_CACHE[key] = c
    return c * (params.nu * t) ** (r / 2.0)


# ---------------------------------------------------------------------------
# Singular drift coefficient families
# ---------------------------------------------------------------------------


class DriftFamily(Enum):
    H0_EXACT = "h0_exact"
    H_EPS_MOLLIFIED = "h_eps_mollified"
    H_BAR_EPS = "h_bar_eps"


class DriftSign(Enum):
    STABILIZING = "stabilizing"
    FLIPPED = "flipped"


@dataclass(frozen=True)
class DriftSpec:
    """Which odd singular coefficient to use, and how the solver orients it.

    ``sign`` is consumed only by the transport term of the solvers; the
    zeroth-order coefficient always uses the derivative of the unsigned
    family.
    """

    family: DriftFamily
    beta: float
    mollify_eps: float | None = None
    sign: DriftSign = DriftSign.STABILIZING

    def __post_init__(self):
        if not (0.0 < self.beta < 1.0):
            raise DomainError(f"beta must lie in (0,1), got {self.beta}")
        if self.family is DriftFamily.H_EPS_MOLLIFIED:
            if self.mollify_eps is None or not (0.0 < self.mollify_eps < 1.0 / 80.0):
                raise DomainError(
                    "H_EPS_MOLLIFIED requires mollify_eps in (0, 1/80), got "
                    f"{self.mollify_eps}"
                )
        elif self.family is DriftFamily.H_BAR_EPS:
            if self.mollify_eps is None or not (0.0 < self.mollify_eps <= 1.0):
                raise DomainError(
                    f"H_BAR_EPS requires mollify_eps in (0, 1], got {self.mollify_eps}"
                )

    @property
    def sign_factor(self) -> float:
        return 1.0 if self.sign is DriftSign.STABILIZING else -1.0


class DriftTables(NamedTuple):
    """Sampled odd coefficient on [0, x_max] plus plateau continuation.

    ``family_id`` selects closed-form evaluation (0) or table interpolation
    (1, 2) inside the jitted kernels.
    """

    family_id: int  # 0 = H0_EXACT, 1 = H_EPS_MOLLIFIED, 2 = H_BAR_EPS
    beta: float
    eps: float
    x: np.ndarray
    h: np.ndarray
    hp: np.ndarray
    plateau: float  # h value beyond x[-1] (h' = 0 there); H0/H_BAR: continue power law


_TABLE_CACHE: dict[tuple, DriftTables] = {}
_TABLE_LOCK = threading.Lock()


def _bump(v: np.ndarray) -> np.ndarray:
    # C^2 compactly supported bump on [-1, 1], unit mass after /eps scaling.
    out = np.zeros_like(v)
    inside = np.abs(v) < 1.0
    w = 1.0 - v[inside] ** 2
    out[inside] = (35.0 / 32.0) * w**3
    return out


def _bump_deriv(v: np.ndarray) -> np.ndarray:
    out = np.zeros_like(v)
    inside = np.abs(v) < 1.0
    w = 1.0 - v[inside] ** 2
    out[inside] = (35.0 / 32.0) * (-6.0) * v[inside] * w**2
    return out


def _h_eps_premollified(xi: np.ndarray, beta: float, eps: float) -> np.ndarray:
    """Odd, non-decreasing, concave-on-[0,inf) cap of |xi|^beta sign(xi).

    Power law up to R = 1/eps, then a C^2 cubic bridge on [R, 2R] whose
    value, slope and curvature match the power law at R and whose slope
    vanishes at 2R, then constant. The bridge stays below the power law and
    keeps concavity, so every pointwise bound of the exact family survives
    mollification.
    """
    R = 1.0 / eps
    a = np.abs(xi)
    v0 = R**beta
    m0 = beta * v0  # slope w.r.t. s = (a - R)/R
    ca = -0.5 * beta * (1.0 - beta) * v0
    cb = -(beta**2) * v0 / 3.0
    out = np.where(a <= R, a**beta, 0.0)
    mid = (a > R) & (a < 2.0 * R)
    s = (a[mid] - R) / R
    out[mid] = v0 + m0 * s + ca * s * s + cb * s**3
    plateau = v0 + m0 + ca + cb
    out[a >= 2.0 * R] = plateau
    return np.sign(xi) * out


def _build_h_eps_tables(beta: float, eps: float) -> DriftTables:
    R = 1.0 / eps
    # zone A: fine uniform comb across the odd kink at 0
    n_a = 3200
    xa = np.linspace(0.0, 4.0 * eps, n_a + 1)
    du = eps / 800.0
    u = np.arange(-eps, eps + du / 2, du)
    wb = _bump(u / eps) / eps
    wbp = _bump_deriv(u / eps) / eps**2
    wb *= du
    wbp *= du
    # trapezoid end-corrections (bump vanishes at the ends, so only interior)
    args = xa[:, None] - u[None, :]
    hpre = _h_eps_premollified(args, beta, eps)
    ha = hpre @ wb
    hpa = hpre @ wbp
    # zone B: Gauss-Legendre in the mollifier variable, geometric x spacing
    gl_x, gl_w = np.polynomial.legendre.leggauss(48)
    ug = gl_x * eps
    wg = gl_w * _bump(gl_x)
    wgp = gl_w * _bump_deriv(gl_x) / eps
    xb_lo = np.arange(4.0 * eps, 24.0 * eps, eps / 16.0)
    xb_hi = np.geomspace(24.0 * eps, 2.0 * R + 2.0 * eps, 5000)
    xb = np.concatenate([xb_lo, xb_hi])
    argsb = xb[:, None] - ug[None, :]
    hpreb = _h_eps_premollified(argsb, beta, eps)
    hb = hpreb @ wg
    hpb = hpreb @ wgp
    x = np.concatenate([xa, xb])
    h = np.concatenate([ha, hb])
    hp = np.concatenate([hpa, hpb])
    # exact symmetry/plateau cleanup
    h[0] = 0.0
    plateau = float(_h_eps_premollified(np.array([3.0 * R]), beta, eps)[0])
    hp = np.maximum(hp, 0.0)
    return DriftTables(1, beta, eps, x, h, hp, plateau)


def _build_h_bar_tables(beta: float, eps: float, x_max: float = 2000.0) -> DriftTables:
    a = eps ** ((1.0 - beta) / 2.0)
    grid = np.concatenate([[0.0], np.geomspace(1e-12, x_max, 120_000)])
    integrand = beta / (a + grid ** (1.0 - beta))
    h = integrate.cumulative_trapezoid(integrand, grid, initial=0.0)
    return DriftTables(2, beta, eps, grid, h, integrand, float(h[-1]))


def get_drift_tables(spec: DriftSpec) -> DriftTables:
    """Sampled coefficient tables for a spec (cached; H0 is closed form)."""
    key = (spec.family, round(spec.beta, 14), None if spec.mollify_eps is None else round(spec.mollify_eps, 14))
    tab = _TABLE_CACHE.get(key)
    if tab is not None:
        return tab
    with _TABLE_LOCK:
        tab = _TABLE_CACHE.get(key)
        if tab is not None:
            return tab
        if spec.family is DriftFamily.H0_EXACT:
            x = np.array([0.0, 1.0])
            tab = DriftTables(0, spec.beta, 0.0, x, x**spec.beta, x, 0.0)
        elif spec.family is DriftFamily.H_EPS_MOLLIFIED:
            tab = _build_h_eps_tables(spec.beta, spec.mollify_eps)
        else:
            tab = _build_h_bar_tables(spec.beta, spec.mollify_eps)
        _TABLE_CACHE[key] = tab
    return tab


class McDriftTables(NamedTuple):
    """Two-level uniform tables for O(1) coefficient lookup in path loops."""

    family_id: int
    beta: float
    eps_pow: float          # eps^((1-beta)/2) for the integral family, else 0
    fine_dx: float
    fine_h: np.ndarray
    fine_hp: np.ndarray
    coarse_x0: float
    coarse_dx: float
    coarse_h: np.ndarray
    coarse_hp: np.ndarray
    plateau: float


_MC_TABLE_CACHE: dict[tuple, McDriftTables] = {}


def get_mc_drift_tables(spec: DriftSpec) -> McDriftTables:
    """Uniform-grid resampling of the coefficient tables (cached)."""
    key = (
        spec.family,
        round(spec.beta, 14),
        None if spec.mollify_eps is None else round(spec.mollify_eps, 14),
    )
    tab = _MC_TABLE_CACHE.get(key)
    if tab is not None:
        return tab
    master = None if spec.family is DriftFamily.H0_EXACT else get_drift_tables(spec)
    with _TABLE_LOCK:
        tab = _MC_TABLE_CACHE.get(key)
        if tab is not None:
            return tab
        beta = spec.beta
        if spec.family is DriftFamily.H0_EXACT:
            e = np.array([0.0, 1.0])
            tab = McDriftTables(0, beta, 0.0, 1.0, e, e, 1.0, 1.0, e, e, 0.0)
        else:
            eps = spec.mollify_eps
            if spec.family is DriftFamily.H_EPS_MOLLIFIED:
                x_f = 24.0 * eps
                x_max = float(master.x[-1])
                eps_pow = 0.0
            else:
                x_f = min(1.0, float(master.x[-1]) / 2.0)
                x_max = float(master.x[-1])
                eps_pow = eps ** ((1.0 - beta) / 2.0)
            xf = np.linspace(0.0, x_f, 20_001)
            xc = np.linspace(x_f, x_max, 200_001)
            fine_h = np.interp(xf, master.x, master.h)
            coarse_h = np.interp(xc, master.x, master.h)
            if spec.family is DriftFamily.H_BAR_EPS:
                fine_hp = beta / (eps_pow + xf ** (1.0 - beta))
                coarse_hp = beta / (eps_pow + xc ** (1.0 - beta))
            else:
                fine_hp = np.interp(xf, master.x, master.hp)
                coarse_hp = np.interp(xc, master.x, master.hp)
            tab = McDriftTables(
                master.family_id,
                beta,
                eps_pow,
                float(xf[1] - xf[0]),
                fine_h,
                fine_hp,
                x_f,
                float(xc[1] - xc[0]),
                coarse_h,
                coarse_hp,
                master.plateau,
            )
        _MC_TABLE_CACHE[key] = tab
    return tab


def drift_eval(spec: DriftSpec, xi):
    """Odd coefficient h(xi) of the chosen family (sign convention unapplied)."""
    xi = np.asarray(xi, dtype=float)
    a = np.abs(xi)
    if spec.family is DriftFamily.H0_EXACT:
        return np.sign(xi) * a**spec.beta
    tab = get_drift_tables(spec)
    if spec.family is DriftFamily.H_BAR_EPS:
        inside = np.interp(a, tab.x, tab.h)
        # analytic continuation beyond the table via the exact integrand
        out = np.where(a <= tab.x[-1], inside, tab.plateau)
        beyond = a > tab.x[-1]
        if np.any(beyond):
            eps_pow = spec.mollify_eps ** ((1.0 - spec.beta) / 2.0)
            extra = _h_bar_tail(a[beyond], tab.x[-1], spec.beta, eps_pow)
            out = np.where(beyond, tab.plateau + extra, out)
        return np.sign(xi) * out
    inside = np.interp(a, tab.x, tab.h)
    out = np.where(a <= tab.x[-1], inside, tab.plateau)
    return np.sign(xi) * out


def _h_bar_tail(a: np.ndarray, x0: float, beta: float, eps_pow: float) -> np.ndarray:
    # integral of beta/(eps_pow + s^(1-beta)) from x0 to a, panelwise trapezoid
    n = 64
    t = np.linspace(0.0, 1.0, n + 1)
    pts = x0 + (a[:, None] - x0) * t[None, :]
    vals = beta / (eps_pow + pts ** (1.0 - beta))
    return np.trapezoid(vals, pts, axis=1)


def drift_deriv(spec: DriftSpec, xi):
    """Derivative h'(xi); even, non-negative, singular at 0 for the exact family."""
    xi = np.asarray(xi, dtype=float)
    a = np.abs(xi)
    if spec.family is DriftFamily.H0_EXACT:
        if np.any(a == 0.0):
            raise SingularityError(
                "h' of the exact power family is unbounded at xi = 0; "
                "use a mollified family or the solver's cell-averaged value"
            )
        return spec.beta * a ** (spec.beta - 1.0)
    if spec.family is DriftFamily.H_BAR_EPS:
        return spec.beta / (
            spec.mollify_eps ** ((1.0 - spec.beta) / 2.0) + a ** (1.0 - spec.beta)
        )
    tab = get_drift_tables(spec)
    out = np.interp(a, tab.x, tab.hp)
    return np.where(a >= tab.x[-1], 0.0, out)


def validate_drift_spec(spec: DriftSpec, sample_max: float = 50.0, n: int = 2001) -> None:
    """Assert oddness, monotonicity, and concavity on [0, inf) on a sample grid."""
    xs = np.linspace(0.0, sample_max, n)
    h = drift_eval(spec, xs)
    hm = drift_eval(spec, -xs)
    if not np.allclose(h, -hm, atol=1e-12, rtol=0.0):
        raise DomainError("drift family is not odd on the sample grid")
    if np.any(np.diff(h) < -1e-12):
        raise DomainError("drift family is not non-decreasing")
    d2 = np.diff(h, 2)
    if np.any(d2 > 1e-8):
        raise DomainError("drift family is not concave on [0, inf)")


# ---------------------------------------------------------------------------
# Moduli of continuity
# ---------------------------------------------------------------------------


class ModulusKind(Enum):
    EXPLICIT_HEUR1 = "explicit_heur1"
    TANH_INITIAL = "tanh_initial"
    CHI_FORCING = "chi_forcing"
    POWER = "power"
    TABULATED = "tabulated"


@dataclass(frozen=True)
class Modulus:
    """A modulus of continuity with analytic value/derivative per kind.

    ``tail_exponent`` is the growth rate a with omega(s) ~ s^a for large s,
    used to decide convergence of tail integrals against 1/s^2.
    """

    kind: ModulusKind
    params: dict = field(default_factory=dict)

    # -- constructors -------------------------------------------------------
    @staticmethod
    def explicit_heur1(delta: float, beta: float) -> "Modulus":
        if not (0.0 < delta < 0.25):
            raise DomainError(f"delta must lie in (0, 1/4), got {delta}")
        if not (0.0 < beta < 1.0):
            raise DomainError(f"beta must lie in (0,1), got {beta}")
        return Modulus(ModulusKind.EXPLICIT_HEUR1, {"delta": delta, "beta": beta})

    @staticmethod
    def tanh_initial(u0_sup: float, u0_lip: float) -> "Modulus":
        if u0_sup <= 0:
            raise DegenerateDataError("u0_sup must be positive")
        if u0_lip < 0:
            raise DomainError("u0_lip must be non-negative")
        b0 = 2.0 * u0_lip / u0_sup
        b1 = 3.0 * u0_sup / math.tanh(1.0)
        return Modulus(ModulusKind.TANH_INITIAL, {"b0": b0, "b1": b1})

    @staticmethod
    def chi(alpha: float) -> "Modulus":
        if not (0.0 < alpha <= 1.0):
            raise DomainError(f"alpha must lie in (0,1], got {alpha}")
        return Modulus(ModulusKind.CHI_FORCING, {"alpha": alpha})

    @staticmethod
    def power(exponent: float, coef: float = 1.0) -> "Modulus":
        if exponent <= 0 or coef < 0:
            raise DomainError("power modulus needs exponent > 0 and coef >= 0")
        return Modulus(ModulusKind.POWER, {"exponent": exponent, "coef": coef})

    @staticmethod
    def tabulated(xs, ys) -> "Modulus":
        xs = np.asarray(xs, dtype=float)
        ys = np.asarray(ys, dtype=float)
        if xs.ndim != 1 or xs.shape != ys.shape or xs.size < 2:
            raise DomainError("tabulated modulus needs matching 1-d tables")
        if xs[0] != 0.0 or ys[0] != 0.0:
            raise DomainError("tabulated modulus must start at (0, 0)")
        if np.any(np.diff(xs) <= 0) or np.any(np.diff(ys) < 0):
            raise DomainError("tabulated modulus must be non-decreasing")
        return Modulus(ModulusKind.TABULATED, {"xs": xs, "ys": ys})

    # -- evaluation ---------------------------------------------------------
    def value(self, s):
        s = np.asarray(s, dtype=float)
        if np.any(s < 0):
            raise DomainError("moduli are defined on [0, inf)")
        k, p = self.kind, self.params
        if k is ModulusKind.EXPLICIT_HEUR1:
            return _heur1_value(s, p["delta"], p["beta"])
        if k is ModulusKind.TANH_INITIAL:
            return p["b1"] * np.tanh(p["b0"] * s)
        if k is ModulusKind.CHI_FORCING:
            return np.minimum(s ** p["alpha"], 1.0)
        if k is ModulusKind.POWER:
            return p["coef"] * s ** p["exponent"]
        return np.interp(s, p["xs"], p["ys"])

    def deriv(self, s):
        s = np.asarray(s, dtype=float)
        k, p = self.kind, self.params
        if k is ModulusKind.EXPLICIT_HEUR1:
            return _heur1_deriv(s, p["delta"], p["beta"])
        if k is ModulusKind.TANH_INITIAL:
            sech = 1.0 / np.cosh(np.minimum(p["b0"] * s, 350.0))
            return p["b0"] * p["b1"] * sech * sech
        if k is ModulusKind.CHI_FORCING:
            a = p["alpha"]
            return np.where(s < 1.0, a * np.maximum(s, 1e-300) ** (a - 1.0), 0.0)
        if k is ModulusKind.POWER:
            e = p["exponent"]
            return p["coef"] * e * np.maximum(s, 1e-300) ** (e - 1.0)
        xs, ys = p["xs"], p["ys"]
        slopes = np.diff(ys) / np.diff(xs)
        idx = np.clip(np.searchsorted(xs, s, side="right") - 1, 0, slopes.size - 1)
        return slopes[idx]

    @property
    def tail_exponent(self) -> float:
        k, p = self.kind, self.params
        if k is ModulusKind.POWER:
            return p["exponent"]
        if k is ModulusKind.EXPLICIT_HEUR1:
            return 0.0  # the exponential-decay branch integrates to a constant
        return 0.0  # tanh, chi, tabulated: bounded

    def validate(self, sample_max: float = 10.0, n: int = 401) -> None:
        xs = np.linspace(0.0, sample_max, n)
        vals = self.value(xs)
        if abs(float(self.value(0.0))) > 1e-14:
            raise DomainError("modulus must vanish at 0")
        if np.any(np.diff(vals) < -1e-12):
            raise DomainError("modulus must be non-decreasing on the sample grid")
        if self.kind is ModulusKind.TANH_INITIAL and np.any(np.diff(vals, 2) > 1e-10):
            raise DomainError("tanh modulus must be concave on [0, inf)")


def _heur1_value(s, delta, beta):
    scalar = np.ndim(s) == 0
    s = np.atleast_1d(np.asarray(s, dtype=float))
    out = np.where(s <= delta, s - s**1.5, 0.0)
    above = s > delta
    if np.any(above):
        base = delta - delta**1.5
        c = 4.0 * (beta + 1.0)
        vals = np.array(
            [
                integrate.quad(
                    lambda e: math.exp(-(e ** (beta + 1.0)) / c),
                    delta,
                    float(sv),
                    epsabs=1e-13,
                    epsrel=1e-12,
                )[0]
                for sv in s[above]
            ]
        )
        out[above] = base + 0.25 * vals
    return float(out[0]) if scalar else out


def _heur1_deriv(s, delta, beta):
    s = np.asarray(s, dtype=float)
    c = 4.0 * (beta + 1.0)
    return np.where(
        s <= delta,
        1.0 - 1.5 * np.sqrt(np.maximum(s, 0.0)),
        0.25 * np.exp(-(s ** (beta + 1.0)) / c),
    )


def explicit_modulus(sigma, delta: float, beta: float):
    """Two-branch stationary modulus: s - s^(3/2) capped into a decaying tail."""
    return Modulus.explicit_heur1(delta, beta).value(sigma)


def explicit_modulus_residual(sigma, delta: float, beta: float):
    """4 w'' + s^beta w' for the two-branch modulus (unit viscosity).

    Non-positive on both branches; the tail branch balances exactly to 0.
    """
    if not (0.0 < delta < 0.25):
        raise DomainError(f"delta must lie in (0, 1/4), got {delta}")
    s = np.asarray(sigma, dtype=float)
    if np.any(s < 0):
        raise DomainError("residual is defined for sigma >= 0")
    rs = np.sqrt(np.maximum(s, 1e-300))
    branch1 = -3.0 / rs + s**beta * (1.0 - 1.5 * rs)
    return np.where(s <= delta, branch1, 0.0)


def initial_modulus(u0_sup: float, u0_lip: float, xi):
    """Concave tanh envelope sized so data with the given sup/Lipschitz norms
    obeys it strictly."""
    m = Modulus.tanh_initial(u0_sup, u0_lip)
    xi = np.asarray(xi, dtype=float)
    if np.any(xi < 0):
        raise DomainError("initial modulus is defined on [0, inf)")
    return m.value(xi)


def phi_forcing(xi, beta: float, omega: Modulus, n_cells: int = 4000):
    """integral_0^xi eta^(beta-1) omega'(eta) d eta.

    The weight is integrated exactly on every cell (power-law rule), with the
    slope taken at the cell midpoint; for constant slopes the result is exact.
    """
    if not (0.0 < beta < 1.0):
        raise DomainError(f"beta must lie in (0,1), got {beta}")
    xi_arr = np.atleast_1d(np.asarray(xi, dtype=float))
    if np.any(xi_arr < 0):
        raise DomainError("phi is defined for xi >= 0")
    out = np.zeros_like(xi_arr)
    for i, x in enumerate(xi_arr):
        if x == 0.0:
            continue
        edges = x * (np.linspace(0.0, 1.0, n_cells + 1) ** 2)
        weights = (edges[1:] ** beta - edges[:-1] ** beta) / beta
        mids = 0.5 * (edges[1:] + edges[:-1])
        out[i] = float(np.dot(weights, omega.deriv(mids)))
    return out if np.ndim(xi) else float(out[0])


def chi_forcing(xi, alpha: float):
    """Concave forcing shape min(xi^alpha, 1) on [0, inf)."""
    if not (0.0 < alpha < 1.0):
        raise DomainError(f"alpha must lie in (0,1), got {alpha}")
    xi = np.asarray(xi, dtype=float)
    if np.any(xi < 0):
        raise DomainError("chi is defined for xi >= 0")
    return np.minimum(xi**alpha, 1.0)
