"""Hot time-stepping loops, in two builds.

``*_nb`` names are numba ``@njit`` compilations of the loop bodies below;
``*_np`` names are vectorized numpy/scipy twins. ``driftlab.accel`` decides
which build the solvers call. Both produce the same arithmetic up to
floating-point associativity.

Shared conventions:
  equation        dV/dt + d/dxi (a V) = 4 nu d2V/dxi2 + c(t, xi) V + forcing
  a(t, xi)      = -sign * mu1 * g(t) * h(xi)         (interface samples)
  c(t, xi)      = (mu2 - sign * mu1) * g(t) * h'(xi)  (node samples)
  upwind fluxes, backward-Euler diffusion via a pre-factorized Thomas solve.
"""

from __future__ import annotations

import numpy as np
from scipy.linalg import solve_banded

from .accel import jit_kernel, numba_enabled

# status codes returned by the loops
OK = 0
NONFINITE = 1


def thomas_factor(lo: np.ndarray, di: np.ndarray, up: np.ndarray):
    """Pre-eliminate a constant tridiagonal system for repeated solves."""
    n = di.size
    cp = np.zeros(n)
    den = np.zeros(n)
    den[0] = 1.0 / di[0]
    cp[0] = up[0] * den[0]
    for i in range(1, n):
        den[i] = 1.0 / (di[i] - lo[i] * cp[i - 1])
        if i < n - 1:
            cp[i] = up[i] * den[i]
    return cp, den


def _thomas_solve_inplace(lo, cp, den, rhs, out):
    n = rhs.size
    out[0] = rhs[0] * den[0]
    for i in range(1, n):
        out[i] = (rhs[i] - lo[i] * out[i - 1]) * den[i]
    for i in range(n - 2, -1, -1):
        out[i] = out[i] - cp[i] * out[i + 1]


_thomas_solve_nb = jit_kernel(_thomas_solve_inplace)


# ---------------------------------------------------------------------------
# Linear singular-drift equation on the full line
# ---------------------------------------------------------------------------


def _linear_loop(
    v,            # state (n,), modified in place
    cw,           # cell widths (n,)
    inv_h,        # 1/spacing (n-1,)
    a_iface,      # unsigned drift at interfaces (n-1,)
    react_node,   # h' at nodes (n,)
    g_steps,      # g(t_k) (n_steps,)
    f_steps,      # forcing time factors (n_terms, n_steps)
    d_shapes,     # forcing space shapes (n_terms, n)
    vel_coef,     # -sign*mu1
    react_coef,   # mu2 - sign*mu1
    dt,
    bc_left, bc_right, bc_dirichlet,
    lo, cp, den,  # factorized implicit diffusion matrix
    store_steps,  # sorted step indices to snapshot (n_store,)
    out_fields,   # (n_store, n)
    linf, l1, bflux,  # per-step trails (n_steps+1,)
    rhs, flux,    # scratch (n,), (n-1,)
):
    n = v.size
    n_steps = g_steps.size
    n_terms = f_steps.shape[0]
    s = 0.0
    m = 0.0
    for i in range(n):
        a = abs(v[i])
        if a > s:
            s = a
        m += cw[i] * a
    linf[0] = s
    l1[0] = m
    bflux[0] = 0.0
    isnap = 0
    if store_steps.size > 0 and store_steps[0] == 0:
        for i in range(n):
            out_fields[0, i] = v[i]
        isnap = 1
    for k in range(n_steps):
        g = g_steps[k]
        # upwind advective fluxes
        for i in range(n - 1):
            vel = vel_coef * g * a_iface[i]
            if vel >= 0.0:
                flux[i] = vel * v[i]
            else:
                flux[i] = vel * v[i + 1]
        # explicit stage
        for i in range(1, n - 1):
            adv = (flux[i] - flux[i - 1]) / cw[i]
            val = v[i] + dt * (-adv + react_coef * g * react_node[i] * v[i])
            for t in range(n_terms):
                val += dt * f_steps[t, k] * d_shapes[t, i]
            rhs[i] = val
        if bc_dirichlet:
            rhs[0] = bc_left
            rhs[n - 1] = bc_right
        else:
            rhs[0] = v[0]
            rhs[n - 1] = v[n - 1]
        _thomas_solve_nb(lo, cp, den, rhs, v)
        # trails
        s = 0.0
        m = 0.0
        for i in range(n):
            a = abs(v[i])
            if a > s:
                s = a
            m += cw[i] * a
        linf[k + 1] = s
        l1[k + 1] = m
        bflux[k + 1] = abs(flux[0]) + abs(flux[n - 2])
        if not (s == s) or s > 1e300:  # NaN or blow-up guard
            return NONFINITE, k
        if isnap < store_steps.size and store_steps[isnap] == k + 1:
            for i in range(n):
                out_fields[isnap, i] = v[i]
            isnap += 1
    return OK, n_steps


_linear_loop_nb = jit_kernel(_linear_loop)


def _linear_loop_np(
    v, cw, inv_h, a_iface, react_node, g_steps, f_steps, d_shapes,
    vel_coef, react_coef, dt, bc_left, bc_right, bc_dirichlet,
    banded, store_steps, out_fields, linf, l1, bflux, rhs, flux,
):
    """Vectorized twin; ``banded`` is the (3, n) matrix for solve_banded."""
    n = v.size
    n_steps = g_steps.size
    linf[0] = np.max(np.abs(v))
    l1[0] = float(np.dot(cw, np.abs(v)))
    bflux[0] = 0.0
    isnap = 0
    if store_steps.size > 0 and store_steps[0] == 0:
        out_fields[0] = v
        isnap = 1
    for k in range(n_steps):
        g = g_steps[k]
        vel = vel_coef * g * a_iface
        fl = np.where(vel >= 0.0, vel * v[:-1], vel * v[1:])
        rhs[1:-1] = v[1:-1] + dt * (
            -(fl[1:] - fl[:-1]) / cw[1:-1]
            + react_coef * g * react_node[1:-1] * v[1:-1]
        )
        if f_steps.shape[0]:
            rhs[1:-1] += dt * (f_steps[:, k] @ d_shapes[:, 1:-1])
        if bc_dirichlet:
            rhs[0] = bc_left
            rhs[-1] = bc_right
        else:
            rhs[0] = v[0]
            rhs[-1] = v[-1]
        v[:] = solve_banded((1, 1), banded, rhs)
        linf[k + 1] = np.max(np.abs(v))
        l1[k + 1] = float(np.dot(cw, np.abs(v)))
        bflux[k + 1] = abs(fl[0]) + abs(fl[-1])
        if not np.isfinite(linf[k + 1]) or linf[k + 1] > 1e300:
            return NONFINITE, k
        if isnap < store_steps.size and store_steps[isnap] == k + 1:
            out_fields[isnap] = v
            isnap += 1
    return OK, n_steps


# ---------------------------------------------------------------------------
# Nonlocal half-line equation
# ---------------------------------------------------------------------------


def _nonlocal_loop(
    om,           # state on the half-line (m,)
    cw, inv_h,    # cell widths (m,), 1/spacing (m-1,)
    h_node,       # drift coefficient at nodes (m,)
    wcell,        # cell increments of the kernel antiderivative (m-1,)
    g_steps, f_steps, d_shapes,
    vel_coef,     # -sign*mu1 (times h_node gives transport velocity)
    k_nl,         # strength of the nonlocal cumulative term
    dt,
    bc_left_steps,  # Dirichlet value at xi=0 per step (n_steps+1,)
    lo, cp, den,
    store_steps, out_fields, linf, l1,
    rhs, cum,
):
    m = om.size
    n_steps = g_steps.size
    n_terms = f_steps.shape[0]
    s = 0.0
    tot = 0.0
    for i in range(m):
        a = abs(om[i])
        if a > s:
            s = a
        tot += cw[i] * a
    linf[0] = s
    l1[0] = tot
    isnap = 0
    if store_steps.size > 0 and store_steps[0] == 0:
        for i in range(m):
            out_fields[0, i] = om[i]
        isnap = 1
    for k in range(n_steps):
        g = g_steps[k]
        # cumulative nonlocal term: k_nl * g * int_0^xi h'(eta) dOmega
        run = 0.0
        cum[0] = 0.0
        for i in range(m - 1):
            run += (om[i + 1] - om[i]) * wcell[i]
            cum[i + 1] = run
        for i in range(1, m - 1):
            vel = vel_coef * g * h_node[i]
            if vel >= 0.0:
                adv = vel * (om[i] - om[i - 1]) * inv_h[i - 1]
            else:
                adv = vel * (om[i + 1] - om[i]) * inv_h[i]
            val = om[i] + dt * (-adv + k_nl * g * cum[i])
            for t in range(n_terms):
                val += dt * f_steps[t, k] * d_shapes[t, i]
            rhs[i] = val
        rhs[0] = bc_left_steps[k + 1]
        # far end: zero-flux diffusion row; keep the zeroth-order source so the
        # uniform far-field lift is not starved at the last node
        val = om[m - 1] + dt * k_nl * g * cum[m - 1]
        for t in range(n_terms):
            val += dt * f_steps[t, k] * d_shapes[t, m - 1]
        rhs[m - 1] = val
        _thomas_solve_nb(lo, cp, den, rhs, om)
        s = 0.0
        tot = 0.0
        for i in range(m):
            a = abs(om[i])
            if a > s:
                s = a
            tot += cw[i] * a
        linf[k + 1] = s
        l1[k + 1] = tot
        if not (s == s) or s > 1e300:
            return NONFINITE, k
        if isnap < store_steps.size and store_steps[isnap] == k + 1:
            for i in range(m):
                out_fields[isnap, i] = om[i]
            isnap += 1
    return OK, n_steps


_nonlocal_loop_nb = jit_kernel(_nonlocal_loop)


def _nonlocal_loop_np(
    om, cw, inv_h, h_node, wcell, g_steps, f_steps, d_shapes,
    vel_coef, k_nl, dt, bc_left_steps, banded,
    store_steps, out_fields, linf, l1, rhs, cum,
):
    m = om.size
    n_steps = g_steps.size
    linf[0] = np.max(np.abs(om))
    l1[0] = float(np.dot(cw, np.abs(om)))
    isnap = 0
    if store_steps.size > 0 and store_steps[0] == 0:
        out_fields[0] = om
        isnap = 1
    for k in range(n_steps):
        g = g_steps[k]
        cum[0] = 0.0
        np.cumsum(np.diff(om) * wcell, out=cum[1:])
        vel = vel_coef * g * h_node[1:-1]
        adv_up = vel * (om[1:-1] - om[:-2]) * inv_h[:-1]
        adv_dn = vel * (om[2:] - om[1:-1]) * inv_h[1:]
        adv = np.where(vel >= 0.0, adv_up, adv_dn)
        rhs[1:-1] = om[1:-1] + dt * (-adv + k_nl * g * cum[1:-1])
        if f_steps.shape[0]:
            rhs[1:-1] += dt * (f_steps[:, k] @ d_shapes[:, 1:-1])
        rhs[0] = bc_left_steps[k + 1]
        rhs[-1] = om[-1] + dt * k_nl * g * cum[-1]
        if f_steps.shape[0]:
            rhs[-1] += dt * float(f_steps[:, k] @ d_shapes[:, -1])
        om[:] = solve_banded((1, 1), banded, rhs)
        linf[k + 1] = np.max(np.abs(om))
        l1[k + 1] = float(np.dot(cw, np.abs(om)))
        if not np.isfinite(linf[k + 1]) or linf[k + 1] > 1e300:
            return NONFINITE, k
        if isnap < store_steps.size and store_steps[isnap] == k + 1:
            out_fields[isnap] = om
            isnap += 1
    return OK, n_steps


# ---------------------------------------------------------------------------
# Adjoint (transport-diffusion) sweep for fundamental-solution rows
# ---------------------------------------------------------------------------


def _adjoint_loop(
    y,            # state (n,)
    cw, inv_h,
    h_node,       # drift coefficient at nodes (n,)
    g_rev,        # g(t - tau_k) per step (n_steps,)
    mu1,
    dt,
    lo, cp, den,
    store_steps, out_fields, sup_trail, l1_trail,
    rhs,
):
    """Forward-in-tau solve of the adjoint transport-diffusion equation;
    velocity +mu1 g h(sigma) (no zeroth-order term)."""
    n = y.size
    n_steps = g_rev.size
    s = 0.0
    tot = 0.0
    for i in range(n):
        a = abs(y[i])
        if a > s:
            s = a
        tot += cw[i] * a
    sup_trail[0] = s
    l1_trail[0] = tot
    isnap = 0
    if store_steps.size > 0 and store_steps[0] == 0:
        for i in range(n):
            out_fields[0, i] = y[i]
        isnap = 1
    for k in range(n_steps):
        g = g_rev[k]
        for i in range(1, n - 1):
            vel = mu1 * g * h_node[i]
            if vel >= 0.0:
                adv = vel * (y[i] - y[i - 1]) * inv_h[i - 1]
            else:
                adv = vel * (y[i + 1] - y[i]) * inv_h[i]
            rhs[i] = y[i] - dt * adv
        rhs[0] = 0.0
        rhs[n - 1] = 0.0
        _thomas_solve_nb(lo, cp, den, rhs, y)
        s = 0.0
        tot = 0.0
        for i in range(n):
            a = abs(y[i])
            if a > s:
                s = a
            tot += cw[i] * a
        sup_trail[k + 1] = s
        l1_trail[k + 1] = tot
        if not (s == s) or s > 1e300:
            return NONFINITE, k
        if isnap < store_steps.size and store_steps[isnap] == k + 1:
            for i in range(n):
                out_fields[isnap, i] = y[i]
            isnap += 1
    return OK, n_steps


_adjoint_loop_nb = jit_kernel(_adjoint_loop)


def _adjoint_loop_np(
    y, cw, inv_h, h_node, g_rev, mu1, dt, banded,
    store_steps, out_fields, sup_trail, l1_trail, rhs,
):
    n = y.size
    n_steps = g_rev.size
    sup_trail[0] = np.max(np.abs(y))
    l1_trail[0] = float(np.dot(cw, np.abs(y)))
    isnap = 0
    if store_steps.size > 0 and store_steps[0] == 0:
        out_fields[0] = y
        isnap = 1
    for k in range(n_steps):
        vel = mu1 * g_rev[k] * h_node[1:-1]
        adv_up = vel * (y[1:-1] - y[:-2]) * inv_h[:-1]
        adv_dn = vel * (y[2:] - y[1:-1]) * inv_h[1:]
        rhs[1:-1] = y[1:-1] - dt * np.where(vel >= 0.0, adv_up, adv_dn)
        rhs[0] = 0.0
        rhs[-1] = 0.0
        y[:] = solve_banded((1, 1), banded, rhs)
        sup_trail[k + 1] = np.max(np.abs(y))
        l1_trail[k + 1] = float(np.dot(cw, np.abs(y)))
        if not np.isfinite(sup_trail[k + 1]):
            return NONFINITE, k
        if isnap < store_steps.size and store_steps[isnap] == k + 1:
            out_fields[isnap] = y
            isnap += 1
    return OK, n_steps


# ---------------------------------------------------------------------------
# Euler-Maruyama paths with shared noise across starting points
# ---------------------------------------------------------------------------


def _uniform_lookup(ax, fine_dx, fine_v, coarse_x0, coarse_dx, coarse_v, beyond):
    """O(1) linear interpolation on the two-level uniform tables."""
    if ax < coarse_x0:
        u = ax / fine_dx
        i = int(u)
        if i >= fine_v.size - 1:
            i = fine_v.size - 2
        w = u - i
        return fine_v[i] * (1.0 - w) + fine_v[i + 1] * w
    u = (ax - coarse_x0) / coarse_dx
    i = int(u)
    if i >= coarse_v.size - 1:
        return beyond
    w = u - i
    return coarse_v[i] * (1.0 - w) + coarse_v[i + 1] * w


_uniform_lookup_nb = jit_kernel(_uniform_lookup)


def _em_loop(
    starts,       # (n_start,)
    normals,      # (n_paths, n_steps)
    g_steps,      # (n_steps,)
    out_steps,    # sorted step indices to record (n_out,)
    mu1, sign, dt, noise_scale,
    fam, beta, eps_pow, cell_delta,
    fine_dx, fine_h, fine_hp, coarse_x0, coarse_dx, coarse_h, coarse_hp, plateau,
    escape_radius,
    phi_out,      # (n_out, n_paths, n_start)
    psi_exp_out,  # (n_out, n_paths, n_start) accumulated integral g h'(Phi)
    escaped,      # (n_paths,)
):
    n_paths, n_steps = normals.shape
    n_start = starts.size
    drift_scale = sign * mu1 * dt
    for p in range(n_paths):
        io = 0
        phi = np.empty(n_start)
        acc = np.zeros(n_start)
        hp_prev = np.empty(n_start)
        for j in range(n_start):
            phi[j] = starts[j]
            hp_prev[j] = _hp_point(
                fam, beta, eps_pow, cell_delta, fine_dx, fine_hp,
                coarse_x0, coarse_dx, coarse_hp, abs(phi[j]),
            )
        if out_steps.size > 0 and out_steps[0] == 0:
            for j in range(n_start):
                phi_out[0, p, j] = phi[j]
                psi_exp_out[0, p, j] = 0.0
            io = 1
        esc = False
        for k in range(n_steps):
            g = g_steps[k]
            g_next = g_steps[k + 1] if k + 1 < n_steps else g_steps[k]
            z = normals[p, k] * noise_scale
            for j in range(n_start):
                x = phi[j]
                ax = abs(x)
                if fam == 0:
                    hj = ax**beta
                else:
                    hj = _uniform_lookup_nb(
                        ax, fine_dx, fine_h, coarse_x0, coarse_dx, coarse_h, plateau
                    )
                if x < 0.0:
                    hj = -hj
                xn = x - drift_scale * g * hj + z
                hp_new = _hp_point(
                    fam, beta, eps_pow, cell_delta, fine_dx, fine_hp,
                    coarse_x0, coarse_dx, coarse_hp, abs(xn),
                )
                # trapezoid in time for the flow-derivative exponent
                acc[j] += 0.5 * dt * (g * hp_prev[j] + g_next * hp_new)
                hp_prev[j] = hp_new
                phi[j] = xn
            if abs(phi[0]) > escape_radius or abs(phi[n_start - 1]) > escape_radius:
                esc = True
            if io < out_steps.size and out_steps[io] == k + 1:
                for j in range(n_start):
                    phi_out[io, p, j] = phi[j]
                    psi_exp_out[io, p, j] = acc[j]
                io += 1
        escaped[p] = esc
    return OK


def _hp_point(
    fam, beta, eps_pow, cell_delta, fine_dx, fine_hp, coarse_x0, coarse_dx,
    coarse_hp, ax,
):
    if fam == 0:
        if ax < cell_delta:
            return cell_delta ** (beta - 1.0)
        return beta * ax ** (beta - 1.0)
    return _uniform_lookup_nb(
        ax, fine_dx, fine_hp, coarse_x0, coarse_dx, coarse_hp, 0.0
    )


_hp_point = jit_kernel(_hp_point)


_em_loop_nb = jit_kernel(_em_loop)


def _uniform_lookup_np(ax, fine_dx, fine_v, coarse_x0, coarse_dx, coarse_v, beyond):
    fine = ax < coarse_x0
    out = np.empty_like(ax)
    u = ax[fine] / fine_dx
    i = np.minimum(u.astype(np.int64), fine_v.size - 2)
    w = u - i
    out[fine] = fine_v[i] * (1.0 - w) + fine_v[i + 1] * w
    u = (ax[~fine] - coarse_x0) / coarse_dx
    i = u.astype(np.int64)
    over = i >= coarse_v.size - 1
    i = np.minimum(i, coarse_v.size - 2)
    w = u - i
    vals = coarse_v[i] * (1.0 - w) + coarse_v[i + 1] * w
    vals[over] = beyond
    out[~fine] = vals
    return out


def _em_loop_np(
    starts, normals, g_steps, out_steps, mu1, sign, dt, noise_scale,
    fam, beta, eps_pow, cell_delta,
    fine_dx, fine_h, fine_hp, coarse_x0, coarse_dx, coarse_h, coarse_hp, plateau,
    escape_radius, phi_out, psi_exp_out, escaped,
):
    n_paths, n_steps = normals.shape
    phi = np.broadcast_to(starts, (n_paths, starts.size)).copy()
    acc = np.zeros_like(phi)
    esc = np.zeros(n_paths, dtype=np.bool_)

    def _hp(ax):
        if fam == 0:
            return np.where(
                ax < cell_delta,
                cell_delta ** (beta - 1.0),
                beta * np.maximum(ax, 1e-300) ** (beta - 1.0),
            )
        return _uniform_lookup_np(
            ax, fine_dx, fine_hp, coarse_x0, coarse_dx, coarse_hp, 0.0
        )

    hp_prev = _hp(np.abs(phi))
    io = 0
    if out_steps.size > 0 and out_steps[0] == 0:
        phi_out[0] = phi
        psi_exp_out[0] = acc
        io = 1
    for k in range(n_steps):
        g = g_steps[k]
        g_next = g_steps[k + 1] if k + 1 < n_steps else g_steps[k]
        z = normals[:, k : k + 1] * noise_scale
        ax = np.abs(phi)
        if fam == 0:
            h = np.sign(phi) * ax**beta
        else:
            h = np.sign(phi) * _uniform_lookup_np(
                ax, fine_dx, fine_h, coarse_x0, coarse_dx, coarse_h, plateau
            )
        phi = phi - sign * mu1 * g * h * dt + z
        hp_new = _hp(np.abs(phi))
        acc = acc + 0.5 * dt * (g * hp_prev + g_next * hp_new)
        hp_prev = hp_new
        esc |= (np.abs(phi[:, 0]) > escape_radius) | (np.abs(phi[:, -1]) > escape_radius)
        if io < out_steps.size and out_steps[io] == k + 1:
            phi_out[io] = phi
            psi_exp_out[io] = acc
            io += 1
    escaped[:] = esc
    return OK


def linear_loop(*args, banded=None, **kw):
    if numba_enabled():
        return _linear_loop_nb(*args, **kw)
    # replace the Thomas triple with the banded matrix
    (v, cw, inv_h, a_iface, react_node, g_steps, f_steps, d_shapes,
     vel_coef, react_coef, dt, bc_left, bc_right, bc_dirichlet,
     lo, cp, den, store_steps, out_fields, linf, l1, bflux, rhs, flux) = args
    return _linear_loop_np(
        v, cw, inv_h, a_iface, react_node, g_steps, f_steps, d_shapes,
        vel_coef, react_coef, dt, bc_left, bc_right, bc_dirichlet,
        banded, store_steps, out_fields, linf, l1, bflux, rhs, flux,
    )


def nonlocal_loop(*args, banded=None):
    if numba_enabled():
        return _nonlocal_loop_nb(*args)
    (om, cw, inv_h, h_node, wcell, g_steps, f_steps, d_shapes, vel_coef,
     k_nl, dt, bc_left_steps, lo, cp, den, store_steps, out_fields,
     linf, l1, rhs, cum) = args
    return _nonlocal_loop_np(
        om, cw, inv_h, h_node, wcell, g_steps, f_steps, d_shapes, vel_coef,
        k_nl, dt, bc_left_steps, banded, store_steps, out_fields, linf, l1,
        rhs, cum,
    )


def adjoint_loop(*args, banded=None):
    if numba_enabled():
        return _adjoint_loop_nb(*args)
    (y, cw, inv_h, h_node, g_rev, mu1, dt, lo, cp, den, store_steps,
     out_fields, sup_trail, l1_trail, rhs) = args
    return _adjoint_loop_np(
        y, cw, inv_h, h_node, g_rev, mu1, dt, banded, store_steps,
        out_fields, sup_trail, l1_trail, rhs,
    )


def em_loop(*args):
    if numba_enabled():
        return _em_loop_nb(*args)
    return _em_loop_np(*args)
