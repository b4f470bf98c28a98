"""
Geometry & Dynamics Engine
Connection, curvature and geodesic flow of a Finsler spacetime.
- Spray G, nonlinear connection N and Chern connection coefficients by autodiff.
- Curvature endomorphism R_v and Ricci scalar.
- Fixed-step RK4 geodesics (jit + lax.scan), with chart and causality guards.
- Parallel frames and matrix Jacobi fields along a geodesic; the Riccati trace residual.
"""

from dataclasses import dataclass
from typing import Optional

import jax
import jax.numpy as jnp
import numpy as np

import common
from common import (BlowUpError, CausalityError, ConjugatePointError, FrameDegeneracyError,
                    ParameterError, debug_log)
from finsler_core import Vector, f_norm, gradient_fn, metric_fn, metric_tensor

# ==================== DOMAIN TYPES ====================

@dataclass(frozen=True)
class ConnectionData:
    spray: np.ndarray
    nonlinear_conn: np.ndarray
    chern: np.ndarray
    at: Vector


@dataclass(frozen=True)
class GeodesicSegment:
    times: np.ndarray
    points: np.ndarray
    tangents: np.ndarray
    action_q: Optional[float] = None

    @property
    def steps(self):
        return len(self.times) - 1

    @property
    def duration(self):
        return float(self.times[-1])

    @property
    def start(self):
        return Vector(self.points[0], self.tangents[0])

    @property
    def endpoint(self):
        return self.points[-1]

    def tangent(self, k):
        return Vector(self.points[k], self.tangents[k])


@dataclass(frozen=True)
class FrameTransport:
    along: GeodesicSegment
    frames: np.ndarray
    max_drift: float
    reorthonormalisations: int


@dataclass(frozen=True)
class JacobiFrame:
    along: GeodesicSegment
    J: np.ndarray
    Jp: np.ndarray
    frames: np.ndarray
    max_drift: float


@dataclass(frozen=True)
class RiccatiResidual:
    """Per-node tr B' + tr B^2 + Ric, and the worst gap between B' by differences and by the ODE."""
    trace: np.ndarray
    ode_gap: float

    @property
    def worst(self):
        return max(float(np.max(np.abs(self.trace))), self.ode_gap)

# ==================== TRACEABLE GEOMETRY ====================

def spray_fn(S):
    """G(x, v) = 1/2 g^{-1} (d_x d_v L . v - d_x L)."""
    L = S.lagrangian
    dL_dx = jax.jacfwd(L, argnums=0)
    mixed = jax.jacfwd(jax.jacfwd(L, argnums=1), argnums=0)
    g = metric_fn(S)

    def spray(x, v):
        return 0.5 * jnp.linalg.solve(g(x, v), mixed(x, v) @ v - dL_dx(x, v))

    return spray


def nonlinear_fn(S):
    return jax.jacfwd(spray_fn(S), argnums=1)


def chern_fn(S):
    g = metric_fn(S)
    dg_dx = jax.jacfwd(g, argnums=0)
    dg_dv = jax.jacfwd(g, argnums=1)
    N = nonlinear_fn(S)

    def chern(x, v):
        gv = g(x, v)
        # delta[a, b, d] = (d/dx^d - N^m_d d/dv^m) g_ab
        delta = dg_dx(x, v) - jnp.einsum('abm,md->abd', dg_dv(x, v), N(x, v))
        lower = 0.5 * (delta + jnp.einsum('ldb->lbd', delta) - jnp.einsum('bdl->lbd', delta))
        return jnp.einsum('al,lbd->abd', jnp.linalg.inv(gv), lower)

    return chern


def curvature_fn(S):
    """R^a_b = 2 dG^a/dx^b - v^c d^2G^a/dx^c dv^b + 2 G^c d^2G^a/dv^c dv^b - N^a_c N^c_b."""
    G = spray_fn(S)
    dG_dx = jax.jacfwd(G, argnums=0)
    N = jax.jacfwd(G, argnums=1)
    dN_dx = jax.jacfwd(N, argnums=0)
    dN_dv = jax.jacfwd(N, argnums=1)

    def curvature(x, v):
        return 2.0 * dG_dx(x, v) - dN_dx(x, v) @ v + dN_dv(x, v) @ (2.0 * G(x, v)) - N(x, v) @ N(x, v)

    return curvature


def ricci_fn(S):
    R = curvature_fn(S)
    return lambda x, v: jnp.trace(R(x, v))


def _flow(S):
    G = spray_fn(S)
    return lambda x, v: (v, -2.0 * G(x, v))


def _rk4(f, state, h):
    k1 = f(*state)
    k2 = f(*(s + 0.5 * h * k for s, k in zip(state, k1)))
    k3 = f(*(s + 0.5 * h * k for s, k in zip(state, k2)))
    k4 = f(*(s + h * k for s, k in zip(state, k3)))
    return tuple(s + (h / 6.0) * (a + 2.0 * b + 2.0 * c + d) for s, a, b, c, d in zip(state, k1, k2, k3, k4))


def trajectory_fn(S, steps):
    flow = _flow(S)

    def trajectory(x, v, T):
        h = T / steps

        def step(state, _):
            new = _rk4(flow, state, h)
            return new, new

        _, (xs, vs) = jax.lax.scan(step, (x, v), None, length=steps)
        return jnp.vstack([x[None, :], xs]), jnp.vstack([v[None, :], vs])

    return trajectory


def endpoint_fn(S, steps):
    """Traceable (x, v, T) -> gamma(T); straight lines skip integration."""
    if S.straight_geodesics:
        return lambda x, v, T: x + T * v
    flow = _flow(S)

    def endpoint(x, v, T):
        h = T / steps
        state = jax.lax.fori_loop(0, steps, lambda _, s: _rk4(flow, s, h), (x, v))
        return state[0]

    return endpoint

# ==================== OPERATIONS: CONNECTION & CURVATURE ====================

def connection_at(S, v):
    metric_tensor(S, v)
    x, w = v.base, v.comps
    return ConnectionData(
        spray=np.asarray(S.compiled('spray', spray_fn)(x, w)),
        nonlinear_conn=np.asarray(S.compiled('nonlinear', nonlinear_fn)(x, w)),
        chern=np.asarray(S.compiled('chern', chern_fn)(x, w)),
        at=v,
    )


def curvature_matrix(S, v):
    R = np.asarray(S.compiled('curvature', curvature_fn)(v.base, v.comps))
    if not np.all(np.isfinite(R)):
        raise common.DomainError("curvature undefined at this vector", model=S.name, comps=v.comps.tolist())
    return R


def curvature_endomorphism(S, v, w):
    return Vector(v.base, curvature_matrix(S, v) @ w.comps)


def ricci(S, v):
    return float(np.trace(curvature_matrix(S, v)))

# ==================== OPERATIONS: GEODESICS ====================

def _check_causal_path(S, points, tangents):
    L = S.compiled('L_batch', lambda s: jax.vmap(s.lagrangian))
    X = S.compiled('X_batch', lambda s: jax.vmap(s.time_orientation))
    dL = S.compiled('dL_batch', lambda s: jax.vmap(gradient_fn(s)))
    values = np.asarray(L(points, tangents))
    pairing = np.einsum('ki,ki->k', np.asarray(dL(points, np.asarray(X(points)))), tangents)
    bad = np.flatnonzero((values >= 0) | (pairing >= 0))
    if bad.size:
        raise CausalityError("geodesic tangent left the future timelike cone", model=S.name, node=int(bad[0]))


def exp_geodesic(S, v, T=1.0, steps=None, q=None):
    steps = int(steps or common.DEFAULTS['geodesic_steps'])
    if steps < 16:
        raise ParameterError("geodesic integration needs at least 16 steps", steps=steps)
    _check_causal_path(S, v.base[None, :], v.comps[None, :])
    run = S.compiled(('trajectory', steps), lambda s: trajectory_fn(s, steps))
    points, tangents = (np.asarray(a) for a in run(v.base, v.comps, float(T)))
    if not S.in_chart(points):
        debug_log('geometry_dynamics', f"Blow-up on {S.name} from {v.comps.tolist()}")
        raise BlowUpError("geodesic left the chart", model=S.name, T=float(T))
    _check_causal_path(S, points, tangents)
    times = np.linspace(0.0, float(T), steps + 1)
    action = None
    if q is not None:
        L = S.compiled('L_batch', lambda s: jax.vmap(s.lagrangian))
        speeds = np.sqrt(-2.0 * np.asarray(L(points, tangents)))
        action = float(T) * common.tree_mean(speeds ** q) / q
    return GeodesicSegment(times, points, tangents, action)


def exp_point(S, v, steps=None):
    """exp_x(v): endpoint of the geodesic at T = 1."""
    if S.straight_geodesics:
        return v.base + v.comps
    return exp_geodesic(S, v, 1.0, steps).endpoint


def flow_jacobian(S, x, v, T=1.0, steps=None):
    """(d gamma(T)/dx, d gamma(T)/dv) by forward-mode autodiff through the RK4 flow."""
    steps = int(steps or common.DEFAULTS['geodesic_steps'])
    jac = S.compiled(('flow_jacobian', steps),
                     lambda s: jax.jacfwd(endpoint_fn(s, steps), argnums=(0, 1)))
    dx, dv = jac(np.asarray(x, dtype=float), np.asarray(v, dtype=float), float(T))
    return np.asarray(dx), np.asarray(dv)

# ==================== OPERATIONS: FRAMES & JACOBI FIELDS ====================

def _eta(n):
    eta = np.ones(n)
    eta[0] = -1.0
    return eta


def orthonormal_frame(S, v, columns=None):
    """Modified Gram-Schmidt in g_v; the first column is v / F(v)."""
    g = metric_tensor(S, v)
    n = S.dim
    eta = _eta(n)
    seeds = [v.comps] + ([columns[:, k] for k in range(1, n)] if columns is not None
                         else [np.eye(n)[k] for k in range(1, n)] + [np.eye(n)[0]])
    frame = []
    for k, w in enumerate(seeds):
        w = np.array(w, dtype=float)
        for j, e in enumerate(frame):
            w = w - eta[j] * (e @ g @ w) * e
        norm2 = w @ g @ w
        if abs(norm2) < 1e-10:
            continue
        frame.append(w / np.sqrt(abs(norm2)))
        if len(frame) == n:
            break
    if len(frame) < n:
        raise FrameDegeneracyError("could not build a g_v-orthonormal frame", model=S.name)
    return np.column_stack(frame)


def _jacobi_step_fn(S):
    G = spray_fn(S)
    N = nonlinear_fn(S)
    R = curvature_fn(S)
    g = metric_fn(S)
    eta = jnp.asarray(_eta(S.dim))

    def rhs(x, v, E, a, b):
        Rt = jnp.linalg.solve(E, R(x, v) @ E)
        return v, -2.0 * G(x, v), -N(x, v) @ E, b, -Rt @ a

    def step(x, v, E, a, b, h):
        x, v, E, a, b = _rk4(rhs, (x, v, E, a, b), h)
        drift = jnp.max(jnp.abs(E.T @ g(x, v) @ E - jnp.diag(eta)))
        return x, v, E, a, b, drift

    return step


def _transport(S, gamma, J0, Jp0):
    n = S.dim
    E = orthonormal_frame(S, gamma.start)
    h = gamma.duration / gamma.steps
    step = S.compiled('jacobi_step', _jacobi_step_fn)
    x, v = gamma.points[0], gamma.tangents[0]
    a, b = np.asarray(J0, dtype=float), np.asarray(Jp0, dtype=float)
    if a.shape != (n, n) or b.shape != (n, n):
        raise ParameterError("Jacobi data must be n x n matrices", shape=list(a.shape))
    frames, Js, Jps = [E], [a], [b]
    worst, fixes = 0.0, 0
    tol, fail = common.DEFAULTS['frame_tol'], common.DEFAULTS['frame_fail_tol']
    for k in range(gamma.steps):
        x, v, E, a, b, drift = (np.asarray(z) for z in step(x, v, E, a, b, h))
        drift = float(drift)
        worst = max(worst, drift)
        if drift > fail or not np.isfinite(drift):
            raise FrameDegeneracyError("parallel frame lost orthonormality", model=S.name,
                                       node=k + 1, drift=drift)
        if drift > tol:
            fresh = orthonormal_frame(S, Vector(x, v), columns=E)
            a = np.linalg.solve(fresh, E @ a)
            b = np.linalg.solve(fresh, E @ b)
            E = fresh
            fixes += 1
        frames.append(E)
        Js.append(a)
        Jps.append(b)
    if fixes:
        debug_log('geometry_dynamics', f"Re-orthonormalised the frame {fixes} times (max drift {worst:.2e})")
    return np.array(frames), np.array(Js), np.array(Jps), worst, fixes


def parallel_frame(S, gamma):
    n = S.dim
    frames, _, _, worst, fixes = _transport(S, gamma, np.eye(n), np.zeros((n, n)))
    return FrameTransport(gamma, frames, worst, fixes)


def jacobi_propagate(S, gamma, J0, Jp0):
    """Matrix Jacobi field in a parallel g_gamma'-orthonormal frame: J'' = -(E^-1 R E) J."""
    frames, J, Jp, worst, _ = _transport(S, gamma, J0, Jp0)
    return JacobiFrame(gamma, J, Jp, frames, worst)


def lagrange_bracket(frame):
    """max over nodes of |J^T J' - J'^T J|; constant (zero for symmetric data) along Jacobi fields."""
    J, Jp = frame.J, frame.Jp
    bracket = np.einsum('kji,kjl->kil', J, Jp) - np.einsum('kji,kjl->kil', Jp, J)
    return float(np.max(np.abs(bracket)))


def ricci_along(S, gamma):
    ric = S.compiled('ricci_batch', lambda s: jax.vmap(ricci_fn(s)))
    return np.asarray(ric(gamma.points, gamma.tangents))


def riccati_residual(S, frame):
    """
    tr B' + tr B^2 + Ric(gamma') per node, B = J' J^-1, with B' from central differences.
    The ODE form B' = -R - B^2 is evaluated alongside as a cross-check.
    """
    J, Jp = frame.J, frame.Jp
    if np.max(np.linalg.cond(J)) > 1e12:
        raise ConjugatePointError("Jacobi matrix became singular", model=S.name)
    B = np.einsum('kij,kjl->kil', Jp, np.linalg.inv(J))
    dB = np.gradient(B, frame.along.times, axis=0, edge_order=2)
    ric = ricci_along(S, frame.along)
    residual = np.trace(dB, axis1=1, axis2=2) + np.einsum('kij,kji->k', B, B) + ric

    curv = S.compiled('curvature_batch', lambda s: jax.vmap(curvature_fn(s)))
    R = np.asarray(curv(frame.along.points, frame.along.tangents))
    Rt = np.linalg.solve(frame.frames, R @ frame.frames)
    gap = float(np.max(np.abs(dB - (-Rt - B @ B))))
    debug_log('geometry_dynamics', f"Riccati cross-check |B'_fd - B'_ode| = {gap:.3e}")
    return RiccatiResidual(residual, gap)


def speed_drift(S, gamma):
    L = S.compiled('L_batch', lambda s: jax.vmap(s.lagrangian))
    speeds = np.sqrt(-2.0 * np.asarray(L(gamma.points, gamma.tangents)))
    return float(np.max(np.abs(speeds - speeds[0])))


def unit_speed(S, v):
    return v.scaled(1.0 / f_norm(S, v))
