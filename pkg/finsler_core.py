"""
Finsler Core Engine
Pointwise algebra of a Lorentz-Finsler Lagrangian L(x, v).
- Metric tensor g_v as the v-Hessian of L (nested forward-mode autodiff).
- Causal classification and future-directedness against the time orientation X.
- Legendre map and its inverse (damped Newton, traceable so it can be differentiated).
- The q-dependent Lagrangian / Hamiltonian pair and their gradient maps.
"""

from dataclasses import dataclass
from enum import Enum
from typing import Optional

import jax
import jax.numpy as jnp
import numpy as np

import common
from common import (CausalityError, DomainError, NoConvergenceError, ParameterError,
                    SingularMetricError, debug_log)

# ==================== DOMAIN TYPES ====================

def as_point(coords):
    return np.asarray(coords, dtype=float).reshape(-1)


@dataclass(frozen=True)
class Vector:
    base: np.ndarray
    comps: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, 'base', as_point(self.base))
        object.__setattr__(self, 'comps', as_point(self.comps))
        if self.base.shape != self.comps.shape:
            raise ParameterError("vector components do not match the base dimension",
                                 base=self.base.size, comps=self.comps.size)

    def scaled(self, c):
        return Vector(self.base, c * self.comps)


@dataclass(frozen=True)
class Covector:
    base: np.ndarray
    comps: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, 'base', as_point(self.base))
        object.__setattr__(self, 'comps', as_point(self.comps))
        if self.base.shape != self.comps.shape:
            raise ParameterError("covector components do not match the base dimension",
                                 base=self.base.size, comps=self.comps.size)

    def pair(self, v):
        return float(np.dot(self.comps, v.comps))

    def scaled(self, c):
        return Covector(self.base, c * self.comps)


class CausalKind(str, Enum):
    TIMELIKE = 'timelike'
    LIGHTLIKE = 'lightlike'
    SPACELIKE = 'spacelike'
    ZERO = 'zero'


@dataclass(frozen=True)
class CausalClass:
    kind: CausalKind
    future_directed: Optional[bool] = None

    @property
    def causal(self):
        return self.kind in (CausalKind.TIMELIKE, CausalKind.LIGHTLIKE)

    @property
    def future_timelike(self):
        return self.kind == CausalKind.TIMELIKE and bool(self.future_directed)


class FinslerStructure:
    """
    A Finsler spacetime given by a jax-traceable Lagrangian.

    `lagrangian(x, v)` and `time_orientation(x)` must be written with jax.numpy.
    `log_reference_density(x)` is log sigma for the reference measure m = sigma dx;
    `weight_log_density(x, v)` is psi_m in closed form (derived from the metric
    determinant when omitted). `analytic_separation(x, y)` may return l(x, y)
    directly, and `straight_geodesics` marks models whose geodesics are lines.
    `minkowski_cone` marks structures whose future cone is exactly {v0 > |v_spatial|}.
    """

    def __init__(self, dim, lagrangian, time_orientation, weight_log_density=None,
                 log_reference_density=None, analytic_separation=None,
                 straight_geodesics=False, chart_bound=None, time_bound=None, minkowski_cone=False,
                 name='custom', params=None):
        if int(dim) < 2:
            raise ParameterError("dimension must be at least 2", dim=int(dim))
        self.dim = int(dim)
        self.lagrangian = lagrangian
        self.time_orientation = time_orientation
        self.log_reference_density = log_reference_density or (lambda x: jnp.zeros((), dtype=jnp.float64))
        self.closed_form_weight = weight_log_density is not None
        self.weight_log_density = weight_log_density or self._determinant_weight
        self.analytic_separation = analytic_separation
        self.straight_geodesics = bool(straight_geodesics)
        self.chart_bound = float(chart_bound or common.DEFAULTS['chart_bound'])
        self.time_bound = None if time_bound is None else float(time_bound)
        self.minkowski_cone = bool(minkowski_cone)
        self.name = name
        self.params = dict(params or {})
        self._compiled = {}

    def __repr__(self):
        return f"FinslerStructure(name={self.name!r}, dim={self.dim}, params={self.params})"

    def _determinant_weight(self, x, v):
        g = metric_fn(self)(x, v)
        return -self.log_reference_density(x) + 0.5 * jnp.log(-jnp.linalg.det(g))

    def in_chart(self, points):
        """True when every point lies inside the coordinate chart."""
        points = np.atleast_2d(np.asarray(points, dtype=float))
        if not np.all(np.isfinite(points)) or np.max(np.abs(points)) > self.chart_bound:
            return False
        return self.time_bound is None or bool(np.max(np.abs(points[:, 0])) <= self.time_bound)

    def compiled(self, key, builder):
        """jit-compiled derivative, built once per structure."""
        if key not in self._compiled:
            self._compiled[key] = jax.jit(builder(self))
        return self._compiled[key]

# ==================== TRACEABLE DERIVATIVES ====================

def gradient_fn(S):
    return jax.jacfwd(S.lagrangian, argnums=1)


def metric_fn(S):
    return jax.jacfwd(jax.jacfwd(S.lagrangian, argnums=1), argnums=1)


def legendre_solver_fn(S, max_iter=None, halvings=None):
    """
    Traceable damped Newton for d_v L(x, v) = zeta.
    Seed: X(x) scaled so that the seed's Legendre image matches zeta(X).
    Each iteration takes the largest step 2^-k that lowers the residual and stays timelike.
    """
    max_iter = int(max_iter or common.DEFAULTS['newton_max_iter'])
    halvings = int(halvings or common.DEFAULTS['newton_halvings'])
    L = S.lagrangian
    grad = gradient_fn(S)
    metric = metric_fn(S)
    factors = 0.5 ** jnp.arange(halvings)

    def solve(x, zeta):
        X = S.time_orientation(x)
        v0 = (jnp.dot(zeta, X) / (2.0 * L(x, X))) * X

        def residual_norm(w):
            return jnp.linalg.norm(grad(x, w) - zeta)

        def body(_, v):
            r = grad(x, v) - zeta
            step = -jnp.linalg.solve(metric(x, v), r)
            cands = v[None, :] + factors[:, None] * step[None, :]
            norms = jax.vmap(residual_norm)(cands)
            inside = jax.vmap(lambda w: L(x, w))(cands) < 0.0
            ok = (norms < jnp.linalg.norm(r)) & inside & jnp.all(jnp.isfinite(cands), axis=1)
            pick = cands[jnp.argmax(ok)]
            return jnp.where(jnp.any(ok), pick, v)

        v = jax.lax.fori_loop(0, max_iter, body, v0)
        return v, residual_norm(v)

    return solve


def q_velocity_fn(S, q, max_iter=None, halvings=None):
    """Traceable (x, zeta) -> F*(zeta)^(p-2) L*(zeta): inverse of the q-gradient map."""
    p = q / (q - 1.0)
    solve = legendre_solver_fn(S, max_iter, halvings)

    def velocity(x, zeta):
        v, _ = solve(x, zeta)
        f_star = jnp.sqrt(-2.0 * S.lagrangian(x, v))
        return f_star ** (p - 2.0) * v

    return velocity

# ==================== OPERATIONS ====================

def lagrangian_eval(S, v):
    value = float(S.compiled('L', lambda s: s.lagrangian)(v.base, v.comps))
    if not np.isfinite(value):
        raise DomainError("Lagrangian undefined at this vector", model=S.name,
                          base=v.base.tolist(), comps=v.comps.tolist())
    return value


def metric_tensor(S, v):
    if not np.any(v.comps):
        raise DomainError("metric tensor needs a nonzero reference vector", model=S.name)
    g = np.asarray(S.compiled('g', metric_fn)(v.base, v.comps))
    if not np.all(np.isfinite(g)):
        raise DomainError("metric tensor undefined at this vector", model=S.name, comps=v.comps.tolist())
    g = 0.5 * (g + g.T)
    if abs(np.linalg.det(g)) < common.DEFAULTS['singular_tol']:
        raise SingularMetricError("metric tensor is degenerate", model=S.name, comps=v.comps.tolist())
    return g


def metric_signature(S, v):
    """(negative, positive) eigenvalue counts of g_v; Lorentzian means (1, n-1)."""
    g = metric_tensor(S, v)
    eig = np.asarray(jnp.linalg.eigvalsh(jnp.asarray(g)))
    scale = max(1.0, float(np.max(np.abs(eig))))
    tol = common.DEFAULTS['singular_tol'] * scale
    return int(np.sum(eig < -tol)), int(np.sum(eig > tol))


def time_orientation_at(S, x):
    return Vector(x, np.asarray(S.compiled('X', lambda s: s.time_orientation)(as_point(x))))


def classify_vector(S, v):
    scale = float(np.dot(v.comps, v.comps))
    if scale == 0.0:
        return CausalClass(CausalKind.ZERO)
    value = lagrangian_eval(S, v)
    if value > 1e-13 * scale:
        return CausalClass(CausalKind.SPACELIKE)
    kind = CausalKind.TIMELIKE if value < -1e-13 * scale else CausalKind.LIGHTLIKE
    X = time_orientation_at(S, v.base)
    pairing = float(np.dot(np.asarray(S.compiled('dL', gradient_fn)(X.base, X.comps)), v.comps))
    return CausalClass(kind, pairing < 0.0)


def f_norm(S, v):
    cls = classify_vector(S, v)
    if cls.kind == CausalKind.SPACELIKE:
        raise DomainError("F is undefined on spacelike vectors", model=S.name, comps=v.comps.tolist())
    if cls.kind == CausalKind.ZERO:
        return 0.0
    return float(np.sqrt(max(0.0, -2.0 * lagrangian_eval(S, v))))


def legendre_map(S, v):
    cls = classify_vector(S, v)
    if not cls.future_timelike:
        raise DomainError("Legendre map needs a future-directed timelike vector",
                          model=S.name, kind=cls.kind.value)
    return Covector(v.base, np.asarray(S.compiled('dL', gradient_fn)(v.base, v.comps)))


def legendre_inverse(S, zeta):
    x = zeta.base
    X = time_orientation_at(S, x)
    if zeta.pair(X) >= 0.0:
        raise CausalityError("covector is outside the polar cone", model=S.name, comps=zeta.comps.tolist())
    solve = S.compiled('legendre_solve', legendre_solver_fn)
    v, res = solve(x, zeta.comps)
    v = np.asarray(v)
    tol = common.DEFAULTS['newton_tol'] * max(1.0, float(np.linalg.norm(zeta.comps)))
    if not np.all(np.isfinite(v)) or not float(res) <= tol:
        debug_log('finsler_core', f"Legendre inverse stalled at residual {float(res):.3e}")
        raise NoConvergenceError("Legendre inverse did not converge", model=S.name,
                                 residual=float(res), comps=zeta.comps.tolist())
    out = Vector(x, v)
    if not classify_vector(S, out).future_timelike:
        raise CausalityError("Legendre inverse left the future timelike cone", model=S.name,
                             comps=zeta.comps.tolist())
    return out


def dual_lagrangian(S, zeta):
    return lagrangian_eval(S, legendre_inverse(S, zeta))


def dual_norm(S, zeta):
    return float(np.sqrt(-2.0 * dual_lagrangian(S, zeta)))


def in_polar_cone(S, zeta):
    try:
        legendre_inverse(S, zeta)
    except (CausalityError, NoConvergenceError):
        return False
    return True


def _check_q(q, upper_open=False):
    if not (0.0 < q < 1.0 or (q == 1.0 and not upper_open)):
        raise ParameterError("q outside its admissible range", q=float(q))


def q_lagrangian(S, v, q):
    _check_q(q)
    cls = classify_vector(S, v)
    if cls.kind == CausalKind.ZERO:
        return 0.0
    if not (cls.causal and cls.future_directed):
        return common.POS_INF
    return -f_norm(S, v) ** q / q


def q_hamiltonian(S, zeta, q):
    _check_q(q)
    try:
        l_star = dual_lagrangian(S, zeta)
    except (CausalityError, NoConvergenceError):
        return common.POS_INF
    if q == 1.0:
        return 0.0 if l_star <= -0.5 else common.POS_INF
    p = q / (q - 1.0)
    return -(np.sqrt(-2.0 * l_star) ** p) / p


def q_legendre_map(S, v, q):
    """d/dv of the q-Lagrangian: F(v)^(q-2) L(v)."""
    _check_q(q, upper_open=True)
    return legendre_map(S, v).scaled(f_norm(S, v) ** (q - 2.0))


def q_legendre_inverse(S, zeta, q):
    _check_q(q, upper_open=True)
    p = q / (q - 1.0)
    v = legendre_inverse(S, zeta)
    return v.scaled(f_norm(S, v) ** (p - 2.0))

# ==================== STRUCTURE TRANSFORMS & SAMPLING ====================

def reverse_structure(S):
    """L(v) -> L(-v) with time orientation -X; geodesics run backwards."""
    L, X, psi, sep = S.lagrangian, S.time_orientation, S.weight_log_density, S.analytic_separation
    return FinslerStructure(
        S.dim,
        lambda x, v: L(x, -v),
        lambda x: -X(x),
        weight_log_density=(lambda x, v: psi(x, -v)) if S.closed_form_weight else None,
        log_reference_density=S.log_reference_density,
        analytic_separation=(lambda x, y: sep(y, x)) if sep is not None else None,
        straight_geodesics=S.straight_geodesics,
        chart_bound=S.chart_bound,
        time_bound=S.time_bound,
        minkowski_cone=False,
        name=f"{S.name}_reverse",
        params=S.params,
    )


def sample_future_timelike(S, x, rng, count, spread=0.6, max_scale=10.0):
    """Random future timelike vectors at x: X(x) tilted by a spatial jitter, rescaled."""
    x = as_point(x)
    X = time_orientation_at(S, x).comps
    out = []
    attempts = 0
    while len(out) < count:
        attempts += 1
        if attempts > 200 * count:
            raise common.SamplingBudgetError("could not draw timelike samples", model=S.name, count=count)
        w = X + spread * np.linalg.norm(X) * rng.standard_normal(S.dim)
        v = Vector(x, w * rng.uniform(0.1, max_scale))
        if classify_vector(S, v).future_timelike:
            out.append(v)
    return out
