"""
Time Separation Engine
The Lorentz-Finsler distance l(x, y) and everything built on it.
- Analytic l for flat models, multi-start Newton shooting otherwise.
- l_q = l^q / q with the -inf conventions, t-intermediate points on maximizers.
- Regions (boxes, indicator sets) and exact membership in Z_t(A, B) for flat models.
- Lorentzianity defect: how far g_v is from being independent of v.
"""

from dataclasses import dataclass
from enum import Enum
from typing import Callable, Optional

import jax
import jax.numpy as jnp
import numpy as np

import common
from common import (BlowUpError, CausalityError, NoConvergenceError, NoMaximizerError,
                    ParameterError, debug_log)
from finsler_core import (Vector, as_point, classify_vector, f_norm, gradient_fn, lagrangian_eval,
                          metric_fn, sample_future_timelike, time_orientation_at)
from geometry_dynamics import GeodesicSegment, endpoint_fn, exp_geodesic, flow_jacobian

# ==================== DOMAIN TYPES ====================

class SeparationMethod(str, Enum):
    ANALYTIC = 'analytic'
    SHOOTING = 'shooting'


class Relation(str, Enum):
    RELATED = 'related'
    UNRELATED = 'unrelated'
    UNKNOWN = 'unknown'


@dataclass(frozen=True)
class SeparationResult:
    value: float
    maximizer: Optional[GeodesicSegment]
    method: SeparationMethod
    relation: Relation = Relation.RELATED
    velocity: Optional[np.ndarray] = None
    ambiguous: bool = False


@dataclass(frozen=True)
class BoxRegion:
    lo: np.ndarray
    hi: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, 'lo', as_point(self.lo))
        object.__setattr__(self, 'hi', as_point(self.hi))
        if self.lo.shape != self.hi.shape or np.any(self.hi < self.lo):
            raise ParameterError("box corners are inconsistent", lo=self.lo.tolist(), hi=self.hi.tolist())

    @property
    def bounds(self):
        return self.lo, self.hi

    @property
    def volume(self):
        return float(np.prod(self.hi - self.lo))

    def contains(self, points):
        points = np.atleast_2d(points)
        return np.all((points >= self.lo) & (points <= self.hi), axis=1)

    def sample(self, rng, count):
        return self.lo + (self.hi - self.lo) * rng.random((int(count), self.lo.size))

    def corners(self):
        grid = np.array(np.meshgrid(*[[a, b] for a, b in zip(self.lo, self.hi)], indexing='ij'))
        return grid.reshape(self.lo.size, -1).T

    def to_mapping(self):
        return {'box': {'lo': self.lo.tolist(), 'hi': self.hi.tolist()}}


@dataclass(frozen=True)
class IndicatorRegion:
    predicate: Callable
    box: BoxRegion

    @property
    def bounds(self):
        return self.box.bounds

    def contains(self, points):
        points = np.atleast_2d(points)
        return np.asarray(self.predicate(points), dtype=bool) & self.box.contains(points)

    def sample(self, rng, count, max_rounds=200):
        out = []
        for _ in range(max_rounds):
            cand = self.box.sample(rng, count)
            out.extend(cand[self.contains(cand)])
            if len(out) >= count:
                return np.array(out[:count])
        raise common.SamplingBudgetError("indicator region is too thin to sample", wanted=int(count))


def ball_region(center, radius):
    center = as_point(center)
    box = BoxRegion(center - radius, center + radius)
    return IndicatorRegion(lambda p: np.linalg.norm(p - center, axis=1) <= radius, box)

# ==================== TRACEABLE HELPERS ====================

def flat_separation_fn(S):
    """Traceable l(x, x + d) for straight-geodesic models."""
    L = S.lagrangian
    dL = gradient_fn(S)

    def separation(x, d):
        scale = jnp.dot(d, d)
        value = L(x, d)
        future = jnp.dot(dL(x, S.time_orientation(x)), d) < 0.0
        causal = (value <= 1e-13 * scale) & future
        length = jnp.sqrt(jnp.maximum(-2.0 * value, 0.0))
        return jnp.where(scale == 0.0, 0.0, jnp.where(causal, length, -jnp.inf))

    return separation


def _shooting_steps():
    return common.DEFAULTS['geodesic_steps']

# ==================== OPERATIONS: SEPARATION ====================

def _straight_segment(x, y, steps):
    times = np.linspace(0.0, 1.0, steps + 1)
    d = y - x
    return GeodesicSegment(times, x + times[:, None] * d, np.tile(d, (steps + 1, 1)))


def _seeds(S, x, y):
    """Deterministic spread of future timelike initial velocities around y - x."""
    d = y - x
    X = time_orientation_at(S, x).comps
    scale = max(np.linalg.norm(d), 1e-3)
    count = common.DEFAULTS['shooting_seeds']
    directions = np.random.default_rng(0).standard_normal((count - 1, S.dim))
    seeds = [d] + [d + 0.25 * scale * u / np.linalg.norm(u) for u in directions]
    out = []
    for v in seeds:
        for _ in range(60):
            if classify_vector(S, Vector(x, v)).future_timelike:
                out.append(v)
                break
            v = v + 0.25 * scale * X
    return out


def _newton_shoot(S, x, y, v, steps):
    endpoint = S.compiled(('endpoint', steps), lambda s: endpoint_fn(s, steps))
    tol = common.DEFAULTS['shooting_tol'] * max(1.0, float(np.linalg.norm(y - x)))
    res = np.asarray(endpoint(x, v, 1.0)) - y
    for _ in range(common.DEFAULTS['shooting_max_iter']):
        if np.linalg.norm(res) <= tol:
            return v
        _, dv = flow_jacobian(S, x, v, 1.0, steps)
        step = np.linalg.solve(dv, -res)
        for k in range(30):
            cand = v + 0.5 ** k * step
            if not classify_vector(S, Vector(x, cand)).future_timelike:
                continue
            cand_res = np.asarray(endpoint(x, cand, 1.0)) - y
            if np.all(np.isfinite(cand_res)) and np.linalg.norm(cand_res) < np.linalg.norm(res):
                v, res = cand, cand_res
                break
        else:
            return None
    return v if np.linalg.norm(res) <= tol else None


def _coarse_causal(S, x, y):
    d = y - x
    for base in (x, 0.5 * (x + y)):
        cls = classify_vector(S, Vector(base, d))
        if cls.causal and cls.future_directed:
            return True
    return False


def shoot(S, x, y, steps=None):
    steps = int(steps or _shooting_steps())
    found = []
    for seed in _seeds(S, x, y):
        try:
            v = _newton_shoot(S, x, y, seed, steps)
        except (np.linalg.LinAlgError, common.DomainError):
            v = None
        if v is None:
            continue
        try:
            segment = exp_geodesic(S, Vector(x, v), 1.0, steps, q=1.0)
        except (BlowUpError, CausalityError):
            continue
        found.append((f_norm(S, Vector(x, v)), v, segment))

    if not found:
        if _coarse_causal(S, x, y):
            debug_log('distance', f"Shooting failed for causal-looking pair {x.tolist()} -> {y.tolist()}")
            raise NoConvergenceError("no shooting seed converged", model=S.name,
                                     x=x.tolist(), y=y.tolist())
        relation = Relation.UNRELATED if S.straight_geodesics else Relation.UNKNOWN
        return SeparationResult(common.NEG_INF, None, SeparationMethod.SHOOTING, relation)

    best = max(a for a, _, _ in found)
    ties = sorted([(tuple(v), a, seg) for a, v, seg in found if best - a < 1e-9], key=lambda item: item[0])
    distinct = {tuple(np.round(np.array(v), 6)) for v, _, _ in ties}
    v, value, segment = ties[0]
    return SeparationResult(value, segment, SeparationMethod.SHOOTING, Relation.RELATED,
                            np.array(v), ambiguous=len(distinct) > 1)


def time_separation(S, x, y, method='auto', steps=None):
    x, y = as_point(x), as_point(y)
    if method not in ('auto', 'analytic', 'shooting'):
        raise ParameterError("unknown separation method", method=method)
    if not np.any(y - x):
        return SeparationResult(0.0, None, SeparationMethod.ANALYTIC, Relation.RELATED)
    if S.analytic_separation is not None and method != 'shooting':
        value = float(S.analytic_separation(x, y))
        if value == common.NEG_INF:
            return SeparationResult(value, None, SeparationMethod.ANALYTIC, Relation.UNRELATED)
        segment = _straight_segment(x, y, int(steps or _shooting_steps())) if S.straight_geodesics and value > 0 else None
        return SeparationResult(value, segment, SeparationMethod.ANALYTIC, Relation.RELATED,
                                y - x if S.straight_geodesics else None)
    if method == 'analytic':
        raise ParameterError("model has no analytic time separation", model=S.name)
    return shoot(S, x, y, steps)


def lq_separation(S, x, y, q):
    if not 0.0 < q <= 1.0:
        raise ParameterError("q outside (0, 1]", q=float(q))
    value = time_separation(S, x, y).value
    if value == common.NEG_INF:
        return common.NEG_INF
    return common.ext_pow(value, q) / q


def causal_relation(S, x, y):
    try:
        return time_separation(S, x, y).relation
    except NoConvergenceError:
        return Relation.UNKNOWN


def separation_matrix(S, X, Y):
    X, Y = np.atleast_2d(X), np.atleast_2d(Y)
    if S.straight_geodesics:
        sep = S.compiled('flat_separation_grid',
                         lambda s: jax.vmap(jax.vmap(flat_separation_fn(s), in_axes=(None, 0)), in_axes=(0, 0)))
        return np.asarray(sep(X, Y[None, :, :] - X[:, None, :]))
    return np.array([[time_separation(S, x, y).value for y in Y] for x in X])


def reverse_triangle_slack(S, x, z, y):
    """l(x, y) - l(x, z) - l(z, y); +inf when a leg is not causal."""
    lxz = time_separation(S, x, z).value
    lzy = time_separation(S, z, y).value
    if common.NEG_INF in (lxz, lzy):
        return common.POS_INF
    lxy = time_separation(S, x, y).value
    return common.ext_add(lxy, -lxz, -lzy)

# ==================== OPERATIONS: INTERMEDIATE POINTS ====================

def intermediate_point(S, x, y, t, result=None):
    x, y = as_point(x), as_point(y)
    if not 0.0 <= t <= 1.0:
        raise ParameterError("t outside [0, 1]", t=float(t))
    if t == 0.0:
        return x
    if t == 1.0:
        return y
    result = result or time_separation(S, x, y)
    if not result.value > 0 or result.velocity is None:
        raise NoMaximizerError("no timelike maximizer between the points", model=S.name,
                               x=x.tolist(), y=y.tolist())
    if S.straight_geodesics:
        return x + t * (y - x)
    steps = max(16, int(round(t * result.maximizer.steps)))
    return exp_geodesic(S, Vector(x, result.velocity), t, steps).endpoint


def contraction_jacobian(S, x, y, t, result=None, steps=None):
    """det of y -> gamma_xy(t) via the shooting map: t^n det(D exp_x(t v)) / det(D exp_x(v))."""
    x, y = as_point(x), as_point(y)
    if S.straight_geodesics:
        return t ** S.dim
    steps = int(steps or _shooting_steps())
    result = result or time_separation(S, x, y, steps=steps)
    if result.velocity is None:
        raise NoMaximizerError("no timelike maximizer between the points", model=S.name)
    v = result.velocity
    _, d_full = flow_jacobian(S, x, v, 1.0, steps)
    _, d_part = flow_jacobian(S, x, v, t, steps)
    return float(np.linalg.det(d_part) / np.linalg.det(d_full))

# ==================== OPERATIONS: Z_t MEMBERSHIP ====================

def _as_region(R):
    if isinstance(R, (BoxRegion, IndicatorRegion)):
        return R
    return np.atleast_2d(np.asarray(R, dtype=float))


def _timelike_future(S, base, d):
    return classify_vector(S, Vector(base, d)).future_timelike


def _cone_candidate(S, C, z):
    """Point of box C most likely to see z in its timelike future (exact for round cones)."""
    lo, hi = C
    x = np.clip(z, lo, hi)
    x[0] = lo[0]
    return x


def z_t_membership(S, z, A, B, t, rng=None, budget=4, batch=256):
    """
    z in Z_t(A, B) for straight-geodesic models: some x in A, y in B with y - x timelike
    and z = x + t (y - x). Returns True, False, or None when the refinement budget runs out.
    """
    if not S.straight_geodesics:
        raise ParameterError("exact Z_t membership needs straight geodesics", model=S.name)
    z = as_point(z)
    A, B = _as_region(A), _as_region(B)

    if t == 0.0 or t == 1.0:
        here, there = (A, B) if t == 0.0 else (B, A)
        inside = _contains(here, z)
        if not inside:
            return False
        return _sees(S, z, there, future=(t == 0.0), rng=rng, budget=budget, batch=batch)

    if isinstance(A, np.ndarray):
        ys = (z - (1.0 - t) * A) / t
        return bool(np.any(_contains_many(B, ys) & np.array([_timelike_future(S, a, z - a) for a in A])))
    if isinstance(B, np.ndarray):
        xs = (z - t * B) / (1.0 - t)
        return bool(np.any(_contains_many(A, xs) & np.array([_timelike_future(S, x, z - x) for x in xs])))

    # x ranges over A intersected with (z - t B) / (1 - t)
    b_lo, b_hi = B.bounds
    a_lo, a_hi = A.bounds
    lo = np.maximum(a_lo, (z - t * b_hi) / (1.0 - t))
    hi = np.minimum(a_hi, (z - t * b_lo) / (1.0 - t))
    if np.any(lo > hi):
        return False
    cand = _cone_candidate(S, (lo, hi), z)
    boxes = isinstance(A, BoxRegion) and isinstance(B, BoxRegion)
    if _timelike_future(S, cand, z - cand) and (boxes or _pair_ok(A, B, cand, z, t)):
        return True
    if boxes and S.minkowski_cone:
        return False

    rng = rng or np.random.default_rng(common.DEFAULTS['seed'])
    center, half = 0.5 * (lo + hi), 0.5 * (hi - lo)
    for _ in range(budget):
        xs = center + half * (2.0 * rng.random((batch, z.size)) - 1.0)
        xs = np.clip(xs, lo, hi)
        ok = A.contains(xs) & B.contains((z - (1.0 - t) * xs) / t)
        if not np.any(ok):
            half = 0.5 * half
            continue
        scores = np.array([lagrangian_eval(S, Vector(x, z - x)) for x in xs[ok]])
        best = xs[ok][np.argmin(scores)]
        if _timelike_future(S, best, z - best):
            return True
        center, half = best, 0.5 * half
    return None


def _contains(R, p):
    return bool(_contains_many(R, p[None, :])[0])


def _contains_many(R, points):
    if isinstance(R, np.ndarray):
        return np.array([np.any(np.all(np.isclose(R, p, atol=1e-12), axis=1)) for p in points])
    return R.contains(points)


def _pair_ok(A, B, x, z, t):
    return bool(A.contains(x[None, :])[0] and B.contains(((z - (1.0 - t) * x) / t)[None, :])[0])


def _sees(S, z, R, future, rng, budget, batch):
    """Is some point of R in the timelike future (or past) of z?"""
    if future:
        related = lambda p: _timelike_future(S, z, p - z)
    else:
        related = lambda p: _timelike_future(S, p, z - p)
    if isinstance(R, np.ndarray):
        return any(related(p) for p in R)
    lo, hi = R.bounds
    corner = np.clip(z, lo, hi)
    corner[0] = hi[0] if future else lo[0]
    if related(corner) and R.contains(corner[None, :])[0]:
        return True
    if isinstance(R, BoxRegion) and S.minkowski_cone:
        return False
    rng = rng or np.random.default_rng(common.DEFAULTS['seed'])
    for _ in range(budget):
        if any(related(p) for p in R.sample(rng, batch)):
            return True
    return None

# ==================== OPERATIONS: LORENTZIANITY ====================

def lorentzianity_defect(S, x, samples, seed=None):
    """max over sampled timelike v, w of |g_v(w, w) - 2 L(w)| / max(1, |2 L(w)|)."""
    if samples < 10:
        raise ParameterError("lorentzianity defect needs at least 10 samples", samples=int(samples))
    x = as_point(x)
    rng = np.random.default_rng(common.DEFAULTS['seed'] if seed is None else seed)
    vs = [time_orientation_at(S, x)] + sample_future_timelike(S, x, rng, samples - 1)
    V = np.array([v.comps for v in vs])
    metric = S.compiled('metric_batch', lambda s: jax.vmap(metric_fn(s), in_axes=(None, 0)))
    L = S.compiled('L_fibre', lambda s: jax.vmap(s.lagrangian, in_axes=(None, 0)))
    G = np.asarray(metric(x, V))
    twice_L = 2.0 * np.asarray(L(x, V))
    quad = np.einsum('ai,kij,aj->ka', V, G, V)
    defect = np.abs(quad - twice_L[None, :]) / np.maximum(1.0, np.abs(twice_L))[None, :]
    return float(np.max(defect))


def z_t_membership_many(S, Z, A, B, t, rng=None):
    """Row-wise z_t_membership; boxes over round cones are decided in one vectorised pass."""
    Z = np.atleast_2d(Z)
    boxes = isinstance(A, BoxRegion) and isinstance(B, BoxRegion)
    if not (boxes and S.minkowski_cone and 0.0 < t < 1.0):
        return np.array([z_t_membership(S, z, A, B, t, rng=rng) for z in Z], dtype=object)
    lo = np.maximum(A.lo, (Z - t * B.hi) / (1.0 - t))
    hi = np.minimum(A.hi, (Z - t * B.lo) / (1.0 - t))
    feasible = np.all(lo <= hi, axis=1)
    cand = np.clip(Z, lo, np.maximum(lo, hi))
    cand[:, 0] = lo[:, 0]
    sep = S.compiled('flat_separation_rows', lambda s: jax.vmap(flat_separation_fn(s)))
    return feasible & (np.asarray(sep(cand, Z - cand)) > 0)
