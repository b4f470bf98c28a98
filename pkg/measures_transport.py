"""
Measures & Transport Engine
l_q-optimal transport between discrete measures, and transport maps from potentials.
- Exact LP over causal pairs only (scipy HiGHS); permutation brute force as an oracle.
- Cyclical monotonicity, l^q-transforms and cleaned Kantorovich duals.
- q-separation test and displacement interpolation (q-geodesics of measures).
- F_t(x) = exp_x(t F*(du)^(p-2) L*(du)) and its m-Jacobian by autodiff.
"""

import itertools
import warnings
from dataclasses import dataclass, field
from typing import Callable, Optional, Tuple

import jax
import jax.numpy as jnp
import numpy as np
from scipy.optimize import linprog

import common
from common import (AllInfiniteError, CausalityError, InfeasibleCouplingError, NegativeJacobianError,
                    NoConvergenceError, ParameterError, SizeError, debug_log)
from distance import intermediate_point, separation_matrix
from finsler_core import (Covector, as_point, legendre_solver_fn, q_legendre_inverse,
                          time_orientation_at)
from geometry_dynamics import endpoint_fn, exp_point

# ==================== DOMAIN TYPES ====================

@dataclass(frozen=True)
class DiscreteMeasure:
    atoms: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        atoms = np.atleast_2d(np.asarray(self.atoms, dtype=float))
        weights = np.asarray(self.weights, dtype=float).reshape(-1)
        if atoms.shape[0] != weights.size:
            raise ParameterError("one weight per atom", atoms=atoms.shape[0], weights=weights.size)
        if np.any(weights < 0):
            raise ParameterError("weights must be nonnegative")
        if abs(weights.sum() - 1.0) >= 1e-12:
            raise ParameterError("weights must sum to 1", total=float(weights.sum()))
        if len({tuple(a) for a in atoms}) != atoms.shape[0]:
            raise ParameterError("atoms must be distinct")
        object.__setattr__(self, 'atoms', atoms)
        object.__setattr__(self, 'weights', weights)

    @classmethod
    def uniform(cls, atoms):
        atoms = np.atleast_2d(np.asarray(atoms, dtype=float))
        return cls(atoms, np.full(atoms.shape[0], 1.0 / atoms.shape[0]))

    @classmethod
    def normalized(cls, atoms, weights):
        weights = np.asarray(weights, dtype=float)
        return cls(atoms, weights / weights.sum())

    @property
    def size(self):
        return self.atoms.shape[0]

    @property
    def support(self):
        return self.atoms[self.weights > 0]


@dataclass(frozen=True)
class Coupling:
    source: DiscreteMeasure
    target: DiscreteMeasure
    table: np.ndarray
    cost_q: float
    chronological: bool
    q: float
    separations: np.ndarray = field(repr=False, default=None)
    row_duals: Optional[np.ndarray] = field(repr=False, default=None)
    col_duals: Optional[np.ndarray] = field(repr=False, default=None)

    @property
    def value(self):
        """sum pi l^q / q, the primal value of the Kantorovich problem."""
        return self.cost_q ** self.q / self.q

    def support_pairs(self, threshold=0.0):
        rows, cols = np.nonzero(self.table > threshold)
        return list(zip(rows.tolist(), cols.tolist()))

    def marginal_error(self):
        return max(float(np.max(np.abs(self.table.sum(axis=1) - self.source.weights))),
                   float(np.max(np.abs(self.table.sum(axis=0) - self.target.weights))))


@dataclass(frozen=True)
class DualPair:
    u_vals: np.ndarray
    v_vals: np.ndarray
    gap: float


@dataclass(frozen=True)
class TransformResult:
    values: np.ndarray
    gap: Optional[float]


@dataclass(frozen=True)
class QSeparation:
    separated: bool
    witness: Tuple[int, int]
    min_separation: float


@dataclass(frozen=True)
class PotentialGrid:
    """A smooth potential u(x), written with jax.numpy."""
    u: Callable
    name: str = 'potential'
    params: dict = field(default_factory=dict)

    def gradient(self, x):
        return np.asarray(jax.grad(self.u)(jnp.asarray(as_point(x))))

    def to_mapping(self):
        return {'kind': self.name, **self.params}


def linear_potential(a):
    a = jnp.asarray(as_point(a))
    return PotentialGrid(lambda x: jnp.dot(a, x), 'linear', {'a': np.asarray(a).tolist()})


def quadratic_potential(a, eps):
    """u(x) = a x0 + eps/2 |x_spatial|^2; eps < 0 compresses the spatial slices."""
    return PotentialGrid(lambda x: a * x[0] + 0.5 * eps * jnp.sum(x[1:] ** 2), 'quadratic',
                         {'a': float(a), 'eps': float(eps)})


def potential_from_mapping(mapping):
    kind = mapping.get('kind')
    if kind == 'linear':
        return linear_potential(mapping['a'])
    if kind == 'quadratic':
        return quadratic_potential(float(mapping['a']), float(mapping['eps']))
    raise ParameterError("unknown potential kind", kind=str(kind))

# ==================== HELPERS ====================

def _check_q(q):
    if not 0.0 < q < 1.0:
        raise ParameterError("q outside (0, 1)", q=float(q))


def _lq_matrix(sep, q):
    """l^q with -inf on non-causal pairs."""
    return common.ext_pow_array(sep, q)


def _coupling_from_table(S, mu, nu, table, sep, q, row_duals=None, col_duals=None):
    table = np.where(table > 0, table, 0.0)
    support = table > 0
    lq = _lq_matrix(sep, q)
    total = common.tree_sum(table[support] * lq[support])
    cost = common.ext_pow(total, 1.0 / q)
    chronological = bool(np.all(sep[support] > 0))
    return Coupling(mu, nu, table, cost, chronological, q, sep, row_duals, col_duals)

# ==================== OPERATIONS: COUPLINGS ====================

def optimal_coupling_lp(S, mu, nu, q):
    _check_q(q)
    sep = separation_matrix(S, mu.atoms, nu.atoms)
    m, k = sep.shape
    rows, cols = np.nonzero(sep >= 0)
    if rows.size == 0:
        raise InfeasibleCouplingError("no causal coupling", reason_detail='no causal pair')
    if np.any(sep[rows, cols] == 0):
        warnings.warn("admissible pair with zero time separation; cost is degenerate", RuntimeWarning)
        debug_log('measures_transport', "Degenerate LP cost: admissible lightlike pair")

    c = -_lq_matrix(sep[rows, cols], q) / q
    A = np.zeros((m + k, rows.size))
    A[rows, np.arange(rows.size)] = 1.0
    A[m + cols, np.arange(rows.size)] = 1.0
    b = np.concatenate([mu.weights, nu.weights])
    res = linprog(c, A_eq=A, b_eq=b, bounds=(0, None), method='highs',
                  options={'primal_feasibility_tolerance': 1e-10, 'dual_feasibility_tolerance': 1e-10})
    if res.status == 2:
        raise InfeasibleCouplingError("no causal coupling", m=m, k=k)
    if res.status != 0:
        raise NoConvergenceError("transport LP failed", status=int(res.status), detail=res.message)

    table = np.zeros((m, k))
    table[rows, cols] = res.x
    marginals = -np.asarray(res.eqlin.marginals)
    return _coupling_from_table(S, mu, nu, table, sep, q, marginals[:m], marginals[m:])


def lq_distance(S, mu, nu, q):
    try:
        return optimal_coupling_lp(S, mu, nu, q).cost_q
    except InfeasibleCouplingError as exc:
        debug_log('measures_transport', f"l_q = -inf: {exc.reason}")
        return common.NEG_INF


def brute_force_coupling(S, mu, nu, q):
    _check_q(q)
    m = mu.size
    if m != nu.size:
        raise SizeError("brute force needs equal atom counts", m=m, k=nu.size)
    if m > 8:
        raise SizeError("brute force is limited to 8 atoms", m=m)
    if not (np.allclose(mu.weights, 1.0 / m) and np.allclose(nu.weights, 1.0 / m)):
        raise ParameterError("brute force needs uniform weights")
    sep = separation_matrix(S, mu.atoms, nu.atoms)
    lq = _lq_matrix(sep, q)
    best, best_perm = common.NEG_INF, None
    for perm in itertools.permutations(range(m)):
        vals = lq[np.arange(m), perm]
        if np.any(vals == common.NEG_INF):
            continue
        total = common.tree_sum(vals)
        if total > best:
            best, best_perm = total, perm
    if best_perm is None:
        raise InfeasibleCouplingError("no causal permutation", m=m)
    table = np.zeros((m, m))
    table[np.arange(m), best_perm] = 1.0 / m
    return _coupling_from_table(S, mu, nu, table, sep, q)


def cyclical_monotonicity_check(S, pairs, q, seed=None, subsets=20):
    """min over rearrangements sigma of sum l(x_i, y_i)^q - sum l(x_i, y_sigma(i))^q."""
    k = len(pairs)
    if k == 0:
        return 0.0
    if k > 10:
        raise SizeError("cyclical monotonicity check takes at most 10 pairs", pairs=k)
    X = np.array([as_point(x) for x, _ in pairs])
    Y = np.array([as_point(y) for _, y in pairs])
    lq = _lq_matrix(separation_matrix(S, X, Y), q)

    def violation(idx, perm):
        base = lq[idx, idx]
        moved = lq[idx, perm]
        if np.any(moved == common.NEG_INF):
            return common.POS_INF
        if np.any(base == common.NEG_INF):
            return common.NEG_INF
        return common.tree_sum(base) - common.tree_sum(moved)

    worst = 0.0
    if k <= 6:
        idx = np.arange(k)
        for perm in itertools.permutations(range(k)):
            worst = min(worst, violation(idx, np.array(perm)))
        return worst
    rng = np.random.default_rng(common.DEFAULTS['seed'] if seed is None else seed)
    for _ in range(subsets):
        idx = np.sort(rng.choice(k, size=6, replace=False))
        for perm in itertools.permutations(idx):
            worst = min(worst, violation(idx, np.array(perm)))
    idx = np.arange(k)
    for shift in range(1, k):
        worst = min(worst, violation(idx, np.roll(idx, -shift)))
    return worst

# ==================== OPERATIONS: DUALITY ====================

def _cost_matrix(S, X, Y, q):
    sep = separation_matrix(S, X, Y)
    return np.where(sep >= 0, common.ext_pow_array(sep, q) / q, common.NEG_INF)


def _transform(cost, vals, axis):
    """sup over the other index of cost - vals; axis=1 gives u from v, axis=0 gives v from u."""
    shifted = cost - (vals[None, :] if axis == 1 else vals[:, None])
    out = np.max(shifted, axis=axis)
    if np.any(out == common.NEG_INF):
        raise AllInfiniteError("a point has no causal partner", index=int(np.argmax(out == common.NEG_INF)))
    return out


def lq_transform(S, vals, X, Y, q, direction='u', mu=None, nu=None, lp_value=None, cost=None):
    """
    direction 'u': u(x) = sup_y l(x, y)^q / q - v(y) from v on Y.
    direction 'v': v(y) = sup_x l(x, y)^q / q - u(x) from u on X.
    The gap needs both measures and the LP value.
    """
    _check_q(q)
    cost = _cost_matrix(S, X, Y, q) if cost is None else cost
    vals = np.asarray(vals, dtype=float)
    if direction == 'u':
        out = _transform(cost, vals, axis=1)
        u, v = out, vals
    elif direction == 'v':
        out = _transform(cost, vals, axis=0)
        u, v = vals, out
    else:
        raise ParameterError("direction must be 'u' or 'v'", direction=direction)
    gap = None
    if mu is not None and nu is not None and lp_value is not None:
        gap = common.tree_sum(mu.weights * u) + common.tree_sum(nu.weights * v) - lp_value
    return TransformResult(out, gap)


def dual_pair(S, mu, nu, q, coupling=None):
    """LP duals cleaned by a double l^q-transform; gap against the primal value."""
    coupling = coupling or optimal_coupling_lp(S, mu, nu, q)
    cost = np.where(coupling.separations >= 0,
                    common.ext_pow_array(coupling.separations, q) / q, common.NEG_INF)
    u0 = coupling.row_duals if coupling.row_duals is not None else np.zeros(mu.size)
    v = _transform(cost, u0, axis=0)
    u = _transform(cost, v, axis=1)
    gap = common.tree_sum(mu.weights * u) + common.tree_sum(nu.weights * v) - coupling.value
    return DualPair(u, v, gap)


def q_separation_check(S, mu, nu):
    sep = separation_matrix(S, mu.atoms, nu.atoms)
    live = np.outer(mu.weights > 0, nu.weights > 0)
    masked = np.where(live, sep, common.POS_INF)
    i, j = np.unravel_index(np.argmin(masked), masked.shape)
    worst = float(masked[i, j])
    return QSeparation(worst > common.DEFAULTS['chron_eps'], (int(i), int(j)), worst)

# ==================== OPERATIONS: INTERPOLATION ====================

def _merge_atoms(points, weights):
    resolution = common.DEFAULTS['merge_resolution']
    merged = {}
    order = []
    for p, w in zip(points, weights):
        key = tuple(np.round(p / resolution).astype(np.int64))
        if key not in merged:
            merged[key] = [p, 0.0]
            order.append(key)
        merged[key][1] += w
    atoms = np.array([merged[key][0] for key in order])
    mass = np.array([merged[key][1] for key in order])
    return DiscreteMeasure(atoms, mass / mass.sum())


def displacement_interpolate(S, coupling, t):
    if not 0.0 <= t <= 1.0:
        raise ParameterError("t outside [0, 1]", t=float(t))
    pairs = coupling.support_pairs()
    X, Y = coupling.source.atoms, coupling.target.atoms
    weights = np.array([coupling.table[i, j] for i, j in pairs])
    if S.straight_geodesics and 0.0 < t < 1.0:
        if not coupling.chronological:
            raise common.NoMaximizerError("coupling is not chronological", model=S.name)
        rows, cols = np.array(pairs).T
        points = X[rows] + t * (Y[cols] - X[rows])
    else:
        points = np.array([intermediate_point(S, X[i], Y[j], t) for i, j in pairs])
    return _merge_atoms(points, weights)


def measures_reverse_triangle(S, mu0, mu1, t, q):
    """l_q(mu0, mu1) - l_q(mu0, mu_t) - l_q(mu_t, mu1) along the interpolation."""
    coupling = optimal_coupling_lp(S, mu0, mu1, q)
    mu_t = displacement_interpolate(S, coupling, t)
    legs = [lq_distance(S, mu0, mu_t, q), lq_distance(S, mu_t, mu1, q)]
    if common.NEG_INF in legs:
        return common.POS_INF
    return common.ext_add(coupling.cost_q, -legs[0], -legs[1])


def q_geodesic_defect(S, mu0, mu1, t, q):
    """
    max over the two legs of |l_q(mu_s, mu_r) - (r - s) l_q(mu0, mu1)| for (s, r) = (0, t), (t, 1),
    relative to max(1, |l_q(mu0, mu1)|). A leg with no causal coupling counts as +inf.
    """
    if not 0.0 < t < 1.0:
        raise ParameterError("t outside (0, 1)", t=float(t))
    coupling = optimal_coupling_lp(S, mu0, mu1, q)
    mu_t = displacement_interpolate(S, coupling, t)
    total = coupling.cost_q
    legs = [(lq_distance(S, mu0, mu_t, q), t), (lq_distance(S, mu_t, mu1, q), 1.0 - t)]
    if any(value == common.NEG_INF for value, _ in legs):
        return common.POS_INF
    defect = max(abs(value - share * total) for value, share in legs)
    debug_log('measures_transport', f"q-geodesic legs {[v for v, _ in legs]} against total {total:.6e}")
    return defect / max(1.0, abs(total))

# ==================== OPERATIONS: TRANSPORT MAPS ====================

def transport_map_from_potential(S, u, x, t, q):
    _check_q(q)
    x = as_point(x)
    zeta = Covector(x, u.gradient(x))
    if zeta.pair(time_orientation_at(S, x)) >= 0:
        raise CausalityError("du is outside the polar cone", model=S.name, x=x.tolist())
    if t == 0.0:
        return x
    V = q_legendre_inverse(S, zeta, q)
    return exp_point(S, V.scaled(t))


def transport_fn(S, u, q, steps, max_iter=40, halvings=12):
    """Traceable x, t -> (F_t(x), det_m dF_t(x), Legendre residual, polar pairing, F(V(x)))."""
    p = q / (q - 1.0)
    solve = legendre_solver_fn(S, max_iter, halvings)
    endpoint = endpoint_fn(S, steps)
    du = jax.grad(u.u)
    L = S.lagrangian

    def velocity(x):
        v, res = solve(x, du(x))
        speed = jnp.sqrt(-2.0 * L(x, v))
        return speed ** (p - 2.0) * v, res, speed ** (p - 1.0)

    def mapped(x, t):
        return endpoint(x, t * velocity(x)[0], 1.0)

    def evaluate(x, t):
        _, res, speed = velocity(x)
        y = mapped(x, t)
        det = jnp.linalg.det(jax.jacfwd(mapped)(x, t))
        ratio = jnp.exp(S.log_reference_density(y) - S.log_reference_density(x))
        pairing = jnp.dot(du(x), S.time_orientation(x))
        return y, det * ratio, res, pairing, speed

    return evaluate


def transport_batch(S, u, X, t, q, steps=None, with_speed=False):
    """
    Vectorised F_t and det_m dF_t over the rows of X, with regime checks.
    `with_speed` also returns F(V(x)), which is l(x, F_1(x)) on the support.
    """
    _check_q(q)
    steps = int(steps or common.DEFAULTS['geodesic_steps'])
    key = ('transport', u.u, float(q), steps)
    run = S.compiled(key, lambda s: jax.vmap(transport_fn(s, u, q, steps), in_axes=(0, None)))
    Y, dets, res, pairing, speeds = (np.asarray(a) for a in run(np.atleast_2d(X), float(t)))
    if np.any(pairing >= 0):
        raise CausalityError("du is outside the polar cone on the support", model=S.name,
                             samples=int(np.sum(pairing >= 0)))
    tol = 1e-9
    if not np.all(res <= tol):
        raise NoConvergenceError("Legendre inverse did not converge on the support", model=S.name,
                                 residual=float(np.max(res)))
    if not np.all(np.isfinite(Y)) or not S.in_chart(Y):
        raise common.BlowUpError("transport left the chart", model=S.name)
    if np.any(dets <= 0):
        raise NegativeJacobianError("transport Jacobian is not positive", model=S.name,
                                    samples=int(np.sum(dets <= 0)))
    return (Y, dets, speeds) if with_speed else (Y, dets)


def transport_jacobian(S, u, x, t, q, steps=None):
    """det_m[dF_t(x)] = det(dF_t) sigma(F_t x) / sigma(x)."""
    if t == 0.0:
        transport_map_from_potential(S, u, x, 0.0, q)
        return 1.0
    _, dets = transport_batch(S, u, as_point(x)[None, :], t, q, steps)
    return float(dets[0])
