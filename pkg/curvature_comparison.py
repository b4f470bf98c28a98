"""
Curvature Comparison Engine
Weighted Ricci curvature and the distortion coefficients built on it.
- psi, psi', psi'' along geodesics (jvp along the geodesic spray).
- Ric_N for N in (-inf, 0] u [n, inf], with the N = n and N = inf limits.
- s_kappa and tau_{K,N}^{(t)}(r), including the +inf convention for N < 0.
- Monte Carlo checker for the timelike measure contraction property.
"""

import math
from dataclasses import dataclass, field
from typing import Optional

import jax
import jax.numpy as jnp
import numpy as np

import common
from common import CausalityError, DomainError, ParameterError, SamplingBudgetError, debug_log
from distance import contraction_jacobian, intermediate_point, separation_matrix, time_separation
from finsler_core import (Vector, as_point, f_norm, metric_fn, reverse_structure,
                          sample_future_timelike)
from geometry_dynamics import exp_geodesic, ricci_fn, spray_fn

# ==================== DOMAIN TYPES ====================

@dataclass(frozen=True)
class WeightDerivatives:
    psi: float
    psi_prime: float
    psi_second: float


@dataclass(frozen=True)
class ComparisonParams:
    K: float = 0.0
    N: float = math.inf
    q: float = 0.5
    t: float = 0.5

    def validate(self, dim):
        if not 0.0 < self.q < 1.0:
            raise ParameterError("q outside (0, 1)", q=self.q)
        if not 0.0 <= self.t <= 1.0:
            raise ParameterError("t outside [0, 1]", t=self.t)
        check_dimension_parameter(self.N, dim)
        return self

    def to_mapping(self):
        return {'K': self.K, 'N': self.N, 'q': self.q, 't': self.t}


@dataclass(frozen=True)
class McpReport:
    lhs: float
    rhs: float
    slack: float
    stderr: float
    samples: int
    seed: int
    params: dict
    measure_B: float
    tau_min: float
    holds: bool = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, 'holds', bool(common.holds(self.slack, self.stderr)))


def check_dimension_parameter(N, dim):
    if 0.0 < N < dim:
        raise ParameterError("N must lie outside (0, n)", N=float(N), n=int(dim))
    return N

# ==================== TRACEABLE WEIGHT DERIVATIVES ====================

def _spray_field(S):
    G = spray_fn(S)
    return lambda x, v: (v, -2.0 * G(x, v))


def psi_prime_fn(S):
    psi = S.weight_log_density
    field_ = _spray_field(S)
    return lambda x, v: jax.jvp(psi, (x, v), field_(x, v))[1]


def psi_second_fn(S):
    dpsi = psi_prime_fn(S)
    field_ = _spray_field(S)
    return lambda x, v: jax.jvp(dpsi, (x, v), field_(x, v))[1]


def _weight_triple_fn(S):
    psi, d1, d2 = S.weight_log_density, psi_prime_fn(S), psi_second_fn(S)
    return lambda x, v: jnp.stack([psi(x, v), d1(x, v), d2(x, v)])


def _ricci_weight_fn(S):
    ric = ricci_fn(S)
    d1, d2 = psi_prime_fn(S), psi_second_fn(S)
    return lambda x, v: jnp.stack([ric(x, v), d1(x, v), d2(x, v)])

# ==================== OPERATIONS: WEIGHTS ====================

def _state_at(S, gamma, t):
    T = gamma.duration
    if not 0.0 <= t <= T:
        raise ParameterError("parameter outside the geodesic segment", t=float(t), T=T)
    k = int(round(t / T * gamma.steps))
    if abs(gamma.times[k] - t) < 1e-14 * max(1.0, T):
        return gamma.points[k], gamma.tangents[k]
    if S.straight_geodesics:
        return gamma.points[0] + t * gamma.tangents[0], gamma.tangents[0]
    seg = exp_geodesic(S, gamma.start, t, max(16, k))
    return seg.points[-1], seg.tangents[-1]


def weight_derivatives(S, gamma, t):
    x, v = _state_at(S, gamma, t)
    psi, d1, d2 = (float(a) for a in S.compiled('weight_triple', _weight_triple_fn)(x, v))
    return WeightDerivatives(psi, d1, d2)


def _combine(ric, d1, d2, N, n):
    if N == math.inf:
        return ric + d2
    if N == n:
        # monotone limit N -> n+
        return common.NEG_INF if abs(d1) > 1e-12 else ric + d2
    return ric + d2 - d1 ** 2 / (N - n)


def weighted_ricci(S, v, N):
    check_dimension_parameter(N, S.dim)
    ric, d1, d2 = (float(a) for a in S.compiled('ricci_weight', _ricci_weight_fn)(v.base, v.comps))
    if N == S.dim and abs(d1) > 1e-12:
        debug_log('curvature_comparison', f"Ric_n = -inf at {v.comps.tolist()} (psi' = {d1:.3e})")
    return _combine(ric, d1, d2, N, S.dim)


def weight_consistency(S, x, samples=32, seed=None):
    """max relative error between the closed-form psi and -log sigma + 1/2 log(-det g_v)."""
    x = as_point(x)
    rng = np.random.default_rng(common.DEFAULTS['seed'] if seed is None else seed)
    vs = sample_future_timelike(S, x, rng, samples)
    metric = metric_fn(S)
    worst = 0.0
    for v in vs:
        closed = float(S.weight_log_density(x, v.comps))
        det = float(jnp.linalg.det(metric(x, v.comps)))
        derived = -float(S.log_reference_density(x)) + 0.5 * math.log(-det)
        worst = max(worst, abs(closed - derived) / max(1.0, abs(derived)))
    return worst


def ricci_lower_bound_scan(S, points, N, samples=16, seed=None):
    """min of Ric_N(v) / F(v)^2 over sampled future timelike v at the given points."""
    check_dimension_parameter(N, S.dim)
    rng = np.random.default_rng(common.DEFAULTS['seed'] if seed is None else seed)
    run = S.compiled('ricci_weight', _ricci_weight_fn)
    worst = common.POS_INF
    for x in np.atleast_2d(points):
        for v in sample_future_timelike(S, x, rng, samples):
            ric, d1, d2 = (float(a) for a in run(v.base, v.comps))
            worst = min(worst, _combine(ric, d1, d2, N, S.dim) / f_norm(S, v) ** 2)
    return worst

# ==================== OPERATIONS: COMPARISON FUNCTIONS ====================

def s_kappa(kappa, r):
    if kappa > 0:
        root = math.sqrt(kappa)
        if r > math.pi / root:
            raise DomainError("s_kappa argument beyond pi / sqrt(kappa)", kappa=float(kappa), r=float(r))
        return math.sin(root * r) / root
    if kappa < 0:
        root = math.sqrt(-kappa)
        return math.sinh(root * r) / root
    return float(r)


def tau_coefficient(K, N, t, r):
    if not 0.0 <= t <= 1.0:
        raise ParameterError("t outside [0, 1]", t=float(t))
    if N == 0 or 0.0 < N <= 1.0 or math.isinf(N):
        raise ParameterError("tau needs N < 0 or N > 1 finite", N=float(N))
    if r < 0:
        raise DomainError("tau needs r >= 0", r=float(r))
    if r == 0 or K == 0:
        return float(t)
    if t == 0.0:
        return 0.0
    if t == 1.0:
        return 1.0
    kappa = K / (N - 1.0)
    if kappa > 0 and r >= math.pi / math.sqrt(kappa):
        if N < 0:
            return common.POS_INF
        raise DomainError("r beyond the Bonnet-Myers range pi sqrt((N-1)/K)", K=float(K), N=float(N), r=float(r))
    ratio = s_kappa(kappa, t * r) / s_kappa(kappa, r)
    return t ** (1.0 / N) * ratio ** ((N - 1.0) / N)

# ==================== OPERATIONS: MEASURE CONTRACTION ====================

def stratified_box_samples(rng, lo, hi, count):
    """Uniform samples in a box, stratified along the first axis."""
    lo, hi = as_point(lo), as_point(hi)
    u = rng.random((count, lo.size))
    u[:, 0] = (np.arange(count) + u[:, 0]) / count
    return lo + (hi - lo) * u


def _sigma(S, points):
    log_sigma = S.compiled('log_sigma_batch', lambda s: jax.vmap(s.log_reference_density))
    return np.exp(np.asarray(log_sigma(np.atleast_2d(points))))


def mcp_check(S, x, B, t, K, N, samples, seed=None, reverse=False):
    """
    m[Z_t(x, B)] >= inf_B tau^(t)(l(x, y))^N m[B], both sides on one sample set.
    `reverse` runs the check on the reversed structure (B in the past of x).
    """
    if N == math.inf or N < S.dim:
        raise ParameterError("measure contraction needs n <= N < inf", N=float(N), n=S.dim)
    if not 0.0 <= t <= 1.0:
        raise ParameterError("t outside [0, 1]", t=float(t))
    model = reverse_structure(S) if reverse else S
    x = as_point(x)
    seed = common.DEFAULTS['seed'] if seed is None else int(seed)
    batches = common.DEFAULTS['mc_batches']
    per_batch = max(1, int(samples) // batches)
    lo, hi = B.bounds
    box_volume = float(np.prod(hi - lo))

    batch_lhs, batch_mB, taus = [], [], []
    for rng in common.batch_streams(seed, batches):
        ys = stratified_box_samples(rng, lo, hi, per_batch)
        inside = B.contains(ys)
        ys_in = ys[inside]
        weights_lhs = np.zeros(per_batch)
        if ys_in.size:
            seps, images, jacs = _contract(model, x, ys_in, t)
            if np.any(seps <= 0):
                raise CausalityError("B must lie in the chronological future of x", model=S.name)
            taus.extend(tau_coefficient(K, N, t, float(r)) ** N for r in seps)
            weights_lhs[inside] = _sigma(model, images) * jacs
        batch_lhs.append(box_volume * common.tree_mean(weights_lhs))
        sigma_B = np.zeros(per_batch)
        if ys_in.size:
            sigma_B[inside] = _sigma(model, ys_in)
        batch_mB.append(box_volume * common.tree_mean(sigma_B))
    if not taus:
        raise SamplingBudgetError("no samples landed in B", samples=int(samples))

    tau_min = float(np.min(taus))
    batch_lhs, batch_mB = np.array(batch_lhs), np.array(batch_mB)
    batch_slack = batch_lhs - tau_min * batch_mB
    lhs = common.tree_mean(batch_lhs)
    measure_B = common.tree_mean(batch_mB)
    report = McpReport(lhs, tau_min * measure_B, common.tree_mean(batch_slack),
                       common.batch_stderr(batch_slack), per_batch * batches, seed,
                       {'K': K, 'N': N, 't': t, 'reverse': bool(reverse)}, measure_B, tau_min)
    debug_log('curvature_comparison', f"MCP slack {report.slack:.3e} +- {report.stderr:.1e}")
    return report


def _contract(S, x, ys, t):
    """l(x, y), gamma_xy(t) and the Jacobian of y -> gamma_xy(t) for each sample y."""
    if S.straight_geodesics:
        seps = separation_matrix(S, x[None, :], ys)[0]
        return seps, x + t * (ys - x), np.full(len(ys), t ** S.dim)
    seps, images, jacs = [], [], []
    for y in ys:
        result = time_separation(S, x, y)
        seps.append(result.value)
        if result.value > 0:
            images.append(intermediate_point(S, x, y, t, result))
            jacs.append(abs(contraction_jacobian(S, x, y, t, result)))
        else:
            images.append(x)
            jacs.append(0.0)
    return np.array(seps), np.array(images), np.array(jacs)
