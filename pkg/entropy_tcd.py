"""
Entropy & Curvature-Dimension Checker
Entropies of absolutely continuous measures and the inequalities built on them.
- Ent, the N-Renyi entropies and the esssup entropy S^0, by Monte Carlo.
- Entropy of mu_t = (F_t)_# mu_0 through the Monge-Ampere Jacobian (no density smoothing).
- TCD_q(K, N) checks for N = inf, n <= N < inf, N < 0 and N = 0, with monotonicity in N'.
- Timelike Brunn-Minkowski check on boxes or indicator regions.
"""

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Optional

import jax
import numpy as np

import common
from common import (CausalityError, DomainError, ParameterError, SamplingBudgetError,
                    SeparationError, debug_log)
from curvature_comparison import (ComparisonParams, _contract, _sigma, check_dimension_parameter,
                                  s_kappa, tau_coefficient)
from distance import BoxRegion, flat_separation_fn, separation_matrix, z_t_membership_many
from measures_transport import (DiscreteMeasure, optimal_coupling_lp, q_separation_check,
                                transport_batch)

# ==================== DOMAIN TYPES ====================

class Regime(str, Enum):
    NINF = 'Ninf'
    NPOS = 'Npos'
    NNEG = 'Nneg'
    NZERO = 'Nzero'


def regime_of(N):
    if N == math.inf:
        return Regime.NINF
    if N == 0:
        return Regime.NZERO
    return Regime.NNEG if N < 0 else Regime.NPOS


@dataclass(frozen=True)
class DensityMeasure:
    """mu = rho m: `density` maps (k, n) points to rho, `sampler(rng, k)` draws from mu."""
    density: Callable
    sampler: Callable
    support_box: BoxRegion
    name: str = 'custom'

    def sample(self, rng, count):
        return np.atleast_2d(self.sampler(rng, int(count)))

    def rho(self, points):
        return np.asarray(self.density(np.atleast_2d(points)), dtype=float)

    def to_mapping(self):
        return {'name': self.name, **self.support_box.to_mapping()}


@dataclass(frozen=True)
class EntropyEstimate:
    kind: str
    value: float
    stderr: float
    samples: int
    N: Optional[float] = None
    lower_bound: bool = False


@dataclass(frozen=True)
class TcdReport:
    regime: Regime
    lhs: float
    rhs: float
    slack: float
    stderr: float
    params: ComparisonParams
    samples: int
    seed: int
    model: str
    mode: str
    extra: dict = field(default_factory=dict)
    lower_bound: bool = False
    holds: bool = field(init=False)

    def __post_init__(self):
        verdict = common.holds(self.slack, self.stderr)
        for other in self.extra.values():
            verdict = verdict and common.holds(other['slack'], other['stderr'])
        object.__setattr__(self, 'holds', bool(verdict))


@dataclass(frozen=True)
class BrunnMinkowskiReport:
    regime: Regime
    lhs: float
    rhs: float
    slack: float
    stderr: float
    measure_Z: float
    measure_A0: float
    measure_A1: float
    l_inf: float
    l_sup: float
    params: dict
    samples: int
    seed: int
    model: str
    undecided: int = 0
    lower_bound: bool = False
    holds: bool = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, 'holds', bool(common.holds(self.slack, self.stderr)))

# ==================== CONSTRUCTORS ====================

def uniform_box_measure(S, box):
    """Coordinate-uniform law on a box: rho = 1 / (vol sigma)."""
    box = box if isinstance(box, BoxRegion) else BoxRegion(*box)
    if box.volume <= 0:
        raise ParameterError("box has zero volume", lo=box.lo.tolist(), hi=box.hi.tolist())
    volume = box.volume

    def density(points):
        inside = box.contains(points)
        return np.where(inside, 1.0 / (volume * _sigma(S, points)), 0.0)

    return DensityMeasure(density, box.sample, box, name='uniform_box')


def mass_estimate(S, mu, samples=None, seed=None):
    """Monte Carlo integral of rho dm over the support box, with its standard error."""
    samples = int(samples or common.DEFAULTS['samples_entropy'])
    seed = common.DEFAULTS['seed'] if seed is None else int(seed)
    per_batch = _per_batch(samples)
    box = mu.support_box
    means = []
    for rng in common.batch_streams(seed, common.DEFAULTS['mc_batches']):
        X = box.sample(rng, per_batch)
        means.append(box.volume * common.tree_mean(mu.rho(X) * _sigma(S, X)))
    return common.tree_mean(means), common.batch_stderr(means)

# ==================== HELPERS ====================

def _per_batch(samples):
    return max(1, int(samples) // common.DEFAULTS['mc_batches'])


def _reduce(batch_values):
    """Mean and stderr of per-batch values; +inf batches make the mean +inf."""
    batch_values = np.asarray(batch_values, dtype=float)
    if np.any(np.isposinf(batch_values)):
        return common.POS_INF, 0.0
    return common.tree_mean(batch_values), common.batch_stderr(batch_values)


def _entropy_terms(kind, N, rho, dets=None):
    """Per-sample integrands of the entropy of (F_t)_# mu written over mu."""
    dets = np.ones_like(rho) if dets is None else dets
    if kind == 'Ent':
        return np.log(rho) - np.log(dets)
    if kind == 'RenyiN':
        sign = -1.0 if N > 0 else 1.0
        return sign * rho ** (-1.0 / N) * dets ** (1.0 / N)
    return rho / dets


def _check_kind(S, kind, N):
    if kind not in ('Ent', 'RenyiN', 'Renyi0'):
        raise ParameterError("unknown entropy kind", kind=str(kind))
    if kind == 'RenyiN':
        if N is None or N == 0 or math.isinf(N):
            raise ParameterError("RenyiN needs a finite nonzero N", N=N)
        check_dimension_parameter(N, S.dim)


def _refine_around(rng, box, center, count):
    width = 0.01 * (box.hi - box.lo)
    return np.clip(center + width * rng.standard_normal((int(count), box.lo.size)), box.lo, box.hi)


def _tau_array(K, N, t, ls):
    if K == 0:
        return np.full(len(ls), float(t))
    return np.array([tau_coefficient(K, N, t, float(r)) for r in ls])


def _zero_coefficient(K, s, l):
    """s_{-K}(s l) / (s s_{-K}(l)), with value 1 at l = 0 and the l / s_{-K}(l) limit at s = 0."""
    if l == 0:
        return 1.0
    try:
        base = s_kappa(-K, l)
        if base <= 0:
            return common.POS_INF
        if s == 0:
            return l / base
        return s_kappa(-K, s * l) / (s * base)
    except DomainError:
        return common.POS_INF

# ==================== OPERATIONS: ENTROPIES ====================

def entropy_estimate(S, mu, kind='Ent', N=None, samples=None, seed=None):
    _check_kind(S, kind, N)
    samples = int(samples or common.DEFAULTS['samples_entropy'])
    seed = common.DEFAULTS['seed'] if seed is None else int(seed)
    per_batch = _per_batch(samples)
    streams = common.batch_streams(seed, common.DEFAULTS['mc_batches'])

    batch_values, best, best_point = [], -math.inf, None
    for rng in streams:
        X = mu.sample(rng, per_batch)
        terms = _entropy_terms(kind, N, mu.rho(X))
        if kind == 'Renyi0':
            k = int(np.argmax(terms))
            if terms[k] > best:
                best, best_point = float(terms[k]), X[k]
            batch_values.append(float(terms[k]))
        else:
            batch_values.append(common.tree_mean(terms))

    if kind != 'Renyi0':
        value, stderr = _reduce(batch_values)
        return EntropyEstimate(kind, value, stderr, per_batch * len(streams), N)

    extra = _refine_around(streams[0], mu.support_box, best_point, common.DEFAULTS['refine_evals'])
    value = max(best, float(np.max(mu.rho(extra))))
    debug_log('entropy_tcd', f"S0 refinement {best:.6e} -> {value:.6e}")
    return EntropyEstimate(kind, value, common.batch_stderr(batch_values), per_batch * len(streams),
                           lower_bound=True)


def entropy_eval(S, mu, kind='Ent', N=None, samples=None, seed=None):
    return entropy_estimate(S, mu, kind, N, samples, seed).value


def entropy_along_transport(S, mu0, u, t, kind='Ent', q=0.5, N=None, samples=None, seed=None):
    """Entropy of (F_t)_# mu0 from rho_0 and det_m dF_t along the mu0 samples."""
    _check_kind(S, kind, N)
    samples = int(samples or common.DEFAULTS['samples_entropy'])
    seed = common.DEFAULTS['seed'] if seed is None else int(seed)
    per_batch = _per_batch(samples)
    streams = common.batch_streams(seed, common.DEFAULTS['mc_batches'])

    batch_values, best, best_point = [], -math.inf, None
    for rng in streams:
        X = mu0.sample(rng, per_batch)
        dets = np.ones(len(X)) if t == 0.0 else transport_batch(S, u, X, t, q)[1]
        terms = _entropy_terms(kind, N, mu0.rho(X), dets)
        if kind == 'Renyi0':
            k = int(np.argmax(terms))
            if terms[k] > best:
                best, best_point = float(terms[k]), X[k]
            batch_values.append(float(terms[k]))
        else:
            batch_values.append(common.tree_mean(terms))

    if kind != 'Renyi0':
        value, stderr = _reduce(batch_values)
        return EntropyEstimate(kind, value, stderr, per_batch * len(streams), N)

    extra = _refine_around(streams[0], mu0.support_box, best_point, common.DEFAULTS['refine_evals'])
    rho = mu0.rho(extra)
    extra, rho = extra[rho > 0], rho[rho > 0]
    if len(extra):
        dets = np.ones(len(extra)) if t == 0.0 else transport_batch(S, u, extra, t, q)[1]
        best = max(best, float(np.max(rho / dets)))
    return EntropyEstimate(kind, best, common.batch_stderr(batch_values), per_batch * len(streams),
                           lower_bound=True)

# ==================== LOGIC: TCD SAMPLE SETS ====================

def _potential_samples(S, mu0, u, t, q, rng, count):
    """rho_0, det_t, det_1 and l(x, F_1 x) along mu0 samples of a potential-driven transport."""
    X = mu0.sample(rng, count)
    rho0 = mu0.rho(X)
    keep = rho0 > 0
    X, rho0 = X[keep], rho0[keep]
    det_t = np.ones(len(X)) if t == 0.0 else transport_batch(S, u, X, t, q)[1]
    _, det_1, ls = transport_batch(S, u, X, 1.0, q, with_speed=True)
    if np.any(ls <= common.DEFAULTS['chron_eps']):
        raise SeparationError("transport is not chronological on the support", model=S.name,
                              min_separation=float(np.min(ls)))
    return X, rho0, det_t, det_1, ls


def _coupled_samples(S, mu0, mu1, t, q, rng, count):
    """
    Same quantities for a discretely coupled pair: the LP coupling of two equal-size
    clouds, with det dF_t taken from the least-squares affine fit of the realised map.
    """
    X = mu0.sample(rng, count)
    Y = mu1.sample(rng, count)
    source, target = DiscreteMeasure.uniform(X), DiscreteMeasure.uniform(Y)
    separation = q_separation_check(S, source, target)
    if not separation.separated:
        raise SeparationError("pair is not q-separated", model=S.name, witness=list(separation.witness),
                              min_separation=separation.min_separation)
    coupling = optimal_coupling_lp(S, source, target, q)
    partner = np.argmax(coupling.table, axis=1)
    Y = Y[partner]
    design = np.hstack([X, np.ones((len(X), 1))])
    coef, *_ = np.linalg.lstsq(design, Y, rcond=None)
    A = coef[:-1].T
    rho0, rho1 = mu0.rho(X), mu1.rho(Y)
    Z = X + t * (Y - X)
    det_t = np.linalg.det((1.0 - t) * np.eye(S.dim) + t * A) * _sigma(S, Z) / _sigma(S, X)
    det_1 = rho0 / rho1
    ls = coupling.separations[np.arange(len(X)), partner]
    return X, rho0, det_t, det_1, ls


def _regime_terms(regime, K, N, t, rho0, det_t, det_1, ls):
    """Per-sample (lhs, rhs, slack), oriented so that slack >= 0 means the inequality holds."""
    if regime is Regime.NINF:
        lhs = np.log(rho0) - np.log(det_t)
        rhs = np.log(rho0) - t * np.log(det_1) - 0.5 * K * t * (1.0 - t) * ls ** 2
        return lhs, rhs, rhs - lhs
    if regime is Regime.NZERO:
        c_early = np.array([_zero_coefficient(K, 1.0 - t, float(l)) for l in ls])
        c_late = np.array([_zero_coefficient(K, t, float(l)) for l in ls])
        lhs = rho0 / det_t
        rhs = np.maximum(c_early * rho0, c_late * rho0 / det_1)
        return lhs, rhs, rhs - lhs
    early, late = _tau_array(K, N, 1.0 - t, ls), _tau_array(K, N, t, ls)
    base = rho0 ** (-1.0 / N)
    sign = -1.0 if N > 0 else 1.0
    lhs = sign * base * det_t ** (1.0 / N)
    with np.errstate(invalid='ignore'):
        rhs = sign * base * (early + late * det_1 ** (1.0 / N))
    rhs = np.where(np.isposinf(early) | np.isposinf(late), common.POS_INF, rhs)
    return lhs, rhs, rhs - lhs

# ==================== OPERATIONS: TCD ====================

def tcd_check(S, mu0, target, params, samples=None, seed=None, coupled_batch=128):
    """
    TCD_q(K, N) between mu0 and either a potential (transport mode) or a second
    DensityMeasure (coupled mode, straight-geodesic models only). Regime N in [n, inf)
    also runs at 2N and regime N < 0 at N/2; all reuse one sample set.
    """
    params = params.validate(S.dim)
    K, N, q, t = params.K, params.N, params.q, params.t
    regime = regime_of(N)
    samples = int(samples or common.DEFAULTS['samples_entropy'])
    seed = common.DEFAULTS['seed'] if seed is None else int(seed)
    streams = common.batch_streams(seed, common.DEFAULTS['mc_batches'])

    if isinstance(target, DensityMeasure):
        if not S.straight_geodesics:
            raise ParameterError("coupled TCD needs straight geodesics; pass a potential", model=S.name)
        mode, per_batch = 'coupled', min(_per_batch(samples), int(coupled_batch))
        draw = lambda rng: _coupled_samples(S, mu0, target, t, q, rng, per_batch)
    else:
        mode, per_batch = 'potential', _per_batch(samples)
        draw = lambda rng: _potential_samples(S, mu0, target, t, q, rng, per_batch)

    variants = [N]
    if regime is Regime.NPOS:
        variants.append(2.0 * N)
    elif regime is Regime.NNEG:
        variants.append(0.5 * N)

    batches = {v: {'lhs': [], 'rhs': [], 'slack': []} for v in variants}
    pooled, count = [], 0
    for rng in streams:
        X, rho0, det_t, det_1, ls = draw(rng)
        count += len(X)
        if regime is Regime.NZERO:
            pooled.append((X, rho0, det_t, det_1, ls))
        for v in variants:
            lhs, rhs, slack = _regime_terms(regime, K, v, t, rho0, det_t, det_1, ls)
            if regime is Regime.NZERO:
                lhs, rhs = float(np.max(lhs)), float(np.max(rhs))
                slack = rhs - lhs
            else:
                lhs, rhs, slack = (common.tree_mean(a) for a in (lhs, rhs, slack))
            for name, value in (('lhs', lhs), ('rhs', rhs), ('slack', slack)):
                batches[v][name].append(float(value))

    lower_bound = False
    if regime is Regime.NZERO:
        lhs, rhs = _esssup_sides(S, mu0, target, mode, K, t, q, pooled, streams[0])
        slack = rhs - lhs
        stderr = common.batch_stderr(np.asarray(batches[N]['slack'])[np.isfinite(batches[N]['slack'])])
        lower_bound = True
    else:
        lhs, _ = _reduce(batches[N]['lhs'])
        rhs, _ = _reduce(batches[N]['rhs'])
        slack, stderr = _reduce(batches[N]['slack'])

    extra = {}
    for v in variants[1:]:
        v_slack, v_stderr = _reduce(batches[v]['slack'])
        extra[f"N={v:g}"] = {'N': v, 'lhs': _reduce(batches[v]['lhs'])[0],
                             'rhs': _reduce(batches[v]['rhs'])[0], 'slack': v_slack, 'stderr': v_stderr}

    report = TcdReport(regime, lhs, rhs, slack, stderr, params, count, seed, S.name, mode,
                       extra, lower_bound)
    debug_log('entropy_tcd', f"TCD {regime.value} ({mode}) slack {slack:.3e} +- {stderr:.1e} holds={report.holds}")
    return report


def _esssup_sides(S, mu0, target, mode, K, t, q, pooled, rng):
    """Sample maxima of both N = 0 sides, refined around the running lhs maximiser."""
    X, rho0, det_t, det_1, ls = (np.concatenate(parts) for parts in zip(*pooled))
    lhs_terms, rhs_terms, _ = _regime_terms(Regime.NZERO, K, 0.0, t, rho0, det_t, det_1, ls)
    lhs, rhs = float(np.max(lhs_terms)), float(np.max(rhs_terms))
    if mode != 'potential':
        return lhs, rhs
    extra = _refine_around(rng, mu0.support_box, X[int(np.argmax(lhs_terms))], common.DEFAULTS['refine_evals'])
    rho = mu0.rho(extra)
    extra, rho = extra[rho > 0], rho[rho > 0]
    if len(extra):
        e_t = transport_batch(S, target, extra, t, q)[1] if t > 0 else np.ones(len(extra))
        _, e_1, e_l = transport_batch(S, target, extra, 1.0, q, with_speed=True)
        more_lhs, more_rhs, _ = _regime_terms(Regime.NZERO, K, 0.0, t, rho, e_t, e_1, e_l)
        lhs, rhs = max(lhs, float(np.max(more_lhs))), max(rhs, float(np.max(more_rhs)))
    return lhs, rhs

# ==================== OPERATIONS: BRUNN-MINKOWSKI ====================

def _region_box(region):
    return region if isinstance(region, BoxRegion) else region.box


def _region_samples(region, rng, count):
    box = _region_box(region)
    X = box.sample(rng, count)
    return X, region.contains(X)


def _pair_separations(S, X, Y):
    k = min(len(X), len(Y))
    if S.straight_geodesics:
        rows = S.compiled('flat_separation_rows', lambda s: jax.vmap(flat_separation_fn(s)))
        return np.asarray(rows(X[:k], Y[:k] - X[:k]))
    return np.array([separation_matrix(S, X[i:i + 1], Y[i:i + 1])[0, 0] for i in range(k)])


def _bm_sides(regime, K, N, t, mZ, m0, m1, l_inf, l_sup, ls):
    """lhs, rhs and oriented slack of the timelike Brunn-Minkowski inequality."""
    if regime is Regime.NINF:
        lhs = math.log(mZ) if mZ > 0 else common.NEG_INF
        extreme = l_inf if K >= 0 else l_sup
        rhs = (1.0 - t) * math.log(m0) + t * math.log(m1) + 0.5 * K * t * (1.0 - t) * extreme ** 2
        return lhs, rhs, common.ext_add(lhs, -rhs)
    if regime is Regime.NZERO:
        early = min(1.0 / _zero_coefficient(K, 1.0 - t, float(l)) for l in ls)
        late = min(1.0 / _zero_coefficient(K, t, float(l)) for l in ls)
        rhs = min(early * m0, late * m1)
        return mZ, rhs, mZ - rhs
    early, late = _tau_array(K, N, 1.0 - t, ls), _tau_array(K, N, t, ls)
    lhs = common.ext_pow(mZ, 1.0 / N)
    if regime is Regime.NPOS:
        rhs = float(np.min(early)) * m0 ** (1.0 / N) + float(np.min(late)) * m1 ** (1.0 / N)
        return lhs, rhs, lhs - rhs
    sup_early, sup_late = float(np.max(early)), float(np.max(late))
    if math.isinf(sup_early) or math.isinf(sup_late):
        return lhs, common.POS_INF, common.POS_INF
    rhs = sup_early * m0 ** (1.0 / N) + sup_late * m1 ** (1.0 / N)
    return lhs, rhs, common.ext_add(rhs, -lhs)


def _curved_Z_measure(S, anchors, Y, inside, box_volume, t):
    """max over anchors x of m[Z_t(x, A1)], a lower bound for m[Z_t(A0, A1)]."""
    best = 0.0
    ys = Y[inside]
    for x in anchors:
        _, images, jacs = _contract(S, x, ys, t)
        weights = np.zeros(len(Y))
        weights[inside] = _sigma(S, images) * jacs
        best = max(best, box_volume * common.tree_mean(weights))
    return best


def brunn_minkowski_check(S, A0, A1, t, K, N, samples=None, seed=None, anchors=4, curved_batch=32):
    """
    m[Z_t(A0, A1)] against the regime's combination of m[A0] and m[A1], with l bounds
    estimated on the sampled pairs. Straight-geodesic models sample the bounding box of Z_t;
    curved models bound m[Z_t] from below by the largest Z_t(x, A1) over a few anchors x.
    """
    if not 0.0 < t < 1.0:
        raise ParameterError("t outside (0, 1)", t=float(t))
    check_dimension_parameter(N, S.dim)
    regime = regime_of(N)
    samples = int(samples or common.DEFAULTS['samples_volume'])
    seed = common.DEFAULTS['seed'] if seed is None else int(seed)
    streams = common.batch_streams(seed, common.DEFAULTS['mc_batches'])
    per_batch = _per_batch(samples) if S.straight_geodesics else min(_per_batch(samples), int(curved_batch))

    box0, box1 = _region_box(A0), _region_box(A1)
    z_lo, z_hi = (1.0 - t) * box0.lo + t * box1.lo, (1.0 - t) * box0.hi + t * box1.hi
    z_box = BoxRegion(z_lo, z_hi)

    m0s, m1s, mZs, ls, undecided = [], [], [], [], 0
    for rng in streams:
        X, in0 = _region_samples(A0, rng, per_batch)
        Y, in1 = _region_samples(A1, rng, per_batch)
        m0s.append(box0.volume * common.tree_mean(np.where(in0, _sigma(S, X), 0.0)))
        m1s.append(box1.volume * common.tree_mean(np.where(in1, _sigma(S, Y), 0.0)))
        ls.append(_pair_separations(S, X[in0], Y[in1]))
        if S.straight_geodesics:
            Z = z_box.sample(rng, per_batch)
            member = z_t_membership_many(S, Z, A0, A1, t, rng=rng)
            decided = np.array([m is not None for m in member])
            undecided += int(np.sum(~decided))
            hit = np.array([bool(m) for m in member])
            mZs.append(z_box.volume * common.tree_mean(np.where(hit, _sigma(S, Z), 0.0)))
        else:
            mZs.append(_curved_Z_measure(S, X[in0][:anchors], Y, in1, box1.volume, t))

    if isinstance(A0, BoxRegion) and isinstance(A1, BoxRegion):
        ls.append(separation_matrix(S, box0.corners(), box1.corners()).ravel())
    ls = np.concatenate(ls)
    if ls.size == 0:
        raise SamplingBudgetError("no sampled pairs in A0 x A1", samples=samples)
    if np.any(ls <= common.DEFAULTS['chron_eps']):
        raise CausalityError("A0 x A1 is not chronological", model=S.name, min_separation=float(np.min(ls)))
    if common.tree_mean(m0s) <= 0 or common.tree_mean(m1s) <= 0:
        raise SamplingBudgetError("no samples landed in A0 or A1", samples=samples)

    l_inf, l_sup = float(np.min(ls)), float(np.max(ls))
    batch_slack = [_bm_sides(regime, K, N, t, mZ, m0, m1, l_inf, l_sup, ls)[2]
                   for mZ, m0, m1 in zip(mZs, m0s, m1s)]
    mZ, m0, m1 = common.tree_mean(mZs), common.tree_mean(m0s), common.tree_mean(m1s)
    lhs, rhs, slack = _bm_sides(regime, K, N, t, mZ, m0, m1, l_inf, l_sup, ls)
    stderr = common.batch_stderr(np.asarray(batch_slack)[np.isfinite(batch_slack)])
    report = BrunnMinkowskiReport(regime, lhs, rhs, slack, stderr, mZ, m0, m1, l_inf, l_sup,
                                  {'K': K, 'N': N, 't': t}, per_batch * len(streams), seed, S.name,
                                  undecided, lower_bound=bool(undecided) or not S.straight_geodesics)
    debug_log('entropy_tcd', f"Brunn-Minkowski {regime.value} slack {slack:.3e} +- {stderr:.1e}")
    return report
