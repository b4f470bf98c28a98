"""
The Check Router (checks.py)
Maps a config `check` name onto the engine that runs it.
- Parses the check's inputs (points, measures, regions, potentials).
- Calls exactly one engine operation per check.
- Returns a flat result record: lhs, rhs, oriented slack, stderr, verdict.
Deterministic checks report slack = tolerance - residual with stderr 0.
"""

import math

import numpy as np

import common
import curvature_comparison
import distance
import entropy_tcd
import finsler_core
import geometry_dynamics
import measure_io
import measures_transport
import spacetime_models
from common import ConfigError, ParameterError, debug_log
from finsler_core import Vector

# ==================== DATA: CHECK TABLE ====================

CHECK_INPUTS = {
    'invariants': {'point', 'vectors', 'tolerance'},
    'geodesic': {'point', 'vector', 'T', 'steps', 'tolerance'},
    'riccati': {'point', 'vector', 'T', 'steps', 'tolerance'},
    'separation': {'point', 'target', 'steps', 'tolerance'},
    'coupling': {'source', 'target_measure', 'tolerance'},
    'q_geodesic': {'source', 'target_measure', 'tolerance'},
    'mcp': {'point', 'region', 'reverse'},
    'tcd': {'density', 'target_density', 'potential'},
    'brunn_minkowski': {'region0', 'region1'},
    'lorentzianity': {'point', 'expect', 'tolerance'},
}

TOLERANCES = {
    'invariants': 1e-8,
    'geodesic': 1e-8,
    'riccati': 1e-4,
    'separation': 1e-6,
    'coupling': 1e-8,
    'q_geodesic': 1e-9,
    'lorentzianity': 1e-8,
}


def check_names():
    return sorted(CHECK_INPUTS)

# ==================== HELPERS: INPUT PARSING ====================

def _require(inputs, key, check):
    if key not in inputs:
        raise ConfigError("missing input for check", check=check, key=key)
    return inputs[key]


def _number(inputs, key, default, cast=float):
    value = inputs.get(key, default)
    if value is None:
        return None
    try:
        return cast(value)
    except (TypeError, ValueError):
        raise ConfigError("input must be a number", key=key, got=str(value))


def _coords(value, key, dim):
    try:
        point = finsler_core.as_point(value)
    except (TypeError, ValueError):
        raise ConfigError("coordinates must be numbers", key=key, got=str(value))
    if point.size != dim or not np.all(np.isfinite(point)):
        raise ConfigError("coordinates have the wrong dimension", key=key, dim=dim, got=int(point.size))
    return point


def _point(inputs, key, S, default=None):
    value = inputs.get(key, default)
    if value is None:
        return np.zeros(S.dim)
    return _coords(value, key, S.dim)


def _atoms(block, key, dim):
    if 'atoms' not in block:
        raise ConfigError("measure needs 'atoms' or 'csv'", key=key)
    try:
        atoms = np.asarray(block['atoms'], dtype=float)
    except (TypeError, ValueError):
        raise ConfigError("atoms must be a list of points", key=key)
    if atoms.ndim != 2 or atoms.shape[0] == 0:
        raise ConfigError("atoms must be a list of points", key=key, shape=list(atoms.shape))
    if atoms.shape[1] != dim:
        raise ConfigError("atoms have the wrong dimension", key=key, dim=dim, got=int(atoms.shape[1]))
    if 'weights' not in block:
        return measures_transport.DiscreteMeasure.uniform(atoms)
    try:
        weights = np.asarray(block['weights'], dtype=float)
    except (TypeError, ValueError):
        raise ConfigError("weights must be numbers", key=key)
    if weights.shape != (atoms.shape[0],):
        raise ConfigError("one weight per atom", key=key, atoms=int(atoms.shape[0]), weights=int(weights.size))
    if np.any(weights < 0) or not weights.sum() > 0:
        raise ConfigError("weights must be nonnegative with positive total", key=key)
    return measures_transport.DiscreteMeasure.normalized(atoms, weights)


def _measure(S, block, key):
    if not isinstance(block, dict):
        raise ConfigError("measure must be a mapping", key=key)
    try:
        if 'csv' in block:
            measure = measure_io.read_measure_csv(block['csv'])
        else:
            measure = _atoms(block, key, S.dim)
    except ParameterError as exc:
        raise ConfigError(exc.reason['message'], key=key)
    if measure.atoms.shape[1] != S.dim:
        raise ConfigError("atoms have the wrong dimension", key=key, dim=S.dim, got=int(measure.atoms.shape[1]))
    return measure


def _region(S, block, key):
    if not isinstance(block, dict):
        raise ConfigError("region must be a mapping", key=key)
    shape = 'box' if 'box' in block else 'ball' if 'ball' in block else None
    fields = {'box': ('lo', 'hi'), 'ball': ('center', 'radius')}.get(shape)
    if shape is None:
        raise ConfigError("region needs a 'box' or 'ball' block", key=key)
    spec = block[shape]
    if not isinstance(spec, dict) or any(f not in spec for f in fields):
        raise ConfigError("region block is incomplete", key=key, shape=shape, needs=list(fields))
    first = _coords(spec[fields[0]], f"{key}.{shape}.{fields[0]}", S.dim)
    if shape == 'box':
        hi = _coords(spec['hi'], f"{key}.box.hi", S.dim)
        try:
            return distance.BoxRegion(first, hi)
        except ParameterError as exc:
            raise ConfigError(exc.reason['message'], key=key)
    try:
        radius = float(spec['radius'])
    except (TypeError, ValueError):
        raise ConfigError("ball radius must be a number", key=key)
    if not radius > 0:
        raise ConfigError("ball radius must be positive", key=key, radius=radius)
    return distance.ball_region(first, radius)


def _density(S, block, key):
    region = _region(S, block, key)
    if not isinstance(region, distance.BoxRegion):
        raise ConfigError("densities are uniform boxes", key=key)
    return entropy_tcd.uniform_box_measure(S, region)


def _potential(S, block):
    if not isinstance(block, dict):
        raise ConfigError("potential must be a mapping", key='potential')
    if block.get('kind') == 'linear' and 'a' in block:
        _coords(block['a'], 'potential.a', S.dim)
    try:
        return measures_transport.potential_from_mapping(block)
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"malformed potential: {exc}", key='potential')


def _record(check, cfg, lhs, rhs, slack, stderr, samples=None, regime=None, details=None, **extra):
    passed = bool(common.holds(slack, stderr))
    record = {
        'check': check,
        'regime': regime,
        'params': cfg.params.to_mapping(),
        'lhs': lhs,
        'rhs': rhs,
        'slack': slack,
        'stderr': stderr,
        'samples': samples,
        'seed': cfg.seed,
        'model': cfg.model.to_mapping(),
        'verdict': 'PASS' if passed else 'FAIL',
        'details': details or {},
    }
    record.update(extra)
    return record


def _deterministic(check, cfg, residual, tolerance, details=None):
    return _record(check, cfg, residual, tolerance, tolerance - residual, 0.0, details=details)

# ==================== CHECKS: GEOMETRY ====================

def check_invariants(S, cfg, inputs):
    """Homogeneity, g_v(v, v) = 2 L(v), Legendre round trip, L*(l(v)) = L(v), reverse Cauchy-Schwarz, signature (1, n-1)."""
    x = _point(inputs, 'point', S)
    tol = _number(inputs, 'tolerance', TOLERANCES['invariants'])
    rng = np.random.default_rng(cfg.seed)
    vs = finsler_core.sample_future_timelike(S, x, rng, _number(inputs, 'vectors', 16, int))

    worst = {'homogeneity': 0.0, 'metric_contraction': 0.0, 'legendre_round_trip': 0.0,
             'dual_lagrangian': 0.0, 'reverse_cauchy_schwarz': 0.0, 'weight_consistency': 0.0,
             'signature': 0.0}
    for v, w in zip(vs, vs[1:] + vs[:1]):
        L = finsler_core.lagrangian_eval(S, v)
        scale = max(1.0, abs(L))
        worst['homogeneity'] = max(worst['homogeneity'],
                                   abs(finsler_core.lagrangian_eval(S, v.scaled(2.7)) - 2.7 ** 2 * L) / (2.7 ** 2 * scale))
        g = finsler_core.metric_tensor(S, v)
        worst['metric_contraction'] = max(worst['metric_contraction'], abs(v.comps @ g @ v.comps - 2.0 * L) / scale)
        if finsler_core.metric_signature(S, v) != (1, S.dim - 1):
            worst['signature'] = 1.0
        zeta = finsler_core.legendre_map(S, v)
        back = finsler_core.legendre_inverse(S, zeta)
        worst['legendre_round_trip'] = max(worst['legendre_round_trip'],
                                           float(np.linalg.norm(back.comps - v.comps) / np.linalg.norm(v.comps)))
        worst['dual_lagrangian'] = max(worst['dual_lagrangian'],
                                       abs(finsler_core.lagrangian_eval(S, back) - L) / scale)
        gap = zeta.pair(w) + finsler_core.f_norm(S, v) * finsler_core.f_norm(S, w)
        worst['reverse_cauchy_schwarz'] = max(worst['reverse_cauchy_schwarz'], max(0.0, gap) / scale)
    if S.closed_form_weight:
        worst['weight_consistency'] = curvature_comparison.weight_consistency(S, x, seed=cfg.seed)
    residual = max(worst.values())
    debug_log('checks', f"invariants worst residual {residual:.3e}")
    return _deterministic('invariants', cfg, residual, tol, worst)


def _segment(S, inputs):
    x = _point(inputs, 'point', S)
    comps = _point(inputs, 'vector', S, default=spacetime_models.unit_time_vector(S, x).comps)
    T = _number(inputs, 'T', 1.0)
    steps = _number(inputs, 'steps', common.DEFAULTS['geodesic_steps'], int)
    return geometry_dynamics.exp_geodesic(S, Vector(x, comps), T, steps)


def check_geodesic(S, cfg, inputs):
    """Constant speed along the integrated geodesic; endpoint against the straight line when flat."""
    tol = _number(inputs, 'tolerance', TOLERANCES['geodesic'])
    gamma = _segment(S, inputs)
    speed = finsler_core.f_norm(S, gamma.start)
    details = {'speed': speed, 'speed_drift': geometry_dynamics.speed_drift(S, gamma) / max(speed, 1e-300),
               'endpoint': gamma.endpoint.tolist()}
    residual = details['speed_drift']
    if S.straight_geodesics:
        line = gamma.points[0] + gamma.duration * gamma.tangents[0]
        details['line_error'] = float(np.max(np.abs(gamma.endpoint - line)))
        residual = max(residual, details['line_error'])
    return _deterministic('geodesic', cfg, residual, tol, details)


def check_riccati(S, cfg, inputs):
    """tr B' + tr B^2 + Ric = 0 along a Jacobi matrix started at J = I, J' = 0."""
    tol = _number(inputs, 'tolerance', TOLERANCES['riccati'])
    gamma = _segment(S, inputs)
    n = S.dim
    frame = geometry_dynamics.jacobi_propagate(S, gamma, np.eye(n), np.zeros((n, n)))
    residual = geometry_dynamics.riccati_residual(S, frame)
    details = {'max_residual': float(np.max(np.abs(residual.trace))), 'ode_gap': residual.ode_gap,
               'frame_drift': frame.max_drift, 'lagrange_bracket': geometry_dynamics.lagrange_bracket(frame)}
    worst = max(residual.worst, details['lagrange_bracket'])
    return _deterministic('riccati', cfg, worst, tol, details)


def check_separation(S, cfg, inputs):
    """
    l(x, y) by the model's analytic formula against shooting; curved models compare
    l(x, y) with the reversed structure's l(y, x).
    """
    tol = _number(inputs, 'tolerance', TOLERANCES['separation'])
    x = _point(inputs, 'point', S)
    y = _point(inputs, 'target', S)
    steps = _number(inputs, 'steps', None, int)
    shot = distance.time_separation(S, x, y, method='shooting', steps=steps)
    if S.analytic_separation is not None:
        other = distance.time_separation(S, x, y, method='analytic').value
        label = 'analytic'
    else:
        other = distance.time_separation(finsler_core.reverse_structure(S), y, x, steps=steps).value
        label = 'reversed'
    if math.isinf(shot.value) or math.isinf(other):
        residual = 0.0 if shot.value == other else common.POS_INF
    else:
        residual = abs(shot.value - other) / max(1.0, abs(other))
    details = {'shooting': shot.value, label: other, 'relation': shot.relation.value,
               'ambiguous': bool(shot.ambiguous)}
    return _deterministic('separation', cfg, residual, tol, details)


def check_lorentzianity(S, cfg, inputs):
    """The defect vanishes on Lorentzian models and is detected on the others."""
    tol = _number(inputs, 'tolerance', TOLERANCES['lorentzianity'])
    truth = spacetime_models.model_ground_truth(cfg.model)
    expect = inputs.get('expect', 'lorentzian' if truth['is_lorentzian'] else 'finsler')
    if expect not in ('lorentzian', 'finsler'):
        raise ConfigError("expect must be 'lorentzian' or 'finsler'", got=str(expect))
    x = _point(inputs, 'point', S)
    defect = distance.lorentzianity_defect(S, x, max(10, int(cfg.samples or 64)), seed=cfg.seed)
    slack = tol - defect if expect == 'lorentzian' else defect - tol
    return _record('lorentzianity', cfg, defect, tol, slack, 0.0, details={'expect': expect})

# ==================== CHECKS: TRANSPORT ====================

def check_coupling(S, cfg, inputs):
    """LP optimum against brute force (small uniform inputs), cyclical monotonicity and duality gap."""
    tol = _number(inputs, 'tolerance', TOLERANCES['coupling'])
    mu = _measure(S, _require(inputs, 'source', 'coupling'), 'source')
    nu = _measure(S, _require(inputs, 'target_measure', 'coupling'), 'target_measure')
    q = cfg.params.q
    coupling = measures_transport.optimal_coupling_lp(S, mu, nu, q)
    details = {'lq_distance': coupling.cost_q, 'chronological': coupling.chronological,
               'marginal_error': coupling.marginal_error()}
    residual = details['marginal_error']
    uniform = np.allclose(mu.weights, 1.0 / mu.size) and np.allclose(nu.weights, 1.0 / nu.size)
    if uniform and mu.size == nu.size <= 8:
        brute = measures_transport.brute_force_coupling(S, mu, nu, q)
        details['brute_force'] = brute.cost_q
        residual = max(residual, abs(brute.value - coupling.value) / max(1.0, abs(coupling.value)))
    pairs = [(mu.atoms[i], nu.atoms[j]) for i, j in coupling.support_pairs(1e-12)]
    if len(pairs) <= 10:
        details['cyclical_monotonicity'] = measures_transport.cyclical_monotonicity_check(S, pairs, q, seed=cfg.seed)
        residual = max(residual, -details['cyclical_monotonicity'])
    duals = measures_transport.dual_pair(S, mu, nu, q, coupling)
    details['duality_gap'] = duals.gap
    residual = max(residual, abs(duals.gap) / max(1.0, abs(coupling.value)))
    if cfg.out:
        measure_io.write_coupling_csv(f"{cfg.out}_coupling.csv", coupling)
    return _deterministic('coupling', cfg, residual, tol, details)


def check_q_geodesic(S, cfg, inputs):
    """l_q(mu0, mu_t) = t l_q(mu0, mu1) and l_q(mu_t, mu1) = (1 - t) l_q(mu0, mu1) along the interpolation."""
    tol = _number(inputs, 'tolerance', TOLERANCES['q_geodesic'])
    mu0 = _measure(S, _require(inputs, 'source', 'q_geodesic'), 'source')
    mu1 = _measure(S, _require(inputs, 'target_measure', 'q_geodesic'), 'target_measure')
    t, q = cfg.params.t, cfg.params.q
    if not 0.0 < t < 1.0:
        raise ConfigError("q_geodesic needs 0 < t < 1", t=t)
    defect = measures_transport.q_geodesic_defect(S, mu0, mu1, t, q)
    details = {'reverse_triangle': measures_transport.measures_reverse_triangle(S, mu0, mu1, t, q)}
    return _deterministic('q_geodesic', cfg, defect, tol, details)

# ==================== CHECKS: COMPARISON ====================

def check_mcp(S, cfg, inputs):
    x = _point(inputs, 'point', S)
    B = _region(S, _require(inputs, 'region', 'mcp'), 'region')
    p = cfg.params
    report = curvature_comparison.mcp_check(S, x, B, p.t, p.K, p.N, cfg.samples or common.DEFAULTS['samples_volume'],
                                            seed=cfg.seed, reverse=bool(inputs.get('reverse', False)))
    return _record('mcp', cfg, report.lhs, report.rhs, report.slack, report.stderr, report.samples,
                   details={'measure_B': report.measure_B, 'tau_min': report.tau_min})


def check_tcd(S, cfg, inputs):
    mu0 = _density(S, _require(inputs, 'density', 'tcd'), 'density')
    if 'potential' in inputs:
        target = _potential(S, inputs['potential'])
    elif 'target_density' in inputs:
        target = _density(S, inputs['target_density'], 'target_density')
    else:
        raise ConfigError("tcd needs a potential or a target_density")
    report = entropy_tcd.tcd_check(S, mu0, target, cfg.params, cfg.samples, seed=cfg.seed)
    record = _record('tcd', cfg, report.lhs, report.rhs, report.slack, report.stderr, report.samples,
                     regime=report.regime.value, details={'mode': report.mode, 'variants': report.extra},
                     lower_bound=report.lower_bound)
    record['verdict'] = 'PASS' if report.holds else 'FAIL'
    return record


def check_brunn_minkowski(S, cfg, inputs):
    A0 = _region(S, _require(inputs, 'region0', 'brunn_minkowski'), 'region0')
    A1 = _region(S, _require(inputs, 'region1', 'brunn_minkowski'), 'region1')
    p = cfg.params
    report = entropy_tcd.brunn_minkowski_check(S, A0, A1, p.t, p.K, p.N, cfg.samples, seed=cfg.seed)
    details = {'measure_Z': report.measure_Z, 'measure_A0': report.measure_A0,
               'measure_A1': report.measure_A1, 'l_inf': report.l_inf, 'l_sup': report.l_sup,
               'undecided': report.undecided}
    return _record('brunn_minkowski', cfg, report.lhs, report.rhs, report.slack, report.stderr,
                   report.samples, regime=report.regime.value, details=details,
                   lower_bound=report.lower_bound)

# ==================== ROUTER ====================

CHECKS = {
    'invariants': check_invariants,
    'geodesic': check_geodesic,
    'riccati': check_riccati,
    'separation': check_separation,
    'coupling': check_coupling,
    'q_geodesic': check_q_geodesic,
    'mcp': check_mcp,
    'tcd': check_tcd,
    'brunn_minkowski': check_brunn_minkowski,
    'lorentzianity': check_lorentzianity,
}


def validate_inputs(check, inputs):
    if check not in CHECKS:
        raise ConfigError("unknown check", check=str(check), known=check_names())
    if not isinstance(inputs, dict):
        raise ConfigError("inputs must be a mapping", check=check)
    unknown = sorted(set(inputs) - CHECK_INPUTS[check])
    if unknown:
        raise ConfigError("unknown inputs for check", check=check, keys=unknown)


def run_check(cfg):
    """Builds the model and dispatches to the named check."""
    validate_inputs(cfg.check, cfg.inputs)
    S = spacetime_models.build_model(cfg.model)
    cfg.params.validate(S.dim)
    debug_log('checks', f"Running {cfg.check} on {spacetime_models.describe(cfg.model)}")
    return CHECKS[cfg.check](S, cfg, cfg.inputs)
