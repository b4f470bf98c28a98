"""
Model Spacetime Catalogue
Built-in Finsler spacetimes with closed-form Lagrangians and known curvature.
- minkowski: flat Lorentzian, Lebesgue measure.
- weighted_minkowski: flat Lorentzian with the Gaussian-in-time measure e^{-eps (x0)^2 / 2} dx.
- bogoslovsky: flat, direction-dependent (non-Lorentzian) cone structure.
- de_sitter_2d: the chart -dt^2 + cosh^2(t) dtheta^2, constant curvature.
Unknown names are auto-corrected by fuzzy matching, like a citation alias table.
"""

import difflib
from dataclasses import dataclass, field

import jax.numpy as jnp
import numpy as np

import common
import finsler_core
from common import ConfigError, ParameterError, debug_log
from finsler_core import FinslerStructure, Vector

# ==================== DATA: MODEL TABLE ====================

MODEL_PARAMS = {
    'minkowski': (),
    'weighted_minkowski': ('eps',),
    'bogoslovsky': ('b',),
    'de_sitter_2d': (),
}

MODEL_ALIASES = {
    'minkowski': 'minkowski',
    'flat': 'minkowski',
    'weighted minkowski': 'weighted_minkowski',
    'weighted_minkowski': 'weighted_minkowski',
    'bogoslovsky': 'bogoslovsky',
    'de sitter': 'de_sitter_2d',
    'de_sitter': 'de_sitter_2d',
    'de_sitter_2d': 'de_sitter_2d',
    'desitter': 'de_sitter_2d',
}


def model_names():
    return sorted(MODEL_PARAMS)


def resolve_model_name(name):
    key = " ".join(str(name).lower().replace('-', ' ').split())
    if key in MODEL_ALIASES:
        return MODEL_ALIASES[key]
    if key.replace(' ', '_') in MODEL_ALIASES:
        return MODEL_ALIASES[key.replace(' ', '_')]
    matches = difflib.get_close_matches(key, MODEL_ALIASES.keys(), n=1, cutoff=0.8)
    if matches:
        debug_log('spacetime_models', f"Auto-Corrected: '{name}' -> '{MODEL_ALIASES[matches[0]]}'")
        return MODEL_ALIASES[matches[0]]
    raise ParameterError("unknown model", model=str(name), known=model_names())


@dataclass(frozen=True)
class ModelSpec:
    name: str
    dim: int = 2
    params: dict = field(default_factory=dict)

    @classmethod
    def from_mapping(cls, mapping):
        """Builds a spec from a config block {name, dim, params}; unknown keys are rejected."""
        if not isinstance(mapping, dict):
            raise ConfigError("model must be a mapping", got=type(mapping).__name__)
        unknown = sorted(set(mapping) - {'name', 'dim', 'params'})
        if unknown:
            raise ConfigError("unknown keys in model block", keys=unknown)
        if 'name' not in mapping:
            raise ConfigError("model block needs a name")
        params = mapping.get('params') or {}
        if not isinstance(params, dict):
            raise ConfigError("model params must be a mapping")
        try:
            name = resolve_model_name(mapping['name'])
            dim = int(mapping.get('dim', 2))
            params = {str(k): float(v) for k, v in params.items()}
        except (ParameterError, TypeError, ValueError) as exc:
            raise ConfigError(f"invalid model block: {exc}", model=str(mapping.get('name')))
        return cls(name, dim, params)

    def to_mapping(self):
        return {'name': self.name, 'dim': self.dim, 'params': dict(sorted(self.params.items()))}

# ==================== LOGIC: LAGRANGIANS ====================

def _e0(dim):
    return lambda x: jnp.zeros(dim).at[0].set(1.0)


def _minkowski_lagrangian(x, v):
    return 0.5 * (-v[0] ** 2 + jnp.sum(v[1:] ** 2))


def _bogoslovsky_lagrangian(b):
    """
    -1/2 ((v0)^2 - |v|^2)^(1-b) (v0 - v1)^(2b) on the future cone,
    mirrored onto the past cone, quadratic surrogate off the cones.
    """

    def lagrangian(x, v):
        quad = v[0] ** 2 - jnp.sum(v[1:] ** 2)
        lin = jnp.where(v[0] > 0, v[0] - v[1], v[1] - v[0])
        inside = (quad > 0) & (lin > 0)
        quad_safe = jnp.where(inside, quad, 1.0)
        lin_safe = jnp.where(inside, lin, 1.0)
        cone = -0.5 * quad_safe ** (1.0 - b) * lin_safe ** (2.0 * b)
        return jnp.where(inside, cone, -0.5 * quad)

    return lagrangian


def _bogoslovsky_weight_2d(b):
    # psi = 1/2 log(-det g_v) for m = dx; det g_v = -(1-b^2) ((v0-v1)/(v0+v1))^(2b)
    def weight(x, v):
        return 0.5 * jnp.log(1.0 - b ** 2) + b * (jnp.log(v[0] - v[1]) - jnp.log(v[0] + v[1]))

    return weight


def _de_sitter_lagrangian(x, v):
    return 0.5 * (-v[0] ** 2 + jnp.cosh(x[0]) ** 2 * v[1] ** 2)


def flat_separation(S):
    """l(x, y) = F(y - x) for future causal y - x, -inf otherwise."""

    def separation(x, y):
        d = Vector(x, finsler_core.as_point(y) - finsler_core.as_point(x))
        cls = finsler_core.classify_vector(S, d)
        if cls.kind == finsler_core.CausalKind.ZERO:
            return 0.0
        if cls.causal and cls.future_directed:
            return finsler_core.f_norm(S, d)
        return common.NEG_INF

    return separation

# ==================== LOGIC: BUILD ====================

def _check_params(spec):
    expected = MODEL_PARAMS[spec.name]
    unknown = sorted(set(spec.params) - set(expected))
    if unknown:
        raise ParameterError("unknown model parameters", model=spec.name, params=unknown)
    missing = [p for p in expected if p not in spec.params]
    if missing:
        raise ParameterError("missing model parameters", model=spec.name, params=missing)
    if spec.dim < 2:
        raise ParameterError("dimension must be at least 2", model=spec.name, dim=spec.dim)


def build_model(spec):
    name = resolve_model_name(spec.name)
    spec = ModelSpec(name, int(spec.dim), dict(spec.params))
    _check_params(spec)
    n = spec.dim

    if name == 'minkowski':
        S = FinslerStructure(n, _minkowski_lagrangian, _e0(n),
                             weight_log_density=lambda x, v: jnp.zeros((), dtype=jnp.float64),
                             straight_geodesics=True, minkowski_cone=True, name=name, params=spec.params)

    elif name == 'weighted_minkowski':
        eps = spec.params['eps']
        S = FinslerStructure(n, _minkowski_lagrangian, _e0(n),
                             weight_log_density=lambda x, v: 0.5 * eps * x[0] ** 2,
                             log_reference_density=lambda x: -0.5 * eps * x[0] ** 2,
                             straight_geodesics=True, minkowski_cone=True, name=name, params=spec.params)

    elif name == 'bogoslovsky':
        b = spec.params['b']
        if not 0.0 < b < 0.5:
            raise ParameterError("Bogoslovsky exponent must lie in (0, 1/2)", b=b)
        S = FinslerStructure(n, _bogoslovsky_lagrangian(b), _e0(n),
                             weight_log_density=_bogoslovsky_weight_2d(b) if n == 2 else None,
                             straight_geodesics=True, minkowski_cone=True, name=name, params=spec.params)

    else:
        if n != 2:
            raise ParameterError("de_sitter_2d is two-dimensional", dim=n)
        S = FinslerStructure(2, _de_sitter_lagrangian, _e0(2),
                             weight_log_density=lambda x, v: jnp.zeros((), dtype=jnp.float64),
                             log_reference_density=lambda x: jnp.log(jnp.cosh(x[0])),
                             time_bound=2.0, name=name, params=spec.params)

    if S.straight_geodesics:
        S.analytic_separation = flat_separation(S)
    debug_log('spacetime_models', f"Built {S!r}")
    return S

# ==================== LOGIC: GROUND TRUTH ====================

def model_ground_truth(spec, time_radius=1.0):
    """
    Known curvature constants. `ric_N_lower_bound` maps 'n', '2n' and 'inf' to the
    best K with Ric_N(v) >= K F(v)^2 for timelike v based in |x0| <= time_radius.
    """
    name = resolve_model_name(spec.name)
    n = int(spec.dim)
    if name == 'minkowski':
        bounds = {'n': 0.0, '2n': 0.0, 'inf': 0.0}
        return {'curvature_constant': 0.0, 'is_flat': True, 'has_analytic_l': True,
                'is_lorentzian': True, 'ric_N_lower_bound': bounds}
    if name == 'weighted_minkowski':
        eps = float(spec.params['eps'])
        # Ric_inf(w) = eps (w0)^2 and (w0)^2 >= F(w)^2; psi' = eps x0 w0
        inf_bound = eps if eps >= 0 else common.NEG_INF
        two_n = eps - eps ** 2 * time_radius ** 2 / n
        two_n = two_n if eps >= 0 and two_n >= 0 else common.NEG_INF
        return {'curvature_constant': None, 'is_flat': True, 'has_analytic_l': True,
                'is_lorentzian': True,
                'ric_N_lower_bound': {'n': common.NEG_INF if eps else 0.0, '2n': two_n, 'inf': inf_bound}}
    if name == 'bogoslovsky':
        bounds = {'n': 0.0, '2n': 0.0, 'inf': 0.0}
        return {'curvature_constant': 0.0, 'is_flat': True, 'has_analytic_l': True,
                'is_lorentzian': False, 'ric_N_lower_bound': bounds}
    # timelike geodesics of the de Sitter chart spread like cosh: Ric(v) = -F(v)^2
    return {'curvature_constant': -1.0, 'is_flat': False, 'has_analytic_l': False,
            'is_lorentzian': True, 'ric_N_lower_bound': {'n': -1.0, '2n': -1.0, 'inf': -1.0}}


def unit_time_vector(S, x):
    X = finsler_core.time_orientation_at(S, x)
    return X.scaled(1.0 / finsler_core.f_norm(S, X))


def chart_box(S):
    """Default sampling box for invariant checks."""
    half = 1.0 if S.time_bound is None else 0.5 * S.time_bound
    return np.full(S.dim, -half), np.full(S.dim, half)


def describe(spec):
    params = ", ".join(f"{k}={v:g}" for k, v in sorted(spec.params.items()))
    return f"{spec.name}(n={spec.dim}{', ' + params if params else ''})"

