"""
Shared plumbing for the toolkit engines.
- Environment settings (thread count, log level, default seed) read once at import.
- Tagged stderr logging (debug_log), one logger per engine.
- The exception hierarchy every engine raises; each carries a structured reason.
- Extended-real arithmetic with the -inf conventions used for time separation.
- Deterministic reductions and per-batch RNG streams for Monte Carlo reports.
"""

import logging
import math
import os
import sys

# LFT_THREADS has to reach XLA before jax is imported anywhere.
_THREADS = os.environ.get('LFT_THREADS')
if _THREADS:
    os.environ.setdefault('XLA_FLAGS', f"--xla_cpu_multi_thread_eigen=false intra_op_parallelism_threads={int(_THREADS)}")
    os.environ.setdefault('OMP_NUM_THREADS', str(int(_THREADS)))

import jax
import numpy as np

jax.config.update("jax_enable_x64", True)

TOOLKIT_VERSION = "1.0.0"

# ==================== SETTINGS ====================

DEFAULTS = {
    'chron_eps': 1e-9,
    'verdict_floor': 1e-9,
    'singular_tol': 1e-12,
    'newton_tol': 1e-12,
    'newton_max_iter': 100,
    'newton_halvings': 30,
    'shooting_seeds': 8,
    'shooting_max_iter': 40,
    'shooting_tol': 1e-10,
    'geodesic_steps': 200,
    'chart_bound': 1e6,
    'frame_tol': 1e-9,
    'frame_fail_tol': 1e-3,
    'mc_batches': 16,
    'samples_entropy': 100000,
    'samples_volume': 200000,
    'refine_evals': 256,
    'merge_resolution': 1e-9,
    'seed': int(os.environ.get('LFT_SEED', 20240601)),
}

# ==================== HELPER: DEBUG LOGGING ====================

_HANDLER = logging.StreamHandler(sys.stderr)
_HANDLER.setFormatter(logging.Formatter('[%(tag)s] %(message)s'))
_ROOT = logging.getLogger('lftoolkit')
_ROOT.addHandler(_HANDLER)
_ROOT.setLevel(os.environ.get('LFT_LOG_LEVEL', 'WARNING').upper())
_ROOT.propagate = False


def set_log_level(level):
    _ROOT.setLevel(str(level).upper())


def debug_log(tag, message, level=logging.DEBUG):
    logging.getLogger(f"lftoolkit.{tag.lower()}").log(level, message, extra={'tag': tag.upper()})

# ==================== ERRORS ====================

class ToolkitError(Exception):
    """Base error. `reason` is a flat dict that ends up verbatim in JSON reports."""

    kind = 'toolkit_error'

    def __init__(self, message, **reason):
        super().__init__(message)
        self.reason = {'kind': self.kind, 'message': message, **reason}


class DomainError(ToolkitError, ValueError):
    kind = 'domain'


class ParameterError(ToolkitError, ValueError):
    kind = 'parameter'


class SingularMetricError(ToolkitError):
    kind = 'singular_metric'


class NoConvergenceError(ToolkitError):
    kind = 'no_convergence'


class CausalityError(ToolkitError):
    kind = 'causality'


class BlowUpError(ToolkitError):
    kind = 'blow_up'


class FrameDegeneracyError(ToolkitError):
    kind = 'frame_degeneracy'


class ConjugatePointError(ToolkitError):
    kind = 'conjugate_point'


class InfeasibleCouplingError(ToolkitError):
    kind = 'no_causal_coupling'


class AllInfiniteError(ToolkitError):
    kind = 'all_infinite'


class SizeError(ToolkitError, ValueError):
    kind = 'size'


class SamplingBudgetError(ToolkitError):
    kind = 'sampling_budget'


class NegativeJacobianError(ToolkitError):
    kind = 'negative_jacobian'


class SeparationError(ToolkitError):
    kind = 'q_separation'


class NoMaximizerError(ToolkitError):
    kind = 'no_maximizer'


class ConfigError(ToolkitError, ValueError):
    kind = 'config'

# ==================== EXTENDED REALS ====================
# (-inf) + inf := -inf ;  (-inf)^q = (-inf)^(1/q) := -inf

NEG_INF = -math.inf
POS_INF = math.inf


def ext_add(*terms):
    if any(t == NEG_INF for t in terms):
        return NEG_INF
    if any(t == POS_INF for t in terms):
        return POS_INF
    return float(sum(terms))


def ext_pow(value, exponent):
    """Power on [0, inf] u {-inf}; -inf stays -inf for any exponent."""
    if value == NEG_INF:
        return NEG_INF
    if value < 0:
        raise DomainError("negative base in extended power", value=float(value), exponent=float(exponent))
    if value == 0.0:
        return 0.0 if exponent > 0 else POS_INF
    return float(value) ** exponent


def ext_pow_array(values, exponent):
    values = np.asarray(values, dtype=float)
    out = np.full(values.shape, NEG_INF)
    ok = values >= 0
    with np.errstate(divide='ignore'):
        out[ok] = np.power(values[ok], exponent)
    return out

# ==================== DETERMINISTIC REDUCTIONS ====================

def tree_sum(values):
    """Pairwise sum in a fixed order, so batch reports reproduce bit for bit."""
    values = np.asarray(values, dtype=float).ravel()
    if values.size == 0:
        return 0.0
    while values.size > 1:
        if values.size % 2:
            values = np.append(values, 0.0)
        values = values[0::2] + values[1::2]
    return float(values[0])


def tree_mean(values):
    values = np.asarray(values, dtype=float).ravel()
    return tree_sum(values) / max(values.size, 1)


def batch_streams(seed, batches):
    """Independent generators, one per Monte Carlo batch, all derived from `seed`."""
    children = np.random.SeedSequence(int(seed)).spawn(int(batches))
    return [np.random.default_rng(child) for child in children]


def batch_stderr(batch_values):
    """Standard error of the mean from batch means."""
    batch_values = np.asarray(batch_values, dtype=float)
    k = batch_values.size
    if k < 2:
        return 0.0
    mean = tree_mean(batch_values)
    var = tree_sum((batch_values - mean) ** 2) / (k - 1)
    return math.sqrt(var / k)


def holds(slack, stderr, floor=None):
    floor = DEFAULTS['verdict_floor'] if floor is None else floor
    return slack >= -max(3.0 * stderr, floor)
