"""
Contraction algebra for the local Picard map: gamma, K, admissible step size and the Lipschitz growth bound
"""

from dataclasses import dataclass
import logging
import math

import numpy as np
from scipy.optimize import bisect

from dfield.constants import NoAdmissibleStep


# Globals

log = logging.getLogger(__name__)

STEP_RTOL = 1e-6
STEP_SEARCH_LIMIT = 1e12  # doubling stops here; gamma is then treated as never reaching the target


# Classes

@dataclass(frozen=True)
class LipschitzTriple(object):
    """
    The constants the contraction constant depends on.

    `L_xi_x` is the Lipschitz constant of the terminal condition of the current interval:
    xi itself for the first step, the previous slice afterwards.
    """
    L: float
    L_sigma_z: float
    L_xi_x: float


@dataclass(frozen=True)
class ContractionData(object):
    """
    Step size and amplification constant for a given triple and contraction margin.

    `h_max` is `math.inf` when gamma does not grow with h (L = 0); callers cap it by the remaining time.
    """
    L: float
    L_sigma_z: float
    L_xi_x: float
    K: float
    h_max: float
    margin: float

    @classmethod
    def from_triple(cls, triple, margin):
        """
        Compute contraction data for `triple`.

        Raise `NoAdmissibleStep` if no step size reaches `1 - margin`.
        """
        h_max = max_step(triple, margin)
        return cls(
            L=triple.L,
            L_sigma_z=triple.L_sigma_z,
            L_xi_x=triple.L_xi_x,
            K=amplification_constant(h_max, triple),
            h_max=h_max,
            margin=margin,
        )

    @property
    def gamma_limit(self):
        """
        Return gamma at h = 0.
        """
        return gamma(0.0, LipschitzTriple(self.L, self.L_sigma_z, self.L_xi_x))


# Functions

def gamma_limit(triple):
    """
    Return (L_sigma_z / (1 + L_sigma_z)) v (L_sigma_z * L_xi_x), the limit of gamma as h -> 0.
    """
    return max(triple.L_sigma_z / (1.0 + triple.L_sigma_z), triple.L_sigma_z * triple.L_xi_x)


def gamma(h, triple):
    """
    Return the contraction constant of the Picard map on an interval of length `h`.
    """
    L, L_sigma_z, L_xi_x = triple.L, triple.L_sigma_z, triple.L_xi_x
    root = math.sqrt(h)
    first = 2.0 * L * (h + root) + L_sigma_z / (1.0 + L_sigma_z) + L * root
    terminal = L_xi_x + L * h
    second = (
        (1.0 + L_sigma_z) * terminal * L * (h + root)
        + (terminal * L * (h + root) + L * h)
        + (terminal * (L_sigma_z + L * root) + L * root)
    )
    return max(first, second)


def amplification_constant(h, triple):
    """
    Return K = (1 v (L_xi_x + L h)) / (1 - gamma(0)), or inf if gamma(0) >= 1.
    """
    denominator = 1.0 - gamma_limit(triple)
    if denominator <= 0:
        return math.inf
    growth = triple.L * h if triple.L > 0 else 0.0
    return max(1.0, triple.L_xi_x + growth) / denominator


def max_step(triple, margin):
    """
    Return the largest h with gamma(h) <= 1 - margin, to relative tolerance 1e-6.

    Returns `math.inf` when gamma is constant in h (L = 0).
    Raise `NoAdmissibleStep` if even gamma(0) is not below 1 - margin.
    """
    target = 1.0 - margin
    limit = gamma_limit(triple)
    if not limit < target:
        raise NoAdmissibleStep(limit, margin)
    if triple.L == 0:
        return math.inf

    upper = 1.0
    while gamma(upper, triple) <= target:
        upper *= 2.0
        if upper > STEP_SEARCH_LIMIT:
            return math.inf
    step = bisect(lambda h: gamma(h, triple) - target, 0.0, upper, xtol=1e-300, rtol=STEP_RTOL)
    while gamma(step, triple) > target:
        step *= 1.0 - STEP_RTOL
    log.debug('max_step(%s, margin=%g) = %.12g', triple, margin, step)
    return step


def lipschitz_growth_bound(L_terminal, h, C):
    """
    Return L_terminal + C * h^(1/4), the envelope for slice Lipschitz constants at distance h from T.
    """
    return L_terminal + C * h ** 0.25


def fit_growth_constant(times, lipschitz_estimates, T, L_terminal, n_fit=5):
    """
    Fit the constant C of the growth envelope on the `n_fit` slices farthest from T.

    Slices at T are ignored. Returns the smallest C >= 0 for which the envelope holds on the fitted slices.
    """
    times = np.asarray(times, dtype=float)
    lipschitz_estimates = np.asarray(lipschitz_estimates, dtype=float)
    interior = times < T
    if not np.any(interior):
        return 0.0
    order = np.argsort(times[interior])[:n_fit]
    distances = (T - times[interior][order]) ** 0.25
    excess = lipschitz_estimates[interior][order] - L_terminal
    return float(max(0.0, np.max(excess / distances)))


def growth_envelope_check(times, lipschitz_estimates, T, L_terminal, C, factor=1.5):
    """
    Return True if every slice estimate lies within `factor` times the growth envelope.
    """
    times = np.asarray(times, dtype=float)
    bounds = np.array([lipschitz_growth_bound(L_terminal, T - t, C) for t in times])
    return bool(np.all(np.asarray(lipschitz_estimates, dtype=float) <= factor * bounds + 1e-12))
