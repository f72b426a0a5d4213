"""Shared EM machinery: annealing schedule, convergence control, trace.

Every latent-class model in the package exposes the same informal interface:
``params`` (None until initialized), ``initialize(rng)``, ``e_step(beta)``,
``m_step(stats)``, and ``log_likelihood()``. :func:`run_em` drives any of
them. Tempering raises the complete-data joint to the power ``beta`` before
renormalizing; ``beta == 1`` is guaranteed to be a bitwise no-op.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .errors import NumericError, ValidationError

log = logging.getLogger(__name__)


@dataclass
class AnnealSchedule:
    """Deterministic-annealing ramp: beta grows geometrically up to beta_max."""

    beta_start: float = 0.5
    beta_growth: float = 1.2
    beta_max: float = 1.0
    inner_iters_per_beta: int = 10

    def validate(self):
        if not 0.0 < self.beta_start <= self.beta_max <= 1.0:
            raise ValidationError("need 0 < beta_start <= beta_max <= 1")
        if self.beta_growth <= 1.0:
            raise ValidationError("beta_growth must be > 1")
        if self.inner_iters_per_beta < 1:
            raise ValidationError("inner_iters_per_beta must be >= 1")


@dataclass
class ConvergenceCriterion:
    max_iters: int = 500
    rel_loglik_tol: float = 1e-6

    def validate(self):
        if self.max_iters < 1:
            raise ValidationError("max_iters must be >= 1")
        if self.rel_loglik_tol <= 0:
            raise ValidationError("rel_loglik_tol must be > 0")


@dataclass
class TrainTrace:
    """Per-iteration log-likelihoods and the beta in force at each iteration."""

    logliks: list = field(default_factory=list)
    betas: list = field(default_factory=list)
    n_iters: int = 0
    converged: bool = False
    initial_loglik: float = 0.0


def _beta_sequence(schedule):
    if schedule is not None:
        beta = schedule.beta_start
        while beta < schedule.beta_max:
            for _ in range(schedule.inner_iters_per_beta):
                yield beta
            beta = min(beta * schedule.beta_growth, schedule.beta_max)
        final = schedule.beta_max
    else:
        final = 1.0
    while True:
        yield final


def run_em(model, schedule=None, criterion=None, seed=0):
    """Run (annealed) EM on ``model`` until convergence or the iteration cap.

    The model is initialized from a seeded generator unless ``model.params``
    is already set. Convergence is declared only at beta = 1, when the
    relative log-likelihood change drops below the tolerance. At beta = 1 the
    recorded log-likelihood is non-decreasing.
    """
    criterion = criterion or ConvergenceCriterion()
    criterion.validate()
    if schedule is not None:
        schedule.validate()
    if model.params is None:
        model.initialize(np.random.default_rng(seed))

    initial = float(model.log_likelihood())
    if not np.isfinite(initial):
        raise NumericError("log-likelihood not finite at initialization")

    trace = TrainTrace(initial_loglik=initial)
    prev = initial
    for beta in _beta_sequence(schedule):
        if trace.n_iters >= criterion.max_iters:
            break
        stats = model.e_step(beta)
        model.m_step(stats)
        ll = float(model.log_likelihood())
        trace.n_iters += 1
        if not np.isfinite(ll):
            raise NumericError(f"log-likelihood became non-finite at iteration {trace.n_iters}")
        trace.logliks.append(ll)
        trace.betas.append(beta)
        log.debug("em iter %d beta=%.4f loglik=%.6f", trace.n_iters, beta, ll)
        if beta == 1.0 and abs(ll - prev) / max(1.0, abs(prev)) < criterion.rel_loglik_tol:
            trace.converged = True
            break
        prev = ll
    return trace


def random_distribution(rng, shape, axis=-1):
    """Distributions drawn from a symmetric Dirichlet with concentration 1."""
    draw = rng.gamma(1.0, size=shape)
    draw /= draw.sum(axis=axis, keepdims=True)
    return draw


def normalize_distribution(arr, axis=-1, label="m-step"):
    """Normalize along ``axis``; zero-mass slices fall back to uniform (warned)."""
    total = arr.sum(axis=axis, keepdims=True)
    zero = total == 0.0
    if zero.any():
        log.warning("%s: %d zero-mass distribution(s) reset to uniform", label, int(zero.sum()))
        uniform = 1.0 / arr.shape[axis]
        with np.errstate(invalid="ignore", divide="ignore"):
            arr = np.where(zero, uniform, arr / np.where(zero, 1.0, total))
    else:
        arr = arr / total
    return arr


def temper(joint, beta):
    """Raise an unnormalized posterior to ``beta``; exact identity at beta = 1."""
    if beta == 1.0:
        return joint
    return joint ** beta
