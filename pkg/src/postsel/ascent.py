"""Options and small numerical helpers shared by the two ascent algorithms."""

from dataclasses import dataclass

import numpy as np
from scipy import linalg


@dataclass
class AscentOptions:
    """Tuning of a stochastic-ascent fit.

    Attributes
    ----------
    n_steps : int
        Number of parameter updates.
    gibbs_cycles_per_step : int
        Sampler sweeps between consecutive updates.
    step_scale : float
        Multiplier ``a`` in the step sizes ``a / i**step_exponent``.  Each
        algorithm further divides it by a problem-dependent curvature scale.
    step_exponent : float
        Decay exponent of the step sizes.  Must lie in (1/2, 1] so that the
        steps sum to infinity while their squares are summable.
    quantile_samples : int
        Number of post-convergence draws used for intervals and the score
        residual.
    polish_samples : int
        Draws used for Newton refinement steps after the ascent, each moving
        the estimate by ``V^{-1} r`` with ``r`` the Monte-Carlo score and
        ``V`` the sample covariance of the sufficient statistic.  Zero
        disables the refinement.
    polish_rounds : int
        Number of refinement steps.
    burn_in : int
        Sweeps discarded after the last update before collecting draws.
    thin : int
        Sweeps between collected draws.
    ci_level : float
        Confidence level of the returned intervals.
    average_fraction : float
        The estimate is the mean of this trailing fraction of iterates.
    """

    n_steps: int = 1000
    gibbs_cycles_per_step: int = 1
    step_scale: float = 1.0
    step_exponent: float = 0.51
    quantile_samples: int = 2000
    polish_samples: int = 8000
    polish_rounds: int = 2
    burn_in: int = 200
    thin: int = 2
    ci_level: float = 0.95
    average_fraction: float = 0.2

    def __post_init__(self):
        if self.n_steps < 1:
            raise ValueError("n_steps must be >= 1")
        if self.gibbs_cycles_per_step < 1 or self.thin < 1:
            raise ValueError("cycle counts must be >= 1")
        if self.polish_samples < 0 or self.polish_rounds < 0:
            raise ValueError("polish settings must be >= 0")
        if self.step_scale <= 0:
            raise ValueError("step_scale must be positive")
        if not 0.5 < self.step_exponent <= 1:
            raise ValueError("step_exponent must lie in (0.5, 1]")
        if not 0 < self.ci_level < 1:
            raise ValueError("ci_level must lie in (0, 1)")
        if not 0 < self.average_fraction <= 1:
            raise ValueError("average_fraction must lie in (0, 1]")

    @property
    def alpha(self):
        return 1.0 - self.ci_level


def step_sizes(n_steps, scale=1.0, exponent=0.51):
    """gamma_i = scale / i**exponent for i = 1..n_steps."""
    i = np.arange(1, n_steps + 1, dtype=float)
    return scale / i ** exponent


def tail_average(iterates, fraction):
    iterates = np.asarray(iterates)
    k = max(1, int(np.ceil(fraction * len(iterates))))
    return iterates[-k:].mean(axis=0)


def batch_means_stderr(x, n_batches=None):
    """Monte-Carlo standard error of the column means of a chain.

    Non-overlapping batch means with ``floor(sqrt(N))`` batches by default,
    which accounts for autocorrelation in MCMC output.
    """
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    n = x.shape[0]
    if n_batches is None:
        n_batches = max(2, int(np.sqrt(n)))
    size = n // n_batches
    if size < 1:
        raise ValueError("not enough samples for batch means")
    means = x[: size * n_batches].reshape(n_batches, size, -1).mean(axis=1)
    return means.std(axis=0, ddof=1) / np.sqrt(n_batches)


def newton_correction(score, stat_cov, max_sd=3.0):
    """Step ``V^{-1} r`` solving the linearized score equation.

    Each coordinate of the step is clipped to ``max_sd`` standard deviations
    of the corresponding entry of ``V^{-1}`` so that a poor covariance
    estimate cannot throw the estimate far away.
    """
    stat_cov = np.atleast_2d(stat_cov)
    inv = linalg.pinvh(stat_cov)
    step = inv @ score
    cap = max_sd * np.sqrt(np.maximum(np.diag(inv), 0.0))
    return np.clip(step, -cap, cap)
