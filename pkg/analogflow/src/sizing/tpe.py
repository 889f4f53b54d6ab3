"""Tree-structured Parzen estimator over independent dimensions."""

import math

import numpy as np
from scipy.special import logsumexp
from scipy.stats import truncnorm

from analogflow.src.sizing.schemas import Dim, ParameterSpace, Trial, TrialState


def to_internal(dim: Dim, value: float) -> float:
    return math.log(value) if dim.scale == "log" else value


def from_internal(dim: Dim, value: float) -> float:
    value = math.exp(value) if dim.scale == "log" else value
    return min(max(value, dim.lo), dim.hi)


def internal_bounds(dim: Dim) -> tuple[float, float]:
    return to_internal(dim, dim.lo), to_internal(dim, dim.hi)


def sample_random(space: ParameterSpace, rng: np.random.Generator) -> dict[str, float]:
    """Uniform in scale space: uniform for linear dims, log-uniform for log dims."""
    x = {}
    for dim in space.dims:
        lo, hi = internal_bounds(dim)
        x[dim.name] = from_internal(dim, float(rng.uniform(lo, hi)))
    return x


class ParzenEstimator:
    """1-D truncated Gaussian mixture: one kernel per observation plus a flat-ish prior.

    Each kernel's bandwidth is the larger gap to its sorted neighbours,
    clipped to [range / min(100, n + 1), range / sqrt(n + 1)]; the prior
    sits at the centre with the full range as bandwidth.
    """

    def __init__(self, observations: list[float], lo: float, hi: float):
        self.lo, self.hi = lo, hi
        span = hi - lo
        obs = np.asarray(observations, dtype=float)
        count = len(obs) + 1
        mus = np.append(obs, 0.5 * (lo + hi))
        order = np.argsort(mus, kind="stable")
        ordered = mus[order]
        padded = np.concatenate(([lo], ordered, [hi]))
        gaps = np.maximum(ordered - padded[:-2], padded[2:] - ordered)
        sigmas = np.empty_like(mus)
        sigmas[order] = gaps
        sigmas = np.clip(sigmas, span / min(100, count), span / math.sqrt(count))
        sigmas[-1] = span
        self.mus = mus
        self.sigmas = sigmas
        self.log_weights = np.full(count, -math.log(count))

    def _bounds(self) -> tuple[np.ndarray, np.ndarray]:
        return (self.lo - self.mus) / self.sigmas, (self.hi - self.mus) / self.sigmas

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        a, b = self._bounds()
        component = rng.choice(len(self.mus), size=size, p=np.exp(self.log_weights))
        draws = truncnorm.rvs(
            a[component], b[component], loc=self.mus[component], scale=self.sigmas[component], random_state=rng
        )
        return np.clip(np.atleast_1d(draws), self.lo, self.hi)

    def log_pdf(self, values: np.ndarray) -> np.ndarray:
        a, b = self._bounds()
        values = np.atleast_1d(values)[:, None]
        per_component = truncnorm.logpdf(values, a, b, loc=self.mus, scale=self.sigmas)
        return logsumexp(per_component + self.log_weights, axis=1)


def split_trials(trials: list[Trial], gamma: float) -> tuple[list[Trial], list[Trial]]:
    """Best ceil(gamma * n) completed trials against the rest."""
    completed = sorted(
        (t for t in trials if t.state == TrialState.COMPLETE and t.fom is not None),
        key=lambda t: (-t.fom, t.number),
    )
    n_good = max(1, math.ceil(gamma * len(completed))) if completed else 0
    return completed[:n_good], completed[n_good:]


def tpe_suggest(
    trials: list[Trial],
    space: ParameterSpace,
    rng: np.random.Generator,
    gamma: float = 0.25,
    n_startup: int = 10,
    n_ei_candidates: int = 24,
) -> dict[str, float]:
    """Next point to evaluate.

    Falls back to random sampling until ``n_startup`` trials completed; then
    draws candidates from the good-set density l(x) and returns the one with
    the largest l(x) / g(x).
    """
    good, bad = split_trials(trials, gamma)
    if len(good) + len(bad) < n_startup:
        return sample_random(space, rng)

    score = np.zeros(n_ei_candidates)
    candidates: dict[str, np.ndarray] = {}
    for dim in space.dims:
        lo, hi = internal_bounds(dim)
        l = ParzenEstimator([to_internal(dim, t.x[dim.name]) for t in good if dim.name in t.x], lo, hi)
        g = ParzenEstimator([to_internal(dim, t.x[dim.name]) for t in bad if dim.name in t.x], lo, hi)
        draws = l.sample(rng, n_ei_candidates)
        candidates[dim.name] = draws
        score += l.log_pdf(draws) - g.log_pdf(draws)
    best = int(np.argmax(score))
    return {dim.name: from_internal(dim, float(candidates[dim.name][best])) for dim in space.dims}
