"""Estimators and the limit-law experiment.

hill            tail index from the top order statistics
acf             biased autocorrelation with a log-linear decay fit
ks, ks_normal   Kolmogorov-Smirnov distances (two-sample / fitted Gaussian)
stable_sample   alpha-stable variates (Chambers-Mallows-Stuck, S1 form)
limit_law_experiment   scaled occupation sums of a horn over flow time T
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.special import ndtr

from . import _kernels as K
from .errors import DomainError
from .suspension import occupation_rate, sample_mu_arrays
from .table import TableConfig


@dataclass(frozen=True)
class Ensemble:
    samples: np.ndarray
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        s = np.asarray(self.samples, dtype=float)
        if s.size == 0 or not np.all(np.isfinite(s)):
            raise DomainError("an ensemble needs finite samples")
        object.__setattr__(self, "samples", s)


@dataclass(frozen=True)
class TailFit:
    index: float
    k_used: int
    stderr: float


def hill(samples, tail_fraction: float) -> TailFit:
    """Hill estimator over the largest ``tail_fraction`` of the samples."""
    x = np.asarray(samples, dtype=float)
    if not 0.0 < tail_fraction < 1.0:
        raise DomainError("tail_fraction must lie in (0, 1)")
    k = int(tail_fraction * x.size)
    if k < 10:
        raise DomainError(f"need at least {math.ceil(10 / tail_fraction)} samples")
    top = np.sort(x)[::-1][: k + 1]
    if top[k] <= 0.0:
        raise DomainError("tail samples must be positive")
    logs = np.log(top[:k]) - math.log(top[k])
    m = logs.mean()
    if m <= 0.0:
        raise DomainError("degenerate (constant) tail")
    index = 1.0 / m
    return TailFit(float(index), k, float(index / math.sqrt(k)))


@dataclass(frozen=True)
class AcfResult:
    lags: np.ndarray
    rho: np.ndarray
    rate: float  # fitted decay rate: |rho(n)| ~ exp(-rate n)
    slope: float  # slope of log|rho| on the fitted lags (= -rate)
    noise_floor: float
    fitted_lags: np.ndarray


def acf(series, max_lag: int, fit_lags: tuple[int, int] | None = None) -> AcfResult:
    """Biased autocorrelation rho(0..max_lag) and a least-squares fit of log|rho|.

    The fit uses lags in ``fit_lags`` (default 1..max_lag) whose |rho| clears
    the white-noise floor 3/sqrt(N).
    """
    x = np.asarray(series, dtype=float)
    n = x.size
    if n < 50 * max_lag:
        raise DomainError(f"series of length {n} too short for max_lag={max_lag}")
    x = x - x.mean()
    var = float(np.dot(x, x)) / n
    if var == 0.0:
        raise DomainError("zero-variance series")
    nfft = 1 << int(math.ceil(math.log2(2 * n)))
    f = np.fft.rfft(x, nfft)
    cov = np.fft.irfft(f * np.conj(f), nfft)[: max_lag + 1] / n
    rho = cov / cov[0]
    lags = np.arange(max_lag + 1)
    floor = 3.0 / math.sqrt(n)
    lo, hi = fit_lags if fit_lags is not None else (1, max_lag)
    sel = (lags >= lo) & (lags <= hi) & (np.abs(rho) > floor)
    if sel.sum() >= 2:
        slope = float(np.polyfit(lags[sel], np.log(np.abs(rho[sel])), 1)[0])
    else:
        slope = math.nan
    return AcfResult(lags, rho, -slope, slope, floor, lags[sel])


def ks(sample_a, sample_b) -> float:
    """Two-sample Kolmogorov-Smirnov statistic sup |F_a - F_b|."""
    a = np.sort(np.asarray(sample_a, dtype=float))
    b = np.sort(np.asarray(sample_b, dtype=float))
    if a.size == 0 or b.size == 0:
        raise DomainError("samples must be nonempty")
    grid = np.concatenate([a, b])
    fa = np.searchsorted(a, grid, side="right") / a.size
    fb = np.searchsorted(b, grid, side="right") / b.size
    return float(np.max(np.abs(fa - fb)))


def ks_normal(sample) -> float:
    """KS distance between a sample and the Gaussian with its own mean and std."""
    x = np.sort(np.asarray(sample, dtype=float))
    n = x.size
    sd = x.std(ddof=1)
    if sd == 0.0:
        raise DomainError("zero-variance sample")
    cdf = ndtr((x - x.mean()) / sd)
    i = np.arange(1, n + 1)
    return float(max(np.max(i / n - cdf), np.max(cdf - (i - 1) / n)))


def stable_sample(alpha: float, skew: float, n: int, seed: int) -> Ensemble:
    """Standard alpha-stable variates (S1 parametrisation) by Chambers-Mallows-Stuck."""
    if not 0.0 < alpha <= 2.0:
        raise DomainError("alpha must lie in (0, 2]")
    if not -1.0 <= skew <= 1.0:
        raise DomainError("skew must lie in [-1, 1]")
    rng = np.random.default_rng(seed)
    u = rng.uniform(-0.5 * math.pi, 0.5 * math.pi, n)
    w = rng.standard_exponential(n)
    if alpha == 1.0:
        hp = 0.5 * math.pi
        x = ((hp + skew * u) * np.tan(u) - skew * np.log(hp * w * np.cos(u) / (hp + skew * u))) / hp
    else:
        zeta = -skew * math.tan(0.5 * math.pi * alpha)
        xi = math.atan(-zeta) / alpha
        x = ((1.0 + zeta * zeta) ** (0.5 / alpha) * np.sin(alpha * (u + xi)) / np.cos(u) ** (1.0 / alpha)
             * (np.cos(u - alpha * (u + xi)) / w) ** ((1.0 - alpha) / alpha))
    return Ensemble(x, {"seed": seed, "alpha": alpha, "skew": skew, "n": n, "observable": "stable"})


# ------------------------------------------------------------ limit laws

def scaling_regime(beta: float) -> str:
    if beta < 2.0:
        return "stable"
    if beta == 2.0:
        return "tlogt"
    return "sqrt"


def scale_factor(regime: str, beta: float, T: float) -> float:
    if regime == "stable":
        return T ** (1.0 / beta)
    if regime == "tlogt":
        return math.sqrt(T * math.log(T))
    if regime == "sqrt":
        return math.sqrt(T)
    raise DomainError(f"unknown scaling {regime!r}")


@dataclass(frozen=True)
class LimitLawResult:
    T: np.ndarray
    occupation: np.ndarray  # (replicas, len(T)) raw occupation times
    rate: float
    beta: float
    trapped: int
    seed: int

    def centered(self) -> np.ndarray:
        return self.occupation - self.T[None, :] * self.rate

    def scaled(self, regime: str | None = None) -> np.ndarray:
        regime = regime or scaling_regime(self.beta)
        f = np.array([scale_factor(regime, self.beta, t) for t in self.T])
        return self.centered() / f[None, :]

    def ensembles(self, regime: str | None = None) -> list[Ensemble]:
        regime = regime or scaling_regime(self.beta)
        s = self.scaled(regime)
        return [Ensemble(s[:, k], {"seed": self.seed, "T": float(t), "scaling": regime,
                                   "observable": "horn occupation"}) for k, t in enumerate(self.T)]

    def ks_consecutive(self, regime: str | None = None) -> list[float]:
        s = self.scaled(regime)
        return [ks(s[:, k], s[:, k + 1]) for k in range(s.shape[1] - 1)]

    def hill_index(self, tail_fraction: float = 0.05, regime: str | None = None) -> list[TailFit]:
        s = self.scaled(regime)
        return [hill(np.abs(s[:, k]), tail_fraction) for k in range(s.shape[1])]

    def ks_gaussian(self, regime: str | None = None) -> list[float]:
        s = self.scaled(regime)
        return [ks_normal(s[:, k]) for k in range(s.shape[1])]


def replica_starts(config: TableConfig, seed: int, replicas: int):
    """One mu-random start per replica from stream SeedSequence([seed, replica])."""
    idx = np.empty(replicas, np.int64)
    th = np.empty(replicas)
    ph = np.empty(replicas)
    for r in range(replicas):
        i, t, p = sample_mu_arrays(config, np.random.default_rng(np.random.SeedSequence([seed, r])), 1)
        idx[r], th[r], ph[r] = i[0], t[0], p[0]
    return idx, th, ph


def limit_law_experiment(config: TableConfig, horn: int, T_list, replicas: int, seed: int,
                         workers: int = 1, offset: float = 0.0, rate: float | None = None) -> LimitLawResult:
    """Occupation of ``horn`` up to each T for independent mu-random orbits.

    The centring rate is the exact long-run occupation fraction unless given.
    ``offset`` adds a constant to the observable (it cancels after centring).
    Results do not depend on ``workers``.
    """
    ob = config.obstacles[horn]
    if not ob.is_horn or ob.beta <= 1.0:
        raise DomainError("the limit-law harness needs a horn with beta > 1")
    if replicas < 500:
        raise DomainError("need at least 500 replicas")
    T = np.sort(np.asarray(T_list, dtype=float))
    if rate is None:
        rate = occupation_rate(config, horn)
    idx, th, ph = replica_starts(config, seed, replicas)
    cx, cy, rad, beta, kind, w, h, cap = config.arrays
    occ = np.empty((replicas, T.size))
    status = np.zeros(replicas, np.int64)

    def run(chunk):
        for r in chunk:
            occ[r], status[r] = K.occupation_run(cx, cy, rad, beta, kind, w, h, cap,
                                                 idx[r], th[r], ph[r], horn, T)

    chunks = np.array_split(np.arange(replicas), max(1, workers) * 4)
    with ThreadPoolExecutor(max_workers=max(1, workers)) as ex:
        list(ex.map(run, chunks))
    ok = status == K.OK
    occ = occ[ok] + offset * T[None, :]
    return LimitLawResult(T, occ, rate + offset, ob.beta, int((~ok).sum()), seed)
