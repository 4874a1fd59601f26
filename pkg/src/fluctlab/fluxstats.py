"""Statistics collectors for per-trial observable series.

Turns raw (time, entropy, distance, purity) records into the empirical
quantities the experiments report: tail tables, conditional tail means,
first-passage times, stationary deviation fractions, and RMS-over-trials
curves, each with an error estimate suited to tails (Wilson intervals for
probabilities, grouped jackknife for tail means).

Collectors double as associative reducers: worker shards produce partial
counters and moment accumulators that merge deterministically.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import InputError, StatisticalPowerError


@dataclass(frozen=True)
class FluctuationSeries:
    """Time-indexed observables for one trial and one observed region."""

    times: np.ndarray
    entropy: np.ndarray
    dist_mm: np.ndarray
    purity: np.ndarray
    trial_id: int = 0
    config_hash: str = ""
    region_sites: tuple = ()
    region_dim: int = 0

    def __post_init__(self):
        times = np.asarray(self.times, dtype=float)
        ent = np.asarray(self.entropy, dtype=float)
        dist = np.asarray(self.dist_mm, dtype=float)
        pur = np.asarray(self.purity, dtype=float)
        if not (times.shape == ent.shape == dist.shape == pur.shape):
            raise InputError("series channels must share one length")
        if ent.size and (ent.min() < -1e-9):
            raise InputError(f"negative entropy {ent.min()!r}")
        if self.region_dim and ent.size and ent.max() > math.log(self.region_dim) + 1e-9:
            raise InputError("entropy exceeds ln(region_dim)")
        if dist.size and (dist.min() < -1e-12 or dist.max() > 2.0 + 1e-12):
            raise InputError("dist_mm outside [0, 2]")
        for name, arr in (("times", times), ("entropy", ent), ("dist_mm", dist), ("purity", pur)):
            arr = arr.copy()
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    def __len__(self):
        return self.times.shape[0]


@dataclass(frozen=True)
class TailTable:
    """Empirical tail probabilities over a fluctuation-size grid."""

    delta_s_grid: np.ndarray
    prob: np.ndarray
    stderr_lo: np.ndarray
    stderr_hi: np.ndarray
    n_samples: int
    time_label: str = ""

    def __post_init__(self):
        grid = np.asarray(self.delta_s_grid, dtype=float)
        prob = np.asarray(self.prob, dtype=float)
        if grid.shape != prob.shape:
            raise InputError("grid and prob must share a shape")
        if np.any(prob < 0) or np.any(prob > 1):
            raise InputError("probabilities must lie in [0, 1]")
        if np.any(np.diff(prob[np.argsort(grid)]) > 1e-12):
            raise InputError("tail probability must be nonincreasing in delta_s")
        object.__setattr__(self, "delta_s_grid", grid)
        object.__setattr__(self, "prob", prob)


def wilson_interval(successes: int, total: int, z: float = 1.0) -> tuple:
    """Wilson score interval; z=1 gives a 1-sigma-style band that behaves in tails."""
    if total <= 0:
        raise InputError("total must be positive")
    phat = successes / total
    z2 = z * z
    denom = 1.0 + z2 / total
    center = (phat + z2 / (2.0 * total)) / denom
    half = z * math.sqrt(phat * (1.0 - phat) / total + z2 / (4.0 * total * total)) / denom
    lo = 0.0 if successes == 0 else max(center - half, 0.0)
    hi = 1.0 if successes == total else min(center + half, 1.0)
    return lo, hi


def _gather(series_ensemble, time_index: int) -> np.ndarray:
    if not series_ensemble:
        raise InputError("empty ensemble")
    first = series_ensemble[0]
    for s in series_ensemble[1:]:
        if s.config_hash != first.config_hash or not np.array_equal(s.times, first.times):
            raise InputError("ensemble members must share times and config")
    return np.array([s.entropy[time_index] for s in series_ensemble])


def tail_table_from_values(delta_s: np.ndarray, grid, time_label: str = "") -> TailTable:
    """Tail table of observed fluctuation sizes over a grid, Wilson errors attached."""
    delta_s = np.asarray(delta_s, dtype=float)
    grid = np.asarray(grid, dtype=float)
    n = delta_s.shape[0]
    counts = (delta_s[None, :] >= grid[:, None]).sum(axis=1)
    prob = counts / n
    lo = np.empty_like(prob)
    hi = np.empty_like(prob)
    for j, k in enumerate(counts):
        a, b = wilson_interval(int(k), n)
        lo[j] = prob[j] - a
        hi[j] = b - prob[j]
    return TailTable(
        delta_s_grid=grid, prob=prob, stderr_lo=lo, stderr_hi=hi,
        n_samples=n, time_label=time_label,
    )


def tail_distribution(series_ensemble, time_index: int, s_max: float, grid) -> TailTable:
    """Fraction of trials with s_max - S(t) >= each grid value, at one time."""
    values = s_max - _gather(series_ensemble, time_index)
    t_label = repr(float(series_ensemble[0].times[time_index]))
    return tail_table_from_values(values, grid, time_label=t_label)


def tail_conditional_mean_from_values(delta_s: np.ndarray, alpha: float) -> tuple:
    """Mean fluctuation over the rarest 10^-alpha fraction; ties keep all equals.

    Returns (mean, n_included).
    """
    delta_s = np.asarray(delta_s, dtype=float)
    n = delta_s.shape[0]
    if alpha < 0:
        raise InputError(f"alpha must be >= 0, got {alpha}")
    if n < 10.0 * 10.0**alpha:
        raise StatisticalPowerError(
            f"need at least 10 * 10^alpha = {10 * 10**alpha:.0f} samples, have {n}"
        )
    k = math.ceil(n * 10.0 ** (-alpha))
    cut = np.partition(delta_s, n - k)[n - k]
    chosen = delta_s[delta_s >= cut]
    return float(chosen.mean()), int(chosen.shape[0])


def tail_conditional_mean(series_ensemble, time_index: int, s_max: float, alpha: float) -> float:
    values = s_max - _gather(series_ensemble, time_index)
    return tail_conditional_mean_from_values(values, alpha)[0]


def grouped_jackknife_stderr(values: np.ndarray, stat, n_groups: int = 50) -> float:
    """Delete-one-group jackknife standard error of `stat` over trial values."""
    values = np.asarray(values, dtype=float)
    n = values.shape[0]
    n_groups = min(n_groups, n)
    if n_groups < 2:
        raise StatisticalPowerError("jackknife needs at least 2 groups")
    edges = np.linspace(0, n, n_groups + 1).astype(int)
    thetas = []
    for g in range(n_groups):
        mask = np.ones(n, dtype=bool)
        mask[edges[g] : edges[g + 1]] = False
        thetas.append(stat(values[mask]))
    thetas = np.array(thetas)
    return float(math.sqrt((n_groups - 1) / n_groups * np.sum((thetas - thetas.mean()) ** 2)))


def time_to_first_fluctuation(series: FluctuationSeries, s_max: float, delta_s: float):
    """Earliest recorded time with s_max - S(t) >= delta_s, or None if never."""
    hits = np.nonzero(s_max - series.entropy >= delta_s)[0]
    if hits.size == 0:
        return None
    return float(series.times[hits[0]])


def fraction_of_time_deviating(
    series: FluctuationSeries, s_max: float, grid, window: tuple
) -> TailTable:
    """Fraction of sampled times inside `window` that deviate by each grid value."""
    t_lo, t_hi = window
    mask = (series.times >= t_lo) & (series.times <= t_hi)
    if not mask.any():
        raise InputError(f"window {window} selects no recorded times")
    values = s_max - series.entropy[mask]
    return tail_table_from_values(values, grid, time_label=f"window[{t_lo},{t_hi}]")


def rms_over_trials(series_ensemble, time_index: int) -> float:
    """RMS deviation of the entropy from its trial mean at one recorded time."""
    if len(series_ensemble) < 2:
        raise InputError("need at least 2 trials")
    vals = _gather(series_ensemble, time_index)
    return float(np.sqrt(np.mean((vals - vals.mean()) ** 2)))


def empirical_fluctuation_count(
    series: FluctuationSeries, s_eq: float, tau: float, window: tuple
) -> int:
    """Number of recorded times in `window` with S(t) <= s_eq - tau."""
    t_lo, t_hi = window
    mask = (series.times >= t_lo) & (series.times <= t_hi)
    return int(np.sum(series.entropy[mask] <= s_eq - tau))


@dataclass
class MomentAccumulator:
    """Streaming per-time sums for mean / RMS channels; merge is addition.

    Shards must be merged in a fixed order for bit-stable float totals.
    """

    shape: tuple
    count: int = 0
    total: np.ndarray = field(default=None)
    total_sq: np.ndarray = field(default=None)

    def __post_init__(self):
        if self.total is None:
            self.total = np.zeros(self.shape)
            self.total_sq = np.zeros(self.shape)

    def update(self, block: np.ndarray) -> None:
        """Add a (trials, *shape) block of per-trial values."""
        self.count += block.shape[0]
        self.total += block.sum(axis=0)
        self.total_sq += (block * block).sum(axis=0)

    def merge(self, other: "MomentAccumulator") -> None:
        self.count += other.count
        self.total += other.total
        self.total_sq += other.total_sq

    def mean(self) -> np.ndarray:
        return self.total / self.count

    def rms_deviation(self) -> np.ndarray:
        m = self.mean()
        var = np.maximum(self.total_sq / self.count - m * m, 0.0)
        return np.sqrt(var)

    def sem(self) -> np.ndarray:
        return self.rms_deviation() / math.sqrt(self.count)


@dataclass
class TailCounter:
    """Exact integer tail counts per (time, grid) cell; merge is addition."""

    grid: np.ndarray
    n_times: int
    count: int = 0
    hits: np.ndarray = field(default=None)

    def __post_init__(self):
        self.grid = np.asarray(self.grid, dtype=float)
        if self.hits is None:
            self.hits = np.zeros((self.n_times, self.grid.shape[0]), dtype=np.int64)

    def update(self, delta_s_block: np.ndarray) -> None:
        """Add a (trials, n_times) block of fluctuation sizes."""
        self.count += delta_s_block.shape[0]
        self.hits += (delta_s_block[:, :, None] >= self.grid[None, None, :]).sum(axis=0)

    def merge(self, other: "TailCounter") -> None:
        self.count += other.count
        self.hits += other.hits

    def table(self, time_index: int, time_label: str = "") -> TailTable:
        n = self.count
        prob = self.hits[time_index] / n
        lo = np.empty_like(prob)
        hi = np.empty_like(prob)
        for j, k in enumerate(self.hits[time_index]):
            a, b = wilson_interval(int(k), n)
            lo[j] = prob[j] - a
            hi[j] = b - prob[j]
        return TailTable(
            delta_s_grid=self.grid, prob=prob, stderr_lo=lo, stderr_hi=hi,
            n_samples=n, time_label=time_label,
        )
