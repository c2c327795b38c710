"""Error analysis for correlated Monte Carlo series.

The variance conventions follow the blocking formulas used for the sampler
benchmarks: population (``1/M``) variances for both the bare and the blocked
standard errors, so that ``R = sigma_b**2 / sigma**2`` is exactly 1 for a
block size of 1.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

PLATEAU_RTOL = 0.10
MIN_BLOCKS = 8


@dataclass
class Series:
    values: np.ndarray
    label: str = ""

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)

    def __len__(self):
        return len(self.values)


def _values(series) -> np.ndarray:
    return series.values if isinstance(series, Series) else np.asarray(series, dtype=float)


def autocorrelation(series, t: int) -> float:
    x = _values(series)
    M = len(x)
    if not 0 <= t < M:
        raise ValueError(f"lag {t} outside [0, {M})")
    return float(np.dot(x[: M - t], x[t:]) / (M - t) - x.mean() ** 2)


def autocorrelation_function(series, max_lag: int) -> np.ndarray:
    x = _values(series)
    return np.array([autocorrelation(x, t) for t in range(max_lag + 1)])


def exponential_time(series, max_lag: int) -> float:
    """Rough exponential autocorrelation time from a log-linear fit of C(t).

    Diagnostic only; lags where C(t) is no longer positive are ignored.
    """
    c = autocorrelation_function(series, max_lag)
    if c[0] <= 0:
        return 0.0
    lags = np.arange(len(c))
    keep = c > 0.05 * c[0]
    if keep.sum() < 2:
        return 0.0
    slope = np.polyfit(lags[keep], np.log(c[keep] / c[0]), 1)[0]
    return float(-1.0 / slope) if slope < 0 else float("inf")


def _truncate(x: np.ndarray, block_size: int) -> tuple[np.ndarray, int]:
    if block_size < 1:
        raise ValueError("block size must be >= 1")
    n_blocks = len(x) // block_size
    if n_blocks < MIN_BLOCKS:
        raise ValueError(f"{n_blocks} blocks of size {block_size} from {len(x)} samples; need >= {MIN_BLOCKS}")
    return x[: n_blocks * block_size], n_blocks


def blocking(series, block_size: int) -> tuple[float, float, float]:
    """Return ``(sigma, sigma_b, R)`` for one block size.

    A trailing remainder that does not fill a block is dropped before both
    errors are computed.
    """
    x, n_blocks = _truncate(_values(series), block_size)
    M = len(x)
    mean = x.mean()
    sigma = np.sqrt(np.mean((x - mean) ** 2) / M)
    block_means = x.reshape(n_blocks, block_size).mean(axis=1)
    sigma_b = np.sqrt(np.mean((block_means - mean) ** 2) / n_blocks)
    if sigma == 0.0:
        return 0.0, float(sigma_b), 1.0
    return float(sigma), float(sigma_b), float(sigma_b**2 / sigma**2)


def default_block_sizes(M: int) -> list[int]:
    sizes = []
    nb = 1
    while M // nb >= MIN_BLOCKS:
        sizes.append(nb)
        nb *= 2
    return sizes


@dataclass
class RCurve:
    block_sizes: list[int]
    ratios: list[float]
    saturated: float
    lower_bound: bool
    plateau_block: int
    criterion: str = field(default=f"relative change < {PLATEAU_RTOL:.0%} over the last doubling")

    def pairs(self):
        return list(zip(self.block_sizes, self.ratios))


def r_curve(series, block_sizes=None) -> RCurve:
    """R as a function of block size with a plateau estimate.

    The plateau is the first block size whose R differs from the R at twice
    that block size by less than 10%; its value is the saturated R.  If no
    such pair exists the largest R is returned with ``lower_bound`` set.
    """
    x = _values(series)
    if block_sizes is None:
        block_sizes = default_block_sizes(len(x))
    block_sizes = list(block_sizes)
    if any(b2 <= b1 for b1, b2 in zip(block_sizes, block_sizes[1:])):
        raise ValueError("block sizes must be ascending")
    ratios = [blocking(x, nb)[2] for nb in block_sizes]
    by_size = dict(zip(block_sizes, ratios))
    for nb, r in zip(block_sizes, ratios):
        r2 = by_size.get(2 * nb)
        if r2 is None:
            continue
        if abs(r2 - r) <= PLATEAU_RTOL * max(abs(r2), 1e-300):
            # report the later point of the plateau pair
            return RCurve(block_sizes, ratios, float(r2), False, 2 * nb)
    k = int(np.argmax(ratios))
    return RCurve(block_sizes, ratios, float(ratios[k]), True, block_sizes[k])


def jackknife(stat, columns: list[np.ndarray], block_size: int) -> tuple[float, float]:
    """Delete-one-block jackknife of ``stat(*block_means)``.

    ``stat`` receives the means of each column over the kept samples.  The
    variance uses the same ``1/n_blocks`` convention as ``blocking``, so the
    jackknife error of a plain mean equals ``sigma_b``.
    """
    cols = [_truncate(np.asarray(c, dtype=float), block_size)[0] for c in columns]
    n_blocks = len(cols[0]) // block_size
    if any(len(c) != len(cols[0]) for c in cols):
        raise ValueError("jackknife columns must have equal lengths")
    sums = [c.reshape(n_blocks, block_size).sum(axis=1) for c in cols]
    totals = [s.sum() for s in sums]
    M = n_blocks * block_size
    full = stat(*[t / M for t in totals])
    reduced = np.array(
        [stat(*[(t - s[b]) / (M - block_size) for t, s in zip(totals, sums)]) for b in range(n_blocks)]
    )
    mean_reduced = reduced.mean()
    corrected = n_blocks * full - (n_blocks - 1) * mean_reduced
    var = ((n_blocks - 1) / n_blocks) ** 2 * np.sum((reduced - mean_reduced) ** 2)
    return float(corrected), float(np.sqrt(var))


def jackknife_kappa(n_series, n_sq_series, beta: float, block_size: int) -> tuple[float, float]:
    """Compressibility ``beta (<N^2> - <N>^2)`` with a jackknife error."""
    n = _values(n_series)
    n2 = _values(n_sq_series)
    if len(n) != len(n2):
        raise ValueError("particle-number series must have equal lengths")
    return jackknife(lambda a, b: beta * (b - a * a), [n, n2], block_size)


@dataclass
class Summary:
    estimator: str
    mean: float
    sigma: float
    R: float
    R_lower_bound: bool
    t_samp: float
    t_unc: float


def summarize(label: str, values, wall_seconds=None) -> Summary:
    x = _values(values)
    curve = r_curve(x)
    sigma, _, _ = blocking(x, 1)
    t_samp = float(np.mean(wall_seconds)) if wall_seconds is not None and len(wall_seconds) else float("nan")
    R = curve.saturated
    # error of the mean from the saturated blocking ratio
    return Summary(label, float(x.mean()), float(sigma * np.sqrt(R)), R, curve.lower_bound, t_samp, R * t_samp)
