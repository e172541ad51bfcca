"""Empirical marginals and the probability integral transform.

Raw metric columns are mapped to pseudo-observations with the rank-based
empirical CDF ``F(x) = #{X_i <= x} / (N + 1)``. Tied observations receive
their average rank, which keeps every pseudo-observation strictly inside
the unit interval.

Note that checking uniformity of the PIT output against the same sample
that defined the ECDF biases the Kolmogorov-Smirnov p-value upward. The
procedure is kept as-is because that is how the uniformity check is
reported in practice; treat high p-values as a sanity check only.
"""

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy.special import kolmogorov
from scipy.stats import rankdata

from .errors import DataError, DegenerateColumn, InputOutOfRange


@dataclass(frozen=True)
class EmpiricalCDF:
    """Empirical distribution function with an ``N + 1`` denominator."""

    sorted_values: np.ndarray
    n: int
    tie_policy: str = "average_rank"

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        n_leq = np.searchsorted(self.sorted_values, x, side="right")
        n_less = np.searchsorted(self.sorted_values, x, side="left")
        # on an observed value use the average rank (r_min + r_max) / 2
        rank = np.where(n_leq > n_less, (n_less + 1 + n_leq) / 2.0, n_leq)
        out = rank / (self.n + 1)
        return out if out.ndim else float(out)


@dataclass(frozen=True)
class PseudoObservations:
    """N x d matrix of copula data strictly inside (0, 1)."""

    data: np.ndarray
    column_names: tuple

    def __post_init__(self):
        data = np.asarray(self.data, dtype=float)
        if data.ndim != 2:
            raise DataError("pseudo-observations must be a 2-D matrix")
        n, d = data.shape
        if n < 2 or d < 2:
            raise DataError(f"need N >= 2 and d >= 2, got N={n}, d={d}")
        if len(self.column_names) != d:
            raise DataError("column_names length does not match data width")
        if not np.all((data > 0) & (data < 1)):
            raise InputOutOfRange("pseudo-observations must lie strictly in (0, 1)")
        object.__setattr__(self, "data", data)
        object.__setattr__(self, "column_names", tuple(self.column_names))

    @property
    def n(self):
        return self.data.shape[0]

    @property
    def d(self):
        return self.data.shape[1]

    def column(self, key):
        if isinstance(key, str):
            key = self.column_names.index(key)
        return self.data[:, key]


def ecdf_fit(samples) -> EmpiricalCDF:
    samples = np.asarray(samples, dtype=float).ravel()
    if samples.size < 2:
        raise DataError("ecdf_fit needs at least 2 samples")
    if not np.all(np.isfinite(samples)):
        raise DataError("samples contain missing or non-finite values")
    sorted_values = np.sort(samples)
    if sorted_values[0] == sorted_values[-1]:
        raise DegenerateColumn()
    return EmpiricalCDF(sorted_values=sorted_values, n=samples.size)


def pit_transform(raw, column_names: Optional[Sequence[str]] = None) -> PseudoObservations:
    """Map each column of ``raw`` through its own empirical CDF.

    Equivalent to ``ecdf_fit(col)(col)`` per column, computed via average
    ranks so ties cost O(N log N).
    """
    raw = np.asarray(raw, dtype=float)
    if raw.ndim != 2:
        raise DataError("raw data must be a 2-D matrix")
    n, d = raw.shape
    if column_names is None:
        column_names = [f"V{j + 1}" for j in range(d)]
    out = np.empty_like(raw)
    for j in range(d):
        col = raw[:, j]
        if n < 2:
            raise DataError("need at least 2 rows")
        if not np.all(np.isfinite(col)):
            raise DataError(f"column {column_names[j]!r} contains missing values")
        if np.all(col == col[0]):
            raise DegenerateColumn(column=column_names[j])
        out[:, j] = rankdata(col, method="average") / (n + 1)
    return PseudoObservations(out, tuple(column_names))


def ks_uniform_pvalue(u) -> float:
    """Asymptotic Kolmogorov-Smirnov p-value of ``u`` against U(0, 1).

    Parameters
    ----------
    u : array_like
        At least 10 values in the open unit interval.

    Returns
    -------
    float
        ``Q(sqrt(n) * D)`` where ``D = sup |F_n(t) - t|`` and ``Q`` is the
        Kolmogorov survival function.
    """
    u = np.sort(np.asarray(u, dtype=float).ravel())
    if u.size < 10:
        raise DataError("ks_uniform_pvalue needs at least 10 values")
    if not np.all((u > 0) & (u < 1)):
        raise InputOutOfRange("values must lie strictly in (0, 1)")
    n = u.size
    i = np.arange(1, n + 1)
    d_stat = max(np.max(i / n - u), np.max(u - (i - 1) / n))
    return float(np.clip(kolmogorov(np.sqrt(n) * d_stat), 0.0, 1.0))


def ks_statistic(u) -> float:
    u = np.sort(np.asarray(u, dtype=float).ravel())
    n = u.size
    i = np.arange(1, n + 1)
    return float(max(np.max(i / n - u), np.max(u - (i - 1) / n)))
