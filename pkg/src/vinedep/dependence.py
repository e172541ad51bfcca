"""Rank-dependence measures: Kendall's tau and the pairwise tau matrix."""

import csv
import io
from dataclasses import dataclass
from itertools import combinations

import numpy as np

from .errors import DataError, LengthMismatch

TAU_MODES = ("tau-a", "tau-b")


def _count_inversions(y):
    """Number of pairs i < j with y[i] > y[j].

    Bottom-up merge sort. Each pass merges all block pairs of the current
    width at once: an element's slot in the merged block is its offset in
    its own half plus the number of elements of the other half that precede
    it, found with ``searchsorted`` on block-offset keys.
    """
    _, y = np.unique(np.asarray(y), return_inverse=True)
    n = y.size
    vals = y.astype(np.int64)
    pos = np.arange(n)
    inversions = 0
    width = 1
    while width < n:
        block = pos // (2 * width)
        right = (pos // width) % 2 == 1
        key = block * (n + 1) + vals
        lkeys, rkeys = key[~right], key[right]
        lblock, rblock = block[~right], block[right]
        base = lblock * (n + 1)
        rbase = rblock * (n + 1)

        # right element: left elements in its block with value <= it
        l_start_r = np.searchsorted(lkeys, rbase, side="left")
        l_leq = np.searchsorted(lkeys, rkeys, side="right") - l_start_r
        l_count = np.searchsorted(lkeys, rbase + (n + 1), side="left") - l_start_r
        inversions += int(np.sum(l_count - l_leq))

        # left element: right elements in its block with value < it
        r_start_l = np.searchsorted(rkeys, base, side="left")
        r_less = np.searchsorted(rkeys, lkeys, side="left") - r_start_l
        l_offset = np.arange(lkeys.size) - np.searchsorted(lkeys, base, side="left")
        r_offset = np.arange(rkeys.size) - np.searchsorted(rkeys, rbase, side="left")

        start = block * 2 * width
        new_pos = np.empty(n, dtype=np.int64)
        new_pos[~right] = start[~right] + l_offset + r_less
        new_pos[right] = start[right] + r_offset + l_leq
        merged = np.empty_like(vals)
        merged[new_pos] = vals
        vals = merged
        width *= 2
    return inversions


def _tie_pairs(a):
    _, counts = np.unique(a, return_counts=True, axis=0)
    counts = counts.astype(np.int64)
    return int(np.sum(counts * (counts - 1) // 2))


def kendall_tau(x, y, mode="tau-b"):
    """Empirical Kendall's tau in O(N log N).

    With ``mode="tau-a"`` the score is divided by N(N-1)/2 exactly as in the
    concordance-count definition; ``"tau-b"`` (default) applies the usual
    tie correction and coincides with tau-a when there are no ties.
    """
    if mode not in TAU_MODES:
        raise ValueError(f"mode must be one of {TAU_MODES}")
    x = np.asarray(x, dtype=float).ravel()
    y = np.asarray(y, dtype=float).ravel()
    if x.size != y.size:
        raise LengthMismatch(f"x has {x.size} values, y has {y.size}")
    n = x.size
    if n < 2:
        raise DataError("kendall_tau needs at least 2 observations")

    order = np.lexsort((y, x))
    xs, ys = x[order], y[order]
    n0 = n * (n - 1) // 2
    n1 = _tie_pairs(xs)
    n2 = _tie_pairs(ys)
    n3 = _tie_pairs(np.column_stack((xs, ys)))
    discordant = _count_inversions(ys)
    score = n0 - n1 - n2 + n3 - 2 * discordant
    if mode == "tau-a":
        return score / n0
    denom = np.sqrt(float(n0 - n1) * float(n0 - n2))
    if denom == 0:
        return 0.0
    return float(np.clip(score / denom, -1.0, 1.0))


def kendall_tau_bruteforce(x, y, mode="tau-b"):
    """O(N^2) pair enumeration; reference implementation for tests."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    n = x.size
    i, j = np.triu_indices(n, k=1)
    sx = np.sign(x[i] - x[j])
    sy = np.sign(y[i] - y[j])
    score = np.sum(sx * sy)
    n0 = n * (n - 1) / 2
    if mode == "tau-a":
        return score / n0
    denom = np.sqrt(np.sum(sx != 0) * np.sum(sy != 0))
    return 0.0 if denom == 0 else score / denom


@dataclass(frozen=True)
class TauMatrix:
    values: np.ndarray
    names: tuple

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.shape != (len(self.names), len(self.names)):
            raise DataError("tau matrix shape does not match names")
        if not np.allclose(v, v.T) or not np.allclose(np.diag(v), 1.0):
            raise DataError("tau matrix must be symmetric with unit diagonal")
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "names", tuple(self.names))

    @property
    def d(self):
        return len(self.names)

    def to_csv(self, path=None):
        """Upper triangle (diagonal included) as CSV; lower cells are blank."""
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow([""] + list(self.names))
        for i, name in enumerate(self.names):
            row = [name] + [
                "" if j < i else f"{self.values[i, j]:.6g}" for j in range(self.d)
            ]
            writer.writerow(row)
        text = buf.getvalue()
        if path is not None:
            with open(path, "w", newline="") as fh:
                fh.write(text)
        return text


def tau_matrix(u, names=None, mode="tau-b") -> TauMatrix:
    """Pairwise Kendall's tau for all column pairs of ``u``.

    ``u`` may be a ``PseudoObservations`` or any N x d array; the result is
    the same either way because tau only depends on ranks.
    """
    if hasattr(u, "column_names"):
        names = u.column_names if names is None else names
        data = u.data
    else:
        data = np.asarray(u, dtype=float)
    if data.ndim != 2 or data.shape[1] < 2:
        raise DataError("tau_matrix needs a matrix with at least 2 columns")
    d = data.shape[1]
    if names is None:
        names = [f"V{j + 1}" for j in range(d)]
    values = np.eye(d)
    for i, j in combinations(range(d), 2):
        values[i, j] = values[j, i] = kendall_tau(data[:, i], data[:, j], mode=mode)
    return TauMatrix(values, tuple(names))
