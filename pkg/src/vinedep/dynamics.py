"""Channel dynamics: Granger causality of views on subscribers, upload periodicity.

The off-schedule gain is our own operationalization. An upload within one
day of a predicted schedule tick is on-schedule. Its effect is the sum of
views over the 7 days starting at the upload minus the sum over the 7 days
before it. The gain fraction is the share of off-schedule uploads whose
effect beats the median on-schedule effect.
"""

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy import stats

from .errors import (
    CollinearDesign,
    DataError,
    NoOffScheduleUploads,
    SingularCovariance,
)

DEFAULT_LAGS = 3
DOMINANCE_RATIO = 2.0
SCHEDULE_WINDOW = 1.0
GAIN_WINDOW = 7
STATIONARITY_WARN = 0.98
VIEW_MODES = ("daily", "cumulative")


@dataclass(frozen=True)
class ChannelSeries:
    """Daily series for one channel.

    ``views_per_video`` is T x m; NaN marks days before a video exists and
    counts as zero views.
    """

    dates: np.ndarray
    subscribers: np.ndarray
    views_per_video: np.ndarray
    uploads: np.ndarray
    comments: Optional[np.ndarray] = None
    channel_id: str = ""

    def __post_init__(self):
        dates = np.asarray(self.dates)
        t = dates.size
        views = np.asarray(self.views_per_video, dtype=float)
        if views.ndim == 1:
            views = views.reshape(t, -1) if views.size else np.zeros((t, 0))
        subs = np.asarray(self.subscribers, dtype=float)
        uploads = np.asarray(self.uploads, dtype=int)
        comments = None if self.comments is None else np.asarray(self.comments, dtype=float)
        lengths = {subs.size, views.shape[0], uploads.size, t}
        if comments is not None:
            lengths.add(comments.size)
        if len(lengths) != 1:
            raise DataError(f"channel {self.channel_id!r}: series lengths differ")
        if t > 1 and not np.all(np.diff(dates.astype(np.int64)) == 1):
            raise DataError(f"channel {self.channel_id!r}: dates must be consecutive days")
        if np.any(subs < 0) or np.any(np.nan_to_num(views) < 0) or np.any(~np.isin(uploads, (0, 1))):
            raise DataError(f"channel {self.channel_id!r}: counts must be >= 0 and uploads 0/1")
        object.__setattr__(self, "views_per_video", views)
        object.__setattr__(self, "subscribers", subs)
        object.__setattr__(self, "uploads", uploads)
        object.__setattr__(self, "comments", comments)


def aggregate_views(series: ChannelSeries) -> np.ndarray:
    """Total channel views per day over the videos existing that day."""
    views = series.views_per_video
    if views.shape[1] == 0:
        return np.zeros(views.shape[0])
    return np.nansum(views, axis=1)


@dataclass(frozen=True)
class GrangerModel:
    a: np.ndarray
    b: np.ndarray
    residuals: np.ndarray
    cov: np.ndarray
    n_s: int
    n_v: int
    intercept: Optional[float] = None
    design: np.ndarray = field(default=None, repr=False)
    warning: str = ""

    @property
    def n_params(self):
        return self.n_s + self.n_v + (self.intercept is not None)


def _lagged(x, lags, start):
    t = x.size
    return np.column_stack([x[start - k : t - k] for k in range(1, lags + 1)])


def fit_granger(s, v, n_s=DEFAULT_LAGS, n_v=DEFAULT_LAGS, intercept=False) -> GrangerModel:
    """Least-squares fit of ``s(t)`` on lags 1..n_s of ``s`` and 1..n_v of ``v``.

    No intercept by default, matching the model form. The coefficient
    covariance is the homoskedastic ``sigma^2 (X'X)^-1``.
    """
    s = np.asarray(s, dtype=float).ravel()
    v = np.asarray(v, dtype=float).ravel()
    if s.size != v.size:
        raise DataError("s and v must have equal length")
    if n_s < 1 or n_v < 1:
        raise DataError("lags must be >= 1")
    if s.size < 10 * (n_s + n_v):
        raise DataError(f"need at least {10 * (n_s + n_v)} observations, got {s.size}")
    m = max(n_s, n_v)
    x = np.hstack([_lagged(s, n_s, m), _lagged(v, n_v, m)])
    if intercept:
        x = np.hstack([np.ones((x.shape[0], 1)), x])
    y = s[m:]
    if np.linalg.matrix_rank(x) < x.shape[1]:
        raise CollinearDesign("lagged regressors are linearly dependent")
    coef, *_ = np.linalg.lstsq(x, y, rcond=None)
    resid = y - x @ coef
    dof = x.shape[0] - x.shape[1]
    sigma2 = float(resid @ resid) / dof
    cov = sigma2 * np.linalg.inv(x.T @ x)
    c0 = None
    if intercept:
        c0, coef = float(coef[0]), coef[1:]
    a, b = coef[:n_s], coef[n_s:]

    companion = np.zeros((n_s, n_s))
    companion[0] = a
    companion[1:, :-1] = np.eye(n_s - 1)
    radius = float(np.max(np.abs(np.linalg.eigvals(companion))))
    warning = f"AR spectral radius {radius:.3f} >= {STATIONARITY_WARN}" if radius >= STATIONARITY_WARN else ""
    return GrangerModel(a, b, resid, cov, n_s, n_v, c0, x, warning)


def box_ljung(residuals, lags, n_fitted=0):
    """Ljung-Box ``(Q, p)``; chi-square dof = lags - n_fitted, at least 1."""
    e = np.asarray(residuals, dtype=float).ravel()
    t = e.size
    if lags < 1 or lags >= t / 4:
        raise DataError("lags must satisfy 1 <= lags < length / 4")
    e = e - e.mean()
    denom = float(e @ e)
    if denom == 0:
        return 0.0, 1.0
    rho = np.array([e[k:] @ e[:-k] for k in range(1, lags + 1)]) / denom
    q = t * (t + 2) * np.sum(rho**2 / (t - np.arange(1, lags + 1)))
    dof = max(1, lags - n_fitted)
    return float(q), float(stats.chi2.sf(q, dof))


def box_ljung_pvalue(residuals, lags, n_fitted=0) -> float:
    return box_ljung(residuals, lags, n_fitted)[1]


def wald_granger_pvalue(model: GrangerModel) -> float:
    """Wald test of b = 0 against chi-square(n_v)."""
    k = len(model.a) + (model.intercept is not None)
    vb = model.cov[k:, k:]
    if np.linalg.cond(vb) > 1e12:
        raise SingularCovariance("covariance of the view coefficients is singular")
    w = float(model.b @ np.linalg.solve(vb, model.b))
    return float(stats.chi2.sf(w, model.n_v))


def periodogram(uploads):
    """One-sided power spectrum of the mean-removed upload indicator, DC excluded.

    Powers sum to ``sum((x - mean)^2)``.
    """
    x = np.asarray(uploads, dtype=float).ravel()
    t = x.size
    if t < 28:
        raise DataError("periodogram needs at least 28 days")
    spec = np.fft.rfft(x - x.mean())
    power = 2.0 * np.abs(spec) ** 2 / t
    if t % 2 == 0:
        power[-1] /= 2.0
    freqs = np.arange(spec.size) / t
    return freqs[1:], power[1:]


MIN_CYCLES = 4


def _is_harmonic(j, k0):
    # one bin of slack for series whose length is not a multiple of the period
    m = max(1, round(j / k0))
    return abs(j - m * k0) <= 1


def dominant_schedule(frequencies, powers):
    """``(is_dominant, period_days, ratio)`` from a periodogram.

    Plain rule: highest power over the runner-up, dominant when > 2. An
    impulse train spreads equal power over its harmonics, so when every
    bin above half the peak is a harmonic of the lowest such bin, those
    bins count as one peak at the fundamental frequency.
    """
    f = np.asarray(frequencies, dtype=float)
    p = np.asarray(powers, dtype=float)
    if f.size == 0:
        raise DataError("empty spectrum")
    top = float(np.max(p))
    if top <= 0:
        return False, float("nan"), 1.0
    i_max = int(np.argmax(p))
    strong = np.flatnonzero(p > top / DOMINANCE_RATIO)
    peak_bins = [i_max]
    period = 1.0 / f[i_max]
    if strong.size > 1:
        bins = np.rint(f[strong] / f[0]).astype(int)
        k0 = bins.min()
        if k0 >= MIN_CYCLES and all(_is_harmonic(j, k0) for j in bins):
            peak_bins = list(strong)
            period = 1.0 / f[strong[np.argmin(bins)]]
    rest = np.delete(p, peak_bins)
    second = float(np.max(rest)) if rest.size else 0.0
    ratio = top / second if second > 0 else float("inf")
    return bool(ratio > DOMINANCE_RATIO), float(period), float(ratio)


def schedule_phase(upload_days, period):
    """Circular mean of upload days modulo ``period``, in [0, period)."""
    ang = 2 * np.pi * (np.asarray(upload_days, dtype=float) % period) / period
    mean = np.angle(np.mean(np.exp(1j * ang)))
    return float((mean % (2 * np.pi)) * period / (2 * np.pi))


def _window_deltas(x, days):
    out = []
    for t in days:
        if t - GAIN_WINDOW < 0 or t + GAIN_WINDOW > x.size:
            out.append(np.nan)
        else:
            out.append(x[t : t + GAIN_WINDOW].sum() - x[t - GAIN_WINDOW : t].sum())
    return np.array(out)


def classify_uploads(uploads, period):
    days = np.flatnonzero(np.asarray(uploads) == 1)
    phase = schedule_phase(days, period)
    r = (days - phase) % period
    dist = np.minimum(r, period - r)
    return days, dist <= SCHEDULE_WINDOW


def off_schedule_gain(series: ChannelSeries, schedule_period, views=None, comments=None):
    """Fraction of off-schedule uploads whose 7-day effect beats the on-schedule median.

    Returns ``(view_gain_frac, comment_gain_frac)``; the comment fraction is
    NaN when no comment series is available.
    """
    views = aggregate_views(series) if views is None else np.asarray(views, dtype=float)
    comments = series.comments if comments is None else np.asarray(comments, dtype=float)
    days, on = classify_uploads(series.uploads, float(schedule_period))
    if not np.any(~on):
        raise NoOffScheduleUploads("every upload falls on the schedule")
    if not np.any(on):
        raise DataError("no on-schedule uploads to compare against")

    def frac(x):
        if x is None:
            return float("nan")
        delta = _window_deltas(x, days)
        ref = delta[on & np.isfinite(delta)]
        off = delta[~on & np.isfinite(delta)]
        if ref.size == 0 or off.size == 0:
            raise DataError("uploads too close to the series ends for a 7-day window")
        return float(np.mean(off > np.median(ref)))

    return frac(views), frac(comments)


def is_daily_uploader(uploads, threshold=0.8):
    return float(np.mean(np.asarray(uploads) == 1)) > threshold


# ---- channel CSV ingestion -----------------------------------------------

CHANNEL_COLUMNS = ("date", "channel_id", "video_id", "daily_views", "subscribers", "comments", "uploaded")


def read_channels(path):
    """Parse the long-format channel CSV into ``{channel_id: ChannelSeries}``.

    One row per (date, channel, video). ``uploaded`` marks the day a video
    went online; ``subscribers`` is the channel total for that day.
    """
    import pandas as pd

    try:
        df = pd.read_csv(path, dtype={"channel_id": str, "video_id": str})
    except pd.errors.EmptyDataError as exc:
        raise DataError(f"{path}: file is empty") from exc
    missing = [c for c in CHANNEL_COLUMNS if c not in df.columns]
    if missing:
        raise DataError(f"{path}: missing columns {missing}")
    if df.empty:
        raise DataError(f"{path}: no rows")
    df["date"] = pd.to_datetime(df["date"])
    out = {}
    for cid, g in df.groupby("channel_id", sort=True):
        days = (g["date"] - g["date"].min()).dt.days
        g = g.assign(day=days.values)
        span = int(days.max()) + 1
        index = np.arange(span)
        views = g.pivot_table(index="day", columns="video_id", values="daily_views", aggfunc="sum")
        views = views.reindex(index).to_numpy(dtype=float)
        daily = g.groupby("day")
        subs = daily["subscribers"].max().reindex(index).to_numpy(dtype=float)
        comments = daily["comments"].sum().reindex(index).to_numpy(dtype=float)
        uploads = daily["uploaded"].max().reindex(index).fillna(0).to_numpy(dtype=int)
        if np.isnan(subs).any():
            out[cid] = DataError(f"channel {cid!r}: missing days in the series")
            continue
        try:
            out[cid] = ChannelSeries(index, subs, views, uploads, comments, str(cid))
        except DataError as exc:
            out[cid] = exc
    return out


BATCH_HEADER = (
    "channel_id",
    "n_days",
    "box_ljung_p",
    "model_adequate",
    "wald_p",
    "granger_causes",
    "is_dominant",
    "period_days",
    "dominance_ratio",
    "view_gain_frac",
    "comment_gain_frac",
    "warning",
    "error",
)


@dataclass(frozen=True)
class DynamicsConfig:
    n_s: int = DEFAULT_LAGS
    n_v: int = DEFAULT_LAGS
    confidence: float = 0.95
    ljung_lags: int = 10
    views_mode: str = "daily"
    exclude_daily_uploaders: bool = False

    def __post_init__(self):
        if self.views_mode not in VIEW_MODES:
            raise DataError(f"views_mode must be one of {VIEW_MODES}")
        if not 0 < self.confidence < 1:
            raise DataError("confidence must lie in (0, 1)")


def analyze_channel(series: ChannelSeries, config: DynamicsConfig = DynamicsConfig()) -> dict:
    """One batch-report row. Stage failures land in ``error``; the rest is still filled."""
    alpha = 1.0 - config.confidence
    row = dict.fromkeys(BATCH_HEADER, "")
    row["channel_id"] = series.channel_id
    row["n_days"] = len(series.dates)
    errors = []
    if config.exclude_daily_uploaders and is_daily_uploader(series.uploads):
        row["error"] = "excluded: uploads on more than 80% of days"
        return row

    views = aggregate_views(series)
    if config.views_mode == "cumulative":
        views = np.cumsum(views)
    try:
        # count series carry a level; without a constant it leaks into the view lags
        model = fit_granger(series.subscribers, views, config.n_s, config.n_v, intercept=True)
        p_lb = box_ljung_pvalue(model.residuals, config.ljung_lags, config.n_s)
        p_w = wald_granger_pvalue(model)
        row.update(
            box_ljung_p=p_lb,
            model_adequate=p_lb >= alpha,
            wald_p=p_w,
            granger_causes=p_w < alpha,
            warning=model.warning,
        )
    except (DataError, CollinearDesign, SingularCovariance) as exc:
        errors.append(f"granger: {exc}")

    try:
        dominant, period, ratio = dominant_schedule(*periodogram(series.uploads))
        row.update(is_dominant=dominant, period_days=period, dominance_ratio=ratio)
        if dominant:
            row["view_gain_frac"], row["comment_gain_frac"] = off_schedule_gain(series, period)
    except (DataError, NoOffScheduleUploads) as exc:
        errors.append(f"schedule: {exc}")
    row["error"] = "; ".join(errors)
    return row
