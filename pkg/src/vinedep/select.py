"""Per-edge copula family selection: independence pre-test, MLE and AIC."""

from dataclasses import dataclass

import numpy as np
from scipy import optimize
from scipy.special import expit, logit

from .bicop import EPS, CopulaSpec, logpdf, param_from_tau
from .bicop.families import FAMILIES, RADIALLY_SYMMETRIC, get_family, t_ppf
from .dependence import kendall_tau
from .errors import (
    AllCandidatesFailed,
    ConvergenceFailure,
    DataError,
    LengthMismatch,
    UnattainableTau,
    VineDepError,
)

INDEPENDENCE_THRESHOLD = 2.0
MAX_ITER = 200
GRID_SIZE = 8


@dataclass(frozen=True)
class EdgeFit:
    spec: CopulaSpec
    loglik: float
    aic: float
    n_params: int

    @classmethod
    def from_loglik(cls, spec, loglik):
        k = spec.n_params
        return cls(spec, float(loglik), 2.0 * k - 2.0 * float(loglik), k)

    @classmethod
    def independence(cls):
        return cls.from_loglik(CopulaSpec("Independence"), 0.0)


def independence_statistic(tau, n):
    return np.sqrt(9.0 * n * (n - 1) / (2.0 * (2 * n + 5))) * abs(tau)


def independence_test(tau: float, n: int) -> bool:
    """True when the tau-based z-statistic is below 2 (independence accepted)."""
    if n < 10:
        raise DataError("independence_test needs n >= 10")
    return bool(independence_statistic(tau, n) < INDEPENDENCE_THRESHOLD)


def default_candidates(tau, families=None):
    """(family, rotation) pairs worth fitting for an edge with empirical ``tau``.

    Families that cover both signs through their parameter are offered
    unrotated. The others get rotations 0/180 for positive dependence and
    90/270 for negative dependence.
    """
    names = [get_family(f).name for f in (families or FAMILIES)]
    out = []
    for name in names:
        if name in RADIALLY_SYMMETRIC:
            out.append((name, 0))
        elif tau >= 0:
            out.extend([(name, 0), (name, 180)])
        else:
            out.extend([(name, 90), (name, 270)])
    return out


def _check_pair(u, v):
    u = np.asarray(u, dtype=float).ravel()
    v = np.asarray(v, dtype=float).ravel()
    if u.size != v.size:
        raise LengthMismatch(f"u has {u.size} values, v has {v.size}")
    if u.size < 30:
        raise DataError("MLE needs at least 30 observations")
    if not (np.all((u > 0) & (u < 1)) and np.all((v > 0) & (v < 1))):
        raise DataError("observations must lie in (0, 1)")
    return u, v


def _loglik(family, rotation, params, u, v):
    try:
        spec = CopulaSpec(family, rotation, tuple(params))
    except VineDepError:
        return -np.inf
    with np.errstate(all="ignore"):
        ll = np.sum(logpdf(spec, u, v))
    return ll if np.isfinite(ll) else -np.inf


def _signed_tau(tau, rotation):
    return -tau if rotation in (90, 270) else tau


def _fit_one_param(fam, rotation, u, v, tau):
    lo, hi = fam.opt_bounds[0]
    obj = lambda th: -_loglik(fam.name, rotation, (th,), u, v)
    start = None
    try:
        th0 = param_from_tau(fam.name, _signed_tau(tau, rotation), rotation if fam.name not in RADIALLY_SYMMETRIC else 0).params[0]
        if lo <= th0 <= hi:
            start = th0
    except (UnattainableTau, VineDepError):
        pass

    res = optimize.minimize_scalar(
        obj,
        bounds=(lo, hi),
        method="bounded",
        options={"xatol": 1e-10, "maxiter": MAX_ITER},
    )
    best_x, best_f = float(res.x), float(res.fun)
    # the bounded Brent search never probes its end points
    for cand in (lo, hi, start):
        if cand is not None:
            f = obj(cand)
            if f < best_f:
                best_x, best_f = float(cand), f
    return (best_x,), -best_f


def _to_box(z, bounds):
    return tuple(lo + (hi - lo) * expit(zi) for zi, (lo, hi) in zip(z, bounds))


def _from_box(p, bounds):
    out = []
    for pi, (lo, hi) in zip(p, bounds):
        frac = np.clip((pi - lo) / (hi - lo), 1e-6, 1 - 1e-6)
        out.append(logit(frac))
    return np.array(out)


def _fit_two_param(fam, rotation, u, v, tau):
    bounds = fam.opt_bounds
    obj_native = lambda p: -_loglik(fam.name, rotation, p, u, v)

    # coarse 8 x 8 grid on the admissible box, interior points only
    fracs = (np.arange(GRID_SIZE) + 0.5) / GRID_SIZE
    grids = [lo + (hi - lo) * fracs for lo, hi in bounds]
    if fam.name == "Student t":
        rho0 = np.sin(np.pi * _signed_tau(tau, rotation) / 2.0)
        grids[0] = np.append(grids[0], np.clip(rho0, *bounds[0]))
    best_p, best_f = None, np.inf
    for a in grids[0]:
        for b in grids[1]:
            f = obj_native((a, b))
            if f < best_f:
                best_p, best_f = (a, b), f
    if best_p is None:
        raise ConvergenceFailure(f"{fam.name}: no finite log-likelihood on the start grid")

    obj = lambda z: obj_native(_to_box(z, bounds))
    res = optimize.minimize(
        obj,
        _from_box(best_p, bounds),
        method="Nelder-Mead",
        options={"xatol": 1e-8, "fatol": 1e-10, "maxiter": MAX_ITER, "maxfev": 4 * MAX_ITER},
    )
    params = _to_box(res.x, bounds)
    f = obj_native(params)
    if f > best_f:
        params, f = best_p, best_f
    return tuple(float(p) for p in params), -f


def _fit_student_t(fam, rotation, u, v, tau):
    """Profile likelihood: outer search over log(nu), inner search over rho.

    Quantiles depend on nu only, so they are computed once per outer step.
    """
    (rlo, rhi), (nlo, nhi) = fam.opt_bounds
    uu, vv = np.clip(u, EPS, 1 - EPS), np.clip(v, EPS, 1 - EPS)
    if rotation in (90, 180):
        uu = 1 - uu
    if rotation in (180, 270):
        vv = 1 - vv
    cache = {}

    def profile(log_nu):
        nu = float(np.exp(log_nu))
        x, y = t_ppf(nu, uu), t_ppf(nu, vv)
        neg = lambda r: -np.sum(fam.logpdf_xy(x, y, r, nu))
        res = optimize.minimize_scalar(
            neg, bounds=(rlo, rhi), method="bounded", options={"xatol": 1e-10}
        )
        cache[log_nu] = (float(res.x), nu)
        return float(res.fun)

    grid = np.linspace(np.log(nlo), np.log(nhi), GRID_SIZE)
    values = [profile(g) for g in grid]
    i = int(np.argmin(values))
    lo_b, hi_b = grid[max(i - 1, 0)], grid[min(i + 1, GRID_SIZE - 1)]
    res = optimize.minimize_scalar(
        profile, bounds=(lo_b, hi_b), method="bounded", options={"xatol": 1e-8, "maxiter": MAX_ITER}
    )
    best = min([(values[i], grid[i]), (float(res.fun), float(res.x))])
    rho, nu = cache[best[1]]
    return (rho, nu), -best[0]


def fit_bicop_mle(u, v, family, rotation=0, tau=None) -> EdgeFit:
    """Maximum-likelihood fit of one (family, rotation) candidate.

    One-parameter families use bounded Brent/golden-section search over the
    family's admissible box (the tau-inversion value is checked as a
    candidate as well). Two-parameter families start from the best point of
    an 8 x 8 grid and are refined with Nelder-Mead on logit-transformed
    coordinates; the Student t copula is profiled over its degrees of
    freedom instead.
    """
    u, v = _check_pair(u, v)
    fam = get_family(family)
    if fam.n_params == 0:
        return EdgeFit.independence()
    if tau is None:
        tau = kendall_tau(u, v)
    if fam.n_params == 1:
        params, ll = _fit_one_param(fam, rotation, u, v, tau)
    elif fam.name == "Student t":
        params, ll = _fit_student_t(fam, rotation, u, v, tau)
    else:
        params, ll = _fit_two_param(fam, rotation, u, v, tau)
    if not np.isfinite(ll):
        raise ConvergenceFailure(f"{fam.name} (rotation {rotation}): non-finite log-likelihood")
    return EdgeFit.from_loglik(CopulaSpec(fam.name, rotation, params), ll)


def select_family_aic(u, v, candidates, tau=None) -> EdgeFit:
    """Fit every candidate and keep the one with the smallest AIC.

    Ties go to the candidate with fewer parameters, then to the earlier
    entry of ``candidates``.
    """
    candidates = list(candidates)
    if not candidates:
        raise ValueError("candidate list is empty")
    u, v = _check_pair(u, v)
    if tau is None:
        tau = kendall_tau(u, v)
    best, best_key = None, None
    errors = []
    for order, (family, rotation) in enumerate(candidates):
        try:
            fit = fit_bicop_mle(u, v, family, rotation, tau=tau)
        except VineDepError as exc:
            errors.append(f"{family}/{rotation}: {exc}")
            continue
        key = (fit.aic, fit.n_params, order)
        if best_key is None or key < best_key:
            best, best_key = fit, key
    if best is None:
        raise AllCandidatesFailed("; ".join(errors))
    return best
