"""Closed-form building blocks for the unrotated copula families.

Every family works on arrays already clipped to the open unit square and
exposes:

``cdf(u, v, p)``, ``logpdf(u, v, p)``
``h1(u, v, p)`` = dC/du = P(V <= v | U = u)
``h2(u, v, p)`` = dC/dv = P(U <= u | V = v)
``hinv1(q, u, p)`` solves h1(u, v) = q for v
``hinv2(q, v, p)`` solves h2(u, v) = q for u

Inverses without a closed form fall back to vectorised bisection.
"""

import numpy as np
from scipy import integrate, optimize, special

from ..errors import InvalidParameter, UnattainableTau

BISECT_ITERS = 54


def _log_sum_exp_minus_one(a, b):
    """log(exp(a) + exp(b) - 1) for a, b >= 0 without overflow."""
    m = np.maximum(a, b)
    return m + np.log(np.exp(a - m) + np.exp(b - m) - np.exp(-m))


def _bisect(func, q, lo=0.0, hi=1.0, iters=BISECT_ITERS):
    """Vectorised bisection for an increasing ``func`` on [lo, hi]."""
    q = np.asarray(q, dtype=float)
    lo = np.full(q.shape, lo)
    hi = np.full(q.shape, hi)
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        above = func(mid) > q
        hi = np.where(above, mid, hi)
        lo = np.where(above, lo, mid)
    return 0.5 * (lo + hi)


class Family:
    name = ""
    n_params = 0
    exchangeable = True
    # admissible domain: (low, high, low_open, high_open) per parameter
    domain = ()
    # box searched by the optimizer, strictly inside the domain
    opt_bounds = ()
    has_closed_tau = False

    def validate(self, params):
        params = tuple(float(p) for p in params)
        if len(params) != self.n_params:
            raise InvalidParameter(
                f"{self.name} expects {self.n_params} parameter(s), got {len(params)}"
            )
        for i, (p, (lo, hi, lo_open, hi_open)) in enumerate(zip(params, self.domain)):
            bad = (
                not np.isfinite(p)
                or p < lo
                or p > hi
                or (lo_open and p == lo)
                or (hi_open and p == hi)
            )
            if bad:
                raise InvalidParameter(f"{self.name} parameter {i + 1} = {p} outside domain")
        return params

    def h1(self, u, v, p):
        return self.h2(v, u, p)

    def hinv2(self, q, v, p):
        return _bisect(lambda x: self.h2(x, v, p), q)

    def hinv1(self, q, u, p):
        if self.exchangeable:
            return self.hinv2(q, u, p)
        return _bisect(lambda x: self.h1(u, x, p), q)

    def pdf(self, u, v, p):
        return np.exp(self.logpdf(u, v, p))

    def tau(self, p):
        return None

    def tail(self, p):
        return 0.0, 0.0

    def tau_to_param(self, tau):
        raise UnattainableTau(f"{self.name} has no one-parameter tau inversion")


class Independence(Family):
    name = "Independence"
    has_closed_tau = True

    def cdf(self, u, v, p):
        return u * v

    def logpdf(self, u, v, p):
        return np.zeros(np.broadcast(u, v).shape)

    def h2(self, u, v, p):
        return np.broadcast_to(u, np.broadcast(u, v).shape).astype(float)

    def hinv2(self, q, v, p):
        return np.broadcast_to(q, np.broadcast(q, v).shape).astype(float)

    def tau(self, p):
        return 0.0


def _bvn_cdf(h, k, rho):
    """Bivariate standard normal CDF via Owen's T function."""
    h = np.where(h == 0, 1e-300, h)
    k = np.where(k == 0, 1e-300, k)
    s = np.sqrt(1.0 - rho * rho)
    a_h = (k - rho * h) / (h * s)
    a_k = (h - rho * k) / (k * s)
    beta = np.where(h * k < 0, 0.5, 0.0)
    return (
        0.5 * special.ndtr(h)
        + 0.5 * special.ndtr(k)
        - special.owens_t(h, a_h)
        - special.owens_t(k, a_k)
        - beta
    )


class Gaussian(Family):
    name = "Gaussian"
    n_params = 1
    domain = ((-1.0, 1.0, True, True),)
    opt_bounds = ((-0.999, 0.999),)
    has_closed_tau = True

    def cdf(self, u, v, p):
        return np.clip(_bvn_cdf(special.ndtri(u), special.ndtri(v), p[0]), 0.0, 1.0)

    def logpdf(self, u, v, p):
        r = p[0]
        x, y = special.ndtri(u), special.ndtri(v)
        one_m = 1.0 - r * r
        return -0.5 * np.log(one_m) - (r * r * (x * x + y * y) - 2 * r * x * y) / (2 * one_m)

    def h2(self, u, v, p):
        r = p[0]
        return special.ndtr((special.ndtri(u) - r * special.ndtri(v)) / np.sqrt(1 - r * r))

    def hinv2(self, q, v, p):
        r = p[0]
        return special.ndtr(special.ndtri(q) * np.sqrt(1 - r * r) + r * special.ndtri(v))

    def tau(self, p):
        return 2.0 / np.pi * np.arcsin(p[0])

    def tau_to_param(self, tau):
        if not -1 < tau < 1:
            raise UnattainableTau(f"tau={tau} outside (-1, 1)")
        return (float(np.sin(np.pi * tau / 2.0)),)


def t_ppf(nu, u):
    """Student-t quantile via the inverse regularised incomplete beta function.

    Faster than ``stdtrit``; the two branches keep full precision near the
    median and in the tails.
    """
    u = np.asarray(u, dtype=float)
    q = np.minimum(u, 1.0 - u)
    tail = q < 0.25
    with np.errstate(all="ignore"):
        z = special.betaincinv(nu / 2.0, 0.5, np.where(tail, 2.0 * q, 0.25))
        w = special.betaincinv(0.5, nu / 2.0, np.where(tail, 0.5, np.abs(1.0 - 2.0 * u)))
        x2 = np.where(tail, nu * (1.0 - z) / z, nu * w / (1.0 - w))
    return np.where(u < 0.5, -1.0, 1.0) * np.sqrt(x2)


class StudentT(Family):
    name = "Student t"
    n_params = 2
    domain = ((-1.0, 1.0, True, True), (2.0, np.inf, True, True))
    opt_bounds = ((-0.999, 0.999), (2.01, 60.0))
    has_closed_tau = True
    _nodes, _weights = np.polynomial.legendre.leggauss(96)

    def logpdf(self, u, v, p):
        r, nu = p
        return self.logpdf_xy(t_ppf(nu, u), t_ppf(nu, v), r, nu)

    @staticmethod
    def logpdf_xy(x, y, r, nu):
        """Log-density from precomputed t quantiles ``x``, ``y``."""
        one_m = 1.0 - r * r
        const = (
            special.gammaln((nu + 2) / 2)
            + special.gammaln(nu / 2)
            - 2 * special.gammaln((nu + 1) / 2)
            - 0.5 * np.log(one_m)
        )
        quad = (x * x + y * y - 2 * r * x * y) / (nu * one_m)
        return (
            const
            - (nu + 2) / 2 * np.log1p(quad)
            + (nu + 1) / 2 * (np.log1p(x * x / nu) + np.log1p(y * y / nu))
        )

    def h2(self, u, v, p):
        r, nu = p
        x, y = t_ppf(nu, u), t_ppf(nu, v)
        scale = np.sqrt((nu + y * y) * (1 - r * r) / (nu + 1))
        return special.stdtr(nu + 1, (x - r * y) / scale)

    def hinv2(self, q, v, p):
        r, nu = p
        y = t_ppf(nu, v)
        scale = np.sqrt((nu + y * y) * (1 - r * r) / (nu + 1))
        return special.stdtr(nu, t_ppf(nu + 1, q) * scale + r * y)

    def cdf(self, u, v, p):
        # C(u, v) = int_0^v h2(u, s) ds over the shorter side of v; the
        # substitution s = L z^4 tames the endpoint singularity of the quantiles
        u, v = np.broadcast_arrays(np.asarray(u, float), np.asarray(v, float))
        lower = v <= 0.5
        length = np.where(lower, v, 1.0 - v)
        z = 0.5 * (self._nodes + 1.0)
        jac = 2.0 * self._weights * z**3
        off = length[..., None] * z**4
        s = np.where(lower[..., None], off, 1.0 - off)
        with np.errstate(invalid="ignore", divide="ignore"):
            vals = np.nan_to_num(self.h2(u[..., None], s, p), nan=0.0)
        piece = length * np.sum(jac * vals, axis=-1)
        return np.clip(np.where(lower, piece, u - piece), 0.0, 1.0)

    def tau(self, p):
        return 2.0 / np.pi * np.arcsin(p[0])

    def tail(self, p):
        r, nu = p
        lam = 2.0 * special.stdtr(nu + 1, -np.sqrt((nu + 1) * (1 - r) / (1 + r)))
        return float(lam), float(lam)


class Clayton(Family):
    name = "Clayton"
    n_params = 1
    domain = ((0.0, np.inf, True, True),)
    opt_bounds = ((1e-4, 50.0),)
    has_closed_tau = True

    def _log_s(self, u, v, th):
        return _log_sum_exp_minus_one(-th * np.log(u), -th * np.log(v))

    def cdf(self, u, v, p):
        th = p[0]
        return np.exp(-self._log_s(u, v, th) / th)

    def logpdf(self, u, v, p):
        th = p[0]
        return (
            np.log1p(th)
            - (1 + th) * (np.log(u) + np.log(v))
            - (1 / th + 2) * self._log_s(u, v, th)
        )

    def h2(self, u, v, p):
        th = p[0]
        return np.exp(-(th + 1) * np.log(v) - (1 / th + 1) * self._log_s(u, v, th))

    def hinv2(self, q, v, p):
        th = p[0]
        c = -th / (th + 1) * np.log(q)
        t = -th * np.log(v) + np.log(np.expm1(c))
        return np.exp(-np.logaddexp(t, 0.0) / th)

    def tau(self, p):
        return p[0] / (p[0] + 2.0)

    def tail(self, p):
        return float(2.0 ** (-1.0 / p[0])), 0.0

    def tau_to_param(self, tau):
        if not 0 < tau < 1:
            raise UnattainableTau(f"Clayton needs tau in (0, 1), got {tau}")
        return (2.0 * tau / (1.0 - tau),)


class Gumbel(Family):
    name = "Gumbel"
    n_params = 1
    domain = ((1.0, np.inf, False, True),)
    opt_bounds = ((1.0, 50.0),)
    has_closed_tau = True

    def _parts(self, u, v, th):
        x, y = -np.log(u), -np.log(v)
        log_s = np.logaddexp(th * np.log(x), th * np.log(y))
        a = np.exp(log_s / th)
        return x, y, log_s, a

    def cdf(self, u, v, p):
        return np.exp(-self._parts(u, v, p[0])[3])

    def logpdf(self, u, v, p):
        th = p[0]
        x, y, log_s, a = self._parts(u, v, th)
        return (
            -a
            + x
            + y
            + (th - 1) * (np.log(x) + np.log(y))
            + (1.0 / th - 2.0) * log_s
            + np.log(a + th - 1)
        )

    def h2(self, u, v, p):
        th = p[0]
        x, y, log_s, a = self._parts(u, v, th)
        return np.exp(-a + (1 - th) * np.log(a) + (th - 1) * np.log(y) + y)

    def tau(self, p):
        return 1.0 - 1.0 / p[0]

    def tail(self, p):
        return 0.0, float(2.0 - 2.0 ** (1.0 / p[0]))

    def tau_to_param(self, tau):
        if not 0 <= tau < 1:
            raise UnattainableTau(f"Gumbel needs tau in [0, 1), got {tau}")
        return (1.0 / (1.0 - tau),)


def _debye1(theta):
    if theta == 0:
        return 1.0
    val, _ = integrate.quad(lambda t: t / np.expm1(t) if t != 0 else 1.0, 0.0, theta)
    return val / theta


class Frank(Family):
    name = "Frank"
    n_params = 1
    domain = ((-np.inf, np.inf, True, True),)
    opt_bounds = ((-40.0, 40.0),)
    has_closed_tau = True
    _tiny = 1e-8

    def validate(self, params):
        params = super().validate(params)
        if params[0] == 0:
            raise InvalidParameter("Frank parameter must be nonzero")
        return params

    @staticmethod
    def _log_den(u, v, th):
        """log of e^{-th u} + e^{-th v} - e^{-th (u+v)} - e^{-th} for th > 0.

        Regrouped into two positive terms so nothing cancels at large th.
        """
        t1 = -th * u + np.log(-np.expm1(-th * v))
        t2 = -th * v + np.log(-np.expm1(-th * (1.0 - v)))
        return np.logaddexp(t1, t2)

    # negative parameters use C_{-th}(u, v) = u - C_th(u, 1 - v)

    def cdf(self, u, v, p):
        th = p[0]
        if abs(th) < self._tiny:
            return u * v
        if th < 0:
            return u - self.cdf(u, 1.0 - v, (-th,))
        if th < 1.0:
            return -np.log1p(np.expm1(-th * u) * np.expm1(-th * v) / np.expm1(-th)) / th
        return -(self._log_den(u, v, th) - np.log(-np.expm1(-th))) / th

    def logpdf(self, u, v, p):
        th = p[0]
        if abs(th) < self._tiny:
            return np.zeros(np.broadcast(u, v).shape)
        if th < 0:
            return self.logpdf(u, 1.0 - v, (-th,))
        return np.log(th * -np.expm1(-th)) - th * (u + v) - 2 * self._log_den(u, v, th)

    def h2(self, u, v, p):
        th = p[0]
        if abs(th) < self._tiny:
            return np.broadcast_to(u, np.broadcast(u, v).shape).astype(float)
        if th < 0:
            return self.h2(u, 1.0 - v, (-th,))
        return np.exp(-th * v + np.log(-np.expm1(-th * u)) - self._log_den(u, v, th))

    def hinv2(self, q, v, p):
        th = p[0]
        if abs(th) < self._tiny:
            return np.broadcast_to(q, np.broadcast(q, v).shape).astype(float)
        # u = -(log N - log D) / th with N, D sums of positive terms
        base = np.log1p(-q) - th * v
        log_n = np.logaddexp(base, np.log(q) - th)
        log_d = np.logaddexp(base, np.log(q))
        return -(log_n - log_d) / th

    def tau(self, p):
        th = p[0]
        return 1.0 - 4.0 / th * (1.0 - _debye1(th))

    def tau_to_param(self, tau):
        if not -1 < tau < 1 or tau == 0:
            raise UnattainableTau(f"Frank needs tau in (-1, 0) or (0, 1), got {tau}")
        sign = 1.0 if tau > 0 else -1.0
        f = lambda th: self.tau((th,)) - abs(tau)
        hi = 1.0
        while f(hi) < 0:
            hi *= 2.0
            if hi > 1e4:
                raise UnattainableTau(f"tau={tau} too extreme for Frank")
        return (sign * optimize.brentq(f, 1e-9, hi, xtol=1e-13),)


class Joe(Family):
    name = "Joe"
    n_params = 1
    domain = ((1.0, np.inf, False, True),)
    opt_bounds = ((1.0, 50.0),)
    has_closed_tau = True

    def _parts(self, u, v, th):
        a = np.exp(th * np.log1p(-u))
        b = np.exp(th * np.log1p(-v))
        return a, b, a + b - a * b

    def cdf(self, u, v, p):
        th = p[0]
        return 1.0 - np.exp(np.log(self._parts(u, v, th)[2]) / th)

    def logpdf(self, u, v, p):
        th = p[0]
        a, b, s = self._parts(u, v, th)
        return (
            (1 / th - 2) * np.log(s)
            + (th - 1) * (np.log1p(-u) + np.log1p(-v))
            + np.log(th - 1 + s)
        )

    def h2(self, u, v, p):
        th = p[0]
        a, b, s = self._parts(u, v, th)
        return np.exp((1 / th - 1) * np.log(s) + (th - 1) * np.log1p(-v)) * (1 - a)

    def tau(self, p):
        th = p[0]
        if abs(th - 2.0) < 1e-4:
            k = np.arange(1, 200001, dtype=float)
            return 1.0 - 4.0 * np.sum(1.0 / (k * (th * k + 2) * (th * (k - 1) + 2)))
        return 1.0 + 2.0 / (2.0 - th) * (special.digamma(2.0) - special.digamma(2.0 / th + 1.0))

    def tail(self, p):
        return 0.0, float(2.0 - 2.0 ** (1.0 / p[0]))

    def tau_to_param(self, tau):
        if not 0 <= tau < 1:
            raise UnattainableTau(f"Joe needs tau in [0, 1), got {tau}")
        if tau == 0:
            return (1.0,)
        f = lambda th: self.tau((th,)) - tau
        hi = 2.0
        while f(hi) < 0:
            hi *= 2.0
            if hi > 1e4:
                raise UnattainableTau(f"tau={tau} too extreme for Joe")
        return (optimize.brentq(f, 1.0, hi, xtol=1e-13),)


class BB7(Family):
    """Joe-Clayton copula."""

    name = "BB7"
    n_params = 2
    domain = ((1.0, np.inf, False, True), (0.0, np.inf, True, True))
    opt_bounds = ((1.0, 6.0), (1e-3, 25.0))

    def _parts(self, u, v, p):
        th, de = p
        lu, lv = np.log1p(-u), np.log1p(-v)
        # log x, log y and S - 1 stay accurate when u, v are close to 1
        log_x = np.log1p(-np.exp(th * lu))
        log_y = np.log1p(-np.exp(th * lv))
        log_s = np.log1p(np.expm1(-de * log_x) + np.expm1(-de * log_y))
        w = np.exp(-log_s / de)
        one_m_w = -np.expm1(-log_s / de)
        return lu, lv, log_x, log_y, log_s, w, one_m_w

    def cdf(self, u, v, p):
        th = p[0]
        one_m_w = self._parts(u, v, p)[-1]
        return -np.expm1(np.log(one_m_w) / th)

    def logpdf(self, u, v, p):
        th, de = p
        lu, lv, log_x, log_y, log_s, w, one_m_w = self._parts(u, v, p)
        return (
            np.log(th)
            + (th - 1) * (lu + lv)
            - (de + 1) * (log_x + log_y)
            + (1 / th - 2) * np.log(one_m_w)
            - (1 / de + 2) * log_s
            + np.log((1 + de) * one_m_w + (1 - 1 / th) * w)
        )

    def h2(self, u, v, p):
        th, de = p
        lu, lv, log_x, log_y, log_s, w, one_m_w = self._parts(u, v, p)
        return np.exp(
            (1 / th - 1) * np.log(one_m_w)
            - (1 / de + 1) * log_s
            - (de + 1) * log_y
            + (th - 1) * lv
        )

    def tail(self, p):
        th, de = p
        return float(2.0 ** (-1.0 / de)), float(2.0 - 2.0 ** (1.0 / th))


class BB8(Family):
    """Joe-Frank copula."""

    name = "BB8"
    n_params = 2
    domain = ((1.0, np.inf, False, True), (0.0, 1.0, True, False))
    opt_bounds = ((1.0, 8.0), (1e-3, 1.0))

    def _parts(self, u, v, p):
        th, de = p
        eta = -np.expm1(th * np.log1p(-de))
        lu, lv = np.log1p(-de * u), np.log1p(-de * v)
        x = -np.expm1(th * lu)
        y = -np.expm1(th * lv)
        s = (eta - x * y) / eta
        return eta, lu, lv, x, y, s

    def cdf(self, u, v, p):
        th, de = p
        s = self._parts(u, v, p)[-1]
        return -np.expm1(np.log(s) / th) / de

    def logpdf(self, u, v, p):
        th, de = p
        eta, lu, lv, x, y, s = self._parts(u, v, p)
        return (
            np.log(th * de / eta)
            + (th - 1) * (lu + lv)
            + (1 / th - 2) * np.log(s)
            + np.log1p(-x * y / (th * eta))
        )

    def h2(self, u, v, p):
        th, de = p
        eta, lu, lv, x, y, s = self._parts(u, v, p)
        return np.exp((1 / th - 1) * np.log(s) + (th - 1) * lv) * x / eta

    def tail(self, p):
        th, de = p
        if de == 1.0:
            return 0.0, float(2.0 - 2.0 ** (1.0 / th))
        return 0.0, 0.0


class Tawn(Family):
    """Tawn type 1 extreme-value copula.

    Stable tail dependence function
    ``l(x, y) = (1 - psi) x + ((psi x)^theta + y^theta)^(1/theta)``
    with ``x = -log u``, ``y = -log v``; the asymmetry weight sits on the
    first argument.
    """

    name = "Tawn"
    n_params = 2
    exchangeable = False
    domain = ((1.0, np.inf, False, True), (0.0, 1.0, False, False))
    opt_bounds = ((1.0, 20.0), (1e-3, 1.0))

    def _parts(self, u, v, p):
        th, psi = p
        x, y = -np.log(u), -np.log(v)
        with np.errstate(divide="ignore"):
            log_px = np.log(psi) + np.log(x)
        log_b = np.logaddexp(th * log_px, th * np.log(y)) / th
        b = np.exp(log_b)
        ell = (1 - psi) * x + b
        with np.errstate(divide="ignore", invalid="ignore"):
            # psi^theta x^(theta-1) B^(1-theta)
            gx = np.exp(th * np.log(psi) + (th - 1) * (np.log(x) - log_b))
        gy = np.exp((th - 1) * (np.log(y) - log_b))
        return x, y, log_b, ell, gx, gy

    def cdf(self, u, v, p):
        return np.exp(-self._parts(u, v, p)[3])

    def logpdf(self, u, v, p):
        th, psi = p
        x, y, log_b, ell, gx, gy = self._parts(u, v, p)
        lx = (1 - psi) + gx
        cross = (th - 1) * gx * gy / np.exp(log_b)
        return -ell + x + y + np.log(lx * gy + cross)

    def h1(self, u, v, p):
        psi = p[1]
        x, y, log_b, ell, gx, gy = self._parts(u, v, p)
        return np.exp(-ell + x) * ((1 - psi) + gx)

    def h2(self, u, v, p):
        x, y, log_b, ell, gx, gy = self._parts(u, v, p)
        return np.exp(-ell + y) * gy

    def tail(self, p):
        th, psi = p
        return 0.0, float(1.0 + psi - (1.0 + psi**th) ** (1.0 / th))


FAMILIES = {
    cls.name: cls()
    for cls in (Independence, Gaussian, StudentT, Clayton, Gumbel, Frank, Joe, BB7, BB8, Tawn)
}

# families whose rotations are redundant because they already cover both signs
RADIALLY_SYMMETRIC = ("Independence", "Gaussian", "Student t", "Frank")

ALIASES = {
    "independence": "Independence",
    "indep": "Independence",
    "gaussian": "Gaussian",
    "normal": "Gaussian",
    "student t": "Student t",
    "student": "Student t",
    "studentt": "Student t",
    "t": "Student t",
    "clayton": "Clayton",
    "gumbel": "Gumbel",
    "frank": "Frank",
    "joe": "Joe",
    "bb7": "BB7",
    "bb8": "BB8",
    "tawn": "Tawn",
    "tawn1": "Tawn",
}


def get_family(name):
    key = ALIASES.get(str(name).strip().lower())
    if key is None:
        raise InvalidParameter(f"unknown copula family {name!r}")
    return FAMILIES[key]
