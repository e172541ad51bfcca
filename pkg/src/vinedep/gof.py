"""Goodness of fit via the information-matrix equality H + C = 0.

The null distribution of the statistic is obtained by parametric bootstrap
(simulate from the fitted vine, re-estimate parameters with structure and
families fixed, recompute). The asymptotic chi-square route needs third
derivatives that finite differences do not deliver reliably.
"""

import json
from dataclasses import asdict, dataclass

import numpy as np

from .errors import DataError, SingularCurvature, TestUnreliable, VineDepError
from .rvine import FittedVine, _as_matrix, pointwise_loglik, refit_parameters, vine_simulate
from .runtime import derive_seed, parallel_map

MIN_BOOTSTRAP = 20
MAX_FAILURE_FRAC = 0.10
REL_STEP = 1e-4
CURVATURE_TOL = 1e-4


@dataclass(frozen=True)
class WhiteTestResult:
    statistic: float
    p_value: float
    n_bootstrap: int
    per_replicate_stats: tuple
    n_failed: int = 0
    seed: int = 0

    def to_dict(self):
        out = asdict(self)
        out["per_replicate_stats"] = list(self.per_replicate_stats)
        return out

    def to_json(self, path=None):
        text = json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"
        if path is not None:
            with open(path, "w") as fh:
                fh.write(text)
        return text


def _param_slots(vine):
    return [(e, k) for e in vine.structure.edges for k in range(vine.edge_fits[e].spec.n_params)]


def _specs_at(vine, slots, theta):
    specs = dict(vine.specs)
    grouped = {}
    for (e, k), t in zip(slots, theta):
        grouped.setdefault(e, list(specs[e].params))[k] = float(t)
    for e, params in grouped.items():
        specs[e] = specs[e].with_params(params)
    return specs


def _valid(vine, slots, theta):
    try:
        _specs_at(vine, slots, theta)
    except VineDepError:
        return False
    return True


def _stencil(vine, slots, theta):
    """Step sizes and a centre shifted inward where a step would leave the domain."""
    theta = np.asarray(theta, dtype=float)
    steps = REL_STEP * np.maximum(1.0, np.abs(theta))
    centre = theta.copy()
    for i, h in enumerate(steps):
        up, down = centre.copy(), centre.copy()
        up[i] += h
        down[i] -= h
        if not _valid(vine, slots, up):
            centre[i] -= h
        elif not _valid(vine, slots, down):
            centre[i] += h
    return centre, steps


def info_matrices(vine: FittedVine, u):
    """Finite-difference Hessian of the log-likelihood and outer product of scores.

    Returns ``(hessian, outer_product)``, both ``p x p`` with ``p`` the total
    number of copula parameters.
    """
    data = _as_matrix(u, vine.d)
    slots = _param_slots(vine)
    p = len(slots)
    if p == 0:
        raise DataError("model has no parameters")
    theta0 = [vine.edge_fits[e].spec.params[k] for e, k in slots]
    centre, steps = _stencil(vine, slots, theta0)

    def ll_obs(theta):
        return pointwise_loglik(vine.structure, _specs_at(vine, slots, theta), data)

    def shifted(*moves):
        t = centre.copy()
        for i, s in moves:
            t[i] += s
        return t

    f0 = np.sum(ll_obs(centre))
    plus, minus = [], []
    for i in range(p):
        plus.append(ll_obs(shifted((i, steps[i]))))
        minus.append(ll_obs(shifted((i, -steps[i]))))
    grads = np.column_stack([(plus[i] - minus[i]) / (2 * steps[i]) for i in range(p)])
    outer = grads.T @ grads

    hess = np.empty((p, p))
    for i in range(p):
        hess[i, i] = (np.sum(plus[i]) - 2 * f0 + np.sum(minus[i])) / steps[i] ** 2
        for j in range(i + 1, p):
            hi, hj = steps[i], steps[j]
            fpp = np.sum(ll_obs(shifted((i, hi), (j, hj))))
            fpm = np.sum(ll_obs(shifted((i, hi), (j, -hj))))
            fmp = np.sum(ll_obs(shifted((i, -hi), (j, hj))))
            fmm = np.sum(ll_obs(shifted((i, -hi), (j, -hj))))
            hess[i, j] = hess[j, i] = (fpp - fpm - fmp + fmm) / (4 * hi * hj)
    hess = 0.5 * (hess + hess.T)

    eig = np.linalg.eigvalsh(hess)
    scale = max(1.0, float(np.max(np.abs(eig))))
    if eig[-1] > CURVATURE_TOL * scale:
        raise SingularCurvature(
            f"Hessian has a positive eigenvalue {eig[-1]:.4g}; the fit is not at a maximum"
        )
    return hess, 0.5 * (outer + outer.T)


def white_statistic(vine: FittedVine, u) -> float:
    """Frobenius norm of vech((H + C) / n)."""
    data = _as_matrix(u, vine.d)
    hess, outer = info_matrices(vine, data)
    m = (hess + outer) / data.shape[0]
    iu = np.triu_indices(m.shape[0])
    return float(np.linalg.norm(m[iu]))


def white_test(vine: FittedVine, u, n_bootstrap: int = 100, seed: int = 0) -> WhiteTestResult:
    """Parametric-bootstrap White test; deterministic given ``seed``.

    Replicate ``b`` draws its data with seed ``derive_seed(seed, "white", b)``.
    A replicate whose refit or curvature check fails is dropped; when 10% or
    more fail the test is declared unreliable.
    """
    if n_bootstrap < MIN_BOOTSTRAP:
        raise DataError(f"n_bootstrap must be >= {MIN_BOOTSTRAP}")
    data = _as_matrix(u, vine.d)
    n = data.shape[0]
    observed = white_statistic(vine, data)

    def replicate(b):
        sim = vine_simulate(vine, n, derive_seed(seed, "white", b))
        try:
            refit = refit_parameters(vine, sim)
            return white_statistic(refit, sim)
        except VineDepError:
            return None

    stats = parallel_map(replicate, range(n_bootstrap))
    ok = [s for s in stats if s is not None]
    failed = n_bootstrap - len(ok)
    if failed >= MAX_FAILURE_FRAC * n_bootstrap:
        raise TestUnreliable(f"{failed} of {n_bootstrap} bootstrap replicates failed")
    exceed = sum(s >= observed for s in ok)
    p_value = (1 + exceed) / (len(ok) + 1)
    return WhiteTestResult(
        statistic=observed,
        p_value=float(p_value),
        n_bootstrap=len(ok),
        per_replicate_stats=tuple(float(s) for s in ok),
        n_failed=failed,
        seed=int(seed),
    )
