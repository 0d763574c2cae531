"""Maximum-likelihood estimation of the pair-covariate coefficients.

For a fixed labeling ``e`` the coefficient part of the log-likelihood is

    l_e(gamma) = sum_{i<j} A_ij z_ij' gamma - 1/2 sum_kl O_kl log E_kl

with O and E the block edge weights and covariate exposures over ordered
pairs.  The function is concave in gamma (each log E_kl is convex), so
Newton iterations with a backtracking line search converge from any start;
a gradient-ascent step covers the degenerate-Hessian case.

Inference uses the plug-in rule: the asymptotic covariance bracket
``Sigma_hat - mu_hat mu_hat' / theta_hat`` is formed from global empirical
moments over all unordered pairs at gamma_hat, and the unknown rate scale
is estimated by total edge weight / theta_hat.

All functions are pure given their inputs.  Per-pair accumulations run in a
single deterministic pass, so results are bit-stable across calls.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .network import Network, check_labeling, community_sizes, pair_index


class ModelDegeneracyError(RuntimeError):
    """A block carries edges but zero covariate exposure."""


class CollinearCovariatesError(RuntimeError):
    """The covariate moment matrix is singular (e.g. a constant column)."""


@dataclass(frozen=True)
class BlockMoments:
    """Per-block empirical exposure moments at a coefficient vector.

    ``theta[k,l]`` is the mean of exp(z'gamma) over pairs in block (k,l);
    ``mu[k,l]`` and ``sigma[k,l]`` are the matching first and second
    z-moments.  Blocks with no pairs hold zeros.  ``pair_counts`` counts
    ordered pairs per block.
    """

    theta: np.ndarray
    mu: np.ndarray
    sigma: np.ndarray
    pair_counts: np.ndarray


@dataclass(frozen=True)
class GammaFit:
    """Fitted coefficients with optional plug-in inference.

    ``cov``, ``se`` and ``t_stats`` are filled by :func:`gamma_inference`;
    they are None straight out of :func:`fit_gamma`.
    """

    gamma_hat: np.ndarray
    converged: bool
    iterations: int
    final_grad_norm: float
    loglik: float
    cov: np.ndarray | None = None
    se: np.ndarray | None = None
    t_stats: np.ndarray | None = None

    @property
    def p(self) -> int:
        return len(self.gamma_hat)


@dataclass(frozen=True)
class FitOptions:
    init: np.ndarray | None = None
    tol: float = 1e-8
    max_iter: int = 100


def _block_o(network: Network, labels, k: int) -> np.ndarray:
    """Block edge weights over ordered pairs (diagonal counts edges twice)."""
    bi = labels[network.edge_i]
    bj = labels[network.edge_j]
    w = network.edge_w.astype(np.float64)
    o = np.zeros((k, k))
    np.add.at(o, (bi, bj), w)
    np.add.at(o, (bj, bi), w)
    return o


def _sym(vec: np.ndarray, k: int) -> np.ndarray:
    m = vec.reshape(k, k)
    return m + np.triu(m, 1).T


def _block_sums(network: Network, labels, k: int, gamma, order: int):
    """Sums over unordered pairs, grouped by unordered block {a, b}.

    Returns (cnt, sv[, sz[, szz]]) up to the requested moment order, each a
    symmetric (k, k[, p[, p]]) array of unordered-pair totals.  Ratios of
    these totals equal the corresponding ordered-pair ratios.
    """
    iu, ju = network.pair_nodes()
    li, lj = labels[iu], labels[ju]
    flat = np.minimum(li, lj) * k + np.maximum(li, lj)
    v = network.exposures(gamma)
    p = network.p

    cnt = _sym(np.bincount(flat, minlength=k * k).astype(np.float64), k)
    sv = _sym(np.bincount(flat, weights=v, minlength=k * k), k)
    out = [cnt, sv]
    if order >= 1:
        sz = np.zeros((k, k, p))
        vz = v[:, None] * network.z if p else np.zeros((len(v), 0))
        for a in range(p):
            sz[:, :, a] = _sym(np.bincount(flat, weights=vz[:, a], minlength=k * k), k)
        out.append(sz)
    if order >= 2:
        szz = np.zeros((k, k, p, p))
        for a in range(p):
            for b in range(a, p):
                s = _sym(np.bincount(flat, weights=vz[:, a] * network.z[:, b],
                                     minlength=k * k), k)
                szz[:, :, a, b] = s
                szz[:, :, b, a] = s
        out.append(szz)
    return tuple(out)


def _ordered_e(sv: np.ndarray) -> np.ndarray:
    """Ordered-pair exposure matrix from unordered totals."""
    return sv + np.diag(np.diag(sv))


def _edge_z_sum(network: Network) -> np.ndarray:
    """sum_{i<j} A_ij z_ij."""
    if network.p == 0:
        return np.zeros(0)
    idx = pair_index(network.edge_i, network.edge_j, network.n)
    return network.edge_w.astype(np.float64) @ network.z[idx]


def _loglik_from(o, e, az, gamma) -> float:
    active = o > 0
    if np.any(active & (e <= 0)):
        raise ModelDegeneracyError(
            "a block has positive edge weight but zero covariate exposure")
    term1 = float(az @ gamma) if len(gamma) else 0.0
    return term1 - 0.5 * float(np.sum(o[active] * np.log(e[active])))


def block_moments(network: Network, labels, k: int, gamma) -> BlockMoments:
    """Empirical per-block exposure moments (means over block pairs)."""
    labels = check_labeling(labels, k, network.n)
    cnt, sv, sz, szz = _block_sums(network, labels, k, gamma, order=2)
    safe = np.where(cnt > 0, cnt, 1.0)
    return BlockMoments(theta=sv / safe,
                        mu=sz / safe[:, :, None],
                        sigma=szz / safe[:, :, None, None],
                        pair_counts=cnt + np.diag(np.diag(cnt)))


def gamma_loglik(network: Network, labels, k: int, gamma) -> float:
    """Coefficient part of the log-likelihood at a fixed labeling."""
    gamma = np.asarray(gamma, dtype=np.float64)
    labels = check_labeling(labels, k, network.n)
    _, sv = _block_sums(network, labels, k, gamma, order=0)
    o = _block_o(network, labels, k)
    return _loglik_from(o, _ordered_e(sv), _edge_z_sum(network), gamma)


def gamma_grad(network: Network, labels, k: int, gamma) -> np.ndarray:
    """Analytic gradient of :func:`gamma_loglik`."""
    gamma = np.asarray(gamma, dtype=np.float64)
    labels = check_labeling(labels, k, network.n)
    if network.p == 0:
        return np.zeros(0)
    _, sv, sz = _block_sums(network, labels, k, gamma, order=1)
    o = _block_o(network, labels, k)
    if np.any((o > 0) & (_ordered_e(sv) <= 0)):
        raise ModelDegeneracyError(
            "a block has positive edge weight but zero covariate exposure")
    ratio = sz / np.where(sv > 0, sv, 1.0)[:, :, None]
    return _edge_z_sum(network) - 0.5 * np.einsum("kl,klp->p", o, ratio)


def gamma_hessian(network: Network, labels, k: int, gamma) -> np.ndarray:
    """Analytic Hessian of :func:`gamma_loglik`; negative semidefinite."""
    gamma = np.asarray(gamma, dtype=np.float64)
    labels = check_labeling(labels, k, network.n)
    p = network.p
    if p == 0:
        return np.zeros((0, 0))
    _, sv, sz, szz = _block_sums(network, labels, k, gamma, order=2)
    o = _block_o(network, labels, k)
    safe = np.where(sv > 0, sv, 1.0)
    m1 = sz / safe[:, :, None]
    m2 = szz / safe[:, :, None, None]
    spread = m2 - m1[:, :, :, None] * m1[:, :, None, :]
    h = -0.5 * np.einsum("kl,klpq->pq", o, spread)
    return (h + h.T) / 2.0


def fit_gamma(network: Network, labels, k: int,
              options: FitOptions | None = None) -> GammaFit:
    """Maximize the coefficient log-likelihood by damped Newton ascent.

    Starts from zero coefficients unless ``options.init`` says otherwise.
    Falls back to a gradient step whenever the Newton system is singular or
    fails to give an ascent direction.  The returned ``converged`` flag is
    honest: it reports whether the gradient-norm criterion was met within
    the iteration budget.  Accepted steps never decrease the objective.
    """
    opts = options or FitOptions()
    labels = check_labeling(labels, k, network.n)
    if np.any(community_sizes(labels, k) == 0):
        raise ValueError("labeling must keep every community nonempty")
    p = network.p
    gamma = (np.zeros(p) if opts.init is None
             else np.asarray(opts.init, dtype=np.float64).copy())
    if gamma.shape != (p,):
        raise ValueError(f"init must have length p={p}")

    o = _block_o(network, labels, k)
    az = _edge_z_sum(network)

    def loglik_at(g):
        _, sv = _block_sums(network, labels, k, g, order=0)
        return _loglik_from(o, _ordered_e(sv), az, g)

    if p == 0:
        return GammaFit(gamma_hat=gamma, converged=True, iterations=0,
                        final_grad_norm=0.0, loglik=loglik_at(gamma))

    def full_eval(g):
        _, sv, sz, szz = _block_sums(network, labels, k, g, order=2)
        ll = _loglik_from(o, _ordered_e(sv), az, g)
        safe = np.where(sv > 0, sv, 1.0)
        m1 = sz / safe[:, :, None]
        m2 = szz / safe[:, :, None, None]
        grad = az - 0.5 * np.einsum("kl,klp->p", o, m1)
        spread = m2 - m1[:, :, :, None] * m1[:, :, None, :]
        hess = -0.5 * np.einsum("kl,klpq->pq", o, spread)
        return ll, grad, (hess + hess.T) / 2.0

    ll, grad, hess = full_eval(gamma)
    iterations = 0
    converged = bool(np.max(np.abs(grad)) <= opts.tol)
    while not converged and iterations < opts.max_iter:
        iterations += 1
        newton = None
        try:
            cand = np.linalg.solve(-hess, grad)
            if np.all(np.isfinite(cand)):
                newton = cand
        except np.linalg.LinAlgError:
            pass

        noise_floor = 64.0 * np.finfo(float).eps * (1.0 + abs(ll))
        if newton is not None:
            slope_n = float(grad @ newton)
            if (slope_n <= noise_floor
                    and np.max(np.abs(newton)) <= 1e-4 * (1.0 + np.max(np.abs(gamma)))):
                # terminal quadratic phase: the predicted gain is below the
                # float resolution of ll, so a line search cannot see it;
                # the tiny raw Newton step is the only way to keep driving
                # the gradient down to tolerance
                gamma = gamma + newton
                ll, grad, hess = full_eval(gamma)
                converged = bool(np.max(np.abs(grad)) <= opts.tol)
                continue

        if newton is not None and float(grad @ newton) > 0:
            step, t = newton, 1.0
        else:
            step = grad
            curvature = float(np.linalg.norm(hess, 2))
            t = 1.0 / (1.0 + curvature)
        slope = float(grad @ step)

        accepted_ll = None
        for _ in range(60):
            cand_ll = loglik_at(gamma + t * step)
            if np.isfinite(cand_ll) and cand_ll >= ll + 1e-4 * t * slope:
                accepted_ll = cand_ll
                break
            t *= 0.5
        if accepted_ll is None or accepted_ll < ll:
            break  # no ascent at float precision; report honestly below
        gamma = gamma + t * step
        ll, grad, hess = full_eval(gamma)
        converged = bool(np.max(np.abs(grad)) <= opts.tol)

    return GammaFit(gamma_hat=gamma, converged=converged, iterations=iterations,
                    final_grad_norm=float(np.max(np.abs(grad))), loglik=ll)


def global_moments(network: Network, gamma):
    """(theta, mu, sigma): exposure-moment means over all unordered pairs."""
    v = network.exposures(gamma)
    theta = float(v.mean())
    if network.p == 0:
        return theta, np.zeros(0), np.zeros((0, 0))
    mu = (network.z * v[:, None]).mean(axis=0)
    sigma = np.einsum("np,n,nq->pq", network.z, v, network.z) / len(v)
    return theta, mu, (sigma + sigma.T) / 2.0


def gamma_inference(network: Network, fit: GammaFit) -> GammaFit:
    """Fill covariance, standard errors and t statistics by plug-in.

    cov = [ (W / theta_hat) (Sigma_hat - mu_hat mu_hat' / theta_hat) ]^-1
    with W the total edge weight and the moments taken at gamma_hat over
    all unordered pairs.
    """
    if not fit.converged:
        raise ValueError("inference requires a converged fit")
    if fit.p == 0:
        return replace(fit, cov=np.zeros((0, 0)), se=np.zeros(0),
                       t_stats=np.zeros(0))
    theta, mu, sigma = global_moments(network, fit.gamma_hat)
    bracket = sigma - np.outer(mu, mu) / theta
    info = (network.total_weight / theta) * bracket
    cond = np.linalg.cond(info)
    if not np.isfinite(cond) or cond > 1e12:
        raise CollinearCovariatesError(
            "covariate moment matrix is singular or near-singular; the "
            "covariates are collinear (for instance a constant column)")
    cov = np.linalg.inv(info)
    cov = (cov + cov.T) / 2.0
    se = np.sqrt(np.clip(np.diag(cov), 0.0, None))
    with np.errstate(divide="ignore", invalid="ignore"):
        t = np.where(se > 0, fit.gamma_hat / se, np.inf * np.sign(fit.gamma_hat))
    return replace(fit, cov=cov, se=se, t_stats=t)
