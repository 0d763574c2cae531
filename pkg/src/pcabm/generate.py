"""Synthetic network generators with planted communities.

Edge weights are Poisson draws with rate ``rho * B_bar[c_i, c_j] *
exp(z_ij' gamma0)``, so multi-edges are kept rather than truncated.
Covariate coordinates are sampled independently per unordered pair from
distributions given in a small text grammar::

    bernoulli(q) | poisson(mean) | uniform(a,b) | exponential(rate)
    | normal(mean,variance)

Generators are pure functions of their seed; identical (spec, seed) pairs
produce identical instances.
"""

from __future__ import annotations

import logging
import math
import re
from dataclasses import dataclass, field, replace

import numpy as np

from .network import Network, num_pairs

logger = logging.getLogger(__name__)


class CovariateSpecError(ValueError):
    """Raised for malformed distribution strings; carries the bad position."""

    def __init__(self, spec: str, position: int, reason: str):
        self.position = position
        super().__init__(f"cannot parse {spec!r} at position {position}: {reason}")


class GenerationError(RuntimeError):
    pass


_SPEC_RE = re.compile(r"^\s*([a-zA-Z_]+)\s*\(\s*([^)]*)\)\s*$")


@dataclass(frozen=True)
class Distribution:
    """Seedable sampler for one covariate coordinate."""

    name: str
    params: tuple[float, ...]
    spec: str

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        a = self.params
        if self.name == "bernoulli":
            return rng.binomial(1, a[0], size=size).astype(np.float64)
        if self.name == "poisson":
            return rng.poisson(a[0], size=size).astype(np.float64)
        if self.name == "uniform":
            return rng.uniform(a[0], a[1], size=size)
        if self.name == "exponential":
            return rng.exponential(1.0 / a[0], size=size)
        if self.name == "normal":
            return rng.normal(a[0], math.sqrt(a[1]), size=size)
        raise AssertionError(self.name)

    @property
    def mean(self) -> float:
        a = self.params
        return {"bernoulli": a[0], "poisson": a[0],
                "uniform": (a[0] + a[-1]) / 2.0,
                "exponential": 1.0 / a[0], "normal": a[0]}[self.name]

    @property
    def variance(self) -> float:
        a = self.params
        return {"bernoulli": a[0] * (1 - a[0]), "poisson": a[0],
                "uniform": (a[-1] - a[0]) ** 2 / 12.0,
                "exponential": 1.0 / a[0] ** 2, "normal": a[1]}[self.name]


_ARITY = {"bernoulli": 1, "poisson": 1, "uniform": 2, "exponential": 1, "normal": 2}


def covariate_library(spec: str) -> Distribution:
    """Parse a distribution string into a sampler."""
    m = _SPEC_RE.match(spec)
    if not m:
        paren = spec.find("(")
        raise CovariateSpecError(spec, paren if paren >= 0 else 0,
                                 "expected 'name(arg[,arg])'")
    name = m.group(1).lower()
    if name not in _ARITY:
        raise CovariateSpecError(spec, m.start(1),
                                 f"unknown distribution {name!r} "
                                 f"(choose from {sorted(_ARITY)})")
    args_str = m.group(2)
    parts = [s.strip() for s in args_str.split(",")] if args_str.strip() else []
    if len(parts) != _ARITY[name]:
        raise CovariateSpecError(spec, m.start(2),
                                 f"{name} takes {_ARITY[name]} argument(s), got {len(parts)}")
    args = []
    for part in parts:
        try:
            args.append(float(part))
        except ValueError:
            raise CovariateSpecError(spec, spec.find(part),
                                     f"{part!r} is not a number")
    if name == "bernoulli" and not 0 <= args[0] <= 1:
        raise CovariateSpecError(spec, m.start(2), "bernoulli needs q in [0,1]")
    if name == "poisson" and args[0] < 0:
        raise CovariateSpecError(spec, m.start(2), "poisson needs mean >= 0")
    if name == "uniform" and args[1] < args[0]:
        raise CovariateSpecError(spec, m.start(2), "uniform needs a <= b")
    if name == "exponential" and args[0] <= 0:
        raise CovariateSpecError(spec, m.start(2), "exponential needs rate > 0")
    if name == "normal" and args[1] < 0:
        raise CovariateSpecError(spec, m.start(2), "normal needs variance >= 0")
    return Distribution(name, tuple(args), spec)


def rho_from_scale(c_rho: float, n: int) -> float:
    """Sparsity rule rho = c_rho * (log n)^1.5 / n."""
    return c_rho * math.log(n) ** 1.5 / n


@dataclass(frozen=True)
class GenSpec:
    """Parameters of a planted-community instance.

    ``rho`` may be given directly or through ``c_rho`` (then
    ``rho = c_rho (log n)^1.5 / n``).  ``lambda_max`` guards against runaway
    Poisson rates from mis-scaled coefficients; the default ``n**2`` never
    triggers for sane designs but catches exploding exposures.
    """

    n: int
    k: int
    pi: tuple[float, ...]
    b_bar: tuple[tuple[float, ...], ...]
    gamma0: tuple[float, ...] = ()
    covariates: tuple[str, ...] = ()
    rho: float | None = None
    c_rho: float | None = None
    seed: int = 0
    lambda_max: float | None = None

    def __post_init__(self):
        if (self.rho is None) == (self.c_rho is None):
            raise ValueError("specify exactly one of rho or c_rho")
        if abs(sum(self.pi) - 1.0) > 1e-9 or min(self.pi) <= 0:
            raise ValueError("pi must be positive and sum to 1")
        b = np.asarray(self.b_bar, dtype=np.float64)
        if b.shape != (self.k, self.k) or not np.allclose(b, b.T):
            raise ValueError("b_bar must be a symmetric k x k matrix")
        if np.any(b <= 0):
            raise ValueError("b_bar entries must be positive")
        if len(self.gamma0) != len(self.covariates):
            raise ValueError("gamma0 and covariates must have equal length")
        for s in self.covariates:
            covariate_library(s)

    @property
    def rho_n(self) -> float:
        return self.rho if self.rho is not None else rho_from_scale(self.c_rho, self.n)

    @property
    def p(self) -> int:
        return len(self.covariates)


@dataclass(frozen=True)
class PlantedInstance:
    network: Network
    truth: np.ndarray
    spec: GenSpec

    def __post_init__(self):
        self.truth.setflags(write=False)


def _sample_labels(rng, n, pi, k, max_tries=100):
    pi = np.asarray(pi)
    for _ in range(max_tries):
        labels = rng.choice(k, size=n, p=pi)
        if np.all(np.bincount(labels, minlength=k) > 0):
            return labels.astype(np.int64)
    raise GenerationError(
        f"could not draw a labeling with all {k} communities nonempty in {max_tries} tries")


def _network_from_rates(rng, n, lam, z, node_ids=None, lambda_max=None):
    if lambda_max is None:
        lambda_max = float(n) ** 2
    worst = float(lam.max()) if lam.size else 0.0
    if worst > lambda_max:
        raise GenerationError(
            f"extreme Poisson rate {worst:.3g} exceeds {lambda_max:.3g}; "
            "review rho / gamma0 / covariate scales")
    w = rng.poisson(lam)
    iu, ju = np.triu_indices(n, k=1)
    keep = w > 0
    return Network(n, iu[keep], ju[keep], w[keep].astype(np.int64), z,
                   node_ids=node_ids)


def sample_pcabm(spec: GenSpec) -> PlantedInstance:
    """Draw one instance: labels, pair covariates, Poisson adjacency.

    Rates are ``rho * b_bar[c_i, c_j] * exp(z_ij' gamma0)``; covariates are
    mirrored across each unordered pair with zero diagonal.
    """
    rng = np.random.default_rng(spec.seed)
    labels = _sample_labels(rng, spec.n, spec.pi, spec.k)
    n_pairs = num_pairs(spec.n)
    z = np.empty((n_pairs, spec.p))
    for idx, dist_spec in enumerate(spec.covariates):
        z[:, idx] = covariate_library(dist_spec).sample(rng, n_pairs)

    iu, ju = np.triu_indices(spec.n, k=1)
    b = np.asarray(spec.b_bar)
    base = spec.rho_n * b[labels[iu], labels[ju]]
    lam = base * np.exp(z @ np.asarray(spec.gamma0)) if spec.p else base
    net = _network_from_rates(rng, spec.n, lam, z, lambda_max=spec.lambda_max)
    return PlantedInstance(network=net, truth=labels, spec=spec)


def sample_dcbm(n, k, b_bar, pi=None, degree_values=(0.5, 1.5), rho=None,
                c_rho=None, seed=0) -> tuple[PlantedInstance, np.ndarray]:
    """Draw a degree-corrected instance plus the log-degree pair covariate.

    Rates are ``theta_i theta_j rho b_bar[c_i, c_j]`` with per-node degree
    parameters drawn uniformly from ``degree_values``.  After sampling, the
    single pair covariate ``z_ij = log d_i + log d_j`` is built from realized
    degrees, with zero degrees lifted to 1 before the log.

    Returns the instance (network carrying the derived covariate) and the
    theta vector actually used.
    """
    if any(t <= 0 for t in degree_values):
        raise ValueError("degree parameters must be positive")
    if pi is None:
        pi = tuple(1.0 / k for _ in range(k))
    spec = GenSpec(n=n, k=k, pi=tuple(pi), b_bar=tuple(map(tuple, b_bar)),
                   rho=rho, c_rho=c_rho, seed=seed)
    rng = np.random.default_rng(seed)
    labels = _sample_labels(rng, n, spec.pi, k)
    theta = rng.choice(np.asarray(degree_values, dtype=np.float64), size=n)

    iu, ju = np.triu_indices(n, k=1)
    b = np.asarray(spec.b_bar)
    lam = spec.rho_n * b[labels[iu], labels[ju]] * theta[iu] * theta[ju]
    net = _network_from_rates(rng, n, lam, None, lambda_max=spec.lambda_max)

    d = np.maximum(net.degrees(), 1).astype(np.float64)
    logd = np.log(d)
    z = (logd[iu] + logd[ju])[:, None]
    net = net.replace_covariates(z)
    return PlantedInstance(network=net, truth=labels, spec=spec), theta


@dataclass(frozen=True)
class CorrelatedCovariate:
    """A pair covariate built to correlate with the planted rate matrix."""

    values: np.ndarray
    target_corr: float
    achieved_corr: float
    scale: float
    calibrated: bool

    def __post_init__(self):
        self.values.setflags(write=False)


def sample_correlated_covariate(instance: PlantedInstance, r: float,
                                seed: int = 0, tol: float = 0.05) -> CorrelatedCovariate:
    """Draw a spurious covariate whose correlation with B_bar[c_i,c_j] is r.

    The mean component is ``scale * (b_bar[c_i,c_j] - 1.5)`` plus N(0, 0.09)
    noise.  The initial scale ``0.6 / (r sqrt(1 - r^2))`` is taken as given;
    if the empirical Pearson correlation misses the target by more than
    ``tol`` the scale is recalibrated from the realized block values and the
    adjustment is logged.
    """
    if not 0 < r < 1:
        raise ValueError(f"correlation target must lie strictly in (0,1), got {r}")
    rng = np.random.default_rng(seed)
    labels = instance.truth
    b = np.asarray(instance.spec.b_bar)
    n = instance.network.n
    iu, ju = np.triu_indices(n, k=1)
    block_vals = b[labels[iu], labels[ju]]
    centered = block_vals - 1.5
    noise = rng.normal(0.0, 0.3, size=len(centered))

    def corr_with_blocks(vals):
        return float(np.corrcoef(vals, block_vals)[0, 1])

    scale = 0.6 / (r * math.sqrt(1.0 - r * r))
    values = scale * centered + noise
    achieved = corr_with_blocks(values)
    calibrated = False
    if abs(achieved - r) > tol:
        # solve corr = a*sd(x) / sqrt(a^2 var(x) + var(noise)) for a, using
        # realized block values and noise variance
        var_x = float(np.var(centered))
        var_eps = float(np.var(noise))
        if var_x <= 0:
            raise GenerationError("planted labels give constant block values; "
                                  "cannot calibrate correlated covariate")
        scale = r * math.sqrt(var_eps) / math.sqrt(var_x * (1.0 - r * r))
        values = scale * centered + noise
        achieved = corr_with_blocks(values)
        calibrated = True
        logger.info("correlated covariate recalibrated: target r=%.3f, "
                    "scale=%.4f, achieved=%.4f", r, scale, achieved)
    return CorrelatedCovariate(values=values, target_corr=r,
                               achieved_corr=achieved, scale=scale,
                               calibrated=calibrated)
