"""Profile-likelihood community detection by greedy tabu search.

With the coefficient vector held fixed, the profile objective of a labeling
``e`` is

    l(e) = 1/2 sum_kl O_kl log(O_kl / E_kl) + sum_k n_k log(n_k / n)

(0 log 0 = 0).  The search proposes random single-node relabels and random
two-node label swaps, accepts strictly improving moves, and marks moved
nodes tabu for a fixed number of attempts.  Moves that would empty a
community are rejected outright.  Incremental bookkeeping keeps each
proposal O(K) after an O(n^2) cache of per-pair exposures is built once;
the final statistics are audited against a from-scratch recomputation.

Restarts are independent given the seed: restart 0 starts from the supplied
labeling (or a random one), later restarts from fresh random labelings.
Each restart owns its state; results merge by objective with seed-order
tie-break, so a parallel execution would return the same answer.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .gamma import FitOptions, GammaFit, fit_gamma, gamma_inference
from .network import (Network, block_stats, check_labeling, community_sizes,
                      random_labeling)

_AUDIT_RTOL = 1e-9


class SearchStateError(RuntimeError):
    """Incremental statistics drifted from the from-scratch recomputation."""


@dataclass(frozen=True)
class TabuOptions:
    """Search budget and move semantics.

    ``None`` fields resolve against the instance size: tenure ``ceil(n/10)``,
    patience ``50 n`` attempts without improvement, budget ``500 n``
    attempts, restarts 1 when an initial labeling is supplied and 5
    otherwise.  ``moves`` selects "both" (default), "swap" (size-preserving
    pair swaps only) or "relabel".
    """

    max_iters: int | None = None
    tabu_tenure: int | None = None
    restarts: int | None = None
    seed: int = 0
    patience: int | None = None
    moves: str = "both"

    def resolve(self, n: int, init_given: bool) -> "TabuOptions":
        if self.moves not in ("both", "swap", "relabel"):
            raise ValueError(f"unknown move set {self.moves!r}")
        opts = TabuOptions(
            max_iters=self.max_iters if self.max_iters is not None else 500 * n,
            tabu_tenure=(self.tabu_tenure if self.tabu_tenure is not None
                         else math.ceil(n / 10)),
            restarts=(self.restarts if self.restarts is not None
                      else (1 if init_given else 5)),
            seed=self.seed,
            patience=self.patience if self.patience is not None else 50 * n,
            moves=self.moves,
        )
        if min(opts.max_iters, opts.tabu_tenure, opts.restarts, opts.patience) <= 0:
            raise ValueError("tabu options must be positive")
        if opts.tabu_tenure >= n:
            raise ValueError(f"tabu tenure {opts.tabu_tenure} must be < n={n}")
        return opts


@dataclass(frozen=True)
class DetectionResult:
    """Labeling found by a detection run.

    ``loglik`` is always recomputed from scratch on the returned labeling;
    ``trace`` holds the objective after each accepted move of the winning
    restart, and is strictly increasing.
    """

    labels: np.ndarray
    k: int
    loglik: float
    trace: tuple[float, ...]
    restarts_best: int

    def __post_init__(self):
        self.labels.setflags(write=False)


def profile_loglik(network: Network, labels, k: int, gamma) -> float:
    """Profile objective of a labeling; every community must be nonempty."""
    labels = check_labeling(labels, k, network.n)
    sizes = community_sizes(labels, k)
    if np.any(sizes == 0):
        raise ValueError("profile objective undefined for empty communities")
    bs = block_stats(network, labels, k, gamma)
    mask = bs.o > 0.5
    term = 0.5 * float(np.sum(bs.o[mask] * (np.log(bs.o[mask]) - np.log(bs.e[mask]))))
    return term + float(np.sum(sizes * (np.log(sizes) - math.log(network.n))))


def _f(o: float, e: float) -> float:
    # o is integer-valued; 0 log 0 := 0
    return o * (math.log(o) - math.log(e)) if o > 0.5 else 0.0


def _rows_delta(osrc, odst, esrc, edst, w, g, src, dst, k):
    """Block-term objective change of one relabel, given current rows.

    ``osrc``/``odst`` (``esrc``/``edst``) are the O (E) rows of the source
    and destination communities as plain lists; ``w`` and ``g`` are the
    moving node's edge-weight and exposure rows.  Returns the delta of the
    0.5 * sum O log(O/E) part together with the four updated rows.
    """
    ok = [osrc[b] - w[b] for b in range(k)]
    ol = [odst[b] + w[b] for b in range(k)]
    ok[src] -= w[src]
    ok[dst] += w[src]
    ol[src] -= w[dst]
    ol[dst] += w[dst]
    ek = [esrc[b] - g[b] for b in range(k)]
    el = [edst[b] + g[b] for b in range(k)]
    ek[src] -= g[src]
    ek[dst] += g[src]
    el[src] -= g[dst]
    el[dst] += g[dst]

    rows = 0.0
    for b in range(k):
        rows += (_f(ok[b], ek[b]) - _f(osrc[b], esrc[b])
                 + _f(ol[b], el[b]) - _f(odst[b], edst[b]))
    cross = (_f(ok[src], ek[src]) - _f(osrc[src], esrc[src])
             + _f(ok[dst], ek[dst]) - _f(osrc[dst], esrc[dst])
             + _f(ol[src], el[src]) - _f(odst[src], edst[src])
             + _f(ol[dst], el[dst]) - _f(odst[dst], edst[dst]))
    return 0.5 * (2.0 * rows - cross), ok, ol, ek, el


class SearchState:
    """Incrementally maintained statistics for single-node relabel moves.

    Caches per-pair exposures exp(z' gamma) at construction (gamma is fixed
    during a search).  When exposures are constant across pairs (p = 0 or
    gamma = 0) block exposures reduce to scaled pair counts and the dense
    cache is skipped.
    """

    def __init__(self, network: Network, labels, k: int, gamma):
        self.network = network
        self.k = int(k)
        self.labels = check_labeling(labels, k, network.n).copy()
        n = network.n
        sizes = community_sizes(self.labels, k)
        if np.any(sizes == 0):
            raise ValueError("initial labeling must keep every community nonempty")
        self.sizes = sizes.astype(np.int64)

        csr = network.adjacency_csr().copy()
        csr.sort_indices()
        self._nbr_ptr = csr.indptr
        self._nbr_idx = csr.indices
        self._nbr_w = csr.data

        gamma = np.asarray(gamma, dtype=np.float64)
        tilt = network.z @ gamma if network.p else np.zeros(0)
        self.uniform_exposure = network.p == 0 or float(np.ptp(tilt)) == 0.0
        bs = block_stats(network, self.labels, k, gamma)
        self.o = bs.o.copy()
        self.e = bs.e.copy()
        self.w_to = np.zeros((n, k))
        np.add.at(self.w_to, (network.edge_i, self.labels[network.edge_j]),
                  network.edge_w)
        np.add.at(self.w_to, (network.edge_j, self.labels[network.edge_i]),
                  network.edge_w)
        if self.uniform_exposure:
            self._unit = float(np.exp(tilt[0])) if tilt.size else 1.0
            self.expz = None
            self.g_to = None
        else:
            self._unit = None
            iu, ju = network.pair_nodes()
            expz = np.zeros((n, n))
            vals = np.exp(tilt)
            expz[iu, ju] = vals
            expz[ju, iu] = vals
            self.expz = expz
            onehot = np.zeros((n, k))
            onehot[np.arange(n), self.labels] = 1.0
            self.g_to = expz @ onehot

        self.objective = self._objective_from_scratch()

    def _objective_from_scratch(self) -> float:
        n = self.network.n
        mask = self.o > 0.5
        term = 0.5 * float(np.sum(self.o[mask] * (np.log(self.o[mask])
                                                  - np.log(self.e[mask]))))
        return term + float(np.sum(self.sizes * (np.log(self.sizes) - math.log(n))))

    def _g_row(self, i: int) -> list[float]:
        if self.uniform_exposure:
            u = self._unit
            li = self.labels[i]
            return [(self.sizes[b] - (1 if b == li else 0)) * u for b in range(self.k)]
        return self.g_to[i].tolist()

    def _pair_exposure(self, i: int, j: int) -> float:
        return self._unit if self.uniform_exposure else float(self.expz[i, j])

    def _edge_weight(self, i: int, j: int) -> float:
        lo, hi = self._nbr_ptr[i], self._nbr_ptr[i + 1]
        idx = np.searchsorted(self._nbr_idx[lo:hi], j)
        if idx < hi - lo and self._nbr_idx[lo + idx] == j:
            return float(self._nbr_w[lo + idx])
        return 0.0

    def _size_delta(self, src: int, dst: int) -> float:
        n = self.network.n
        sk, sl = int(self.sizes[src]), int(self.sizes[dst])
        out = (-sk * (math.log(sk) - math.log(n))
               + (sl + 1) * (math.log(sl + 1) - math.log(n))
               - sl * (math.log(sl) - math.log(n)))
        if sk > 1:
            out += (sk - 1) * (math.log(sk - 1) - math.log(n))
        return out

    def move_delta(self, i: int, new_label: int) -> float:
        """Exact objective change of relabeling node i, in O(K).

        Returns 0 for a no-op; raises if the move would empty a community.
        """
        src = int(self.labels[i])
        dst = int(new_label)
        if src == dst:
            return 0.0
        if self.sizes[src] <= 1:
            raise ValueError(f"move would empty community {src}")
        d_blocks, *_ = _rows_delta(self.o[src].tolist(), self.o[dst].tolist(),
                                   self.e[src].tolist(), self.e[dst].tolist(),
                                   self.w_to[i].tolist(), self._g_row(i),
                                   src, dst, self.k)
        return d_blocks + self._size_delta(src, dst)

    def swap_delta(self, i: int, j: int) -> float:
        """Exact objective change of swapping the labels of nodes i and j.

        O(K); community sizes are preserved, so the size terms vanish.
        """
        li, lj = int(self.labels[i]), int(self.labels[j])
        if li == lj:
            return 0.0
        d1, ok1, ol1, ek1, el1 = _rows_delta(
            self.o[li].tolist(), self.o[lj].tolist(),
            self.e[li].tolist(), self.e[lj].tolist(),
            self.w_to[i].tolist(), self._g_row(i), li, lj, self.k)
        # second relabel sees node i already in lj
        a_ij = self._edge_weight(i, j)
        x_ij = self._pair_exposure(i, j)
        wj = self.w_to[j].tolist()
        wj[li] -= a_ij
        wj[lj] += a_ij
        gj = self._g_row(j)
        gj[li] -= x_ij
        gj[lj] += x_ij
        d2, *_ = _rows_delta(ol1, ok1, el1, ek1, wj, gj, lj, li, self.k)
        return d1 + d2

    def apply(self, i: int, new_label: int) -> float:
        """Apply a relabel move and return its objective delta."""
        src = int(self.labels[i])
        dst = int(new_label)
        if src == dst:
            return 0.0
        if self.sizes[src] <= 1:
            raise ValueError(f"move would empty community {src}")
        d_blocks, ok, ol, ek, el = _rows_delta(
            self.o[src].tolist(), self.o[dst].tolist(),
            self.e[src].tolist(), self.e[dst].tolist(),
            self.w_to[i].tolist(), self._g_row(i), src, dst, self.k)
        delta = d_blocks + self._size_delta(src, dst)

        for mat, rk, rl in ((self.o, ok, ol), (self.e, ek, el)):
            mat[src] = rk
            mat[dst] = rl
            mat[:, src] = rk
            mat[:, dst] = rl

        lo, hi = self._nbr_ptr[i], self._nbr_ptr[i + 1]
        nbrs = self._nbr_idx[lo:hi]  # unique within a CSR row
        wts = self._nbr_w[lo:hi]
        self.w_to[nbrs, src] -= wts
        self.w_to[nbrs, dst] += wts
        if not self.uniform_exposure:
            col = self.expz[:, i]
            self.g_to[:, src] -= col
            self.g_to[:, dst] += col

        self.labels[i] = dst
        self.sizes[src] -= 1
        self.sizes[dst] += 1
        self.objective += delta
        return delta

    def audit(self, gamma) -> None:
        """Check incremental O/E/sizes against a fresh computation."""
        bs = block_stats(self.network, self.labels, self.k, gamma)
        scale = max(1.0, float(np.max(np.abs(bs.e))), float(np.max(np.abs(bs.o))))
        if (np.max(np.abs(bs.o - self.o)) > _AUDIT_RTOL * scale
                or np.max(np.abs(bs.e - self.e)) > _AUDIT_RTOL * scale
                or np.any(bs.sizes != self.sizes)):
            raise SearchStateError("incremental block statistics drifted; "
                                   "this is a bookkeeping bug")


def _run_restart(network, gamma, init_labels, k, opts, rng):
    state = SearchState(network, init_labels, k, gamma)
    n = network.n
    tabu_until = np.zeros(n, dtype=np.int64)
    trace: list[float] = []
    attempts = 0
    since_improve = 0
    allow_swap = opts.moves in ("both", "swap")
    allow_relabel = opts.moves in ("both", "relabel")
    labels = state.labels
    sizes = state.sizes

    while attempts < opts.max_iters and since_improve < opts.patience:
        attempts += 1
        since_improve += 1
        do_swap = allow_swap and (not allow_relabel or rng.random() < 0.5)
        if do_swap:
            i = int(rng.integers(n))
            j = int(rng.integers(n))
            if i == j or tabu_until[i] > attempts or tabu_until[j] > attempts:
                continue
            li, lj = int(labels[i]), int(labels[j])
            if li == lj:
                continue
            if state.swap_delta(i, j) > 0:
                state.apply(i, lj)
                state.apply(j, li)
                tabu_until[i] = attempts + opts.tabu_tenure
                tabu_until[j] = attempts + opts.tabu_tenure
                trace.append(state.objective)
                since_improve = 0
        else:
            i = int(rng.integers(n))
            if tabu_until[i] > attempts:
                continue
            li = int(labels[i])
            if sizes[li] <= 1:
                continue
            shift = int(rng.integers(k - 1)) if k > 1 else 0
            dst = (li + 1 + shift) % k
            if dst == li:
                continue
            if state.move_delta(i, dst) > 0:
                state.apply(i, dst)
                tabu_until[i] = attempts + opts.tabu_tenure
                trace.append(state.objective)
                since_improve = 0

    state.audit(gamma)
    return state.labels.copy(), trace


def tabu_search(network: Network, gamma, init_labeling=None, k: int | None = None,
                options: TabuOptions | None = None) -> DetectionResult:
    """Maximize the profile objective over labelings by greedy tabu moves.

    Deterministic given the seed in ``options``.  Returns the best labeling
    across restarts; its objective is recomputed from scratch after an audit
    of the incremental statistics.
    """
    if init_labeling is None and k is None:
        raise ValueError("give an initial labeling or the number of communities")
    if k is None:
        k = int(np.max(init_labeling)) + 1
    opts = (options or TabuOptions()).resolve(network.n, init_labeling is not None)
    gamma = np.asarray(gamma, dtype=np.float64)

    root = np.random.SeedSequence([opts.seed, 0x7AB0])
    children = root.spawn(opts.restarts)
    best = None
    for r in range(opts.restarts):
        rng = np.random.default_rng(children[r])
        if r == 0 and init_labeling is not None:
            init = check_labeling(init_labeling, k, network.n)
        else:
            init = random_labeling(network.n, k, rng)
        labels, trace = _run_restart(network, gamma, init, k, opts, rng)
        loglik = profile_loglik(network, labels, k, gamma)
        if best is None or loglik > best[0]:
            best = (loglik, r, labels, trace)

    loglik, r, labels, trace = best
    return DetectionResult(labels=labels, k=k, loglik=loglik,
                           trace=tuple(trace), restarts_best=r)


def fit_mle0(network: Network, k: int, init_labeling=None,
             fit_options: FitOptions | None = None,
             tabu_options: TabuOptions | None = None,
             with_inference: bool = True) -> tuple[GammaFit, DetectionResult]:
    """Two-step estimate: coefficients on the initial labeling, then search.

    A missing initial labeling is drawn at random (seeded from the tabu
    options), matching the random-initialization workflow.
    """
    opts = tabu_options or TabuOptions()
    if init_labeling is None:
        rng = np.random.default_rng(np.random.SeedSequence([opts.seed, 0x1417]))
        init = random_labeling(network.n, k, rng)
        if opts.restarts is None:
            opts = replace(opts, restarts=5)
    else:
        init = check_labeling(init_labeling, k, network.n)
    fit = fit_gamma(network, init, k, fit_options)
    if with_inference and fit.converged:
        fit = gamma_inference(network, fit)
    det = tabu_search(network, fit.gamma_hat, init, k, opts)
    return fit, det


def fit_mle(network: Network, k: int, init_labeling=None, epsilon: float = 0.05,
            seed: int = 0, fit_options: FitOptions | None = None,
            tabu_options: TabuOptions | None = None,
            kmeans_restarts: int = 10,
            with_inference: bool = True) -> tuple[GammaFit, DetectionResult]:
    """Spectral initialization refined by tabu search.

    Runs the adjusted spectral pipeline to get starting communities, then
    searches from them with the same fitted coefficients.
    """
    from .scwa import scwa_detect  # deferred: scwa depends on this module

    fit, spectral = scwa_detect(network, k, init_labeling=init_labeling,
                                epsilon=epsilon, seed=seed,
                                fit_options=fit_options,
                                kmeans_restarts=kmeans_restarts,
                                with_inference=with_inference)
    opts = tabu_options or TabuOptions(seed=seed)
    det = tabu_search(network, fit.gamma_hat, spectral.labels, k, opts)
    return fit, det
