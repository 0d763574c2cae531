"""Canonical network representation and block sufficient statistics.

A network here is an undirected weighted graph on ``n`` nodes with
nonnegative-integer edge weights, zero diagonal, and an optional
``p``-dimensional real covariate vector attached to every unordered node
pair.  Edges are stored sparsely as unordered pairs; pair covariates are
stored densely in condensed upper-triangular layout, one row per pair
``(i, j)`` with ``i < j``.

``Network`` and ``BlockStats`` instances are immutable after construction
and safe to share across threads.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse


class ValidationError(ValueError):
    """Raised when raw inputs violate the network invariants.

    ``violations`` holds one ``(kind, detail)`` tuple per problem found, so
    callers can report every issue instead of just the first.
    """

    def __init__(self, violations):
        self.violations = list(violations)
        shown = [f"{kind}: {detail}" for kind, detail in self.violations[:20]]
        extra = len(self.violations) - len(shown)
        msg = "; ".join(shown)
        if extra > 0:
            msg += f" (and {extra} more)"
        super().__init__(f"invalid network: {msg}")


def pair_index(i, j, n: int):
    """Condensed index of unordered pair(s) (i, j) with i < j among n nodes.

    Pairs are ordered row-major: (0,1), (0,2), ..., (0,n-1), (1,2), ...
    Accepts scalars or arrays.
    """
    i = np.asarray(i, dtype=np.int64)
    j = np.asarray(j, dtype=np.int64)
    return i * n - i * (i + 1) // 2 + (j - i - 1)


def num_pairs(n: int) -> int:
    return n * (n - 1) // 2


class Network:
    """Validated undirected network with per-pair covariates.

    Attributes:
        n: node count.
        p: covariate dimension (0 for a plain block model).
        edge_i, edge_j: endpoint arrays of stored edges, ``edge_i < edge_j``.
        edge_w: positive integer weights, multi-edges allowed.
        z: condensed pair covariates, shape ``(n*(n-1)/2, p)``.
        node_ids: external node identifiers, index-aligned; defaults to
            stringified indices.
    """

    __slots__ = ("n", "p", "edge_i", "edge_j", "edge_w", "z", "node_ids",
                 "_csr", "_triu")

    def __init__(self, n, edge_i, edge_j, edge_w, z=None, node_ids=None):
        self.n = int(n)
        self.edge_i = np.ascontiguousarray(edge_i, dtype=np.int64)
        self.edge_j = np.ascontiguousarray(edge_j, dtype=np.int64)
        self.edge_w = np.ascontiguousarray(edge_w, dtype=np.int64)
        if z is None:
            z = np.zeros((num_pairs(self.n), 0))
        self.z = np.ascontiguousarray(z, dtype=np.float64)
        self.p = self.z.shape[1]
        if node_ids is None:
            node_ids = tuple(str(i) for i in range(self.n))
        self.node_ids = tuple(node_ids)
        for arr in (self.edge_i, self.edge_j, self.edge_w, self.z):
            arr.setflags(write=False)
        self._csr = None
        self._triu = None

    @property
    def n_edges(self) -> int:
        """Number of distinct unordered pairs carrying positive weight."""
        return len(self.edge_w)

    @property
    def total_weight(self) -> int:
        """Sum of edge weights over unordered pairs."""
        return int(self.edge_w.sum())

    def degrees(self) -> np.ndarray:
        """Weighted degree d_i = sum_j A_ij."""
        d = np.zeros(self.n, dtype=np.int64)
        np.add.at(d, self.edge_i, self.edge_w)
        np.add.at(d, self.edge_j, self.edge_w)
        return d

    def exposures(self, gamma) -> np.ndarray:
        """exp(z_ij' gamma) for every unordered pair, condensed order."""
        gamma = np.asarray(gamma, dtype=np.float64)
        if gamma.shape != (self.p,):
            raise ValueError(f"gamma must have length p={self.p}, got {gamma.shape}")
        if self.p == 0:
            return np.ones(num_pairs(self.n))
        return np.exp(self.z @ gamma)

    def pair_nodes(self):
        """(iu, ju) arrays giving the endpoints of every condensed pair."""
        if self._triu is None:
            iu, ju = np.triu_indices(self.n, k=1)
            iu = iu.astype(np.int64)
            ju = ju.astype(np.int64)
            iu.setflags(write=False)
            ju.setflags(write=False)
            self._triu = (iu, ju)
        return self._triu

    def adjacency_csr(self) -> scipy.sparse.csr_matrix:
        """Symmetric sparse adjacency (cached; treat as read-only)."""
        if self._csr is None:
            rows = np.concatenate([self.edge_i, self.edge_j])
            cols = np.concatenate([self.edge_j, self.edge_i])
            vals = np.concatenate([self.edge_w, self.edge_w]).astype(np.float64)
            self._csr = scipy.sparse.csr_matrix(
                (vals, (rows, cols)), shape=(self.n, self.n))
        return self._csr

    def adjacency_dense(self) -> np.ndarray:
        A = np.zeros((self.n, self.n), dtype=np.int64)
        A[self.edge_i, self.edge_j] = self.edge_w
        A[self.edge_j, self.edge_i] = self.edge_w
        return A

    def edge_exposures(self, gamma) -> np.ndarray:
        """exp(z' gamma) restricted to the stored edges."""
        if self.p == 0:
            return np.ones(self.n_edges)
        idx = pair_index(self.edge_i, self.edge_j, self.n)
        return np.exp(self.z[idx] @ np.asarray(gamma, dtype=np.float64))

    def replace_covariates(self, z) -> "Network":
        """New network with the same edges and different pair covariates."""
        z = np.asarray(z, dtype=np.float64)
        if z.ndim == 1:
            z = z[:, None]
        if z.shape[0] != num_pairs(self.n):
            raise ValueError(
                f"covariate array must have {num_pairs(self.n)} rows, got {z.shape[0]}")
        return Network(self.n, self.edge_i, self.edge_j, self.edge_w, z,
                       node_ids=self.node_ids)


def validate_dense(A, Z=None, node_ids=None) -> Network:
    """Validate a dense adjacency (and optional covariates) into a Network.

    Args:
        A: (n, n) array-like; must be symmetric, nonnegative-integer valued,
            with zero diagonal.
        Z: optional pair covariates, either shape (n, n, p) (symmetric with
            zero diagonal slices) or already-condensed (n*(n-1)/2, p).

    Raises:
        ValidationError: listing every violated invariant, first 20 shown.
    """
    A = np.asarray(A)
    violations = []
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValidationError([("shape", f"adjacency must be square, got {A.shape}")])
    n = A.shape[0]
    if n < 2:
        violations.append(("size", f"need at least 2 nodes, got {n}"))

    bad = np.argwhere(A != A.T)
    for i, j in bad[bad[:, 0] < bad[:, 1]]:
        violations.append(("asymmetric_adjacency",
                           f"A[{i},{j}]={A[i, j]} != A[{j},{i}]={A[j, i]}"))
    diag = np.flatnonzero(np.diagonal(A))
    for i in diag:
        violations.append(("nonzero_diagonal", f"A[{i},{i}]={A[i, i]}"))
    if np.any(np.asarray(A) < 0):
        for i, j in np.argwhere(A < 0)[:20]:
            violations.append(("negative_weight", f"A[{i},{j}]={A[i, j]}"))
    Af = np.asarray(A, dtype=np.float64)
    if not np.all(Af == np.floor(Af)):
        for i, j in np.argwhere(Af != np.floor(Af))[:20]:
            violations.append(("non_integer_weight", f"A[{i},{j}]={A[i, j]}"))

    z_cond = None
    if Z is not None:
        Z = np.asarray(Z, dtype=np.float64)
        if Z.ndim == 2 and Z.shape[0] == num_pairs(n):
            z_cond = Z
        elif Z.ndim == 3 and Z.shape[0] == Z.shape[1] == n:
            mismatch = np.argwhere(np.any(Z != np.transpose(Z, (1, 0, 2)), axis=2))
            for i, j in mismatch[mismatch[:, 0] < mismatch[:, 1]]:
                violations.append(("asymmetric_covariates",
                                   f"z[{i},{j}] != z[{j},{i}]"))
            iu, ju = np.triu_indices(n, k=1)
            z_cond = Z[iu, ju, :]
        else:
            violations.append(("covariate_shape",
                               f"Z must be (n,n,p) or condensed (n(n-1)/2,p), got {Z.shape}"))

    if violations:
        raise ValidationError(violations)

    iu, ju = np.triu_indices(n, k=1)
    w = np.asarray(A, dtype=np.int64)[iu, ju]
    keep = w > 0
    return Network(n, iu[keep], ju[keep], w[keep], z_cond, node_ids=node_ids)


def validate_pairs(n, edge_weights, pair_covariates=None, p=None, node_ids=None) -> Network:
    """Validate pair-keyed mappings into a Network.

    Args:
        edge_weights: mapping (i, j) -> weight; both orders accepted but must
            agree; self-loops rejected.
        pair_covariates: optional mapping (i, j) -> length-p vector; symmetric
            consistency enforced; absent pairs get the zero vector.
        p: covariate dimension; inferred from the first vector if omitted.
    """
    violations = []
    if n < 2:
        violations.append(("size", f"need at least 2 nodes, got {n}"))
    canon: dict[tuple[int, int], int] = {}
    for (i, j), w in edge_weights.items():
        if i == j:
            violations.append(("self_loop", f"pair ({i},{j})"))
            continue
        if not (0 <= i < n and 0 <= j < n):
            violations.append(("node_out_of_range", f"pair ({i},{j})"))
            continue
        if w < 0 or int(w) != w:
            violations.append(("bad_weight", f"A[{i},{j}]={w}"))
            continue
        key = (min(i, j), max(i, j))
        if key in canon and canon[key] != int(w):
            violations.append(("asymmetric_adjacency",
                               f"A[{key[0]},{key[1]}] given as both {canon[key]} and {w}"))
        canon[key] = int(w)

    z_cond = None
    if pair_covariates is not None:
        vecs = {}
        for (i, j), v in pair_covariates.items():
            v = np.asarray(v, dtype=np.float64)
            if p is None:
                p = len(v)
            if len(v) != p:
                violations.append(("covariate_length",
                                   f"z[{i},{j}] has length {len(v)}, expected p={p}"))
                continue
            key = (min(i, j), max(i, j))
            if key in vecs and not np.array_equal(vecs[key], v):
                violations.append(("asymmetric_covariates",
                                   f"z[{key[0]},{key[1]}] given with conflicting values"))
            vecs[key] = v
        if not violations:
            z_cond = np.zeros((num_pairs(n), p or 0))
            for (i, j), v in vecs.items():
                z_cond[pair_index(i, j, n)] = v

    if violations:
        raise ValidationError(violations)

    keys = sorted(k for k, w in canon.items() if w > 0)
    ei = np.array([k[0] for k in keys], dtype=np.int64)
    ej = np.array([k[1] for k in keys], dtype=np.int64)
    ew = np.array([canon[k] for k in keys], dtype=np.int64)
    return Network(n, ei, ej, ew, z_cond, node_ids=node_ids)


# ---------------------------------------------------------------------------
# labelings


def community_sizes(labels, k: int) -> np.ndarray:
    labels = np.asarray(labels)
    return np.bincount(labels, minlength=k)


def check_labeling(labels, k: int, n: int | None = None) -> np.ndarray:
    """Validate a labeling: integer entries in [0, k)."""
    labels = np.asarray(labels)
    if n is not None and len(labels) != n:
        raise ValueError(f"labeling has length {len(labels)}, expected n={n}")
    if labels.size and (labels.min() < 0 or labels.max() >= k):
        raise ValueError(f"labels must lie in [0, {k})")
    return labels.astype(np.int64)


def is_non_degenerate(labels, k: int, kappa1: float, kappa2: float) -> bool:
    """True when every community holds a fraction of nodes in [kappa1, kappa2]."""
    frac = community_sizes(labels, k) / len(labels)
    return bool(np.all(frac >= kappa1) and np.all(frac <= kappa2))


def random_labeling(n: int, k: int, rng) -> np.ndarray:
    """Uniform random labeling with every community nonempty."""
    if n < k:
        raise ValueError(f"cannot place {k} nonempty communities on {n} nodes")
    while True:
        labels = rng.integers(0, k, size=n)
        if np.all(np.bincount(labels, minlength=k) > 0):
            return labels.astype(np.int64)


def membership_matrix(labels, k: int) -> np.ndarray:
    """n x k 0/1 matrix with a single 1 per row."""
    labels = check_labeling(labels, k)
    m = np.zeros((len(labels), k), dtype=np.int64)
    m[np.arange(len(labels)), labels] = 1
    return m


# ---------------------------------------------------------------------------
# block sufficient statistics


@dataclass(frozen=True)
class BlockStats:
    """Sufficient statistics of a labeling over ordered node pairs.

    ``o[k,l]`` sums edge weights over ordered pairs (i, j) with labels (k, l),
    so the diagonal counts within-community edges twice.  ``e[k,l]`` sums
    exp(z' gamma) over the same ordered pairs; ``pair_counts`` is the number
    of ordered pairs per block.
    """

    sizes: np.ndarray
    o: np.ndarray
    e: np.ndarray
    pair_counts: np.ndarray

    def __post_init__(self):
        for arr in (self.sizes, self.o, self.e, self.pair_counts):
            arr.setflags(write=False)


def block_stats(network: Network, labels, k: int, gamma=None) -> BlockStats:
    """Compute (sizes, O, E, pair counts) for a labeling and coefficients."""
    labels = check_labeling(labels, k, network.n)
    if gamma is None:
        gamma = np.zeros(network.p)
    sizes = community_sizes(labels, k)

    bi = labels[network.edge_i]
    bj = labels[network.edge_j]
    w = network.edge_w.astype(np.float64)
    o = np.zeros((k, k))
    np.add.at(o, (bi, bj), w)
    np.add.at(o, (bj, bi), w)

    iu, ju = network.pair_nodes()
    flat = labels[iu] * k + labels[ju]
    v = network.exposures(gamma)
    half_e = np.bincount(flat, weights=v, minlength=k * k).reshape(k, k)
    e = half_e + half_e.T
    half_cnt = np.bincount(flat, minlength=k * k).reshape(k, k).astype(np.float64)
    pair_counts = half_cnt + half_cnt.T

    return BlockStats(sizes=sizes, o=o, e=e, pair_counts=pair_counts)
