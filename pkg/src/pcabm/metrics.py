"""Agreement and error measures between community labelings.

All metrics are label-permutation invariant and symmetric in their two
arguments where that makes sense.  Membership-matrix losses follow the
overall / worst-community convention: with M-hat and M the n x K 0/1
membership matrices,

    L1 = (1/n) min_S ||M_hat S - M||_0
    L2 = min_S max_k (1/n_k) ||(M_hat S)_{G_k} - M_{G_k}||_0

minimized over permutation matrices S, so 0 <= L1 <= L2 <= 2 and
L1 * n = 2 * (permutation-minimized mis-clustering count).

Pure functions; safe to call from any thread.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np


def _codes(labels) -> tuple[np.ndarray, int]:
    labels = np.asarray(labels)
    _, codes = np.unique(labels, return_inverse=True)
    return codes, int(codes.max()) + 1 if codes.size else 0


def confusion_table(a, b) -> np.ndarray:
    """Contingency counts between two labelings (rows: a, cols: b)."""
    a = np.asarray(a)
    b = np.asarray(b)
    if a.shape != b.shape:
        raise ValueError(f"labelings differ in length: {a.shape} vs {b.shape}")
    ca, ka = _codes(a)
    cb, kb = _codes(b)
    return np.bincount(ca * kb + cb, minlength=ka * kb).reshape(ka, kb)


def ari(a, b) -> float:
    """Adjusted Rand index; 1 when both labelings are single-cluster."""
    c = confusion_table(a, b)
    n = c.sum()
    if n < 2:
        raise ValueError("need at least 2 items")
    sum_comb = (c * (c - 1) // 2).sum()
    rows = c.sum(axis=1)
    cols = c.sum(axis=0)
    comb_a = (rows * (rows - 1) // 2).sum()
    comb_b = (cols * (cols - 1) // 2).sum()
    total = n * (n - 1) // 2
    expected = comb_a * comb_b / total
    max_index = (comb_a + comb_b) / 2.0
    if max_index == expected:
        return 1.0  # both labelings degenerate (single cluster each)
    return float((sum_comb - expected) / (max_index - expected))


def nmi(a, b) -> float:
    """Mutual information normalized by the arithmetic mean of entropies."""
    c = confusion_table(a, b).astype(np.float64)
    n = c.sum()
    if n < 2:
        raise ValueError("need at least 2 items")
    pa = c.sum(axis=1) / n
    pb = c.sum(axis=0) / n
    ha = -np.sum(pa[pa > 0] * np.log(pa[pa > 0]))
    hb = -np.sum(pb[pb > 0] * np.log(pb[pb > 0]))
    pj = c / n
    mask = pj > 0
    mi = np.sum(pj[mask] * (np.log(pj[mask])
                            - np.log(np.outer(pa, pb))[mask]))
    denom = (ha + hb) / 2.0
    if denom == 0:
        return 1.0  # both labelings constant: identical partitions
    return float(max(0.0, min(1.0, mi / denom)))


@dataclass(frozen=True)
class LossReport:
    """Permutation-minimized disagreement summary between two labelings."""

    ari: float
    nmi: float
    error_count: int
    l1: float
    l2: float
    best_permutation: tuple[int, ...]


def l1_l2(labels_hat, labels_true, k: int):
    """Membership losses by exact search over the k! label permutations.

    Returns ``(l1, l2, best_permutation)`` where ``best_permutation`` maps
    predicted labels onto true labels and minimizes the overall loss; the
    worst-community loss is minimized separately over permutations.
    """
    if k > 10:
        raise ValueError(
            f"exact permutation search is limited to k <= 10 (got {k}); "
            "use ARI for larger label spaces")
    labels_hat = np.asarray(labels_hat)
    labels_true = np.asarray(labels_true)
    if labels_hat.ndim == 2:  # membership matrix input
        labels_hat = labels_hat.argmax(axis=1)
    if labels_true.ndim == 2:
        labels_true = labels_true.argmax(axis=1)
    if labels_hat.shape != labels_true.shape:
        raise ValueError("labelings differ in length")
    n = len(labels_true)
    c = np.zeros((k, k), dtype=np.int64)
    np.add.at(c, (labels_hat, labels_true), 1)
    n_k = c.sum(axis=0)

    best_l1, best_l2 = np.inf, np.inf
    best_perm = None
    idx = np.arange(k)
    for perm in itertools.permutations(range(k)):
        perm = np.asarray(perm)
        agree = c[perm.argsort(), idx]  # agree[t] = #{i: perm(hat_i) = t = true_i}
        miss = n_k - agree
        l1 = 2.0 * miss.sum() / n
        with np.errstate(divide="ignore", invalid="ignore"):
            per_comm = np.where(n_k > 0, 2.0 * miss / np.where(n_k > 0, n_k, 1), 0.0)
        l2 = per_comm.max() if k else 0.0
        if l1 < best_l1 - 1e-15:
            best_l1 = l1
            best_perm = tuple(int(x) for x in perm)
        best_l2 = min(best_l2, l2)
    assert 0.0 <= best_l1 <= best_l2 <= 2.0 + 1e-12, (best_l1, best_l2)
    return float(best_l1), float(best_l2), best_perm


def error_count(labels_hat, labels_true, k: int) -> int:
    """Permutation-minimized number of mis-clustered nodes."""
    l1, _, _ = l1_l2(labels_hat, labels_true, k)
    return round(l1 * len(np.asarray(labels_true)) / 2.0)


def loss_report(labels_hat, labels_true, k: int) -> LossReport:
    l1, l2, perm = l1_l2(labels_hat, labels_true, k)
    n = len(np.asarray(labels_true))
    return LossReport(ari=ari(labels_hat, labels_true),
                      nmi=nmi(labels_hat, labels_true),
                      error_count=round(l1 * n / 2.0),
                      l1=l1, l2=l2, best_permutation=perm)
