"""Readers and writers for edge lists, pair covariates, and label files.

Edge-list format: one record per line, whitespace separated, ``src dst
[weight]`` with weight defaulting to 1.  Node ids are arbitrary strings;
they are mapped to dense 0-based indices (numeric sort when every id parses
as an integer, lexicographic otherwise) and the id map is carried on the
returned network.  Duplicate lines for the same unordered pair are summed;
self-loops are rejected.

Pair-covariate format: ``src dst v1 ... vp``; pairs absent from the file get
the zero vector.

Label format: CSV ``node_id,community`` with an optional header line.
Communities are written 1-based externally and mapped to 0-based internally.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .network import Network, ValidationError, num_pairs, pair_index


def _sorted_ids(ids) -> list[str]:
    ids = set(ids)
    try:
        return sorted(ids, key=lambda s: (0, int(s)))
    except ValueError:
        return sorted(ids)


def _parse_edge_lines(path):
    """Yield (line_no, src, dst, weight) from an edge-list file."""
    with open(path) as fh:
        for line_no, line in enumerate(fh, start=1):
            parts = line.split()
            if not parts or parts[0].startswith("#"):
                continue
            if len(parts) not in (2, 3):
                raise ValidationError(
                    [("bad_record", f"{path}:{line_no}: expected 'src dst [weight]'")])
            w = 1
            if len(parts) == 3:
                try:
                    w = int(parts[2])
                except ValueError:
                    raise ValidationError(
                        [("bad_weight", f"{path}:{line_no}: weight {parts[2]!r} is not an integer")])
            if w < 0:
                raise ValidationError(
                    [("bad_weight", f"{path}:{line_no}: negative weight {w}")])
            yield line_no, parts[0], parts[1], w


def read_edge_list(path) -> Network:
    """Load an undirected network, summing duplicate records per pair."""
    weights: dict[tuple[str, str], int] = {}
    violations = []
    ids = set()
    for line_no, src, dst, w in _parse_edge_lines(path):
        if src == dst:
            violations.append(("self_loop", f"{path}:{line_no}: node {src!r}"))
            continue
        ids.update((src, dst))
        key = (src, dst) if src <= dst else (dst, src)
        weights[key] = weights.get(key, 0) + w
    if violations:
        raise ValidationError(violations)
    if len(ids) < 2:
        raise ValidationError([("size", f"{path}: fewer than 2 nodes")])

    node_ids = _sorted_ids(ids)
    index = {nid: i for i, nid in enumerate(node_ids)}
    n = len(node_ids)
    tri = sorted((min(index[a], index[b]), max(index[a], index[b]), w)
                 for (a, b), w in weights.items() if w > 0)
    ei = np.array([t[0] for t in tri], dtype=np.int64)
    ej = np.array([t[1] for t in tri], dtype=np.int64)
    ew = np.array([t[2] for t in tri], dtype=np.int64)
    return Network(n, ei, ej, ew, node_ids=node_ids)


def read_directed_edge_list(path):
    """Load directed records as a dict (src, dst) -> summed weight, plus ids."""
    weights: dict[tuple[str, str], int] = {}
    ids = set()
    for line_no, src, dst, w in _parse_edge_lines(path):
        if src == dst:
            raise ValidationError([("self_loop", f"{path}:{line_no}: node {src!r}")])
        ids.update((src, dst))
        weights[(src, dst)] = weights.get((src, dst), 0) + w
    return weights, _sorted_ids(ids)


def read_pair_covariates(path, network: Network) -> Network:
    """Attach covariates from a ``src dst v1 ... vp`` file to a network."""
    index = {nid: i for i, nid in enumerate(network.node_ids)}
    n = network.n
    p = None
    z = None
    seen: dict[int, int] = {}
    violations = []
    with open(path) as fh:
        for line_no, line in enumerate(fh, start=1):
            parts = line.split()
            if not parts or parts[0].startswith("#"):
                continue
            if len(parts) < 3:
                violations.append(("bad_record",
                                   f"{path}:{line_no}: expected 'src dst v1 ... vp'"))
                continue
            src, dst, vals = parts[0], parts[1], parts[2:]
            if src not in index or dst not in index:
                violations.append(("unknown_node",
                                   f"{path}:{line_no}: pair ({src},{dst}) not in network"))
                continue
            if src == dst:
                violations.append(("self_loop", f"{path}:{line_no}: node {src!r}"))
                continue
            if p is None:
                p = len(vals)
                z = np.zeros((num_pairs(n), p))
            if len(vals) != p:
                violations.append(("covariate_length",
                                   f"{path}:{line_no}: pair ({src},{dst}) has {len(vals)} values, expected p={p}"))
                continue
            i, j = index[src], index[dst]
            idx = int(pair_index(min(i, j), max(i, j), n))
            vec = np.array([float(v) for v in vals])
            if idx in seen and not np.array_equal(z[idx], vec):
                violations.append(("conflicting_pair",
                                   f"{path}:{line_no}: pair ({src},{dst}) repeated with different values"))
                continue
            seen[idx] = line_no
            z[idx] = vec
    if violations:
        raise ValidationError(violations)
    if p is None:
        raise ValidationError([("empty_file", f"{path}: no covariate records")])
    return network.replace_covariates(z)


def write_edge_list(path, network: Network) -> None:
    with open(path, "w") as fh:
        for i, j, w in zip(network.edge_i, network.edge_j, network.edge_w):
            fh.write(f"{network.node_ids[i]} {network.node_ids[j]} {w}\n")


def write_pair_covariates(path, network: Network) -> None:
    iu, ju = network.pair_nodes()
    with open(path, "w") as fh:
        for idx in range(network.z.shape[0]):
            row = network.z[idx]
            vals = " ".join(repr(float(v)) for v in row)
            fh.write(f"{network.node_ids[iu[idx]]} {network.node_ids[ju[idx]]} {vals}\n")


def write_labels(path, node_ids, labels) -> None:
    """Write ``node_id,community`` CSV; communities are 1-based on disk."""
    with open(path, "w") as fh:
        fh.write("node_id,community\n")
        for nid, lab in zip(node_ids, labels):
            fh.write(f"{nid},{int(lab) + 1}\n")


def read_labels(path, node_ids) -> np.ndarray:
    """Read a label CSV back into a 0-based array aligned with node_ids."""
    index = {nid: i for i, nid in enumerate(node_ids)}
    raw: dict[int, str] = {}
    with open(path) as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            parts = line.split(",")
            if line_no == 1 and parts[0].strip().lower() in ("node_id", "node", "id"):
                continue
            if len(parts) != 2:
                raise ValidationError([("bad_record", f"{path}:{line_no}: expected 'node_id,community'")])
            nid, lab = parts[0].strip(), parts[1].strip()
            if nid not in index:
                raise ValidationError([("unknown_node", f"{path}:{line_no}: node {nid!r} not in network")])
            raw[index[nid]] = lab
    missing = [node_ids[i] for i in range(len(node_ids)) if i not in raw]
    if missing:
        raise ValidationError([("missing_label", f"{path}: no label for node {m!r}")
                               for m in missing])
    # map arbitrary community tags to dense 0-based codes, order-preserving
    # for integer tags (so 1..K files map to 0..K-1)
    tags = [raw[i] for i in range(len(node_ids))]
    try:
        codes = [int(t) for t in tags]
        uniq = sorted(set(codes))
    except ValueError:
        uniq = sorted(set(tags))
        codes = tags
    remap = {t: i for i, t in enumerate(uniq)}
    return np.array([remap[c] for c in codes], dtype=np.int64)


def write_json(path, obj) -> None:
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")
