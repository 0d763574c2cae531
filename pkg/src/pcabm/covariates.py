"""Pair covariates built from nodal attributes and graph statistics.

A recipe is a list of rules, one per line in the text form::

    same(attr)            1 when both endpoints share the attribute value
    same_value(attr, v)   1 when both endpoints equal the given value
    absdiff(attr)         |attr_i - attr_j|
    logsum1(attr)         log(attr_i + 1) + log(attr_j + 1)
    logdegprod            log(d_i * d_j) from (weighted) network degrees

Attribute tables come from CSV files with a ``node_id`` column; empty
fields and ``NA`` mark missing values, which must be imputed before any
referenced attribute is used.  All transforms are pure and deterministic
given their seed.
"""

from __future__ import annotations

import csv
import re
from dataclasses import dataclass

import numpy as np

from .network import Network, ValidationError, num_pairs

_MISSING = ("", "NA", "NaN", "nan", "None")


class RecipeError(ValueError):
    pass


class MissingAttributeError(ValueError):
    pass


class NodalTable:
    """Per-node attribute records; missing values are ``None``."""

    def __init__(self, columns: dict[str, dict[str, object]]):
        self.columns = {attr: dict(vals) for attr, vals in columns.items()}

    @classmethod
    def from_csv(cls, path) -> "NodalTable":
        with open(path, newline="") as fh:
            reader = csv.DictReader(fh)
            if reader.fieldnames is None or "node_id" not in reader.fieldnames:
                raise ValidationError(
                    [("bad_header", f"{path}: need a CSV header with a node_id column")])
            cols: dict[str, dict[str, object]] = {
                a: {} for a in reader.fieldnames if a != "node_id"}
            for row in reader:
                nid = row["node_id"].strip()
                for attr in cols:
                    raw = (row.get(attr) or "").strip()
                    cols[attr][nid] = None if raw in _MISSING else raw
        return cls(cols)

    @property
    def attributes(self) -> tuple[str, ...]:
        return tuple(self.columns)

    @property
    def node_ids(self) -> set[str]:
        ids: set[str] = set()
        for vals in self.columns.values():
            ids.update(vals)
        return ids

    def get(self, attr: str, node_id: str):
        if attr not in self.columns:
            raise MissingAttributeError(f"unknown attribute {attr!r}")
        return self.columns[attr].get(node_id)

    def missing_ids(self, attr: str) -> list[str]:
        return sorted(nid for nid, v in self.columns[attr].items() if v is None)

    def restrict(self, node_ids) -> "NodalTable":
        keep = set(node_ids)
        return NodalTable({attr: {nid: v for nid, v in vals.items() if nid in keep}
                           for attr, vals in self.columns.items()})


# ---------------------------------------------------------------------------
# imputation

_POLICY_RE = re.compile(r"^\s*([a-z_]+)\s*(?:\(\s*([^)]*)\s*\))?\s*$")


def impute(table: NodalTable, policies: dict[str, str], seed: int = 0) -> NodalTable:
    """Fill missing values per attribute policy.

    Policies: ``constant(v)``, ``mode``, and ``conditional_random(group_attr)``
    which draws from the empirical distribution of the attribute within the
    node's group (nodes whose group is also missing fall back to the global
    empirical distribution).
    """
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0x1A9E]))
    out = {attr: dict(vals) for attr, vals in table.columns.items()}
    for attr in sorted(policies):
        policy = policies[attr]
        if attr not in out:
            raise MissingAttributeError(f"unknown attribute {attr!r}")
        m = _POLICY_RE.match(policy)
        if not m:
            raise RecipeError(f"cannot parse imputation policy {policy!r}")
        name, arg = m.group(1), m.group(2)
        col = out[attr]
        missing = sorted(nid for nid, v in col.items() if v is None)
        if not missing:
            continue
        observed = [v for v in col.values() if v is not None]
        if not observed:
            raise MissingAttributeError(
                f"attribute {attr!r} has no observed values to impute from")
        if name == "constant":
            if arg is None:
                raise RecipeError("constant policy needs a value: constant(v)")
            for nid in missing:
                col[nid] = arg
        elif name == "mode":
            values, counts = np.unique(np.array(observed, dtype=object),
                                       return_counts=True)
            top = values[np.lexsort((values.astype(str), -counts))][0]
            for nid in missing:
                col[nid] = top
        elif name == "conditional_random":
            if arg is None:
                raise RecipeError(
                    "conditional_random policy needs a group attribute")
            groups = out.get(arg)
            if groups is None:
                raise MissingAttributeError(f"unknown group attribute {arg!r}")
            pool: dict[object, list] = {}
            for nid, v in col.items():
                if v is not None:
                    pool.setdefault(groups.get(nid), []).append(v)
            for values in pool.values():
                values.sort()
            all_observed = sorted(observed)
            for nid in missing:
                values = pool.get(groups.get(nid)) or all_observed
                col[nid] = values[int(rng.integers(len(values)))]
        else:
            raise RecipeError(f"unknown imputation policy {name!r}")
    return NodalTable(out)


# ---------------------------------------------------------------------------
# recipes

_RULE_RE = re.compile(r"^\s*([a-z_0-9]+)\s*(?:\(\s*([^)]*)\s*\))?\s*$")


@dataclass(frozen=True)
class Rule:
    kind: str
    attr: str | None = None
    value: str | None = None


def parse_recipe(text: str) -> tuple[Rule, ...]:
    """Parse one rule per line; blank lines and #-comments are skipped."""
    rules = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        m = _RULE_RE.match(line)
        if not m:
            raise RecipeError(f"line {lineno}: cannot parse rule {line!r}")
        kind, arg = m.group(1), m.group(2)
        if kind == "logdegprod":
            if arg:
                raise RecipeError(f"line {lineno}: logdegprod takes no argument")
            rules.append(Rule(kind))
        elif kind in ("same", "absdiff", "logsum1"):
            if not arg:
                raise RecipeError(f"line {lineno}: {kind} needs an attribute")
            rules.append(Rule(kind, attr=arg.strip()))
        elif kind == "same_value":
            parts = [s.strip() for s in (arg or "").split(",")]
            if len(parts) != 2 or not all(parts):
                raise RecipeError(
                    f"line {lineno}: same_value needs (attribute, value)")
            rules.append(Rule(kind, attr=parts[0], value=parts[1]))
        else:
            raise RecipeError(f"line {lineno}: unknown rule {kind!r}")
    if not rules:
        raise RecipeError("recipe is empty")
    return tuple(rules)


def _numeric_column(table: NodalTable, attr: str, node_ids) -> np.ndarray:
    vals = []
    bad = []
    for nid in node_ids:
        v = table.get(attr, nid)
        if v is None:
            bad.append(nid)
            continue
        try:
            vals.append(float(v))
        except (TypeError, ValueError):
            raise RecipeError(
                f"attribute {attr!r} is not numeric for node {nid!r}: {v!r}")
    if bad:
        raise MissingAttributeError(
            f"attribute {attr!r} missing for nodes {bad[:20]}"
            + (f" (and {len(bad) - 20} more)" if len(bad) > 20 else ""))
    return np.asarray(vals)


def _categorical_column(table: NodalTable, attr: str, node_ids) -> list:
    vals = []
    bad = []
    for nid in node_ids:
        v = table.get(attr, nid)
        if v is None:
            bad.append(nid)
        vals.append(v)
    if bad:
        raise MissingAttributeError(
            f"attribute {attr!r} missing for nodes {bad[:20]}"
            + (f" (and {len(bad) - 20} more)" if len(bad) > 20 else ""))
    return vals


def build_covariates(network: Network, table: NodalTable | None,
                     recipe) -> np.ndarray:
    """Evaluate a recipe into condensed pair covariates, one column per rule."""
    rules = parse_recipe(recipe) if isinstance(recipe, str) else tuple(recipe)
    n = network.n
    iu, ju = network.pair_nodes()
    z = np.zeros((num_pairs(n), len(rules)))
    for col, rule in enumerate(rules):
        if rule.kind == "logdegprod":
            d = network.degrees()
            if np.any(d == 0):
                zero = [network.node_ids[i] for i in np.flatnonzero(d == 0)[:20]]
                raise ValueError(
                    f"logdegprod needs every degree >= 1; zero-degree nodes {zero} "
                    "(restrict to the largest connected component first)")
            logd = np.log(d.astype(np.float64))
            z[:, col] = logd[iu] + logd[ju]
            continue
        if table is None:
            raise MissingAttributeError(
                f"rule {rule.kind} needs a nodal attribute table")
        if rule.kind in ("same", "same_value"):
            vals = _categorical_column(table, rule.attr, network.node_ids)
            codes = np.array([str(v) for v in vals], dtype=object)
            if rule.kind == "same":
                z[:, col] = (codes[iu] == codes[ju]).astype(np.float64)
            else:
                hit = codes == rule.value
                z[:, col] = (hit[iu] & hit[ju]).astype(np.float64)
        elif rule.kind == "absdiff":
            x = _numeric_column(table, rule.attr, network.node_ids)
            z[:, col] = np.abs(x[iu] - x[ju])
        elif rule.kind == "logsum1":
            x = _numeric_column(table, rule.attr, network.node_ids)
            if np.any(x < 0):
                raise RecipeError(f"logsum1({rule.attr}) needs values >= -0; "
                                  "found negatives")
            lx = np.log1p(x)
            z[:, col] = lx[iu] + lx[ju]
        else:  # pragma: no cover - parse_recipe rejects unknown kinds
            raise AssertionError(rule.kind)
    return z


# ---------------------------------------------------------------------------
# graph restriction and ingestion helpers


def largest_component(network: Network,
                      table: NodalTable | None = None):
    """Induced subgraph on the largest connected component, re-indexed.

    Ties between equally large components keep the one containing the
    smallest node index.  Pair covariates and the attribute table are
    restricted alongside.
    """
    n = network.n
    parent = np.arange(n)

    def find(a):
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    for i, j in zip(network.edge_i, network.edge_j):
        ri, rj = find(i), find(j)
        if ri != rj:
            parent[max(ri, rj)] = min(ri, rj)
    roots = np.array([find(i) for i in range(n)])
    uniq, counts = np.unique(roots, return_counts=True)
    if len(uniq) == 0:
        raise ValueError("empty graph")
    best_root = uniq[np.lexsort((uniq, -counts))[0]]
    keep = np.flatnonzero(roots == best_root)
    return induced_subgraph(network, keep, table)


def induced_subgraph(network: Network, keep,
                     table: NodalTable | None = None):
    keep = np.asarray(sorted(set(int(i) for i in keep)), dtype=np.int64)
    remap = -np.ones(network.n, dtype=np.int64)
    remap[keep] = np.arange(len(keep))
    mask = (remap[network.edge_i] >= 0) & (remap[network.edge_j] >= 0)
    ei = remap[network.edge_i[mask]]
    ej = remap[network.edge_j[mask]]
    ew = network.edge_w[mask]
    swap = ei > ej
    ei[swap], ej[swap] = ej[swap], ei[swap]

    z = None
    if network.p:
        from .network import pair_index
        m = len(keep)
        iu, ju = np.triu_indices(m, k=1)
        old = pair_index(keep[iu], keep[ju], network.n)
        z = network.z[old]
    node_ids = [network.node_ids[i] for i in keep]
    sub = Network(len(keep), ei, ej, ew, z, node_ids=node_ids)
    if table is None:
        return sub, None
    return sub, table.restrict(node_ids)


def symmetrize_directed(weights: dict[tuple[str, str], int], mode: str = "max",
                        cap: int | None = None):
    """Combine directed pair weights into undirected ones.

    ``mode`` is "max" (presence in either direction, paper-style) or "sum";
    ``cap`` truncates weights from above (cap=1 binarizes).
    """
    if mode not in ("max", "sum"):
        raise ValueError(f"unknown symmetrization mode {mode!r}")
    combined: dict[tuple[str, str], int] = {}
    for (a, b), w in weights.items():
        key = (a, b) if a <= b else (b, a)
        if mode == "max":
            combined[key] = max(combined.get(key, 0), w)
        else:
            combined[key] = combined.get(key, 0) + w
    if cap is not None:
        combined = {k: min(w, cap) for k, w in combined.items()}
    return {k: w for k, w in combined.items() if w > 0}


def network_from_weights(weights: dict[tuple[str, str], int]) -> Network:
    """Build a validated network from undirected string-keyed weights."""
    ids = sorted({a for a, _ in weights} | {b for _, b in weights},
                 key=lambda s: (0, int(s)) if s.isdigit() else (1, s))
    index = {nid: i for i, nid in enumerate(ids)}
    tri = sorted((min(index[a], index[b]), max(index[a], index[b]), w)
                 for (a, b), w in weights.items() if w > 0)
    ei = np.array([t[0] for t in tri], dtype=np.int64)
    ej = np.array([t[1] for t in tri], dtype=np.int64)
    ew = np.array([t[2] for t in tri], dtype=np.int64)
    return Network(len(ids), ei, ej, ew, node_ids=ids)
