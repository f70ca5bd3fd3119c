"""Attributed social graphs: schema, file I/O, features, adjacency, splits.

Attribute labels are 1-based integers per attribute type; 0 marks a missing
value. All splits are made over observed ``(user, attribute)`` cells.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from .errors import ConfigurationError, ParseError, SchemaError


@dataclass(frozen=True)
class AttributeSchema:
    names: tuple
    label_counts: tuple
    label_names: tuple = ()

    def __post_init__(self):
        if len(self.names) != len(self.label_counts):
            raise SchemaError("one label count is required per attribute name")
        if not self.names:
            raise SchemaError("schema has no attribute types")
        for name, k in zip(self.names, self.label_counts):
            if k < 2:
                raise SchemaError(f"attribute {name!r} has {k} labels; at least 2 are required")

    @classmethod
    def from_counts(cls, label_counts, names=None) -> "AttributeSchema":
        counts = tuple(int(k) for k in label_counts)
        if names is None:
            names = tuple(f"attr{j}" for j in range(len(counts)))
        return cls(tuple(names), counts)

    @property
    def n_types(self) -> int:
        return len(self.names)

    @property
    def n_features(self) -> int:
        return int(sum(self.label_counts))

    @property
    def offsets(self) -> tuple:
        return tuple(int(o) for o in np.concatenate([[0], np.cumsum(self.label_counts)[:-1]]))

    @property
    def blocks(self) -> list:
        return [(o, o + k) for o, k in zip(self.offsets, self.label_counts)]

    def digest(self) -> str:
        payload = json.dumps({"names": list(self.names), "label_counts": list(self.label_counts)})
        return hashlib.sha256(payload.encode()).hexdigest()

    def to_json(self) -> dict:
        labels = self.label_names or tuple(tuple(str(i + 1) for i in range(k)) for k in self.label_counts)
        return {"attributes": [{"name": n, "labels": list(ls)} for n, ls in zip(self.names, labels)]}

    @classmethod
    def from_json(cls, obj: dict) -> "AttributeSchema":
        try:
            attrs = obj["attributes"]
            names = tuple(str(a["name"]) for a in attrs)
            labels = tuple(tuple(str(x) for x in a["labels"]) for a in attrs)
        except (KeyError, TypeError) as exc:
            raise ParseError(f"malformed schema: {exc!r}") from exc
        return cls(names, tuple(len(ls) for ls in labels), labels)


@dataclass(frozen=True)
class AttributedGraph:
    n_users: int
    edges: np.ndarray  # (E, 2) int, u < v, sorted, unique
    schema: AttributeSchema
    assignments: np.ndarray  # (N, L) int, 0 = missing

    def __post_init__(self):
        a = self.assignments
        if a.shape != (self.n_users, self.schema.n_types):
            raise SchemaError(f"assignments shape {a.shape} != ({self.n_users}, {self.schema.n_types})")
        for j, k in enumerate(self.schema.label_counts):
            col = a[:, j]
            bad = np.flatnonzero((col < 0) | (col > k))
            if bad.size:
                raise SchemaError(
                    f"user {bad[0]} has label {col[bad[0]]} for attribute "
                    f"{self.schema.names[j]!r} which has {k} labels"
                )
        e = self.edges
        if e.size:
            if e.min() < 0 or e.max() >= self.n_users:
                raise SchemaError("edge endpoint out of range")
            if np.any(e[:, 0] == e[:, 1]):
                raise SchemaError("self-loop edges are not allowed")

    @property
    def observed(self) -> np.ndarray:
        return self.assignments != 0

    def adjacency(self) -> sp.csr_matrix:
        n = self.n_users
        if self.edges.size == 0:
            return sp.csr_matrix((n, n))
        u, v = self.edges[:, 0], self.edges[:, 1]
        rows = np.concatenate([u, v])
        cols = np.concatenate([v, u])
        a = sp.csr_matrix((np.ones(rows.size), (rows, cols)), shape=(n, n))
        a.sort_indices()
        return a


def canonical_edges(pairs, n_users: int | None = None) -> np.ndarray:
    """Unify (u, v)/(v, u), drop duplicates, return a sorted (E, 2) array."""
    arr = np.asarray(list(pairs), dtype=np.int64).reshape(-1, 2)
    if arr.size == 0:
        return np.zeros((0, 2), dtype=np.int64)
    arr = np.sort(arr, axis=1)
    return np.unique(arr, axis=0)


@dataclass(frozen=True)
class LabelMask:
    train: np.ndarray
    val: np.ndarray
    test: np.ndarray

    def __post_init__(self):
        if not (self.train.shape == self.val.shape == self.test.shape):
            raise SchemaError("train/val/test masks must share a shape")

    def fingerprint(self) -> str:
        h = hashlib.sha256()
        for m in (self.train, self.val, self.test):
            h.update(np.packbits(m).tobytes())
        return h.hexdigest()


@dataclass(frozen=True)
class UserPartition:
    labeled: np.ndarray  # sorted user indices, V^L
    unlabeled: np.ndarray  # sorted user indices, V^U


# ---------------------------------------------------------------- file I/O


def load_graph(schema_path, nodes_path, edges_path) -> AttributedGraph:
    try:
        schema_obj = json.loads(Path(schema_path).read_text())
    except json.JSONDecodeError as exc:
        raise ParseError(f"{schema_path}: line {exc.lineno}: {exc.msg}") from exc
    schema = AttributeSchema.from_json(schema_obj)
    n_types = schema.n_types

    rows = {}
    for lineno, line in enumerate(Path(nodes_path).read_text().splitlines(), start=1):
        if not line.strip():
            continue
        fields = line.split("\t")
        if len(fields) != n_types + 1:
            raise ParseError(f"{nodes_path}: line {lineno}: expected {n_types + 1} fields, got {len(fields)}")
        try:
            vals = [int(f) for f in fields]
        except ValueError as exc:
            raise ParseError(f"{nodes_path}: line {lineno}: {exc}") from exc
        uid = vals[0]
        if uid in rows:
            raise ParseError(f"{nodes_path}: line {lineno}: duplicate user id {uid}")
        for j, (lab, k) in enumerate(zip(vals[1:], schema.label_counts)):
            if not 0 <= lab <= k:
                raise SchemaError(
                    f"user {uid}: label {lab} out of range for attribute {schema.names[j]!r} (1..{k}, 0 = missing)"
                )
        rows[uid] = vals[1:]
    n = len(rows)
    if sorted(rows) != list(range(n)):
        raise ParseError(f"{nodes_path}: user ids must be dense 0..{n - 1}")
    assignments = np.array([rows[i] for i in range(n)], dtype=np.int64).reshape(n, n_types)

    pairs = []
    for lineno, line in enumerate(Path(edges_path).read_text().splitlines(), start=1):
        if not line.strip():
            continue
        fields = line.split("\t")
        if len(fields) != 2:
            raise ParseError(f"{edges_path}: line {lineno}: expected 2 fields, got {len(fields)}")
        try:
            u, v = int(fields[0]), int(fields[1])
        except ValueError as exc:
            raise ParseError(f"{edges_path}: line {lineno}: {exc}") from exc
        if not (0 <= u < n and 0 <= v < n):
            raise ParseError(f"{edges_path}: line {lineno}: endpoint outside 0..{n - 1}")
        if u == v:
            raise ParseError(f"{edges_path}: line {lineno}: self-loop {u}")
        pairs.append((u, v))
    return AttributedGraph(n, canonical_edges(pairs), schema, assignments)


def write_graph(g: AttributedGraph, out_dir, ground_truth: np.ndarray | None = None) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "schema.json").write_text(json.dumps(g.schema.to_json(), indent=2) + "\n")
    _write_assignments(out / "nodes.tsv", g.assignments)
    (out / "edges.tsv").write_text("".join(f"{u}\t{v}\n" for u, v in g.edges.tolist()))
    if ground_truth is not None:
        _write_assignments(out / "ground_truth.tsv", ground_truth)


def _write_assignments(path: Path, a: np.ndarray) -> None:
    path.write_text("".join("\t".join(map(str, [i, *row])) + "\n" for i, row in enumerate(a.tolist())))


# ------------------------------------------------------- features/adjacency


def build_feature_matrix(g: AttributedGraph, train_mask: np.ndarray) -> np.ndarray:
    """One-hot block encoding of the train-visible cells; other blocks stay zero."""
    if train_mask.shape != g.assignments.shape:
        raise SchemaError(f"mask shape {train_mask.shape} != assignments shape {g.assignments.shape}")
    x = np.zeros((g.n_users, g.schema.n_features))
    for j, off in enumerate(g.schema.offsets):
        users = np.flatnonzero(train_mask[:, j] & (g.assignments[:, j] > 0))
        x[users, off + g.assignments[users, j] - 1] = 1.0
    return x


def normalize_adjacency(g: AttributedGraph) -> sp.csr_matrix:
    """Symmetric renormalisation D^-1/2 (A + I) D^-1/2."""
    a = g.adjacency() + sp.identity(g.n_users, format="csr")
    deg = np.asarray(a.sum(axis=1)).ravel()
    inv_sqrt = 1.0 / np.sqrt(deg)
    d = sp.diags(inv_sqrt)
    out = sp.csr_matrix(d @ a @ d)
    out.sort_indices()
    return out


# ------------------------------------------------------------------ splits


def split_labels(g: AttributedGraph, ratios=(0.8, 0.1, 0.1), rng: np.random.Generator | None = None) -> LabelMask:
    """Shuffle observed cells and cut them into train/val/test by ``ratios``.

    A validation ratio of exactly 0 is allowed and yields an empty
    validation mask; train and test must be non-empty.
    """
    ratios = tuple(float(r) for r in ratios)
    if len(ratios) != 3 or any(r < 0 for r in ratios) or ratios[0] <= 0 or ratios[2] <= 0:
        raise ConfigurationError(f"split ratios must be (train>0, val>=0, test>0), got {ratios}")
    if abs(sum(ratios) - 1.0) > 1e-9:
        raise ConfigurationError(f"split ratios must sum to 1, got {sum(ratios)}")
    if rng is None:
        raise ConfigurationError("split_labels needs an explicit rng")
    cells = np.argwhere(g.observed)  # row-major order
    order = rng.permutation(len(cells))
    n = len(cells)
    n_train = int(round(ratios[0] * n))
    n_val = int(round(ratios[1] * n))
    n_test = n - n_train - n_val
    if n_train == 0 or n_test <= 0 or (ratios[1] > 0 and n_val == 0):
        raise ConfigurationError(f"split of {n} observed cells by {ratios} leaves an empty partition")
    masks = []
    for part in (order[:n_train], order[n_train : n_train + n_val], order[n_train + n_val :]):
        m = np.zeros(g.assignments.shape, dtype=bool)
        sel = cells[part]
        m[sel[:, 0], sel[:, 1]] = True
        masks.append(m)
    return LabelMask(*masks)


def sparsify_train_labels(mask: LabelMask, keep_fraction: float, rng: np.random.Generator) -> LabelMask:
    """Keep ``floor(keep_fraction * n_observed)`` training cells, sampled from the train mask.

    ``keep_fraction == 1`` is the identity regardless of how many cells the
    split put into training.
    """
    if not 0 < keep_fraction <= 1:
        raise ConfigurationError(f"keep_fraction must lie in (0, 1], got {keep_fraction}")
    if keep_fraction == 1.0:
        return mask
    n_observed = int(mask.train.sum() + mask.val.sum() + mask.test.sum())
    n_keep = int(np.floor(keep_fraction * n_observed + 1e-9))
    train_cells = np.argwhere(mask.train)
    if n_keep > len(train_cells):
        raise ConfigurationError(
            f"keeping {n_keep} of {n_observed} observed cells exceeds the {len(train_cells)} training cells"
        )
    if n_keep == len(train_cells):
        return mask
    if n_keep == 0:
        raise ConfigurationError(f"keep_fraction {keep_fraction} retains no training cells")
    chosen = train_cells[np.sort(rng.choice(len(train_cells), size=n_keep, replace=False))]
    train = np.zeros_like(mask.train)
    train[chosen[:, 0], chosen[:, 1]] = True
    return LabelMask(train, mask.val.copy(), mask.test.copy())


def partition_users(g: AttributedGraph, train_mask: np.ndarray) -> UserPartition:
    full = np.all(train_mask & g.observed, axis=1)
    labeled = np.flatnonzero(full)
    if labeled.size == 0:
        raise ConfigurationError("no user has every attribute visible in training; V^L is empty")
    return UserPartition(labeled, np.flatnonzero(~full))


# --------------------------------------------------------------- synthetic


@dataclass(frozen=True)
class SyntheticGraph:
    graph: AttributedGraph
    ground_truth: np.ndarray  # full assignments before cells were hidden
    communities: np.ndarray


def generate_synthetic(
    n_users: int,
    schema: AttributeSchema,
    n_communities: int,
    homophily: float,
    missing_rate: float,
    rng: np.random.Generator,
    avg_degree: float = 10.0,
) -> SyntheticGraph:
    """Planted-partition graph whose labels follow community membership.

    Each cell takes its community-aligned label with probability
    ``homophily`` and a uniform label otherwise. Same-community pairs are
    linked with probability ``p_in`` and others with ``p_in * (1 - homophily)``,
    where ``p_in`` is chosen so the expected degree equals ``avg_degree``.
    """
    if n_communities < 1 or n_communities > min(schema.label_counts):
        raise ConfigurationError(f"n_communities must be in 1..{min(schema.label_counts)}")
    if not 0 <= homophily <= 1 or not 0 <= missing_rate < 1:
        raise ConfigurationError("homophily must be in [0, 1] and missing_rate in [0, 1)")
    if avg_degree < 1:
        raise ConfigurationError(f"expected degree {avg_degree} < 1")

    communities = rng.permutation(np.arange(n_users) % n_communities)
    truth = np.empty((n_users, schema.n_types), dtype=np.int64)
    for j, k in enumerate(schema.label_counts):
        aligned = rng.random(n_users) < homophily
        uniform = rng.integers(1, k + 1, size=n_users)
        truth[:, j] = np.where(aligned, communities + 1, uniform)

    sizes = np.bincount(communities, minlength=n_communities).astype(float)
    same_pairs = float((sizes * (sizes - 1)).sum())  # ordered pairs
    diff_pairs = float(n_users * (n_users - 1)) - same_pairs
    p_in = avg_degree * n_users / (same_pairs + (1.0 - homophily) * diff_pairs)
    if p_in > 1:
        raise ConfigurationError(f"expected degree {avg_degree} is unreachable for {n_users} users at this homophily")
    p_out = p_in * (1.0 - homophily)
    iu, ju = np.triu_indices(n_users, k=1)
    prob = np.where(communities[iu] == communities[ju], p_in, p_out)
    keep = rng.random(iu.size) < prob
    edges = np.stack([iu[keep], ju[keep]], axis=1).astype(np.int64)

    observed = truth.copy()
    n_cells = observed.size
    n_missing = int(round(missing_rate * n_cells))
    hide = rng.choice(n_cells, size=n_missing, replace=False)
    observed.reshape(-1)[hide] = 0
    graph = AttributedGraph(n_users, edges, schema, observed)
    return SyntheticGraph(graph, truth, communities)
