"""Sparse graph containers, the text dataset format, and two-class CSBM
sampling.

Graphs are immutable CSR: row i lists the nodes node i aggregates from (its
in-neighbors under the message-passing reading of an edge line `src dst`,
i.e. src ends up in row dst). All shipped datasets are symmetric, where the
distinction is moot. Attention coefficients live on directed edges, so
undirected sources are expanded to both directions before they get here.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

SPLIT_NAMES = ("train", "val", "test", "none")


class DatasetFormatError(ValueError):
    """Raised when a dataset file violates the text format."""


@dataclass(frozen=True)
class Graph:
    """Immutable directed graph in compressed sparse row form."""

    num_nodes: int
    row_offsets: np.ndarray
    col_indices: np.ndarray
    has_self_loops: bool = False

    def __post_init__(self):
        off = np.asarray(self.row_offsets, dtype=np.int64)
        col = np.asarray(self.col_indices, dtype=np.int64)
        object.__setattr__(self, "row_offsets", off)
        object.__setattr__(self, "col_indices", col)
        if off.shape != (self.num_nodes + 1,):
            raise ValueError("row_offsets must have length num_nodes + 1")
        if off[0] != 0 or off[-1] != col.size:
            raise ValueError("row_offsets must start at 0 and end at num_edges")
        if np.any(np.diff(off) < 0):
            raise ValueError("row_offsets must be non-decreasing")
        if col.size and (col.min() < 0 or col.max() >= self.num_nodes):
            raise ValueError("col_indices out of range")
        if self.has_self_loops:
            for i in range(self.num_nodes):
                row = col[off[i] : off[i + 1]]
                if np.count_nonzero(row == i) != 1:
                    raise ValueError(f"node {i} lacks a unique self-loop")

    @property
    def num_edges(self):
        return int(self.col_indices.size)

    @property
    def degrees(self):
        return np.diff(self.row_offsets)

    def neighbors(self, i):
        return self.col_indices[self.row_offsets[i] : self.row_offsets[i + 1]]

    def edge_endpoints(self):
        """(src, dst) arrays over all directed edges, dst sorted ascending."""
        dst = np.repeat(np.arange(self.num_nodes), self.degrees)
        return self.col_indices, dst


def from_edges(num_nodes, src, dst, allow_duplicates=False):
    """Build a Graph whose row `dst` aggregates `src`.

    Duplicate directed edges are rejected unless allow_duplicates is set,
    in which case they are collapsed.
    """
    src = np.asarray(src, dtype=np.int64)
    dst = np.asarray(dst, dtype=np.int64)
    if src.shape != dst.shape:
        raise ValueError("src and dst must have identical length")
    if src.size:
        if min(src.min(), dst.min()) < 0 or max(src.max(), dst.max()) >= num_nodes:
            raise ValueError("edge endpoint out of range")
    keys = dst * num_nodes + src
    uniq = np.unique(keys)
    if uniq.size != keys.size and not allow_duplicates:
        raise ValueError("duplicate directed edge")
    order = np.sort(uniq)
    col = (order % num_nodes).astype(np.int64)
    rows = (order // num_nodes).astype(np.int64)
    offsets = np.zeros(num_nodes + 1, dtype=np.int64)
    np.cumsum(np.bincount(rows, minlength=num_nodes), out=offsets[1:])
    has_loops = _all_have_self_loop(num_nodes, offsets, col)
    return Graph(num_nodes, offsets, col, has_self_loops=has_loops)


def _all_have_self_loop(num_nodes, offsets, col):
    if num_nodes == 0:
        return False
    dst = np.repeat(np.arange(num_nodes), np.diff(offsets))
    loop_rows = dst[col == dst]
    return np.unique(loop_rows).size == num_nodes


def add_self_loops(g):
    """Return a graph where every node has exactly one self-edge.

    Idempotent; all other edges are preserved.
    """
    if g.has_self_loops:
        return g
    src, dst = g.edge_endpoints()
    keep = src != dst
    missing = np.arange(g.num_nodes)
    new_src = np.concatenate([src[keep], missing])
    new_dst = np.concatenate([dst[keep], missing])
    out = from_edges(g.num_nodes, new_src, new_dst)
    return Graph(out.num_nodes, out.row_offsets, out.col_indices, has_self_loops=True)


@dataclass
class LabeledDataset:
    """Graph plus node features, integer labels and split masks."""

    graph: Graph
    features: np.ndarray
    labels: np.ndarray
    num_classes: int
    train_mask: np.ndarray
    val_mask: np.ndarray
    test_mask: np.ndarray

    def __post_init__(self):
        feats = np.asarray(self.features, dtype=np.float64)
        if feats.ndim != 2 or feats.shape[0] != self.graph.num_nodes:
            raise ValueError("features must be a num_nodes x d matrix")
        if not np.all(np.isfinite(feats)):
            raise ValueError("features must be finite")
        self.features = feats
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.labels.shape != (self.graph.num_nodes,):
            raise ValueError("labels must have one entry per node")
        for name in ("train_mask", "val_mask", "test_mask"):
            m = np.asarray(getattr(self, name), dtype=bool)
            if m.shape != (self.graph.num_nodes,):
                raise ValueError(f"{name} must have one entry per node")
            setattr(self, name, m)
        overlap = (
            (self.train_mask & self.val_mask)
            | (self.train_mask & self.test_mask)
            | (self.val_mask & self.test_mask)
        )
        if np.any(overlap):
            raise ValueError("split masks must be pairwise disjoint")
        masked = self.train_mask | self.val_mask | self.test_mask
        bad = masked & ((self.labels < 0) | (self.labels >= self.num_classes))
        if np.any(bad):
            raise ValueError("masked node with label out of range")

    @property
    def num_features(self):
        return self.features.shape[1]

    def signed_labels(self):
        """Binary labels in +-1 coding (class 0 -> -1, class 1 -> +1)."""
        if self.num_classes != 2:
            raise ValueError("signed labels need a binary dataset")
        return self.labels.astype(np.float64) * 2.0 - 1.0


def load_dataset(path, format="edge-text", symmetrize=False):
    """Read the text dataset format.

    Layout: line 1 `n m d C`; m lines `src dst` (0-based, src joins row dst);
    n feature lines of d reals; n lines `label split`. Counts must match the
    header exactly. With symmetrize=True the reverse of every edge is added
    (deduplicated), for undirected sources stored one direction per pair.
    """
    if format != "edge-text":
        raise ValueError(f"unknown dataset format: {format}")
    with open(path, "r", encoding="ascii") as fh:
        lines = fh.read().splitlines()
    if not lines:
        raise DatasetFormatError("line 1: empty file")
    head = lines[0].split()
    if len(head) != 4:
        raise DatasetFormatError("line 1: header must be `n m d C`")
    try:
        n, m, d, c = (int(x) for x in head)
    except ValueError as err:
        raise DatasetFormatError(f"line 1: {err}") from None
    if n < 0 or m < 0 or d <= 0 or c <= 0:
        raise DatasetFormatError("line 1: counts out of range")
    expected = 1 + m + n + n
    if len(lines) < expected:
        raise DatasetFormatError(
            f"file has {len(lines)} lines, header implies {expected}"
        )
    src = np.empty(m, dtype=np.int64)
    dst = np.empty(m, dtype=np.int64)
    for k in range(m):
        lineno = 2 + k
        parts = lines[1 + k].split()
        if len(parts) != 2:
            raise DatasetFormatError(f"line {lineno}: expected `src dst`")
        try:
            s, t = int(parts[0]), int(parts[1])
        except ValueError:
            raise DatasetFormatError(f"line {lineno}: malformed edge") from None
        if not (0 <= s < n and 0 <= t < n):
            raise DatasetFormatError(f"line {lineno}: endpoint out of range")
        src[k], dst[k] = s, t
    feats = np.empty((n, d), dtype=np.float64)
    for i in range(n):
        lineno = 2 + m + i
        parts = lines[1 + m + i].split()
        if len(parts) != d:
            raise DatasetFormatError(f"line {lineno}: expected {d} features")
        try:
            feats[i] = [float(x) for x in parts]
        except ValueError:
            raise DatasetFormatError(f"line {lineno}: malformed feature") from None
    labels = np.empty(n, dtype=np.int64)
    masks = {s: np.zeros(n, dtype=bool) for s in SPLIT_NAMES}
    for i in range(n):
        lineno = 2 + m + n + i
        parts = lines[1 + m + n + i].split()
        if len(parts) != 2:
            raise DatasetFormatError(f"line {lineno}: expected `label split`")
        try:
            lab = int(parts[0])
        except ValueError:
            raise DatasetFormatError(f"line {lineno}: malformed label") from None
        if not 0 <= lab < c:
            raise DatasetFormatError(f"line {lineno}: label out of range")
        if parts[1] not in masks:
            raise DatasetFormatError(f"line {lineno}: unknown split `{parts[1]}`")
        labels[i] = lab
        masks[parts[1]][i] = True
    if symmetrize:
        all_src = np.concatenate([src, dst])
        all_dst = np.concatenate([dst, src])
        graph = from_edges(n, all_src, all_dst, allow_duplicates=True)
    else:
        try:
            graph = from_edges(n, src, dst)
        except ValueError as err:
            raise DatasetFormatError(str(err)) from None
    if graph.num_nodes != n or (not symmetrize and graph.num_edges != m):
        raise DatasetFormatError("node/edge counts do not match header")
    return LabeledDataset(
        graph=graph,
        features=feats,
        labels=labels,
        num_classes=c,
        train_mask=masks["train"],
        val_mask=masks["val"],
        test_mask=masks["test"],
    )


def save_dataset(ds, path):
    """Write a dataset in the text format read by load_dataset."""
    g = ds.graph
    src, dst = g.edge_endpoints()
    split = np.full(g.num_nodes, "none", dtype=object)
    split[ds.train_mask] = "train"
    split[ds.val_mask] = "val"
    split[ds.test_mask] = "test"
    with open(path, "w", encoding="ascii") as fh:
        fh.write(f"{g.num_nodes} {g.num_edges} {ds.num_features} {ds.num_classes}\n")
        for s, t in zip(src, dst):
            fh.write(f"{s} {t}\n")
        for row in ds.features:
            fh.write(" ".join(repr(float(v)) for v in row) + "\n")
        for lab, sp in zip(ds.labels, split):
            fh.write(f"{lab} {sp}\n")


@dataclass(frozen=True)
class CsbmParams:
    """Two-class contextual stochastic block model world.

    Intra-class pairs link with probability a/n, inter-class with b/n.
    The homophily level is m = (a - b) / (a + b).
    """

    n: int
    a: float
    b: float
    mu: np.ndarray = field(default_factory=lambda: np.ones(1))
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "mu", np.asarray(self.mu, dtype=np.float64))
        if self.n <= 0:
            raise ValueError("n must be positive")
        if not (self.a >= self.b > 0):
            raise ValueError("require a >= b > 0")
        if self.a > self.n or self.b > self.n:
            raise ValueError("edge intensities must satisfy a/n <= 1, b/n <= 1")
        if self.mu.ndim != 1 or self.mu.size == 0:
            raise ValueError("mu must be a non-empty vector")

    @property
    def m(self):
        """Expected neighbor-label alignment (a - b) / (a + b)."""
        return (self.a - self.b) / (self.a + self.b)

    @property
    def mean_degree(self):
        return (self.a + self.b) / 2.0


def csbm_sample(p):
    """Draw one CSBM world: labels, pairwise edges, noiseless features y*mu.

    Labels are i.i.d. uniform over +-1 (stored as classes 0/1); every
    unordered pair is linked independently with the class-dependent
    probability and stored in both directions. Deterministic per seed; noise
    is applied separately by the noise module.
    """
    rng = np.random.default_rng(p.seed)
    classes = rng.integers(0, 2, size=p.n)
    y = classes.astype(np.float64) * 2.0 - 1.0
    pa, pb = p.a / p.n, p.b / p.n
    src_parts, dst_parts = [], []
    for i in range(p.n - 1):
        js = np.arange(i + 1, p.n)
        prob = np.where(classes[js] == classes[i], pa, pb)
        hit = js[rng.random(js.size) < prob]
        if hit.size:
            src_parts.append(np.full(hit.size, i, dtype=np.int64))
            dst_parts.append(hit)
    if src_parts:
        s = np.concatenate(src_parts)
        t = np.concatenate(dst_parts)
        graph = from_edges(p.n, np.concatenate([s, t]), np.concatenate([t, s]))
    else:
        graph = from_edges(p.n, [], [])
    feats = y[:, None] * p.mu[None, :]
    empty = np.zeros(p.n, dtype=bool)
    return LabeledDataset(
        graph=graph,
        features=feats,
        labels=classes,
        num_classes=2,
        train_mask=empty,
        val_mask=empty.copy(),
        test_mask=empty.copy(),
    )


def neighbor_label_mean(ds):
    """Average of y_i * y_j in +-1 coding over all directed edges.

    The plug-in estimate of m for CSBM samples (which carry no self-loops;
    a self-loop would contribute +1).
    """
    if ds.graph.num_edges == 0:
        raise ValueError("graph has no edges")
    y = ds.signed_labels()
    src, dst = ds.graph.edge_endpoints()
    return float(np.mean(y[src] * y[dst]))
