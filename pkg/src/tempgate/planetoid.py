"""Converter from Planetoid-style raw citation files to the text format.

The Planetoid distribution of Cora/Citeseer/Pubmed ships eight pickled
files per dataset (ind.<name>.{x,y,tx,ty,allx,ally,graph,test.index}).
This utility reassembles them into one `edge-text` file: symmetrized,
deduplicated, self-loop-free edges; row-normalized features; and the
standard split (train = first labeled block, val = next 500, test = the
test index list).

Only unpickle files you trust; the raw files are loaded with
pickle(encoding="latin1") as they were written by Python 2.
"""

from __future__ import annotations

import pickle
import warnings
from pathlib import Path

import numpy as np
import scipy.sparse as sp

FILE_SUFFIXES = ("x", "y", "tx", "ty", "allx", "ally", "graph", "test.index")


def _load_pickle(path):
    with open(path, "rb") as fh:
        with warnings.catch_warnings():
            # The pickles reference pre-1.8 scipy.sparse module paths.
            warnings.simplefilter("ignore", DeprecationWarning)
            return pickle.load(fh, encoding="latin1")


def row_normalize(features):
    """Scale every row to sum to 1; all-zero rows stay zero."""
    dense = np.asarray(features, dtype=np.float64)
    sums = dense.sum(axis=1, keepdims=True)
    sums[sums == 0] = 1.0
    return dense / sums


def load_planetoid(raw_dir, name):
    """Assemble (features, labels, edges, masks) from the raw pickles."""
    raw_dir = Path(raw_dir)
    parts = {}
    for suffix in FILE_SUFFIXES:
        path = raw_dir / f"ind.{name}.{suffix}"
        if not path.exists():
            raise FileNotFoundError(f"missing Planetoid file: {path}")
        if suffix == "test.index":
            parts[suffix] = np.loadtxt(path, dtype=np.int64)
        else:
            parts[suffix] = _load_pickle(path)
    x, y = parts["x"], parts["y"]
    tx, ty = parts["tx"], parts["ty"]
    allx, ally = parts["allx"], parts["ally"]
    graph = parts["graph"]
    test_idx = parts["test.index"]

    # tx row k belongs to node test_idx[k]; Citeseer has isolated test nodes
    # absent from tx, so pad the full index range with zero rows.
    lo = int(test_idx.min())
    full_size = int(test_idx.max()) - lo + 1
    tx_full = sp.lil_matrix((full_size, tx.shape[1]))
    ty_full = np.zeros((full_size, ty.shape[1]))
    tx_full[test_idx - lo] = sp.lil_matrix(tx)
    ty_full[test_idx - lo] = ty

    features = sp.vstack([sp.csr_matrix(allx), sp.csr_matrix(tx_full)]).toarray()
    onehot = np.vstack([ally, ty_full])
    labels = onehot.argmax(axis=1)

    n = features.shape[0]
    pairs = set()
    for u, nbrs in graph.items():
        for v in nbrs:
            if u == v:
                continue
            pairs.add((u, v))
            pairs.add((v, u))
    edges = np.array(sorted(pairs), dtype=np.int64).reshape(-1, 2)

    train_mask = np.zeros(n, dtype=bool)
    val_mask = np.zeros(n, dtype=bool)
    test_mask = np.zeros(n, dtype=bool)
    train_mask[: y.shape[0]] = True
    val_mask[y.shape[0] : y.shape[0] + 500] = True
    test_mask[test_idx] = True
    return features, labels, edges, (train_mask, val_mask, test_mask)


def convert_planetoid(raw_dir, name, out_path, normalize=True):
    """Write one Planetoid dataset as an edge-text file.

    Returns (num_nodes, num_edges, num_features, num_classes).
    """
    features, labels, edges, (train_mask, val_mask, test_mask) = load_planetoid(
        raw_dir, name
    )
    if normalize:
        features = row_normalize(features)
    n, d = features.shape
    c = int(labels.max()) + 1
    split = np.full(n, "none", dtype=object)
    split[train_mask] = "train"
    split[val_mask] = "val"
    split[test_mask] = "test"
    with open(out_path, "w", encoding="ascii") as fh:
        fh.write(f"{n} {edges.shape[0]} {d} {c}\n")
        for u, v in edges:
            fh.write(f"{u} {v}\n")
        for row in features:
            fh.write(" ".join(repr(float(v)) for v in row) + "\n")
        for lab, spl in zip(labels, split):
            fh.write(f"{lab} {spl}\n")
    return n, edges.shape[0], d, c
