"""Binary genealogical trees: node paths, trait storage, pair extraction.

Nodes are addressed by binary paths (the root is the empty string ``""``,
the children of ``u`` are ``u+"0"`` and ``u+"1"``).  Internally nodes map to
heap indices: root -> 0, children of ``i`` -> ``2i+1`` and ``2i+2``, so that
generation ``m`` occupies the contiguous index block
``[2^m - 1, 2^(m+1) - 2]`` in breadth-first order.
"""

from __future__ import annotations

import csv
from typing import Iterator, Mapping

import numpy as np

from .errors import DataError

#: hard cap on the generation index accepted from input files (~2e9 nodes)
DEPTH_LIMIT = 30

#: deepest tree stored as a dense array; deeper trees fall back to a
#: sorted sparse index (dense depth 21 is ~32 MB of float64)
_DENSE_DEPTH_LIMIT = 21


def full_tree_size(n: int) -> int:
    """Number of nodes in the full tree up to generation ``n`` (|T_n|)."""
    if n < 0:
        raise ValueError(f"generation index must be >= 0, got {n}")
    return 2 ** (n + 1) - 1


def generation_size(m: int) -> int:
    """Number of nodes in generation ``m`` (|G_m|)."""
    if m < 0:
        raise ValueError(f"generation index must be >= 0, got {m}")
    return 2 ** m


def path_to_index(path: str) -> int:
    """Heap index of a binary path ("" -> 0, "0" -> 1, "1" -> 2, ...)."""
    m = len(path)
    offset = int(path, 2) if m > 0 else 0
    return 2 ** m - 1 + offset


def index_to_path(index: int) -> str:
    """Binary path of a heap index; inverse of :func:`path_to_index`."""
    if index < 0:
        raise ValueError(f"heap index must be >= 0, got {index}")
    m = (index + 1).bit_length() - 1
    offset = index - (2 ** m - 1)
    return format(offset, f"0{m}b") if m > 0 else ""


def generation_of_index(index: int) -> int:
    return (index + 1).bit_length() - 1


def _validate_path(path: str) -> None:
    if any(ch not in "01" for ch in path):
        raise DataError(f"malformed node path {path!r}: only '0'/'1' allowed")
    if len(path) > DEPTH_LIMIT:
        raise DataError(
            f"node path of generation {len(path)} exceeds the depth limit {DEPTH_LIMIT}"
        )


class BinaryTreeData:
    """Trait values on a binary tree of a fixed depth, missing nodes allowed.

    Immutable after construction.  ``depth`` is the largest generation the
    tree extends to; every stored node has generation <= depth.  Storage is
    a dense array (NaN marks missing nodes) for shallow trees and a sorted
    sparse index for deep ones; ``storage`` may force either backend.
    """

    def __init__(self, depth: int, index: np.ndarray, values: np.ndarray,
                 storage: str = "auto"):
        if depth < 0:
            raise DataError(f"depth must be >= 0, got {depth}")
        if depth > DEPTH_LIMIT:
            raise DataError(f"depth {depth} exceeds the depth limit {DEPTH_LIMIT}")
        index = np.asarray(index, dtype=np.int64)
        values = np.asarray(values, dtype=np.float64)
        if index.shape != values.shape or index.ndim != 1:
            raise DataError("index and values must be 1-D arrays of equal length")
        if index.size and generation_of_index(int(index.max())) > depth:
            raise DataError("stored node beyond the declared depth")
        order = np.argsort(index, kind="stable")
        index = index[order]
        values = values[order]
        if index.size and np.any(np.diff(index) == 0):
            dup = int(index[np.nonzero(np.diff(index) == 0)[0][0]])
            raise DataError(f"duplicate node {index_to_path(dup)!r}")
        if not np.all(np.isfinite(values)):
            bad = int(index[~np.isfinite(values)][0])
            raise DataError(f"non-finite value at node {index_to_path(bad)!r}")

        self.depth = int(depth)
        if storage not in ("auto", "dense", "sparse"):
            raise ValueError(f"unknown storage {storage!r}")
        use_dense = storage == "dense" or (storage == "auto" and depth <= _DENSE_DEPTH_LIMIT)
        if use_dense:
            dense = np.full(full_tree_size(depth), np.nan)
            dense[index] = values
            self._dense: np.ndarray | None = dense
            self._index = None
            self._values = None
        else:
            self._dense = None
            self._index = index
            self._values = values

    # -- constructors ------------------------------------------------------

    @classmethod
    def from_dense(cls, dense: np.ndarray, depth: int) -> "BinaryTreeData":
        """Build from a heap-ordered array covering the full tree (NaN = missing)."""
        dense = np.asarray(dense, dtype=np.float64)
        if dense.shape != (full_tree_size(depth),):
            raise DataError(
                f"dense array of length {dense.size} does not match depth {depth}"
            )
        mask = np.isfinite(dense)
        idx = np.nonzero(mask)[0].astype(np.int64)
        return cls(depth, idx, dense[mask])

    @classmethod
    def from_mapping(cls, mapping: Mapping[str, float], depth: int | None = None,
                     storage: str = "auto") -> "BinaryTreeData":
        """Build from a ``{path: value}`` mapping; depth defaults to the deepest node."""
        for path in mapping:
            _validate_path(path)
        idx = np.array([path_to_index(p) for p in mapping], dtype=np.int64)
        vals = np.array([mapping[p] for p in mapping], dtype=np.float64)
        if depth is None:
            depth = max((len(p) for p in mapping), default=0)
        return cls(depth, idx, vals, storage=storage)

    # -- basic queries ------------------------------------------------------

    @property
    def n_observed(self) -> int:
        """Count of stored nodes over the whole tree."""
        if self._dense is not None:
            return int(np.isfinite(self._dense).sum())
        return self._index.size

    def observed_count(self, up_to: int) -> int:
        """Count of stored nodes with generation <= ``up_to``."""
        return self.values_up_to(up_to).size

    def is_full(self, up_to: int | None = None) -> bool:
        """True when every node up to generation ``up_to`` (default: depth) is stored."""
        n = self.depth if up_to is None else up_to
        return self.observed_count(n) == full_tree_size(n)

    def value_at(self, path: str) -> float:
        """Stored value at ``path`` (NaN when missing)."""
        _validate_path(path)
        i = path_to_index(path)
        if self._dense is not None:
            return float(self._dense[i]) if i < self._dense.size else float("nan")
        pos = np.searchsorted(self._index, i)
        if pos < self._index.size and self._index[pos] == i:
            return float(self._values[pos])
        return float("nan")

    def values_up_to(self, n: int) -> np.ndarray:
        """Values of stored nodes in T_n, in breadth-first (heap) order."""
        if n < 0:
            return np.empty(0)
        n = min(n, self.depth)
        cut = full_tree_size(n)
        if self._dense is not None:
            block = self._dense[:cut]
            return block[np.isfinite(block)]
        stop = np.searchsorted(self._index, cut)
        return self._values[:stop].copy()

    def generation_values(self, m: int) -> tuple[np.ndarray, np.ndarray]:
        """(heap indices, values) of the stored nodes of generation ``m``."""
        lo, hi = full_tree_size(m) - generation_size(m), full_tree_size(m)
        if self._dense is not None:
            block = self._dense[lo:hi]
            mask = np.isfinite(block)
            return lo + np.nonzero(mask)[0].astype(np.int64), block[mask]
        a = np.searchsorted(self._index, lo)
        b = np.searchsorted(self._index, hi)
        return self._index[a:b].copy(), self._values[a:b].copy()

    # -- pair extraction ----------------------------------------------------

    def pairs(self, iota: int, up_to: int) -> tuple[np.ndarray, np.ndarray]:
        """Complete (parent, child of type ``iota``) value pairs, parents in T_``up_to``.

        Returns two aligned arrays in breadth-first parent order.  A pair is
        complete when both the parent and the type-``iota`` child are stored.
        """
        if iota not in (0, 1):
            raise ValueError(f"child type must be 0 or 1, got {iota}")
        if up_to >= self.depth:
            raise ValueError(
                f"parent generation cap {up_to} needs children of generation "
                f"{up_to + 1} > depth {self.depth}"
            )
        if up_to < 0:
            return np.empty(0), np.empty(0)
        cut = full_tree_size(up_to)
        if self._dense is not None:
            parents = self._dense[:cut]
            child_idx = 2 * np.arange(cut, dtype=np.int64) + 1 + iota
            children = self._dense[child_idx]
            mask = np.isfinite(parents) & np.isfinite(children)
            return parents[mask], children[mask]
        stop = np.searchsorted(self._index, cut)
        pidx = self._index[:stop]
        pval = self._values[:stop]
        if pidx.size == 0:
            return np.empty(0), np.empty(0)
        want = 2 * pidx + 1 + iota
        pos = np.searchsorted(self._index, want)
        pos = np.minimum(pos, self._index.size - 1)
        hit = self._index[pos] == want
        return pval[hit], self._values[pos[hit]]

    def generation_pairs(self, iota: int, m: int) -> tuple[np.ndarray, np.ndarray]:
        """Complete (parent, child) pairs with the parent in generation ``m``."""
        if iota not in (0, 1):
            raise ValueError(f"child type must be 0 or 1, got {iota}")
        if m >= self.depth:
            raise ValueError(f"generation {m} has no children within depth {self.depth}")
        pidx, pval = self.generation_values(m)
        if pidx.size == 0:
            return np.empty(0), np.empty(0)
        want = 2 * pidx + 1 + iota
        if self._dense is not None:
            children = self._dense[want]
            hit = np.isfinite(children)
            return pval[hit], children[hit]
        pos = np.searchsorted(self._index, want)
        pos = np.minimum(pos, self._index.size - 1)
        hit = self._index[pos] == want
        return pval[hit], self._values[pos[hit]]

    def twin_pairs(self, up_to: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """(parent, child0, child1) values for parents in T_``up_to`` with
        both children stored."""
        if up_to >= self.depth:
            raise ValueError(
                f"parent generation cap {up_to} needs children of generation "
                f"{up_to + 1} > depth {self.depth}"
            )
        if up_to < 0:
            return np.empty(0), np.empty(0), np.empty(0)
        cut = full_tree_size(up_to)
        if self._dense is not None:
            parents = self._dense[:cut]
            base = 2 * np.arange(cut, dtype=np.int64) + 1
            c0 = self._dense[base]
            c1 = self._dense[base + 1]
            mask = np.isfinite(parents) & np.isfinite(c0) & np.isfinite(c1)
            return parents[mask], c0[mask], c1[mask]
        stop = np.searchsorted(self._index, cut)
        pidx = self._index[:stop]
        pval = self._values[:stop]
        if pidx.size == 0 or self._index.size == 0:
            return np.empty(0), np.empty(0), np.empty(0)
        vals = []
        hit_all = np.ones(pidx.shape, dtype=bool)
        for iota in (0, 1):
            want = 2 * pidx + 1 + iota
            pos = np.searchsorted(self._index, want)
            pos = np.minimum(pos, self._index.size - 1)
            hit = self._index[pos] == want
            hit_all &= hit
            vals.append(self._values[pos])
        return pval[hit_all], vals[0][hit_all], vals[1][hit_all]

    def pair_counts(self, up_to: int | None = None) -> tuple[int, int]:
        """(count of type-0 pairs, count of type-1 pairs)."""
        n = self.depth - 1 if up_to is None else up_to
        if self.depth == 0 or n < 0:
            return 0, 0
        return self.pairs(0, n)[0].size, self.pairs(1, n)[0].size

    # -- iteration / IO ------------------------------------------------------

    def items(self) -> Iterator[tuple[str, float]]:
        """(path, value) pairs in breadth-first order."""
        if self._dense is not None:
            for i in np.nonzero(np.isfinite(self._dense))[0]:
                yield index_to_path(int(i)), float(self._dense[i])
        else:
            for i, v in zip(self._index, self._values):
                yield index_to_path(int(i)), float(v)

    def to_csv(self, path) -> None:
        """Write the tree in the ``node,value`` CSV format (UTF-8, LF)."""
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["node", "value"])
            for node, value in self.items():
                writer.writerow([node, repr(value)])


def read_tree_csv(path, storage: str = "auto") -> BinaryTreeData:
    """Read a ``node,value`` CSV file; absent rows are missing nodes."""
    indices: list[int] = []
    values: list[float] = []
    seen: set[int] = set()
    max_gen = 0
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header[:2]] != ["node", "value"]:
            raise DataError(f"{path}: expected header 'node,value'")
        for lineno, row in enumerate(reader, start=2):
            if not row or (len(row) == 1 and not row[0].strip()):
                continue
            if len(row) != 2:
                raise DataError(f"{path}:{lineno}: expected 2 fields, got {len(row)}")
            node = row[0].strip()
            try:
                _validate_path(node)
            except DataError as exc:
                raise DataError(f"{path}:{lineno}: {exc}") from None
            idx = path_to_index(node)
            if idx in seen:
                raise DataError(f"{path}:{lineno}: duplicate node {node!r}")
            seen.add(idx)
            try:
                value = float(row[1])
            except ValueError:
                raise DataError(
                    f"{path}:{lineno}: value {row[1]!r} is not a decimal real"
                ) from None
            indices.append(idx)
            values.append(value)
            max_gen = max(max_gen, len(node))
    return BinaryTreeData(max_gen, np.array(indices, dtype=np.int64),
                          np.array(values), storage=storage)


def collect_pairs(tree: BinaryTreeData, iota: int, up_to: int) -> np.ndarray:
    """Complete (parent, child) pairs as a ``(k, 2)`` array, breadth-first."""
    parents, children = tree.pairs(iota, up_to)
    return np.column_stack([parents, children])
