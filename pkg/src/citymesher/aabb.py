"""Axis-aligned bounding box tree for broad-phase candidate search.

Used to pair LiDAR points with nearby building footprints without a
quadratic scan. Boxes are (n, 4) arrays [xmin, ymin, xmax, ymax]; points
enter as degenerate boxes.
"""

from __future__ import annotations

import numpy as np


class AABBTree:
    """Median-split box tree with bundled leaves.

    Nodes are stored in flat arrays; ``order`` is the permutation of input
    box indices, and each node covers a contiguous slice of it.
    """

    def __init__(self, boxes, leaf_size: int = 16):
        boxes = np.asarray(boxes, dtype=np.float64)
        if boxes.ndim != 2 or boxes.shape[1] != 4:
            raise ValueError(f"expected (n, 4) boxes, got {boxes.shape}")
        self.boxes = boxes
        self.leaf_size = int(leaf_size)
        n = len(boxes)
        self.order = np.arange(n)
        # node arrays, grown as the tree is built
        self._lo = []
        self._hi = []
        self._left = []
        self._right = []
        self._start = []
        self._end = []
        if n:
            centers = 0.5 * (boxes[:, :2] + boxes[:, 2:])
            self._build(0, n, centers)
        self.lo = np.array(self._lo) if self._lo else np.empty((0, 2))
        self.hi = np.array(self._hi) if self._hi else np.empty((0, 2))
        self.left = np.array(self._left, dtype=np.int64)
        self.right = np.array(self._right, dtype=np.int64)
        self.start = np.array(self._start, dtype=np.int64)
        self.end = np.array(self._end, dtype=np.int64)

    def _build(self, s: int, e: int, centers) -> int:
        idx = len(self._lo)
        sub = self.order[s:e]
        b = self.boxes[sub]
        self._lo.append([b[:, 0].min(), b[:, 1].min()])
        self._hi.append([b[:, 2].max(), b[:, 3].max()])
        self._left.append(-1)
        self._right.append(-1)
        self._start.append(s)
        self._end.append(e)
        if e - s > self.leaf_size:
            c = centers[sub]
            axis = int(np.argmax(c.max(axis=0) - c.min(axis=0)))
            mid = (e - s) // 2
            part = np.argpartition(c[:, axis], mid)
            self.order[s:e] = sub[part]
            self._left[idx] = self._build(s, s + mid, centers)
            self._right[idx] = self._build(s + mid, e, centers)
        return idx

    @property
    def empty(self) -> bool:
        return len(self.boxes) == 0

    def collide(self, other: "AABBTree"):
        """All index pairs (i, j) whose boxes overlap, as two int arrays.

        Complete by construction: subtree pruning only discards pairs whose
        enclosing boxes are disjoint.
        """
        out_i: list[np.ndarray] = []
        out_j: list[np.ndarray] = []
        if self.empty or other.empty:
            return np.empty(0, dtype=np.int64), np.empty(0, dtype=np.int64)
        stack = [(0, 0)]
        while stack:
            na, nb = stack.pop()
            if (
                self.lo[na][0] > other.hi[nb][0]
                or self.lo[na][1] > other.hi[nb][1]
                or other.lo[nb][0] > self.hi[na][0]
                or other.lo[nb][1] > self.hi[na][1]
            ):
                continue
            a_leaf = self.left[na] < 0
            b_leaf = other.left[nb] < 0
            if a_leaf and b_leaf:
                ia = self.order[self.start[na] : self.end[na]]
                jb = other.order[other.start[nb] : other.end[nb]]
                ba = self.boxes[ia]
                bb = other.boxes[jb]
                # exact pairwise box-overlap filter within the leaf bundle
                ok = (
                    (ba[:, None, 0] <= bb[None, :, 2])
                    & (bb[None, :, 0] <= ba[:, None, 2])
                    & (ba[:, None, 1] <= bb[None, :, 3])
                    & (bb[None, :, 1] <= ba[:, None, 3])
                )
                ii, jj = np.nonzero(ok)
                if len(ii):
                    out_i.append(ia[ii])
                    out_j.append(jb[jj])
            elif b_leaf or (not a_leaf and (self.end[na] - self.start[na]) >= (other.end[nb] - other.start[nb])):
                stack.append((self.left[na], nb))
                stack.append((self.right[na], nb))
            else:
                stack.append((na, other.left[nb]))
                stack.append((na, other.right[nb]))
        if not out_i:
            return np.empty(0, dtype=np.int64), np.empty(0, dtype=np.int64)
        return np.concatenate(out_i), np.concatenate(out_j)


def boxes_from_points(points_xy) -> np.ndarray:
    """Degenerate boxes for point data."""
    p = np.asarray(points_xy, dtype=np.float64)
    return np.hstack([p, p])
