"""Temporally linked superpixels ("supervoxels"), shot splitting and key-frame candidates.

The extractor grows regions from a regular seed grid in every frame (color
distance plus a small spatial term, bounded by ``color_tol``), merges regions
smaller than ``min_size`` into their closest-colored neighbour, and then links
each region to the previous frame's region it overlaps most.
"""

from __future__ import annotations

import heapq
import os
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy import ndimage
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components

from .videoio import FormatError, FrameSequence, read_pgm, write_pgm

KEYFRAME_CHURN_THRESHOLD = 10
SHOT_CHANGE_THRESHOLD = 0.5
SPATIAL_WEIGHT = 0.5


@dataclass(frozen=True)
class SupervoxelMap:
    labels: np.ndarray  # (T, H, W) int32, ids 0..n_ids-1

    def __post_init__(self):
        lab = self.labels
        if lab.ndim != 3:
            raise ValueError("labels must be (T, H, W)")
        if lab.size and lab.min() < 0:
            raise ValueError("negative supervoxel id")
        present = np.unique(lab)
        if present.size and not np.array_equal(present, np.arange(present.size)):
            raise ValueError("supervoxel ids must form a contiguous range from 0")
        lab.setflags(write=False)

    @property
    def n_frames(self):
        return self.labels.shape[0]

    @property
    def n_ids(self):
        return int(self.labels.max()) + 1 if self.labels.size else 0

    @cached_property
    def id_sets(self):
        return [frozenset(np.unique(f).tolist()) for f in self.labels]

    def ids(self, t):
        return self.id_sets[t]

    @cached_property
    def id_index(self):
        """id -> sorted list of frames it touches."""
        index = {}
        for t, ids in enumerate(self.id_sets):
            for i in sorted(ids):
                index.setdefault(i, []).append(t)
        return index

    def region(self, t, sid):
        return self.labels[t] == sid


@dataclass(frozen=True)
class Shot:
    start: int
    end: int
    candidate_keyframes: tuple = field(default=())

    def __post_init__(self):
        if self.end - self.start < 1:
            raise ValueError("empty shot")
        if any(not self.start <= k < self.end for k in self.candidate_keyframes):
            raise ValueError("candidate key frame outside shot")

    @property
    def frame_range(self):
        return range(self.start, self.end)


# ---------------------------------------------------------------- per-frame growing

_NEIGHBOURS = ((-1, 0), (1, 0), (0, -1), (0, 1))


def _seed_points(h, w, grid):
    ys = list(range(grid // 2, h, grid)) if grid < h else [h // 2]
    xs = list(range(grid // 2, w, grid)) if grid < w else [w // 2]
    return [(y, x) for y in ys for x in xs]


def _grow_regions(img, seed_grid, color_tol):
    """Seeded region growing on one frame. Returns (H, W) int labels, all >= 0."""
    h, w = img.shape[:2]
    img = img.astype(np.float64)
    labels = np.full((h, w), -1, np.int64)
    refs = []
    spatial = SPATIAL_WEIGHT * color_tol / max(seed_grid, 1)
    heap = []
    counter = 0

    def push_neighbours(y, x, r):
        nonlocal counter
        ry, rx, rc = refs[r]
        for dy, dx in _NEIGHBOURS:
            ny, nx = y + dy, x + dx
            if 0 <= ny < h and 0 <= nx < w and labels[ny, nx] < 0:
                dc = float(np.sqrt(((img[ny, nx] - rc) ** 2).sum()))
                if dc <= color_tol:
                    pri = dc + spatial * abs(ny - ry) + spatial * abs(nx - rx)
                    heapq.heappush(heap, (pri, counter, ny, nx, r))
                    counter += 1

    def grow():
        while heap:
            _, _, y, x, r = heapq.heappop(heap)
            if labels[y, x] >= 0:
                continue
            labels[y, x] = r
            push_neighbours(y, x, r)

    def add_seed(y, x):
        r = len(refs)
        refs.append((y, x, img[y, x].copy()))
        labels[y, x] = r
        push_neighbours(y, x, r)

    for y, x in _seed_points(h, w, seed_grid):
        add_seed(y, x)
    grow()
    while True:
        free = np.flatnonzero(labels.ravel() < 0)
        if free.size == 0:
            break
        y, x = divmod(int(free[0]), w)
        add_seed(y, x)
        grow()
    return labels


def _adjacent_pairs(labels):
    a = np.concatenate([labels[:, :-1].ravel(), labels[:-1, :].ravel()])
    b = np.concatenate([labels[:, 1:].ravel(), labels[1:, :].ravel()])
    keep = a != b
    pairs = np.stack([np.minimum(a[keep], b[keep]), np.maximum(a[keep], b[keep])], 1)
    return np.unique(pairs, axis=0) if pairs.size else pairs.reshape(0, 2)


def _relabel_raster(labels):
    """Renumber regions 0.. by order of their first pixel in raster order."""
    flat = labels.ravel()
    _, first = np.unique(flat, return_index=True)
    order = np.argsort(first)
    remap = np.empty(flat.max() + 1, np.int64)
    remap[np.unique(flat)[order]] = np.arange(order.size)
    return remap[labels]


def _merge_small(labels, img, min_size):
    labels = _relabel_raster(labels)
    n = int(labels.max()) + 1
    flat = labels.ravel()
    px = img.reshape(-1, 3).astype(np.float64)
    size = np.bincount(flat, minlength=n).astype(np.float64)
    sums = np.stack([np.bincount(flat, px[:, c], n) for c in range(3)], 1)
    adj = [set() for _ in range(n)]
    for a, b in _adjacent_pairs(labels).tolist():
        adj[a].add(b)
        adj[b].add(a)
    parent = np.arange(n)
    alive = set(range(n))
    heap = [(size[r], r) for r in range(n) if size[r] < min_size]
    heapq.heapify(heap)
    while heap and len(alive) > 1:
        sz, r = heapq.heappop(heap)
        if r not in alive or sz != size[r]:
            continue
        mean = sums[r] / size[r]
        nb = sorted(adj[r])
        d = [np.linalg.norm(sums[q] / size[q] - mean) for q in nb]
        q = nb[int(np.argmin(d))]
        parent[r] = q
        alive.discard(r)
        size[q] += size[r]
        sums[q] += sums[r]
        for o in adj[r]:
            adj[o].discard(r)
            if o != q:
                adj[o].add(q)
                adj[q].add(o)
        adj[r] = set()
        if size[q] < min_size:
            heapq.heappush(heap, (size[q], q))
    for r in range(n):
        root = r
        while parent[root] != root:
            root = parent[root]
        parent[r] = root
    return _relabel_raster(parent[labels])


def segment_frame(img, seed_grid=8, color_tol=20.0, min_size=16):
    # median keeps step edges sharp while suppressing per-pixel noise
    smooth = ndimage.median_filter(img, size=(3, 3, 1), mode="nearest").astype(np.float64)
    labels = _grow_regions(smooth, seed_grid, color_tol)
    labels = _merge_small(labels, img, min_size)
    restored = _restore_outliers(labels, img, color_tol)
    if restored is labels:
        return labels
    # moving pixels can cut a region in two; pieces become regions of their own
    # and the small ones are merged back into a neighbour
    pieces, _ = split_components(restored)
    return _merge_small(pieces, img, min_size)


def split_components(labels):
    """Label 4-connected components of equal-valued pixels, ordered by (value, first pixel)."""
    h, w = labels.shape
    idx = np.arange(h * w).reshape(h, w)
    rows = [idx[:, :-1][labels[:, :-1] == labels[:, 1:]], idx[:-1, :][labels[:-1, :] == labels[1:, :]]]
    cols = [idx[:, 1:][labels[:, :-1] == labels[:, 1:]], idx[1:, :][labels[:-1, :] == labels[1:, :]]]
    r = np.concatenate(rows)
    c = np.concatenate(cols)
    g = coo_matrix((np.ones(r.size, np.int8), (r, c)), shape=(h * w, h * w))
    n, comp = connected_components(g, directed=False)
    flat_lab = labels.ravel()
    first = np.full(n, h * w, np.int64)
    np.minimum.at(first, comp, np.arange(h * w))
    comp_val = flat_lab[first]
    order = np.lexsort((first, comp_val))
    rank = np.empty(n, np.int64)
    rank[order] = np.arange(n)
    return rank[comp].reshape(h, w), comp_val[order]


def _restore_outliers(labels, img, color_tol):
    """Hand pixels the median filter misplaced (thin tips, corners) to a closer neighbour.

    Only pixels whose raw color is farther than ``color_tol`` from their own
    region's mean are moved, and only to a 4-neighbour's region.
    """
    n = int(labels.max()) + 1
    _, means = _region_means(labels, img, n)
    px = img.astype(np.float64)
    own = np.linalg.norm(px - means[labels], axis=-1)
    if not (own > color_tol).any():
        return labels
    best_d, best_l = own, labels
    padded = np.pad(labels, 1, mode="edge")
    h, w = labels.shape
    for dy, dx in _NEIGHBOURS:
        nb = padded[1 + dy:1 + dy + h, 1 + dx:1 + dx + w]
        d = np.linalg.norm(px - means[nb], axis=-1)
        better = (own > color_tol) & (d < best_d)
        best_d = np.where(better, d, best_d)
        best_l = np.where(better, nb, best_l)
    return _relabel_raster(best_l)


# ---------------------------------------------------------------- temporal linking

def _region_means(labels, img, n):
    flat = labels.ravel()
    sizes = np.bincount(flat, minlength=n).astype(np.float64)
    px = img.reshape(-1, 3).astype(np.float64)
    sums = np.stack([np.bincount(flat, px[:, c], n) for c in range(3)], 1)
    return sizes, sums / np.maximum(sizes, 1)[:, None]


def extract_supervoxels(frames, seed_grid=8, color_tol=20.0, min_size=16):
    if not isinstance(frames, FrameSequence):
        frames = FrameSequence(np.asarray(frames, np.uint8))
    out = np.empty(frames.frames.shape[:3], np.int32)
    next_id = 0
    prev = None
    for t, img in enumerate(frames.frames):
        regions = segment_frame(img, seed_grid, color_tol, min_size)
        n = int(regions.max()) + 1
        sizes, means = _region_means(regions, img, n)
        ids = np.full(n, -1, np.int64)
        if prev is not None:
            p_lab, p_sizes, p_means, p_ids = prev
            m = p_lab.max() + 1
            overlap = np.bincount(regions.ravel() * m + p_lab.ravel(), minlength=n * m).reshape(n, m)
            cand = []
            for r, p in zip(*np.nonzero(overlap)):
                ov = overlap[r, p]
                if ov < 0.5 * max(sizes[r], p_sizes[p]):
                    continue
                if np.linalg.norm(means[r] - p_means[p]) > color_tol:
                    continue
                cand.append((-int(ov), int(r), int(p)))
            taken = set()
            for _, r, p in sorted(cand):
                if ids[r] < 0 and p not in taken:
                    ids[r] = p_ids[p]
                    taken.add(p)
        for r in range(n):
            if ids[r] < 0:
                ids[r] = next_id
                next_id += 1
        out[t] = ids[regions]
        prev = (regions, sizes, means, ids)
    return SupervoxelMap(out)


# ---------------------------------------------------------------- shots / key frames

def id_churn(a, b):
    return len(a ^ b)


def split_shots(svmap, threshold=SHOT_CHANGE_THRESHOLD):
    bounds = [0]
    for t in range(svmap.n_frames - 1):
        a, b = svmap.ids(t), svmap.ids(t + 1)
        if len(a ^ b) / len(a | b) > threshold:
            bounds.append(t + 1)
    bounds.append(svmap.n_frames)
    return [Shot(s, e) for s, e in zip(bounds[:-1], bounds[1:])]


def select_candidate_keyframes(shot, svmap, churn_threshold=KEYFRAME_CHURN_THRESHOLD):
    keys = [shot.start]
    for t in range(shot.start + 1, shot.end):
        if id_churn(svmap.ids(t), svmap.ids(t - 1)) > churn_threshold:
            keys.append(t)
    return keys


def shots_with_keyframes(svmap, shot_threshold=SHOT_CHANGE_THRESHOLD,
                         churn_threshold=KEYFRAME_CHURN_THRESHOLD):
    shots = split_shots(svmap, shot_threshold)
    return [Shot(s.start, s.end, tuple(select_candidate_keyframes(s, svmap, churn_threshold)))
            for s in shots]


# ---------------------------------------------------------------- persistence

def write_supervoxels(dir_path, svmap):
    os.makedirs(dir_path, exist_ok=True)
    if svmap.n_ids > 65536:
        raise ValueError("more than 65536 supervoxels cannot be stored in 16-bit P5")
    for t, lab in enumerate(svmap.labels):
        write_pgm(os.path.join(dir_path, "sv_%05d.pgm" % t), lab.astype(np.uint16), maxval=65535)
    with open(os.path.join(dir_path, "ids.txt"), "w") as fh:
        fh.write(f"frames {svmap.n_frames}\nids {svmap.n_ids}\n")


def read_supervoxels(dir_path):
    meta = {}
    with open(os.path.join(dir_path, "ids.txt")) as fh:
        for line in fh:
            k, v = line.split()
            meta[k] = int(v)
    frames = []
    for t in range(meta["frames"]):
        p = os.path.join(dir_path, "sv_%05d.pgm" % t)
        if not os.path.exists(p):
            raise FormatError(f"{dir_path}: missing supervoxel frame {t}")
        arr, maxval = read_pgm(p)
        if maxval != 65535:
            raise FormatError(f"{p}: supervoxel maps must be 16-bit")
        frames.append(arr.astype(np.int32))
    svmap = SupervoxelMap(np.stack(frames))
    if svmap.n_ids != meta["ids"]:
        raise FormatError(f"{dir_path}: id count {svmap.n_ids} != sidecar {meta['ids']}")
    return svmap
