"""Spatio-temporal superpixel graph over the key frames of one shot."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from skimage.color import rgb2lab

from .supervoxel import split_components

N_BINS = 25
FEATURE_DIM = 3 * N_BINS

# 3x3x3 grid cell (9*a + 3*b + c) -> one of 25 bins. The two extreme corners
# (0,0,0) and (2,2,2) are folded into their nearest grid neighbours (0,0,1)
# and (2,2,1).
_CELL_TO_BIN = np.empty(27, np.int64)
_CELL_TO_BIN[1:26] = np.arange(25)
_CELL_TO_BIN[0] = _CELL_TO_BIN[1]
_CELL_TO_BIN[26] = _CELL_TO_BIN[25]
CELL_TO_BIN = _CELL_TO_BIN

RGB_EDGES = (86.0, 172.0)
LAB_L_EDGES = (100.0 / 3, 200.0 / 3)
LAB_AB_EDGES = (-15.0, 15.0)


def _grid_bins(c0, c1, c2, e0, e12):
    q0 = np.digitize(c0, e0)
    q1 = np.digitize(c1, e12)
    q2 = np.digitize(c2, e12)
    return CELL_TO_BIN[9 * q0 + 3 * q1 + q2]


@dataclass(frozen=True)
class FrameDescriptors:
    """Per-pixel histogram bin indices used by node_features."""
    rgb_bin: np.ndarray
    lab_bin: np.ndarray
    grad_bin: np.ndarray
    grad_mag: np.ndarray


def frame_descriptors(frame):
    f = np.asarray(frame, np.float64)
    rgb_bin = _grid_bins(f[..., 0], f[..., 1], f[..., 2], RGB_EDGES, RGB_EDGES)
    lab = rgb2lab(np.asarray(frame, np.uint8))
    lab_bin = _grid_bins(lab[..., 0], lab[..., 1], lab[..., 2], LAB_L_EDGES, LAB_AB_EDGES)
    gray = f @ np.array([0.299, 0.587, 0.114])
    gy, gx = np.gradient(gray)
    mag = np.hypot(gx, gy)
    # unsigned orientation in [0, pi)
    theta = np.mod(np.arctan2(gy, gx), np.pi)
    grad_bin = np.minimum((theta / np.pi * N_BINS).astype(np.int64), N_BINS - 1)
    return FrameDescriptors(rgb_bin, lab_bin, grad_bin, mag)


def _normalized_hist(bins, weights=None):
    h = np.bincount(bins, weights=weights, minlength=N_BINS).astype(np.float64)
    s = h.sum()
    if s <= 0:
        return np.full(N_BINS, 1.0 / N_BINS)
    return h / s


def node_features(frame, pixels, desc=None):
    """75-dim descriptor of a pixel set: RGB, Lab and gradient-orientation histograms.

    ``pixels`` is a boolean mask or an index array into the flattened frame.
    """
    if desc is None:
        desc = frame_descriptors(frame)
    pixels = np.asarray(pixels)
    idx = np.flatnonzero(pixels) if pixels.dtype == bool else pixels.ravel()
    if idx.size == 0:
        raise ValueError("node_features needs a non-empty pixel set")
    return np.concatenate([
        _normalized_hist(desc.rgb_bin.ravel()[idx]),
        _normalized_hist(desc.lab_bin.ravel()[idx]),
        _normalized_hist(desc.grad_bin.ravel()[idx], desc.grad_mag.ravel()[idx]),
    ])


def node_distance(f1, f2):
    f1 = np.asarray(f1, np.float64)
    f2 = np.asarray(f2, np.float64)
    if f1.shape != (FEATURE_DIM,) or f2.shape != (FEATURE_DIM,):
        raise ValueError("node features must be 75-dim")
    return float(np.linalg.norm(f1 - f2))


def _batch_features(node_map, n_nodes, desc):
    flat = node_map.ravel()
    blocks = []
    for bins, w in ((desc.rgb_bin, None), (desc.lab_bin, None), (desc.grad_bin, desc.grad_mag)):
        h = np.bincount(flat * N_BINS + bins.ravel(),
                        weights=None if w is None else w.ravel(),
                        minlength=n_nodes * N_BINS).reshape(n_nodes, N_BINS).astype(np.float64)
        s = h.sum(1, keepdims=True)
        h = np.where(s > 0, h / np.where(s > 0, s, 1), 1.0 / N_BINS)
        blocks.append(h)
    return np.concatenate(blocks, 1)


@dataclass(frozen=True)
class STGraph:
    keyframes: tuple
    node_frame: np.ndarray     # (N,) frame index of each node
    node_svid: np.ndarray      # (N,) supervoxel id of each node
    node_size: np.ndarray      # (N,) pixel count
    features: np.ndarray       # (N, 75)
    node_maps: dict            # frame -> (H, W) global node index per pixel
    edges: np.ndarray          # (E, 2) node index pairs, i < j
    edge_dist: np.ndarray      # (E,)
    clique_ids: np.ndarray     # (C,) supervoxel id per clique
    cliques: tuple             # C arrays of node indices
    sigma: np.ndarray          # (C,) RGB variance per clique
    beta_p: float
    beta_s: float
    lam_max: np.ndarray        # (C,)
    q: np.ndarray              # (C,)

    @property
    def n_nodes(self):
        return self.node_frame.size

    def clique_sizes(self):
        return np.array([c.size for c in self.cliques], np.int64)

    def node_pixels(self, i):
        return self.node_maps[int(self.node_frame[i])] == i

    def rasterize(self, labels, frame):
        """Pixel mask of nodes labelled +1 in one key frame."""
        labels = np.asarray(labels)
        return labels[self.node_maps[frame]] > 0

    def dump(self):
        lines = [f"# nodes {self.n_nodes} edges {len(self.edges)} cliques {len(self.cliques)}",
                 f"beta_p {self.beta_p!r}", f"beta_s {self.beta_s!r}", "[nodes] index frame id pixels"]
        for i in range(self.n_nodes):
            lines.append(f"{i} {self.node_frame[i]} {self.node_svid[i]} {self.node_size[i]}")
        lines.append("[edges] a b distance")
        for (a, b), d in zip(self.edges.tolist(), self.edge_dist.tolist()):
            lines.append(f"{a} {b} {d:.6f}")
        lines.append("[cliques] id size sigma lambda_max Q")
        for sid, c, s, lam, q in zip(self.clique_ids.tolist(), self.cliques, self.sigma.tolist(),
                                     self.lam_max.tolist(), self.q.tolist()):
            lines.append(f"{sid} {c.size} {s:.6f} {lam:.6f} {q:.6f}")
        return "\n".join(lines) + "\n"


def build_graph(shot, keyframes, svmap, frames, descriptors=None):
    """Nodes per (key frame, supervoxel), spatial edges, supervoxel cliques and their statistics.

    ``descriptors`` optionally caches ``frame_descriptors`` results keyed by frame index.
    """
    keyframes = sorted(int(k) for k in keyframes)
    if not keyframes:
        raise ValueError("shot has no key frames")
    if any(not shot.start <= k < shot.end for k in keyframes):
        raise ValueError("key frame outside shot")
    raw = frames.frames if hasattr(frames, "frames") else frames
    node_frame, node_svid, feats, node_maps = [], [], [], {}
    sums, sqs, sizes = [], [], []
    edges = []
    offset = 0
    for k in keyframes:
        comp_map, comp_svid = split_components(svmap.labels[k])
        n = comp_svid.size
        desc = descriptors.get(k) if descriptors is not None else None
        if desc is None:
            desc = frame_descriptors(raw[k])
            if descriptors is not None:
                descriptors[k] = desc
        feats.append(_batch_features(comp_map, n, desc))
        flat = comp_map.ravel()
        px = raw[k].reshape(-1, 3).astype(np.float64)
        sizes.append(np.bincount(flat, minlength=n))
        sums.append(np.stack([np.bincount(flat, px[:, c], n) for c in range(3)], 1))
        sqs.append(np.stack([np.bincount(flat, px[:, c] ** 2, n) for c in range(3)], 1))
        a = np.concatenate([comp_map[:, :-1].ravel(), comp_map[:-1, :].ravel()])
        b = np.concatenate([comp_map[:, 1:].ravel(), comp_map[1:, :].ravel()])
        keep = a != b
        if keep.any():
            pairs = np.unique(np.stack([np.minimum(a[keep], b[keep]), np.maximum(a[keep], b[keep])], 1), axis=0)
            edges.append(pairs + offset)
        node_maps[k] = comp_map + offset
        node_frame.append(np.full(n, k, np.int64))
        node_svid.append(comp_svid)
        offset += n
    node_frame = np.concatenate(node_frame)
    node_svid = np.concatenate(node_svid).astype(np.int64)
    features = np.concatenate(feats)
    node_size = np.concatenate(sizes)
    sums = np.concatenate(sums)
    sqs = np.concatenate(sqs)
    edges = np.concatenate(edges) if edges else np.zeros((0, 2), np.int64)
    edge_dist = np.linalg.norm(features[edges[:, 0]] - features[edges[:, 1]], axis=1)
    mean_d = edge_dist.mean() if edge_dist.size else 0.0
    beta_p = 1.0 / mean_d if mean_d > 0 else 1.0

    clique_ids, inverse = np.unique(node_svid, return_inverse=True)
    order = np.argsort(inverse, kind="stable")
    bounds = np.cumsum(np.bincount(inverse, minlength=clique_ids.size))[:-1]
    cliques = tuple(np.split(order, bounds))
    npx = np.bincount(inverse, node_size, clique_ids.size)
    s1 = np.stack([np.bincount(inverse, sums[:, c], clique_ids.size) for c in range(3)], 1)
    s2 = np.stack([np.bincount(inverse, sqs[:, c], clique_ids.size) for c in range(3)], 1)
    var = s2 / npx[:, None] - (s1 / npx[:, None]) ** 2
    sigma = np.maximum(var, 0.0).mean(1)
    mean_sigma = sigma.mean()
    beta_s = 1.0 / mean_sigma if mean_sigma > 0 else 1.0
    n_s = np.array([c.size for c in cliques], np.float64)
    lam_max = n_s * np.exp(-beta_s * sigma)
    q = 0.1 * n_s
    return STGraph(tuple(keyframes), node_frame, node_svid, node_size, features, node_maps,
                   edges, edge_dist, clique_ids, cliques, sigma, float(beta_p), float(beta_s), lam_max, q)
