"""Proposal selection, node human-probabilities and the three potential families.

Labels are +1 (human) and -1 (other). Probabilities are clamped to
[EPS, 1 - EPS] so that unary costs stay finite.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

EPS = 1e-6
LAMBDA_REGION = 0.5
LAMBDA_CONF = 0.5
DET_THRESHOLD = -1.0


def box_iou(a, b):
    """IoU of two inclusive (x0, y0, x1, y1) boxes."""
    ix0, iy0 = max(a[0], b[0]), max(a[1], b[1])
    ix1, iy1 = min(a[2], b[2]), min(a[3], b[3])
    inter = max(0, ix1 - ix0 + 1) * max(0, iy1 - iy0 + 1)
    area = lambda r: (r[2] - r[0] + 1) * (r[3] - r[1] + 1)
    return inter / (area(a) + area(b) - inter)


def _box_tuple(box):
    return (box.x0, box.y0, box.x1, box.y1) if hasattr(box, "x0") else tuple(box)


def proposal_scores(box, proposals, conf=None):
    h = _box_tuple(box)
    scores = []
    for r in proposals:
        s = box_iou(r.tight_box, h)
        if conf is not None:
            s += float(conf[r.mask].mean())
        scores.append(s)
    return scores


def select_proposal(box, proposals, conf=None):
    """Best proposal for a detection: box IoU of its tight box plus its mean confidence.

    Without a confidence map only the IoU term counts. Ties go to the lower index.
    """
    if not proposals:
        raise ValueError("no region proposals for this frame")
    scores = proposal_scores(box, proposals, conf)
    best = max(range(len(scores)), key=lambda i: (scores[i], -i))
    return proposals[best]


def build_proposal_mask(frame_idx, detections, proposals, conf=None, det_threshold=DET_THRESHOLD,
                        shape=None):
    """Union of the selected proposals of every detection on ``frame_idx`` scoring above threshold."""
    if shape is None:
        if not proposals:
            raise ValueError("shape is required when there are no proposals")
        shape = proposals[0].mask.shape
    out = np.zeros(shape, bool)
    for det in detections:
        if det.frame_index != frame_idx or not det.score > det_threshold:
            continue
        if not proposals:
            continue
        out |= select_proposal(det, proposals, conf).mask
    return out


def human_probability(pixels, region_mask, conf=None):
    """P(human) of one node: 0.5 * (fraction inside R_k) + 0.5 * (mean confidence).

    Without a confidence map the region fraction is used alone.
    """
    pixels = np.asarray(pixels, bool)
    eta = float(region_mask[pixels].mean())
    if conf is None:
        p = eta
    else:
        p = LAMBDA_REGION * eta + LAMBDA_CONF * float(conf[pixels].mean())
    return min(max(p, EPS), 1.0 - EPS)


def node_probabilities(graph, region_masks, conf_maps=None):
    """Vectorised human_probability for every node of ``graph``.

    ``region_masks`` and ``conf_maps`` map key-frame index to (H, W) arrays.
    """
    n = graph.n_nodes
    eta = np.zeros(n)
    mean_conf = np.zeros(n)
    for k, nmap in graph.node_maps.items():
        flat = nmap.ravel()
        cnt = np.bincount(flat, minlength=n)
        sel = cnt > 0
        eta[sel] = (np.bincount(flat, region_masks[k].ravel().astype(np.float64), n) / np.maximum(cnt, 1))[sel]
        if conf_maps is not None:
            mean_conf[sel] = (np.bincount(flat, conf_maps[k].ravel(), n) / np.maximum(cnt, 1))[sel]
    p = eta if conf_maps is None else LAMBDA_REGION * eta + LAMBDA_CONF * mean_conf
    return np.clip(p, EPS, 1.0 - EPS), mean_conf


def unary_potential(p, label):
    return -math.log(p) if label > 0 else -math.log(1.0 - p)


def pairwise_potential(distance, label_a, label_b, beta_p):
    if label_a == label_b:
        return 0.0
    return math.exp(-beta_p * distance)


def higher_order_potential(labels, lam_max, q):
    """Robust P^n clique cost: linear in the minority count, truncated at lam_max."""
    labels = np.asarray(labels)
    n_minor = min(int(np.count_nonzero(labels > 0)), int(np.count_nonzero(labels < 0)))
    if n_minor <= q:
        return n_minor * lam_max / q
    return float(lam_max)


@dataclass(frozen=True)
class PotentialSet:
    prob: np.ndarray         # (N,) P(y = +1)
    unary_pos: np.ndarray    # (N,) cost of +1
    unary_neg: np.ndarray    # (N,) cost of -1
    edges: np.ndarray        # (E, 2)
    pair_weight: np.ndarray  # (E,) exp(-beta_p * D)
    cliques: tuple
    lam_max: np.ndarray
    q: np.ndarray
    use_pairwise: bool = True
    use_higher_order: bool = True

    @property
    def n_nodes(self):
        return self.prob.size


def build_potentials(graph, prob, use_pairwise=True, use_higher_order=True):
    prob = np.clip(np.asarray(prob, np.float64), EPS, 1.0 - EPS)
    if prob.shape != (graph.n_nodes,):
        raise ValueError("one probability per node is required")
    return PotentialSet(
        prob=prob,
        unary_pos=-np.log(prob),
        unary_neg=-np.log1p(-prob),
        edges=graph.edges,
        pair_weight=np.exp(-graph.beta_p * graph.edge_dist),
        cliques=graph.cliques,
        lam_max=np.asarray(graph.lam_max, np.float64),
        q=np.asarray(graph.q, np.float64),
        use_pairwise=use_pairwise,
        use_higher_order=use_higher_order,
    )


def energy_terms(pots, labeling):
    """(unary, pairwise, higher_order) sums for a +/-1 labeling."""
    y = np.asarray(labeling)
    if y.shape != (pots.n_nodes,):
        raise ValueError(f"labeling has {y.size} entries, graph has {pots.n_nodes} nodes")
    pos = y > 0
    unary = float(np.where(pos, pots.unary_pos, pots.unary_neg).sum())
    pair = 0.0
    if pots.use_pairwise and len(pots.edges):
        cut = pos[pots.edges[:, 0]] != pos[pots.edges[:, 1]]
        pair = float(pots.pair_weight[cut].sum())
    higher = 0.0
    if pots.use_higher_order:
        for c, lam, q in zip(pots.cliques, pots.lam_max, pots.q):
            higher += higher_order_potential(y[c], lam, q)
    return unary, pair, float(higher)


def total_energy(graph, pots, labeling):
    return float(sum(energy_terms(pots, labeling)))
