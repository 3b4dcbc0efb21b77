"""Iterative self-training: infer masks per video, weight them, train, repeat."""

from __future__ import annotations

import logging
import os
from dataclasses import dataclass, field

import numpy as np

from . import learner
from .energy import DET_THRESHOLD, build_potentials, build_proposal_mask, node_probabilities
from .solver import minimize
from .stgraph import build_graph
from .supervoxel import (KEYFRAME_CHURN_THRESHOLD, SHOT_CHANGE_THRESHOLD, read_supervoxels,
                         shots_with_keyframes)
from .videoio import compute_iou, read_detections, read_frame_sequence, read_mask, read_proposals

log = logging.getLogger(__name__)

NEGATIVE_OMEGA = 1.0


@dataclass
class PipelineConfig:
    iterations: int = 10
    seed: int = 7
    det_threshold: float = DET_THRESHOLD
    use_pairwise: bool = True
    use_higher_order: bool = True
    use_weights: bool = True
    use_negatives: bool = True
    max_per_video: int = 5
    negative_fraction: float = 1.0 / 3.0
    early_stop: float | None = 0.2      # IoU points; None runs every iteration
    epochs: int = 60
    lr0: float = 0.001
    lr_every: int = 20
    lr_factor: float = 0.1
    batch_size: int = 20
    warm_start: bool = True
    shot_threshold: float = SHOT_CHANGE_THRESHOLD
    churn_threshold: int = KEYFRAME_CHURN_THRESHOLD
    eval_stride: int = 1

    def echo(self):
        return [(k, getattr(self, k)) for k in self.__dataclass_fields__]


class Video:
    """All artifacts of one video plus lazily built per-run caches."""

    def __init__(self, name, split, frames, svmap, detections, proposals, gt=None):
        self.name = name
        self.split = split
        self.frames = frames
        self.svmap = svmap
        self.detections = detections
        self.proposals = proposals
        self.gt = gt
        if svmap.labels.shape != frames.frames.shape[:3]:
            raise ValueError(f"{name}: supervoxel map and frames disagree in shape")
        if gt is not None and gt.shape != frames.frames.shape[:3]:
            raise ValueError(f"{name}: ground truth and frames disagree in shape")
        self._graphs = None
        self._raw = {}

    @property
    def shape(self):
        return self.frames.frames.shape[1:3]

    def detections_on(self, t):
        return [d for d in self.detections if d.frame_index == t]

    def raw_features(self, t):
        if t not in self._raw:
            self._raw[t] = learner.pixel_features(self.frames[t]).astype(np.float32)
        return self._raw[t]

    def graphs(self, cfg):
        key = (cfg.shot_threshold, cfg.churn_threshold)
        if self._graphs is None or self._graphs[0] != key:
            shots = shots_with_keyframes(self.svmap, cfg.shot_threshold, cfg.churn_threshold)
            if not shots:
                raise ValueError(f"{self.name}: video has no shots")
            desc = {}
            built = [(s, build_graph(s, s.candidate_keyframes, self.svmap, self.frames, desc)) for s in shots]
            self._graphs = (key, built)
        return self._graphs[1]

    def negative_frames(self, det_threshold):
        hit = {d.frame_index for d in self.detections if d.score > det_threshold}
        return [t for t in range(len(self.frames)) if t not in hit]


@dataclass
class FrameResult:
    frame: int
    mask: np.ndarray
    omega: float
    energy: float
    certificate_gap: float


def infer_masks(video, model, cfg):
    """Video-context masks and quality weights for every candidate key frame."""
    results = {}
    for shot, graph in video.graphs(cfg):
        conf = None
        if model is not None:
            conf = {k: learner.predict_confidence(model, video.frames[k], video.raw_features(k))
                    for k in graph.keyframes}
        region = {}
        for k in graph.keyframes:
            c = conf[k] if conf is not None else None
            region[k] = build_proposal_mask(k, video.detections_on(k), video.proposals.get(k, []), c,
                                            cfg.det_threshold, shape=video.shape)
        prob, mean_conf = node_probabilities(graph, region, conf)
        pots = build_potentials(graph, prob, cfg.use_pairwise, cfg.use_higher_order)
        res = minimize(graph, pots)
        gap = abs(res.energy - (res.flow_value + res.offset))
        human = res.labeling > 0
        quality = prob if model is None else mean_conf
        for k in graph.keyframes:
            in_k = graph.node_frame == k
            sel = in_k & human
            if sel.any():
                omega = float(np.clip(quality[sel].mean(), 0.0, 1.0))
                mask = graph.rasterize(res.labeling, k)
            else:
                omega = 0.0
                mask = np.zeros(video.shape, bool)
            results[k] = FrameResult(k, mask, omega, res.energy, gap)
    return results


@dataclass
class CorpusEntry:
    video: str
    frame: int
    mask: np.ndarray
    omega: float
    negative: bool = False


def select_training_frames(per_video, negatives_pool, max_per_video=5, negative_fraction=1.0 / 3.0,
                           rng=None):
    """Top-``max_per_video`` frames by quality per video plus sampled negative frames.

    ``per_video`` maps video name -> {frame: FrameResult}; ``negatives_pool`` is a list
    of (video name, frame, shape) tuples.
    """
    if rng is None:
        rng = np.random.default_rng(0)
    corpus = []
    for name in sorted(per_video):
        res = per_video[name]
        ranked = sorted((r for r in res.values() if r.omega > 0), key=lambda r: (-r.omega, r.frame))
        corpus += [CorpusEntry(name, r.frame, r.mask, r.omega) for r in ranked[:max_per_video]]
    n_pos = len(corpus)
    if negative_fraction > 0 and negatives_pool:
        want = int(round(n_pos * negative_fraction / (1.0 - negative_fraction)))
        if n_pos == 0:
            want = 1
        want = min(want, len(negatives_pool))
        picks = sorted(rng.choice(len(negatives_pool), want, replace=False).tolist())
        for i in picks:
            name, t, shape = negatives_pool[i]
            corpus.append(CorpusEntry(name, t, np.zeros(shape, bool), NEGATIVE_OMEGA, True))
    if not corpus:
        raise ValueError("empty corpus after selection")
    return corpus


def evaluate(model, videos, stride=1):
    """Mean per-frame IoU of the thresholded confidence map against ground truth."""
    ious = []
    for v in videos:
        for t in range(0, len(v.frames), stride):
            pred = learner.predict_confidence(model, v.frames[t], v.raw_features(t)) >= 0.5
            ious.append(compute_iou(pred, v.gt[t]))
    return float(np.mean(ious)) if ious else float("nan")


@dataclass
class IterationReport:
    iteration: int
    selected: dict            # video -> [(frame, omega), ...]
    corpus_size: int
    negatives: int
    loss_curve: list
    eval_iou: float
    mean_omega: float
    max_certificate_gap: float
    masks: dict = field(repr=False, default_factory=dict)   # (video, frame) -> mask

    def lines(self):
        out = [f"iteration={self.iteration}", f"eval_iou={self.eval_iou:.6f}",
               f"mean_omega={self.mean_omega:.6f}", f"corpus_size={self.corpus_size}",
               f"negatives={self.negatives}", f"negative_omega={NEGATIVE_OMEGA}",
               f"max_certificate_gap={self.max_certificate_gap:.3e}",
               f"final_loss={self.loss_curve[-1]:.6f}" if self.loss_curve else "final_loss=nan"]
        for name in sorted(self.selected):
            sel = " ".join(f"{t}:{w:.4f}" for t, w in self.selected[name])
            out.append(f"selected.{name}={sel}")
        return out


def run_iterations(videos, cfg, on_iteration=None):
    """Alternate mask inference and weighted training; returns (reports, final model)."""
    if cfg.iterations < 1:
        raise ValueError("iterations must be >= 1")
    train_videos = [v for v in videos if v.split == "train"]
    eval_videos = [v for v in videos if v.split == "eval"]
    if not train_videos:
        raise ValueError("no training videos")
    by_name = {v.name: v for v in train_videos}
    pool = [(v.name, t, v.shape) for v in train_videos for t in v.negative_frames(cfg.det_threshold)]
    model = None
    reports = []
    for it in range(1, cfg.iterations + 1):
        per_video = {}
        gaps = [0.0]
        for v in train_videos:
            per_video[v.name] = infer_masks(v, model, cfg)
            gaps += [r.certificate_gap for r in per_video[v.name].values()]
        rng = np.random.default_rng([cfg.seed, it])
        corpus = select_training_frames(per_video, pool if cfg.use_negatives else [],
                                        cfg.max_per_video, cfg.negative_fraction if cfg.use_negatives else 0.0,
                                        rng)
        samples = []
        for e in corpus:
            v = by_name[e.video]
            omega = e.omega if cfg.use_weights else 1.0
            samples.append(learner.WeightedSample(v.frames[e.frame], e.mask, omega, v.raw_features(e.frame)))
        init = model if cfg.warm_start else None
        model = learner.train(samples, cfg.epochs, cfg.lr0, (cfg.lr_every, cfg.lr_factor), cfg.batch_size,
                              seed=int(rng.integers(2 ** 31)), init=init)
        iou = evaluate(model, eval_videos, cfg.eval_stride) if eval_videos else float("nan")
        pos = [e for e in corpus if not e.negative]
        selected = {name: [(e.frame, e.omega) for e in pos if e.video == name] for name in per_video}
        masks = {(name, t): r.mask for name, res in per_video.items() for t, r in res.items()}
        rep = IterationReport(it, selected, len(corpus), len(corpus) - len(pos), list(model.log), iou,
                              float(np.mean([e.omega for e in pos])) if pos else 0.0, max(gaps), masks)
        reports.append(rep)
        log.info("iteration %d: eval IoU %.4f, corpus %d (%d negatives)", it, iou, rep.corpus_size, rep.negatives)
        if on_iteration is not None:
            on_iteration(rep, model)
        if (cfg.early_stop is not None and len(reports) > 1
                and 100.0 * (reports[-1].eval_iou - reports[-2].eval_iou) < cfg.early_stop):
            log.info("stopping early: IoU gain below %.2f points", cfg.early_stop)
            break
    return reports, model


# ---------------------------------------------------------------- manifest

MANIFEST_COLUMNS = ("name", "split", "frames", "supervoxels", "detections", "proposals", "gt")


def read_manifest(path):
    """Tab-separated: name split frames_dir sv_dir detections proposals gt_dir ('-' if none)."""
    base = os.path.dirname(os.path.abspath(path))
    rows = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.rstrip("\n")
            if not line.strip() or line.startswith("#"):
                continue
            parts = line.split("\t")
            if len(parts) != len(MANIFEST_COLUMNS):
                raise ValueError(f"{path}:{lineno}: expected {len(MANIFEST_COLUMNS)} tab-separated fields")
            row = dict(zip(MANIFEST_COLUMNS, parts))
            for k in MANIFEST_COLUMNS[2:]:
                if row[k] != "-":
                    row[k] = os.path.join(base, row[k])
            rows.append(row)
    return rows


def load_video(row):
    frames = read_frame_sequence(row["frames"])
    svmap = read_supervoxels(row["supervoxels"])
    dets = read_detections(row["detections"])
    props = read_proposals(row["proposals"])
    gt = None
    if row["gt"] != "-":
        gt = np.stack([read_mask(os.path.join(row["gt"], "mask_%05d.pgm" % t)) for t in range(len(frames))])
    return Video(row["name"], row["split"], frames, svmap, dets, props, gt)


def load_videos(manifest):
    return [load_video(r) for r in read_manifest(manifest)]
