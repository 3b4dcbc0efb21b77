"""Deterministic synthetic videos with ground truth, a noisy detector and region proposals."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy import ndimage

from .videoio import DetectionBox, FrameSequence, RegionProposal, compute_iou, tight_box


@dataclass
class ActorSpec:
    shape: str = "ellipse"            # ellipse | rounded-rect
    size: tuple = (12, 20)            # body width, height in px
    head: int = 4                     # head radius in px, 0 for none
    body_color: tuple = (200, 60, 50)
    skin_color: tuple = (225, 170, 130)
    color_jitter: float = 6.0         # per-pixel color noise
    path: str = "linear"              # linear | sinusoidal
    start: tuple = (16.0, 32.0)       # body centre at frame 0 (x, y)
    velocity: tuple = (1.0, 0.0)      # px per frame (linear)
    amplitude: tuple = (10.0, 0.0)    # sinusoidal amplitude (x, y)
    period: float = 20.0
    pose_jitter: float = 0.5          # size jitter sigma in px

    def __post_init__(self):
        if self.shape not in ("ellipse", "rounded-rect"):
            raise ValueError(f"unknown actor shape {self.shape}")
        if self.path not in ("linear", "sinusoidal"):
            raise ValueError(f"unknown motion path {self.path}")

    def centre(self, t):
        x0, y0 = self.start
        if self.path == "linear":
            return x0 + self.velocity[0] * t, y0 + self.velocity[1] * t
        ph = 2 * math.pi * t / self.period
        return x0 + self.amplitude[0] * math.sin(ph), y0 + self.amplitude[1] * math.sin(ph)


@dataclass
class BackgroundSpec:
    base_color: tuple = (70, 110, 90)
    texture: float = 10.0             # contrast of the static smooth texture
    texture_scale: float = 3.0        # gaussian sigma of the texture field
    noise: float = 2.0                # per-frame sensor noise sigma
    pan: tuple = (0.0, 0.0)           # px per frame
    blobs: list = field(default_factory=list)  # [(x, y, rx, ry, (r, g, b)), ...] static clutter


@dataclass
class SceneSpec:
    width: int = 64
    height: int = 64
    frames: int = 40
    actors: list = field(default_factory=list)
    background: BackgroundSpec = field(default_factory=BackgroundSpec)
    cuts: list = field(default_factory=list)              # frames at which the scene changes
    cut_backgrounds: list = field(default_factory=list)   # one BackgroundSpec per cut
    seed: int = 0

    def __post_init__(self):
        self.actors = [a if isinstance(a, ActorSpec) else ActorSpec(**a) for a in self.actors]
        if not isinstance(self.background, BackgroundSpec):
            self.background = BackgroundSpec(**self.background)
        self.cut_backgrounds = [b if isinstance(b, BackgroundSpec) else BackgroundSpec(**b)
                                for b in self.cut_backgrounds]
        if len(self.cut_backgrounds) != len(self.cuts):
            raise ValueError("one background per scripted cut is required")
        for a in self.actors:
            if a.size[0] >= self.width or a.size[1] + 2 * a.head >= self.height:
                raise ValueError("actor does not fit the frame")

    @classmethod
    def from_dict(cls, d):
        return cls(**d)

    def to_dict(self):
        return asdict(self)


@dataclass
class DetectorNoise:
    center_jitter: float = 1.5     # px
    scale_jitter: float = 0.08     # log-scale sigma
    miss_rate: float = 0.15
    fp_rate: float = 0.3           # expected false boxes per frame
    true_score: tuple = (0.0, 0.6)     # mean, sigma
    false_score: tuple = (-1.65, 0.5)

    def __post_init__(self):
        if not 0 <= self.miss_rate <= 1 or self.fp_rate < 0:
            raise ValueError("detector rates out of range")


@dataclass
class ProposalParams:
    per_frame: int = 50
    perturb_level: int = 3
    distractors: int = 40


@dataclass
class SyntheticVideo:
    frames: FrameSequence
    gt: np.ndarray             # (T, H, W) bool
    actor_masks: list          # per frame list of per-actor (H, W) bool masks
    meta: dict
    clutter: np.ndarray = None  # (T, H, W) bool, human-coloured background objects


# ---------------------------------------------------------------- rendering

def _ellipse(h, w, cx, cy, rx, ry):
    yy, xx = np.mgrid[0:h, 0:w]
    return ((xx - cx) / max(rx, 0.5)) ** 2 + ((yy - cy) / max(ry, 0.5)) ** 2 <= 1.0


def _rounded_rect(h, w, cx, cy, rx, ry):
    yy, xx = np.mgrid[0:h, 0:w]
    r = 0.35 * min(rx, ry)
    dx = np.maximum(np.abs(xx - cx) - (rx - r), 0)
    dy = np.maximum(np.abs(yy - cy) - (ry - r), 0)
    return dx ** 2 + dy ** 2 <= r ** 2


def _texture(bg, h, w, frames, rng):
    # canvas large enough for the whole pan
    pad_x = int(math.ceil(abs(bg.pan[0]) * frames)) + 1
    pad_y = int(math.ceil(abs(bg.pan[1]) * frames)) + 1
    field_ = ndimage.gaussian_filter(rng.normal(0, 1, (h + pad_y, w + pad_x, 3)),
                                     (bg.texture_scale, bg.texture_scale, 0))
    field_ /= max(field_.std(), 1e-9)
    canvas = np.asarray(bg.base_color, np.float64) + bg.texture * field_
    ch, cw = canvas.shape[:2]
    clutter = np.zeros((ch, cw), bool)
    for x, y, rx, ry, color in bg.blobs:
        m = _ellipse(ch, cw, x, y, rx, ry)
        canvas[m] = np.asarray(color, np.float64) + 0.3 * bg.texture * field_[m]
        clutter |= m
    return canvas, clutter


def _crop(canvas, bg, t, h, w):
    ox = int(round(bg.pan[0] * t)) if bg.pan[0] >= 0 else canvas.shape[1] - w + int(round(bg.pan[0] * t)) - 1
    oy = int(round(bg.pan[1] * t)) if bg.pan[1] >= 0 else canvas.shape[0] - h + int(round(bg.pan[1] * t)) - 1
    ox = min(max(ox, 0), canvas.shape[1] - w)
    oy = min(max(oy, 0), canvas.shape[0] - h)
    return canvas[oy:oy + h, ox:ox + w]


def _segments(spec):
    """[(start, end, background), ...] split at scripted cuts."""
    bounds = [0] + sorted(spec.cuts) + [spec.frames]
    bgs = [spec.background] + [b for _, b in sorted(zip(spec.cuts, spec.cut_backgrounds))]
    return [(s, e, b) for s, e, b in zip(bounds[:-1], bounds[1:], bgs)]


def generate_video(spec):
    rng = np.random.default_rng(spec.seed)
    h, w, n = spec.height, spec.width, spec.frames
    frames = np.empty((n, h, w, 3), np.uint8)
    gt = np.zeros((n, h, w), bool)
    clutter = np.zeros((n, h, w), bool)
    actor_masks = []
    segments = _segments(spec)
    canvases = [_texture(bg, h, w, n, rng) for _, _, bg in segments]
    for seg_i, (s, e, bg) in enumerate(segments):
        for t in range(s, e):
            canvas, blobs = canvases[seg_i]
            img = _crop(canvas, bg, t - s, h, w).copy()
            clutter[t] = _crop(blobs, bg, t - s, h, w)
            masks = []
            for a_i, a in enumerate(spec.actors):
                # after a cut the actor re-enters on the mirrored side
                cx, cy = a.centre(t)
                if seg_i % 2 == 1:
                    cx = w - 1 - cx
                jit = rng.normal(0, a.pose_jitter, 2)
                rx = a.size[0] / 2 + jit[0]
                ry = a.size[1] / 2 + jit[1]
                draw = _ellipse if a.shape == "ellipse" else _rounded_rect
                body = draw(h, w, cx, cy, rx, ry)
                head = _ellipse(h, w, cx, cy - ry - a.head + 1, a.head, a.head) if a.head else np.zeros((h, w), bool)
                head &= ~body
                for m, color in ((body, a.body_color), (head, a.skin_color)):
                    k = int(m.sum())
                    if k:
                        img[m] = np.asarray(color, np.float64) + rng.normal(0, a.color_jitter, (k, 3))
                masks.append(body | head)
            # later actors occlude earlier ones
            for i in range(len(masks)):
                for j in range(i + 1, len(masks)):
                    masks[i] = masks[i] & ~masks[j]
            img += rng.normal(0, bg.noise, img.shape)
            frames[t] = np.clip(np.rint(img), 0, 255).astype(np.uint8)
            actor_masks.append(masks)
            if masks:
                gt[t] = np.logical_or.reduce(masks)
                clutter[t] &= ~gt[t]
    meta = {
        "cuts": sorted(spec.cuts),
        "actor_pixels": [[int(m.sum()) for m in ms] for ms in actor_masks],
        "gt_pixels": [int(g.sum()) for g in gt],
    }
    return SyntheticVideo(FrameSequence(frames), gt, actor_masks, meta, clutter)


# ---------------------------------------------------------------- detector

def simulate_detections(actor_masks, noise, seed, width=None, height=None, clutter=None):
    """Noisy human boxes: jittered true boxes, misses, and low-scoring false boxes.

    ``clutter`` optionally lists per-frame masks of human-like background objects;
    half of the false boxes land on them.
    """
    rng = np.random.default_rng(seed)
    out = []
    for t, masks in enumerate(actor_masks):
        if height is None:
            height, width = masks[0].shape if masks else (None, None)
        for m in masks:
            box = tight_box(m)
            miss = rng.random() < noise.miss_rate
            jit = rng.normal(0, noise.center_jitter, 2)
            scale = np.exp(rng.normal(0, noise.scale_jitter, 2))
            score = rng.normal(*noise.true_score)
            if box is None or miss:
                continue
            out.append(_make_box(t, score, box, jit, scale, width, height))
        for _ in range(rng.poisson(noise.fp_rate)):
            score = rng.normal(*noise.false_score)
            cm = clutter[t] if clutter is not None else None
            if cm is not None and cm.any() and rng.random() < 0.5:
                box = tight_box(cm)
                out.append(_make_box(t, score, box, rng.normal(0, noise.center_jitter, 2),
                                     np.ones(2), width, height))
            else:
                bw = int(rng.integers(6, max(7, width // 3)))
                bh = int(rng.integers(8, max(9, height // 2)))
                x0 = int(rng.integers(0, width - bw))
                y0 = int(rng.integers(0, height - bh))
                out.append(DetectionBox(t, float(score), x0, y0, x0 + bw - 1, y0 + bh - 1))
    return out


def _make_box(t, score, box, jit, scale, width, height):
    x0, y0, x1, y1 = box
    cx, cy = (x0 + x1) / 2 + jit[0], (y0 + y1) / 2 + jit[1]
    hw, hh = (x1 - x0 + 1) / 2 * scale[0], (y1 - y0 + 1) / 2 * scale[1]
    bx0 = int(np.clip(round(cx - hw + 0.5), 0, width - 1))
    bx1 = int(np.clip(round(cx + hw - 0.5), bx0, width - 1))
    by0 = int(np.clip(round(cy - hh + 0.5), 0, height - 1))
    by1 = int(np.clip(round(cy + hh - 0.5), by0, height - 1))
    return DetectionBox(t, float(score), bx0, by0, bx1, by1)


# ---------------------------------------------------------------- proposals

def _jitter_boundary(m, frac, rng):
    edge = m ^ ndimage.binary_erosion(m)
    out = m.copy()
    ys, xs = np.nonzero(edge)
    flip = rng.random(ys.size) < frac
    out[ys[flip], xs[flip]] = False
    ring = ndimage.binary_dilation(m) & ~m
    ys, xs = np.nonzero(ring)
    add = rng.random(ys.size) < frac
    out[ys[add], xs[add]] = True
    return out


def _perturbations(m, level, rng):
    """Graded variants of one actor silhouette, mildest first."""
    h, w = m.shape
    x0, y0, x1, y1 = tight_box(m)
    box = np.zeros_like(m)
    box[y0:y1 + 1, x0:x1 + 1] = True
    out = [_jitter_boundary(m, 0.15, rng)]
    if level >= 1:
        out += [ndimage.binary_dilation(m), ndimage.binary_erosion(m) | _core(m),
                np.roll(m, int(rng.choice([-1, 1])), axis=int(rng.integers(0, 2))),
                box]
    if level >= 2:
        # background chunks that keep the tight box unchanged
        for _ in range(2):
            cw, ch = int(rng.integers(2, max(3, (x1 - x0) // 2 + 2))), int(rng.integers(2, max(3, (y1 - y0) // 2 + 2)))
            cx = int(rng.integers(x0, max(x0 + 1, x1 - cw + 2)))
            cy = int(rng.integers(y0, max(y0 + 1, y1 - ch + 2)))
            extra = np.zeros_like(m)
            extra[cy:cy + ch, cx:cx + cw] = True
            out.append(m | (extra & box))
        out += [ndimage.binary_dilation(m, iterations=2), box & ~_core(m, 0.5)]
    if level >= 3:
        top = m.copy()
        top[(y0 + y1) // 2 + 1:] = False
        out += [ndimage.binary_dilation(m, iterations=3), top, np.roll(m, 3, axis=1)]
    return [p for p in out if p.any()]


def _core(m, frac=0.0):
    """Mask shrunk towards its centre; frac=0 returns an empty mask."""
    if frac <= 0:
        return np.zeros_like(m)
    ys, xs = np.nonzero(m)
    cy, cx = ys.mean(), xs.mean()
    yy, xx = np.mgrid[0:m.shape[0], 0:m.shape[1]]
    ry = (ys.max() - ys.min() + 1) / 2 * frac
    rx = (xs.max() - xs.min() + 1) / 2 * frac
    return _ellipse(*m.shape, cx, cy, rx, ry) & m if rx > 0 and ry > 0 else np.zeros_like(m)


def _distractor(h, w, rng):
    rx, ry = rng.uniform(2, w / 5), rng.uniform(2, h / 4)
    return _ellipse(h, w, rng.uniform(0, w), rng.uniform(0, h), rx, ry)


def simulate_proposals(actor_masks, params, seed, clutter=None):
    """Per-frame region proposals; returns ({frame: [RegionProposal]}, meta).

    Level 0 with no distractors reproduces the actor silhouettes exactly.
    """
    rng = np.random.default_rng(seed)
    out = {}
    best = []
    for t, masks in enumerate(actor_masks):
        props = []
        visible = [m for m in masks if m.any()]
        if params.perturb_level == 0:
            props += [m.copy() for m in visible]
        else:
            for m in visible:
                props += _perturbations(m, params.perturb_level, rng)
        shape = masks[0].shape if masks else (clutter[t].shape if clutter is not None else None)
        if shape is not None:
            if clutter is not None and clutter[t].any() and params.distractors:
                props.append(clutter[t].copy())
            budget = max(params.per_frame - len(props), 0) if params.perturb_level else params.distractors
            for _ in range(min(params.distractors, budget)):
                d = _distractor(*shape, rng)
                if d.any():
                    props.append(d)
        order = rng.permutation(len(props))
        out[t] = [RegionProposal(t, props[i]) for i in order]
        best.append([max((compute_iou(p, m) for p in props), default=0.0) for m in visible])
    return out, {"best_iou": best}
