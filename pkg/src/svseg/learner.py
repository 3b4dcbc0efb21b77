"""Per-pixel two-class linear softmax classifier trained with a sample-weighted loss.

This is the stand-in segmentation model: ``train`` consumes (frame, target mask,
quality weight) triples and ``predict_confidence`` yields a human-probability
map per frame.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage
from skimage.color import rgb2lab, rgb2hsv

N_RAW = 18           # features before the bias column
N_FEATURES = N_RAW + 1
N_CLASSES = 2
MAX_PIXELS = 4096
MAGIC = b"PXM1"


def pixel_features(frame):
    """(H*W, 18) raw per-pixel descriptors (no standardisation, no bias)."""
    frame = np.asarray(frame, np.uint8)
    h, w = frame.shape[:2]
    rgb = frame.astype(np.float64) / 255.0
    lab = rgb2lab(frame)
    sat = rgb2hsv(frame)[..., 1:2]
    yy, xx = np.mgrid[0:h, 0:w]
    pos = np.stack([xx / max(w - 1, 1), yy / max(h - 1, 1)], -1)
    mean = ndimage.uniform_filter(rgb, size=(3, 3, 1), mode="nearest")
    sq = ndimage.uniform_filter(rgb ** 2, size=(3, 3, 1), mode="nearest")
    std = np.sqrt(np.maximum(sq - mean ** 2, 0.0))
    gray = rgb @ np.array([0.299, 0.587, 0.114])
    gy, gx = np.gradient(gray)
    mag = np.hypot(gx, gy)
    safe = np.where(mag > 0, mag, 1.0)
    grad = np.stack([mag, np.where(mag > 0, gy / safe, 0.0), np.where(mag > 0, gx / safe, 0.0)], -1)
    feats = np.concatenate([rgb, lab / 100.0, sat, pos, mean, std, grad], -1)
    return feats.reshape(h * w, N_RAW)


@dataclass
class WeightedSample:
    frame: np.ndarray          # (H, W, 3) uint8
    mask: np.ndarray           # (H, W) bool target, True = human
    omega: float
    features: np.ndarray = None  # cached pixel_features(frame)

    def __post_init__(self):
        if not 0.0 <= self.omega <= 1.0:
            raise ValueError(f"quality weight {self.omega} outside [0, 1]")
        if self.mask.shape != self.frame.shape[:2]:
            raise ValueError("mask and frame dimensions differ")

    def raw(self):
        if self.features is None:
            self.features = pixel_features(self.frame)
        return self.features


@dataclass
class PixelModel:
    weights: np.ndarray        # (2, 19)
    mean: np.ndarray           # (18,)
    std: np.ndarray            # (18,)
    log: list = field(default_factory=list)

    def design(self, raw):
        x = (raw - self.mean) / self.std
        return np.concatenate([x, np.ones((x.shape[0], 1))], 1)

    def save(self, path):
        with open(path, "wb") as fh:
            fh.write(MAGIC)
            fh.write(struct.pack("<II", N_CLASSES, N_FEATURES))
            fh.write(np.asarray(self.weights, "<f8").tobytes())
            fh.write(np.asarray(self.mean, "<f8").tobytes())
            fh.write(np.asarray(self.std, "<f8").tobytes())

    @classmethod
    def load(cls, path):
        with open(path, "rb") as fh:
            data = fh.read()
        if data[:4] != MAGIC:
            raise ValueError(f"{path}: not a PXM1 model file")
        c, d = struct.unpack_from("<II", data, 4)
        if (c, d) != (N_CLASSES, N_FEATURES):
            raise ValueError(f"{path}: unsupported dimensions {c}x{d}")
        vals = np.frombuffer(data, "<f8", offset=12)
        if vals.size != c * d + 2 * (d - 1):
            raise ValueError(f"{path}: truncated model")
        w = vals[:c * d].reshape(c, d).astype(np.float64)
        return cls(w, vals[c * d:c * d + d - 1].copy(), vals[c * d + d - 1:].copy())


def fit_standardizer(samples):
    """Mean/std of raw features, each pixel weighted by omega_i / M_i."""
    tot = 0.0
    s1 = np.zeros(N_RAW)
    s2 = np.zeros(N_RAW)
    for smp in samples:
        if smp.omega <= 0:
            continue
        raw = smp.raw()
        wt = smp.omega / raw.shape[0]
        tot += smp.omega
        s1 += wt * raw.sum(0)
        s2 += wt * (raw ** 2).sum(0)
    if tot <= 0:
        raise ValueError("no effective training signal")
    mean = s1 / tot
    std = np.sqrt(np.maximum(s2 / tot - mean ** 2, 0.0))
    return mean, np.where(std > 1e-8, std, 1.0)


def softmax(z):
    z = z - z.max(1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(1, keepdims=True)


def _sample_loss_grad(weights, x, y):
    """Mean pixel cross-entropy of one frame and its gradient w.r.t. the weights."""
    p = softmax(x @ weights.T)
    m = x.shape[0]
    loss = -np.log(np.maximum(p[np.arange(m), y], 1e-300)).mean()
    p[np.arange(m), y] -= 1.0
    return loss, p.T @ x / m


def weighted_loss(model, samples, with_grad=False):
    """(1/N) sum_i omega_i * mean_j CE(softmax(W phi_ij), l_ij) over all pixels of each sample."""
    loss = 0.0
    grad = np.zeros_like(model.weights)
    for smp in samples:
        x = model.design(smp.raw())
        y = smp.mask.ravel().astype(np.int64)
        l, g = _sample_loss_grad(model.weights, x, y)
        loss += smp.omega * l
        grad += smp.omega * g
    n = len(samples)
    return (loss / n, grad / n) if with_grad else loss / n


def _subsample(y, limit, rng):
    """Row indices, at most ``limit``, stratified by target label."""
    m = y.size
    if m <= limit:
        return np.arange(m)
    out = []
    for lab in (0, 1):
        idx = np.flatnonzero(y == lab)
        k = int(round(limit * idx.size / m))
        if k:
            out.append(rng.choice(idx, k, replace=False))
    return np.sort(np.concatenate(out))


def train(corpus, epochs=60, lr0=0.001, lr_decay=(20, 0.1), batch_size=20, seed=0,
          init=None, max_pixels=MAX_PIXELS):
    """Mini-batch gradient descent on the sample-weighted pixel softmax loss.

    ``init`` warm-starts from an existing model and reuses its standardisation.
    Each mini-batch step is normalised by the batch's total weight; batches whose
    weights are all zero leave the parameters untouched.
    """
    if not corpus:
        raise ValueError("empty training corpus")
    if epochs < 1:
        raise ValueError("epochs must be >= 1")
    if not any(s.omega > 0 for s in corpus):
        raise ValueError("no effective training signal")
    rng = np.random.default_rng(seed)
    if init is None:
        mean, std = fit_standardizer(corpus)
        model = PixelModel(np.zeros((N_CLASSES, N_FEATURES)), mean, std)
    else:
        model = PixelModel(init.weights.copy(), init.mean, init.std)
    designs = [model.design(s.raw()) for s in corpus]
    targets = [s.mask.ravel().astype(np.int64) for s in corpus]
    omegas = np.array([s.omega for s in corpus])
    every, factor = lr_decay
    for epoch in range(epochs):
        lr = lr0 * factor ** (epoch // every)
        picks = [_subsample(y, max_pixels, rng) for y in targets]
        order = rng.permutation(len(corpus))
        for b0 in range(0, len(order), batch_size):
            batch = order[b0:b0 + batch_size]
            wsum = omegas[batch].sum()
            if wsum <= 0:
                continue
            grad = np.zeros_like(model.weights)
            for i in batch:
                if omegas[i] == 0:
                    continue
                sel = picks[i]
                _, g = _sample_loss_grad(model.weights, designs[i][sel], targets[i][sel])
                grad += omegas[i] * g
            model.weights -= lr * grad / wsum
        epoch_loss = 0.0
        for i in range(len(corpus)):
            sel = picks[i]
            l, _ = _sample_loss_grad(model.weights, designs[i][sel], targets[i][sel])
            epoch_loss += omegas[i] * l
        model.log.append(epoch_loss / len(corpus))
    return model


def predict_confidence(model, frame, raw=None):
    """Per-pixel human probability, shape (H, W)."""
    frame = np.asarray(frame)
    if raw is None:
        raw = pixel_features(frame)
    p = softmax(model.design(raw) @ model.weights.T)
    return p[:, 1].reshape(frame.shape[:2])


def gradient_check(model, sample, step=1e-5):
    """Max elementwise relative error between analytic and central-difference gradients."""
    _, analytic = weighted_loss(model, [sample], with_grad=True)
    numeric = np.zeros_like(model.weights)
    w0 = model.weights
    for idx in np.ndindex(*w0.shape):
        for sign in (1, -1):
            w = w0.copy()
            w[idx] += sign * step
            numeric[idx] += sign * weighted_loss(PixelModel(w, model.mean, model.std), [sample])
        numeric[idx] /= 2 * step
    denom = np.maximum(np.abs(analytic) + np.abs(numeric), 1e-8)
    return float((np.abs(analytic - numeric) / denom).max())
