"""Netpbm frames/masks, detection and proposal text files, and the IoU metric."""

from __future__ import annotations

import os
import re
from dataclasses import dataclass, field

import numpy as np


class FormatError(ValueError):
    """Raised when an input file does not match its expected layout."""


@dataclass(frozen=True)
class FrameSequence:
    frames: np.ndarray  # (T, H, W, 3) uint8

    def __post_init__(self):
        f = self.frames
        if f.ndim != 4 or f.shape[-1] != 3 or f.dtype != np.uint8:
            raise ValueError("frames must be a (T, H, W, 3) uint8 array")
        if f.shape[0] < 2:
            raise ValueError("a FrameSequence needs at least 2 frames")
        if f.shape[1] < 8 or f.shape[2] < 8:
            raise ValueError("frames must be at least 8x8")
        f.setflags(write=False)

    def __len__(self):
        return self.frames.shape[0]

    def __getitem__(self, i):
        return self.frames[i]

    @property
    def width(self):
        return self.frames.shape[2]

    @property
    def height(self):
        return self.frames.shape[1]


@dataclass(frozen=True)
class DetectionBox:
    frame_index: int
    score: float
    x0: int
    y0: int
    x1: int
    y1: int

    def __post_init__(self):
        if not (0 <= self.x0 <= self.x1 and 0 <= self.y0 <= self.y1):
            # inverted corners are the only way to get a degenerate box;
            # coordinates are inclusive so x0 == x1 is one pixel wide
            raise ValueError(f"invalid box {self}")

    def check_bounds(self, width, height):
        if self.x1 >= width or self.y1 >= height:
            raise ValueError(f"box {self} outside {width}x{height} frame")


def tight_box(mask):
    """Minimal inclusive (x0, y0, x1, y1) covering the set pixels, or None."""
    ys = np.flatnonzero(mask.any(axis=1))
    if ys.size == 0:
        return None
    xs = np.flatnonzero(mask.any(axis=0))
    return int(xs[0]), int(ys[0]), int(xs[-1]), int(ys[-1])


@dataclass(frozen=True)
class RegionProposal:
    frame_index: int
    mask: np.ndarray  # (H, W) bool
    tight_box: tuple = field(init=False)

    def __post_init__(self):
        box = tight_box(self.mask)
        if box is None:
            raise ValueError("region proposal mask is empty")
        object.__setattr__(self, "tight_box", box)

    @property
    def area(self):
        return int(self.mask.sum())


# ---------------------------------------------------------------- netpbm

_TOKEN = re.compile(rb"\s*(?:#[^\n]*\n\s*)*(\S+)")


def _parse_header(data, magic, path):
    pos = 0
    vals = []
    for _ in range(4):
        m = _TOKEN.match(data, pos)
        if m is None:
            raise FormatError(f"{path}: truncated header")
        vals.append(m.group(1))
        pos = m.end()
    if vals[0] != magic:
        raise FormatError(f"{path}: expected {magic.decode()} got {vals[0][:4]!r}")
    try:
        w, h, maxval = (int(v) for v in vals[1:])
    except ValueError:
        raise FormatError(f"{path}: bad header values") from None
    if w <= 0 or h <= 0 or not 0 < maxval < 65536:
        raise FormatError(f"{path}: bad header values")
    # exactly one whitespace byte separates header from raster
    return w, h, maxval, pos + 1


def _read_netpbm(path, magic, channels):
    with open(path, "rb") as fh:
        data = fh.read()
    w, h, maxval, off = _parse_header(data, magic, path)
    dtype = np.dtype(">u2") if maxval > 255 else np.dtype("u1")
    n = w * h * channels
    raster = data[off:off + n * dtype.itemsize]
    if len(raster) != n * dtype.itemsize:
        raise FormatError(f"{path}: raster truncated")
    arr = np.frombuffer(raster, dtype=dtype).reshape((h, w, channels) if channels > 1 else (h, w))
    return arr, maxval


def _write_netpbm(path, magic, arr, maxval):
    h, w = arr.shape[:2]
    dtype = np.dtype(">u2") if maxval > 255 else np.dtype("u1")
    with open(path, "wb") as fh:
        fh.write(b"%s\n%d %d\n%d\n" % (magic, w, h, maxval))
        fh.write(np.ascontiguousarray(arr, dtype=dtype).tobytes())


def read_ppm(path):
    arr, maxval = _read_netpbm(path, b"P6", 3)
    if maxval != 255:
        raise FormatError(f"{path}: only 8-bit P6 frames are supported")
    return arr.copy()


def write_ppm(path, rgb):
    rgb = np.asarray(rgb)
    if rgb.ndim != 3 or rgb.shape[2] != 3 or rgb.dtype != np.uint8:
        raise ValueError("write_ppm expects an (H, W, 3) uint8 array")
    _write_netpbm(path, b"P6", rgb, 255)


def read_pgm(path):
    """Read a P5 image; returns (array, maxval). 16-bit samples are big-endian."""
    arr, maxval = _read_netpbm(path, b"P5", 1)
    return arr.astype(np.uint16 if maxval > 255 else np.uint8), maxval


def write_pgm(path, gray, maxval=255):
    _write_netpbm(path, b"P5", np.asarray(gray), maxval)


def frame_path(dir_path, index):
    return os.path.join(dir_path, "frame_%05d.ppm" % index)


def read_frame_sequence(dir_path):
    pat = re.compile(r"^frame_(\d{5})\.ppm$")
    indices = sorted(int(m.group(1)) for m in map(pat.match, os.listdir(dir_path)) if m)
    if not indices:
        raise FormatError(f"{dir_path}: no frame_NNNNN.ppm files")
    for expect, got in enumerate(indices):
        if got != expect:
            raise FormatError(f"{dir_path}: missing frame {expect}")
    frames = []
    for i in indices:
        p = frame_path(dir_path, i)
        f = read_ppm(p)
        if frames and f.shape != frames[0].shape:
            raise FormatError(f"{p}: dimensions {f.shape[1]}x{f.shape[0]} differ from frame 0")
        frames.append(f)
    return FrameSequence(np.stack(frames))


def write_frame_sequence(dir_path, frames):
    os.makedirs(dir_path, exist_ok=True)
    for i, f in enumerate(frames.frames if isinstance(frames, FrameSequence) else frames):
        write_ppm(frame_path(dir_path, i), f)


def write_mask(path, mask):
    write_pgm(path, np.where(np.asarray(mask, bool), 255, 0).astype(np.uint8))


def read_mask(path):
    arr, maxval = read_pgm(path)
    if maxval != 255:
        raise FormatError(f"{path}: mask maxval must be 255")
    bad = (arr != 0) & (arr != 255)
    if bad.any():
        raise FormatError(f"{path}: mask values must be 0 or 255")
    return arr == 255


# ---------------------------------------------------------------- detections

def _data_lines(path):
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if line:
                yield lineno, line


def read_detections(path):
    """Parse `frame score x0 y0 x1 y1` records. No score filtering happens here."""
    out = []
    for lineno, line in _data_lines(path):
        parts = line.split()
        try:
            if len(parts) != 6:
                raise ValueError("expected 6 fields")
            frame = int(parts[0])
            score = float(parts[1])
            x0, y0, x1, y1 = (int(p) for p in parts[2:])
            if frame < 0 or not np.isfinite(score):
                raise ValueError("bad frame index or score")
            out.append(DetectionBox(frame, score, x0, y0, x1, y1))
        except ValueError as exc:
            raise FormatError(f"{path}:{lineno}: {exc}") from None
    return out


def write_detections(path, boxes):
    with open(path, "w") as fh:
        fh.write("# frame score x0 y0 x1 y1\n")
        for b in boxes:
            fh.write(f"{b.frame_index} {b.score!r} {b.x0} {b.y0} {b.x1} {b.y1}\n")


# ---------------------------------------------------------------- proposals (RLE)

def rle_encode(mask):
    """Row-major runs of set pixels as (start, length) pairs."""
    flat = np.asarray(mask, bool).ravel()
    d = np.diff(np.concatenate(([0], flat.view(np.int8), [0])))
    starts = np.flatnonzero(d == 1)
    ends = np.flatnonzero(d == -1)
    return list(zip(starts.tolist(), (ends - starts).tolist()))


def rle_decode(runs, width, height):
    n = width * height
    flat = np.zeros(n, bool)
    prev_end = 0
    for start, length in runs:
        if start < prev_end or length <= 0 or start + length > n:
            raise FormatError(f"run ({start}, {length}) overlaps or exceeds {n} pixels")
        flat[start:start + length] = True
        prev_end = start + length
    return flat.reshape(height, width)


def write_proposals(path, proposals, width, height):
    """One record per proposal: header line `frame W H` followed by a runs line."""
    with open(path, "w") as fh:
        for p in proposals:
            fh.write(f"{p.frame_index} {width} {height}\n")
            fh.write(" ".join(f"{s} {n}" for s, n in rle_encode(p.mask)) + "\n")


def read_proposals(path):
    """Returns {frame_index: [RegionProposal, ...]} in file order."""
    out = {}
    lines = list(_data_lines(path))
    if len(lines) % 2:
        raise FormatError(f"{path}: dangling proposal header")
    for (ln, header), (ln2, body) in zip(lines[::2], lines[1::2]):
        try:
            frame, w, h = (int(v) for v in header.split())
            vals = [int(v) for v in body.split()]
        except ValueError:
            raise FormatError(f"{path}:{ln}: malformed proposal record") from None
        if len(vals) % 2:
            raise FormatError(f"{path}:{ln2}: odd number of run values")
        try:
            mask = rle_decode(list(zip(vals[::2], vals[1::2])), w, h)
        except FormatError as exc:
            raise FormatError(f"{path}:{ln2}: {exc}") from None
        if not mask.any():
            raise FormatError(f"{path}:{ln2}: empty proposal")
        out.setdefault(frame, []).append(RegionProposal(frame, mask))
    return out


# ---------------------------------------------------------------- metric

def compute_iou(a, b):
    a = np.asarray(a, bool)
    b = np.asarray(b, bool)
    if a.shape != b.shape:
        raise ValueError(f"mask shapes differ: {a.shape} vs {b.shape}")
    union = np.count_nonzero(a | b)
    if union == 0:
        return 1.0
    return np.count_nonzero(a & b) / union
