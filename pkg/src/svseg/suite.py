"""Checked-in synthetic suites and their on-disk layout."""

from __future__ import annotations

import hashlib
import json
import os
from importlib import resources

from .supervoxel import extract_supervoxels, write_supervoxels
from .synthgen import (DetectorNoise, ProposalParams, SceneSpec, generate_video, simulate_detections,
                       simulate_proposals)
from .videoio import write_detections, write_frame_sequence, write_mask, write_proposals


def load_suite(name_or_path):
    if os.path.exists(name_or_path):
        with open(name_or_path) as fh:
            return json.load(fh)
    text = resources.files("svseg").joinpath("suites", f"{name_or_path}.json").read_text()
    return json.loads(text)


def build_video(entry):
    scene = SceneSpec.from_dict(entry["scene"])
    video = generate_video(scene)
    h, w = scene.height, scene.width
    dets = simulate_detections(video.actor_masks, DetectorNoise(**entry["detector"]), entry["detector_seed"],
                               w, h, clutter=video.clutter)
    props, pmeta = simulate_proposals(video.actor_masks, ProposalParams(**entry["proposals"]),
                                      entry["proposal_seed"], clutter=video.clutter)
    return video, dets, props, pmeta


def write_suite(suite, out_dir, log=print):
    """Generate every video of ``suite`` under ``out_dir`` and write ``manifest.txt``."""
    os.makedirs(out_dir, exist_ok=True)
    sv = suite["supervoxels"]
    rows = []
    for entry in suite["videos"]:
        name = entry["name"]
        vdir = os.path.join(out_dir, name)
        video, dets, props, pmeta = build_video(entry)
        write_frame_sequence(os.path.join(vdir, "frames"), video.frames)
        gdir = os.path.join(vdir, "gt")
        os.makedirs(gdir, exist_ok=True)
        for t, m in enumerate(video.gt):
            write_mask(os.path.join(gdir, "mask_%05d.pgm" % t), m)
        write_detections(os.path.join(vdir, "detections.txt"), dets)
        h, w = video.gt.shape[1:]
        write_proposals(os.path.join(vdir, "proposals.txt"),
                        [p for t in sorted(props) for p in props[t]], w, h)
        svmap = extract_supervoxels(video.frames, sv["seed_grid"], sv["color_tol"], sv["min_size"])
        write_supervoxels(os.path.join(vdir, "supervoxels"), svmap)
        meta = dict(video.meta, best_proposal_iou=pmeta["best_iou"], n_supervoxels=svmap.n_ids)
        with open(os.path.join(vdir, "meta.json"), "w") as fh:
            json.dump(meta, fh, sort_keys=True)
        rows.append("\t".join([name, entry["split"], f"{name}/frames", f"{name}/supervoxels",
                               f"{name}/detections.txt", f"{name}/proposals.txt", f"{name}/gt"]))
        log(f"{name}: {len(video.frames)} frames, {svmap.n_ids} supervoxels, {len(dets)} detections")
    with open(os.path.join(out_dir, "manifest.txt"), "w") as fh:
        fh.write("# name\tsplit\tframes\tsupervoxels\tdetections\tproposals\tgt\n")
        fh.write("\n".join(rows) + "\n")
    with open(os.path.join(out_dir, "suite.json"), "w") as fh:
        json.dump(suite, fh, indent=1, sort_keys=True)
    return os.path.join(out_dir, "manifest.txt")


def dataset_hash(manifest):
    """sha256 over the manifest and every file it references, in a fixed order."""
    from .pipeline import MANIFEST_COLUMNS, read_manifest
    h = hashlib.sha256()
    with open(manifest, "rb") as fh:
        h.update(fh.read())
    for row in read_manifest(manifest):
        for col in MANIFEST_COLUMNS[2:]:
            p = row[col]
            if p == "-":
                continue
            paths = [os.path.join(p, f) for f in sorted(os.listdir(p))] if os.path.isdir(p) else [p]
            for fp in paths:
                h.update(os.path.relpath(fp, os.path.dirname(os.path.abspath(manifest))).encode())
                with open(fp, "rb") as fh:
                    h.update(fh.read())
    return h.hexdigest()
