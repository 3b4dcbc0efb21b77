"""Regenerate src/svseg/suites/suite-v1.json (the checked-in dataset definition)."""

import json
import os
import sys

import numpy as np

BODY = [(205, 55, 50), (215, 120, 40), (190, 50, 130), (205, 175, 40), (225, 80, 70)]
SKIN = [(230, 175, 135), (205, 145, 105), (240, 195, 165)]
BG = [(70, 120, 80), (60, 90, 130), (105, 112, 108), (80, 105, 65), (85, 125, 140), (100, 100, 120)]
CLUTTER = [(165, 115, 80), (150, 95, 95), (170, 140, 90)]


def background(rng, clutter):
    base = BG[int(rng.integers(len(BG)))]
    blobs = []
    for _ in range(clutter):
        c = CLUTTER[int(rng.integers(len(CLUTTER)))]
        blobs.append([float(rng.uniform(6, 70)), float(rng.uniform(6, 58)), float(rng.uniform(3, 6)),
                      float(rng.uniform(4, 8)), list(c)])
    pan = [float(rng.choice([0.0, 0.0, 0.25, -0.25])), 0.0]
    return {"base_color": [int(v + rng.integers(-10, 11)) for v in base], "texture": float(rng.uniform(6, 12)),
            "texture_scale": 3.0, "noise": 3.0, "pan": pan, "blobs": blobs}


def actor(rng, w, h):
    sz = [int(rng.integers(10, 15)), int(rng.integers(16, 24))]
    path = str(rng.choice(["linear", "sinusoidal"]))
    start = [float(rng.uniform(14, w - 14)), float(rng.uniform(28, h - 14))]
    if path == "linear":
        vx = float(rng.uniform(0.9, 1.6) * rng.choice([-1, 1]))
        start[0] = 12.0 if vx > 0 else w - 12.0
        vel = [vx, float(rng.uniform(-0.2, 0.2))]
    else:
        vel = [0.0, 0.0]
        start[0] = float(rng.uniform(24, w - 24))
    return {"shape": str(rng.choice(["ellipse", "rounded-rect"])), "size": sz, "head": int(rng.integers(3, 6)),
            "body_color": [int(v + rng.integers(-15, 16)) for v in BODY[int(rng.integers(len(BODY)))]],
            "skin_color": list(SKIN[int(rng.integers(len(SKIN)))]), "color_jitter": 6.0, "path": path,
            "start": start, "velocity": vel, "amplitude": [float(rng.uniform(8, 16)), float(rng.uniform(0, 3))],
            "period": float(rng.uniform(16, 30)), "pose_jitter": 1.0}


def main(out):
    rng = np.random.default_rng(2017)
    videos = []
    plan = [("train", 12, True), ("eval", 4, True), ("train", 3, False)]
    for split, count, positive in plan:
        for i in range(count):
            name = f"{'neg' if not positive else split}{i:02d}"
            n_act = int(rng.choice([1, 1, 2])) if positive else 0
            cuts = [int(rng.integers(15, 28))] if rng.random() < 0.35 else []
            scene = {"width": 64, "height": 64, "frames": 40,
                     "actors": [actor(rng, 64, 64) for _ in range(n_act)],
                     "background": background(rng, int(rng.integers(0, 3))),
                     "cuts": cuts, "cut_backgrounds": [background(rng, int(rng.integers(0, 3))) for _ in cuts],
                     "seed": int(rng.integers(2 ** 31))}
            videos.append({"name": name, "split": split, "scene": scene,
                           "detector": {"center_jitter": 1.5, "scale_jitter": 0.08, "miss_rate": 0.15,
                                        "fp_rate": 0.3, "true_score": [0.0, 0.6], "false_score": [-1.65, 0.5]},
                           "detector_seed": int(rng.integers(2 ** 31)),
                           "proposals": {"per_frame": 50, "perturb_level": 3, "distractors": 40},
                           "proposal_seed": int(rng.integers(2 ** 31))})
    suite = {"name": "suite-v1", "supervoxels": {"seed_grid": 8, "color_tol": 20.0, "min_size": 16},
             "videos": videos}
    with open(out, "w") as fh:
        json.dump(suite, fh, indent=1)
        fh.write("\n")


if __name__ == "__main__":
    main(sys.argv[1] if len(sys.argv) > 1 else
         os.path.join(os.path.dirname(__file__), "..", "src", "svseg", "suites", "suite-v1.json"))
