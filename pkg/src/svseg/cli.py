"""Command line entry point: ``svseg <subcommand>``."""

from __future__ import annotations

import argparse
import logging
import os
import sys

import numpy as np

from . import learner, report
from .energy import DET_THRESHOLD, PotentialSet, build_potentials, build_proposal_mask, node_probabilities
from .pipeline import PipelineConfig, load_videos, run_iterations
from .solver import MAX_BRUTE_FORCE_NODES, brute_force_min, minimize
from .stgraph import build_graph
from .suite import dataset_hash, load_suite, write_suite
from .supervoxel import extract_supervoxels, read_supervoxels, shots_with_keyframes, write_supervoxels
from .videoio import (read_detections, read_frame_sequence, read_mask, read_proposals, write_mask,
                      write_pgm)

log = logging.getLogger("svseg")


def _ablation_flags(p):
    p.add_argument("--no-pairwise", action="store_true")
    p.add_argument("--no-higher-order", action="store_true")
    p.add_argument("--unary-only", action="store_true", help="drop pairwise and higher-order terms")
    p.add_argument("--det-threshold", type=float, default=DET_THRESHOLD)


def _flags(args):
    pair = not (args.no_pairwise or args.unary_only)
    higher = not (args.no_higher_order or args.unary_only)
    return pair, higher


def cmd_synth(args):
    suite = load_suite(args.suite)
    manifest = write_suite(suite, args.out, log=log.info)
    print(f"manifest={manifest}")
    print(f"suite_hash={dataset_hash(manifest)}")


def cmd_supervoxel(args):
    frames = read_frame_sequence(args.input)
    svmap = extract_supervoxels(frames, args.seed_grid, args.color_tol, args.min_size)
    write_supervoxels(args.out, svmap)
    shots = shots_with_keyframes(svmap)
    print(f"supervoxels={svmap.n_ids}")
    for s in shots:
        print(f"shot={s.start}-{s.end} keyframes={','.join(map(str, s.candidate_keyframes))}")


def _load_shot_graph(args):
    frames = read_frame_sequence(args.frames)
    svmap = read_supervoxels(args.supervoxels)
    shots = shots_with_keyframes(svmap)
    if not 0 <= args.shot < len(shots):
        raise SystemExit(f"shot {args.shot} out of range (video has {len(shots)})")
    shot = shots[args.shot]
    keys = shot.candidate_keyframes
    if args.keyframes:
        keys = [int(k) for k in args.keyframes.split(",")]
    return frames, shot, build_graph(shot, keys, svmap, frames)


def cmd_graph(args):
    _, shot, graph = _load_shot_graph(args)
    if args.dump:
        sys.stdout.write(graph.dump())
    else:
        print(f"shot={shot.start}-{shot.end} keyframes={','.join(map(str, graph.keyframes))} "
              f"nodes={graph.n_nodes} edges={len(graph.edges)} cliques={len(graph.cliques)} "
              f"beta_p={graph.beta_p:.6f} beta_s={graph.beta_s:.6f}")


def random_instance(n, seed, n_cliques=3):
    """Random potentials on ``n`` nodes: sparse edges and up to ``n_cliques`` disjoint cliques."""
    rng = np.random.default_rng(seed)
    p = rng.uniform(0.02, 0.98, n)
    pairs = sorted({(int(min(a, b)), int(max(a, b))) for a, b in rng.integers(0, n, (2 * n, 2)) if a != b})
    edges = np.array(pairs, np.int64).reshape(-1, 2)
    perm = rng.permutation(n)
    k = min(n_cliques, n)
    cuts = np.sort(rng.choice(np.arange(1, n), k - 1, replace=False)) if k > 1 else []
    cliques = tuple(np.sort(c) for c in np.split(perm, cuts))
    size = np.array([c.size for c in cliques], np.float64)
    lam = size * np.exp(-rng.uniform(0, 2, size.size))
    return PotentialSet(p, -np.log(p), -np.log1p(-p), edges, rng.uniform(0, 1, len(edges)),
                        cliques, lam, 0.1 * size)


def cmd_energy(args):
    pair, higher = _flags(args)
    if args.random:
        pots = random_instance(args.random, args.seed)
        pots = PotentialSet(**{**pots.__dict__, "use_pairwise": pair, "use_higher_order": higher})
        graph = None
    else:
        if not (args.frames and args.supervoxels and args.detections and args.proposals):
            raise SystemExit("--frames, --supervoxels, --detections and --proposals are required "
                             "unless --random is given")
        frames, _, graph = _load_shot_graph(args)
        dets = read_detections(args.detections)
        props = read_proposals(args.proposals)
        model = learner.PixelModel.load(args.model) if args.model else None
        conf = None
        if model is not None:
            conf = {k: learner.predict_confidence(model, frames[k]) for k in graph.keyframes}
        region = {k: build_proposal_mask(k, dets, props.get(k, []), conf[k] if conf else None,
                                         args.det_threshold, shape=frames[k].shape[:2])
                  for k in graph.keyframes}
        prob, _ = node_probabilities(graph, region, conf)
        pots = build_potentials(graph, prob, pair, higher)
    status = 0
    if args.brute_force:
        sys.stdout.write(report.energy_breakdown(brute_force_min(graph, pots), pots))
    else:
        res = minimize(graph, pots)
        sys.stdout.write(report.energy_breakdown(res, pots))
        if args.check:
            gap = abs(res.energy - (res.flow_value + res.offset))
            ok = gap < 1e-9
            if pots.n_nodes <= MAX_BRUTE_FORCE_NODES:
                bf = brute_force_min(graph, pots)
                diff = abs(bf.energy - res.energy)
                print(f"brute_force_energy={bf.energy!r}")
                print(f"brute_force_diff={diff:.3e}")
                ok = ok and diff < 1e-9
            print(f"check={'pass' if ok else 'FAIL'}")
            status = 0 if ok else 1
    return status


def _frame_indices(dir_path, prefix):
    return sorted(int(f[len(prefix):-4]) for f in os.listdir(dir_path) if f.startswith(prefix))


def cmd_train_model(args):
    frames = read_frame_sequence(args.frames)
    weights = {}
    if args.weights:
        with open(args.weights) as fh:
            for line in fh:
                line = line.split("#", 1)[0].split()
                if line:
                    weights[int(line[0])] = float(line[1])
    samples = []
    for t in _frame_indices(args.masks, "mask_"):
        mask = read_mask(os.path.join(args.masks, "mask_%05d.pgm" % t))
        samples.append(learner.WeightedSample(frames[t], mask, weights.get(t, 1.0)))
    model = learner.train(samples, args.epochs, args.lr0, (args.lr_every, args.lr_factor), args.batch_size,
                          seed=args.seed)
    model.save(args.out)
    print(f"samples={len(samples)} final_loss={model.log[-1]:.6f}")


def cmd_predict(args):
    model = learner.PixelModel.load(args.model)
    frames = read_frame_sequence(args.frames)
    os.makedirs(args.out, exist_ok=True)
    for t in range(len(frames)):
        conf = learner.predict_confidence(model, frames[t])
        write_pgm(os.path.join(args.out, "conf_%05d.pgm" % t), np.rint(conf * 255).astype(np.uint8))
        write_mask(os.path.join(args.out, "mask_%05d.pgm" % t), conf >= 0.5)
    print(f"frames={len(frames)}")


def config_from_args(args):
    pair, higher = _flags(args)
    early = None if args.early_stop in ("none", "off") else float(args.early_stop)
    return PipelineConfig(iterations=args.iters, seed=args.seed, det_threshold=args.det_threshold,
                          use_pairwise=pair, use_higher_order=higher,
                          use_weights=not args.no_sample_weights, use_negatives=not args.no_negatives,
                          max_per_video=args.max_per_video, negative_fraction=args.negative_fraction,
                          early_stop=early, epochs=args.epochs, lr0=args.lr0)


def cmd_run(args):
    cfg = config_from_args(args)
    videos = load_videos(args.videos)
    suite_hash = dataset_hash(args.videos)
    out = args.out
    os.makedirs(out, exist_ok=True)
    frames_by = {v.name: v.frames for v in videos}

    def save_iteration(rep, model):
        d = os.path.join(out, "iter_%02d" % rep.iteration)
        for (name, t), m in sorted(rep.masks.items()):
            md = os.path.join(d, "masks", name)
            os.makedirs(md, exist_ok=True)
            write_mask(os.path.join(md, "mask_%05d.pgm" % t), m)
        model.save(os.path.join(d, "model.pxm"))

    reports, model = run_iterations(videos, cfg, save_iteration)
    model.save(os.path.join(out, "model.pxm"))
    run = report.RunReport(reports, cfg.echo(), suite_hash)
    report.write_run_outputs(out, run)
    last = reports[-1]
    od = os.path.join(out, "overlays")
    os.makedirs(od, exist_ok=True)
    for name in sorted(last.selected):
        for t, _ in last.selected[name]:
            report.emit_overlay(frames_by[name][t], last.masks[(name, t)],
                                os.path.join(od, "%s_%05d.ppm" % (name, t)))
    for r in reports:
        print(f"iteration={r.iteration} eval_iou={r.eval_iou:.4f} corpus={r.corpus_size} negatives={r.negatives}")


def cmd_plot(args):
    curves = [report.read_curves(p) for p in args.curves]
    labels = args.labels.split(",") if args.labels else [os.path.basename(os.path.dirname(p)) for p in args.curves]
    report.plot_curves(curves, args.out, labels)


def build_parser():
    ap = argparse.ArgumentParser(prog="svseg", description=__doc__)
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="cmd", required=True)

    p = sub.add_parser("synth", help="generate a synthetic suite and its manifest")
    p.add_argument("--suite", default="suite-v1")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("supervoxel", help="extract supervoxels from a frame directory")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--seed-grid", type=int, default=8)
    p.add_argument("--color-tol", type=float, default=20.0)
    p.add_argument("--min-size", type=int, default=16)
    p.set_defaults(func=cmd_supervoxel)

    def shot_args(p):
        p.add_argument("--frames")
        p.add_argument("--supervoxels")
        p.add_argument("--shot", type=int, default=0)
        p.add_argument("--keyframes", help="comma-separated override of the candidate key frames")

    p = sub.add_parser("graph", help="build one shot's spatio-temporal graph")
    shot_args(p)
    p.add_argument("--dump", action="store_true", help="print node, edge and clique tables")
    p.set_defaults(func=cmd_graph)

    p = sub.add_parser("energy", help="minimise or check one shot's energy")
    shot_args(p)
    p.add_argument("--detections")
    p.add_argument("--proposals")
    p.add_argument("--model")
    p.add_argument("--random", type=int, default=0, help="use a random instance with N nodes instead")
    p.add_argument("--seed", type=int, default=0)
    mode = p.add_mutually_exclusive_group()
    mode.add_argument("--solve", action="store_true", help="min-cut solve (default)")
    mode.add_argument("--brute-force", action="store_true")
    mode.add_argument("--check", action="store_true", help="solve and verify against the oracle")
    _ablation_flags(p)
    p.set_defaults(func=cmd_energy)

    p = sub.add_parser("train-model", help="train the pixel classifier on frames + masks")
    p.add_argument("--frames", required=True)
    p.add_argument("--masks", required=True, help="directory of mask_NNNNN.pgm targets")
    p.add_argument("--weights", help="text file of `frame omega` lines")
    p.add_argument("--out", required=True)
    p.add_argument("--epochs", type=int, default=60)
    p.add_argument("--lr0", type=float, default=0.001)
    p.add_argument("--lr-every", type=int, default=20)
    p.add_argument("--lr-factor", type=float, default=0.1)
    p.add_argument("--batch-size", type=int, default=20)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_train_model)

    p = sub.add_parser("predict", help="write confidence maps and masks for a frame directory")
    p.add_argument("--model", required=True)
    p.add_argument("--frames", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("run", help="iterative self-training over a video manifest")
    p.add_argument("--videos", required=True, help="manifest.txt")
    p.add_argument("--iters", type=int, default=10)
    p.add_argument("--seed", type=int, default=7)
    p.add_argument("--out", required=True)
    p.add_argument("--no-sample-weights", action="store_true")
    p.add_argument("--no-negatives", action="store_true")
    p.add_argument("--max-per-video", type=int, default=5)
    p.add_argument("--negative-fraction", type=float, default=1.0 / 3.0)
    p.add_argument("--early-stop", default="0.2", help="IoU-point threshold, or 'none'")
    p.add_argument("--epochs", type=int, default=60)
    p.add_argument("--lr0", type=float, default=0.001)
    _ablation_flags(p)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("plot", help="render one or more curves.csv files to a PNG")
    p.add_argument("curves", nargs="+")
    p.add_argument("--out", required=True)
    p.add_argument("--labels")
    p.set_defaults(func=cmd_plot)
    return ap


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    return args.func(args) or 0


if __name__ == "__main__":
    sys.exit(main())
