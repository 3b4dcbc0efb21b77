import numpy as np
import pytest

from svseg import pipeline
from svseg.pipeline import (FrameResult, PipelineConfig, Video, evaluate, infer_masks, run_iterations,
                            select_training_frames)
from svseg.supervoxel import extract_supervoxels
from svseg.synthgen import (ActorSpec, BackgroundSpec, DetectorNoise, ProposalParams, SceneSpec, generate_video,
                            simulate_detections, simulate_proposals)
from svseg.videoio import compute_iou


def _small_video(name, split, seed, actors=True, noise=None, params=None):
    acts = [ActorSpec(size=(8, 12), head=3, start=(8.0, 18.0), velocity=(1.2, 0.0), pose_jitter=0.3,
                      body_color=(220, 60, 40), color_jitter=4.0)] if actors else []
    spec = SceneSpec(width=32, height=32, frames=8, seed=seed, actors=acts,
                     background=BackgroundSpec(base_color=(60, 100, 130), texture=6.0, noise=2.0))
    vid = generate_video(spec)
    noise = noise or DetectorNoise(center_jitter=0.0, scale_jitter=0.0, miss_rate=0.0, fp_rate=0.0)
    params = params or ProposalParams(perturb_level=0, distractors=0)
    dets = simulate_detections(vid.actor_masks, noise, seed, 32, 32)
    props, _ = simulate_proposals(vid.actor_masks, params, seed)
    sv = extract_supervoxels(vid.frames, seed_grid=6, color_tol=20, min_size=8)
    return Video(name, split, vid.frames, sv, dets, props, vid.gt)


@pytest.fixture(scope="module")
def videos():
    noisy = DetectorNoise(fp_rate=0.0)
    graded = ProposalParams(per_frame=12, perturb_level=2, distractors=6)
    return [_small_video("a", "train", 1), _small_video("b", "train", 2, noise=noisy, params=graded),
            _small_video("neg", "train", 3, actors=False), _small_video("e", "eval", 4)]


def test_oracle_inputs_give_accurate_masks(videos):
    v = videos[0]
    res = infer_masks(v, None, PipelineConfig())
    assert res
    for t, r in res.items():
        assert compute_iou(r.mask, v.gt[t]) >= 0.9
        assert 0.0 < r.omega <= 1.0
        assert r.certificate_gap < 1e-9


def test_no_detections_gives_empty_masks(videos):
    v = videos[2]
    assert v.detections == []
    res = infer_masks(v, None, PipelineConfig())
    assert all(not r.mask.any() and r.omega == 0.0 for r in res.values())
    assert v.negative_frames(PipelineConfig().det_threshold) == list(range(8))


def _result(frame, omega):
    return FrameResult(frame, np.ones((2, 2), bool), omega, 0.0, 0.0)


def test_top_five_frames_selected():
    res = {t: _result(t, w) for t, w in enumerate([0.9, 0.8, 0.7, 0.6, 0.5, 0.4, 0.3])}
    corpus = select_training_frames({"v": res}, [], 5, 0.0)
    assert [e.frame for e in corpus] == [0, 1, 2, 3, 4]


def test_negative_fraction_arithmetic():
    per_video = {"v%d" % i: {0: _result(0, 0.5), 1: _result(1, 0.6)} for i in range(5)}
    pool = [("neg", t, (2, 2)) for t in range(20)]
    corpus = select_training_frames(per_video, pool, 5, 1.0 / 3.0, np.random.default_rng(0))
    negs = [e for e in corpus if e.negative]
    assert len(corpus) - len(negs) == 10 and len(negs) == 5
    assert all(not e.mask.any() for e in negs)


def test_zero_detection_video_only_feeds_negatives(videos):
    v = videos[2]
    res = infer_masks(v, None, PipelineConfig())
    pool = [(v.name, t, v.shape) for t in v.negative_frames(-1.0)]
    corpus = select_training_frames({v.name: res}, pool, 5, 1.0 / 3.0, np.random.default_rng(1))
    assert all(e.negative for e in corpus)


class _GtModel:
    pass


def test_evaluate_perfect_and_empty_predictors(videos, monkeypatch):
    v = videos[3]
    lookup = {v.frames[t].tobytes(): v.gt[t] for t in range(len(v.frames))}
    monkeypatch.setattr(pipeline.learner, "predict_confidence",
                        lambda m, frame, raw=None: lookup[frame.tobytes()].astype(float))
    assert evaluate(_GtModel(), [v]) == 1.0
    monkeypatch.setattr(pipeline.learner, "predict_confidence",
                        lambda m, frame, raw=None: np.full(frame.shape[:2], 0.5 - 1e-9))
    empty_frames = sum(1 for g in v.gt if not g.any())
    assert evaluate(_GtModel(), [v]) == empty_frames / len(v.frames)


def test_single_iteration_run(videos):
    cfg = PipelineConfig(iterations=1, epochs=3)
    reports, model = run_iterations(videos, cfg)
    assert len(reports) == 1
    r = reports[0]
    assert r.iteration == 1 and r.corpus_size > 0 and 0.0 <= r.eval_iou <= 1.0
    assert r.max_certificate_gap < 1e-9
    assert model.weights.shape == (2, 19)


def test_same_seed_same_report(videos):
    cfg = PipelineConfig(iterations=2, epochs=3, early_stop=None)
    a, ma = run_iterations(videos, cfg)
    b, mb = run_iterations(videos, cfg)
    assert [r.lines() for r in a] == [r.lines() for r in b]
    assert ma.weights.tobytes() == mb.weights.tobytes()
    for key, m in a[-1].masks.items():
        assert m.tobytes() == b[-1].masks[key].tobytes()


def test_early_stop_can_cut_the_run(videos):
    # a threshold no gain can reach stops after the second iteration
    reports, _ = run_iterations(videos, PipelineConfig(iterations=4, epochs=2, early_stop=1000.0))
    assert len(reports) == 2


def test_no_training_videos_rejected(videos):
    with pytest.raises(ValueError):
        run_iterations([videos[3]], PipelineConfig(iterations=1))


def test_manifest_reader(tmp_path):
    (tmp_path / "manifest.txt").write_text("# header\nv\ttrain\tv/frames\tv/sv\tv/d.txt\tv/p.txt\t-\n")
    (row,) = pipeline.read_manifest(tmp_path / "manifest.txt")
    assert row["gt"] == "-" and row["frames"] == str(tmp_path / "v" / "frames")
    (tmp_path / "bad.txt").write_text("v\ttrain\n")
    with pytest.raises(ValueError, match=":1:"):
        pipeline.read_manifest(tmp_path / "bad.txt")


@pytest.mark.parametrize("seed", range(6))
def test_corpus_composition_and_omega_order(seed):
    rng = np.random.default_rng(seed)
    per_video = {}
    for v in range(int(rng.integers(1, 6))):
        n = int(rng.integers(1, 10))
        per_video[f"v{v}"] = {t: _result(t, float(w)) for t, w in enumerate(rng.uniform(0, 1, n))}
    pool = [("neg", t, (2, 2)) for t in range(40)]
    frac = float(rng.uniform(0.1, 0.5))
    corpus = select_training_frames(per_video, pool, 5, frac, np.random.default_rng(seed))
    negs = sum(e.negative for e in corpus)
    assert abs(negs - frac * len(corpus)) <= 1 + frac
    for name, res in per_video.items():
        chosen = {e.frame for e in corpus if e.video == name and not e.negative}
        if chosen:
            lowest = min(res[t].omega for t in chosen)
            assert all(r.omega <= lowest for t, r in res.items() if t not in chosen)
