import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from oracles import purity
from svseg.supervoxel import (Shot, SupervoxelMap, extract_supervoxels, id_churn, read_supervoxels,
                              select_candidate_keyframes, shots_with_keyframes, split_shots,
                              write_supervoxels)
from svseg.synthgen import ActorSpec, BackgroundSpec, SceneSpec, generate_video


def _static(frame, n=4):
    return np.repeat(frame[None], n, axis=0)


def test_uniform_video_is_one_supervoxel():
    frames = _static(np.full((16, 16, 3), 120, np.uint8))
    sv = extract_supervoxels(frames, seed_grid=16, color_tol=10, min_size=4)
    assert sv.n_ids == 1
    assert all(ids == {0} for ids in sv.id_sets)


def test_two_tone_video_gives_two_supervoxels():
    img = np.zeros((16, 16, 3), np.uint8)
    img[:, 8:] = 255
    sv = extract_supervoxels(_static(img, 5), seed_grid=16, color_tol=20, min_size=4)
    assert sv.n_ids == 2
    for t in range(5):
        assert len(np.unique(sv.labels[t, :, :8])) == 1
        assert len(np.unique(sv.labels[t, :, 8:])) == 1
        assert sv.labels[t, 0, 0] != sv.labels[t, 0, 15]


def test_moving_square_purity():
    # plain high-contrast square gliding over a dark textured floor
    spec = SceneSpec(width=32, height=32, frames=6, seed=4,
                     actors=[ActorSpec(shape="rounded-rect", size=(10, 10), head=0, body_color=(230, 230, 40),
                                       color_jitter=2.0, start=(10.0, 16.0), velocity=(1.5, 0.0),
                                       pose_jitter=0.0)],
                     background=BackgroundSpec(base_color=(40, 40, 90), texture=6.0, noise=1.5))
    vid = generate_video(spec)
    sv = extract_supervoxels(vid.frames.frames, seed_grid=6, color_tol=20, min_size=8)
    for t in range(6):
        inside = set(np.unique(sv.labels[t][vid.gt[t]]).tolist())
        outside = set(np.unique(sv.labels[t][~vid.gt[t]]).tolist())
        assert not inside & outside
    assert purity(sv.labels, vid.gt) >= 0.95


def test_shot_boundary_rule_arithmetic():
    # frame 0 holds ids 0..9, frame 1 holds 0..3 plus 10..15: 12 changed of 16 -> 0.75
    a = np.arange(10).repeat(2).reshape(4, 5)
    b = np.array([0, 1, 2, 3, 10, 11, 12, 13, 14, 15]).repeat(2).reshape(4, 5)
    sv = SupervoxelMap(np.stack([a, b]).astype(np.int32))
    assert [(s.start, s.end) for s in split_shots(sv)] == [(0, 1), (1, 2)]


def test_identical_ids_single_shot():
    sv = SupervoxelMap(np.zeros((5, 3, 3), np.int32))
    assert [(s.start, s.end) for s in split_shots(sv)] == [(0, 5)]
    assert select_candidate_keyframes(Shot(0, 5), sv) == [0]


def test_synthetic_cut_is_found():
    bg2 = BackgroundSpec(base_color=(200, 200, 120), texture=8.0, noise=1.0)
    spec = SceneSpec(width=32, height=32, frames=8, seed=9, cuts=[5], cut_backgrounds=[bg2],
                     background=BackgroundSpec(base_color=(30, 60, 140), texture=8.0, noise=1.0))
    vid = generate_video(spec)
    sv = extract_supervoxels(vid.frames.frames, seed_grid=8, color_tol=20, min_size=8)
    starts = [s.start for s in split_shots(sv)]
    assert vid.meta["cuts"] == [5]
    assert starts == [0, 5]


def _scripted_churn(new_per_frame):
    """Label maps whose frame-to-frame id churn is scripted exactly."""
    frames = []
    current = list(range(20))
    nxt = 20
    for k in new_per_frame:
        # replace k ids: churn is 2k (k lost + k new)
        current = current[k:] + list(range(nxt, nxt + k))
        nxt += k
        frames.append(list(current))
    frames = [list(range(20))] + frames
    all_ids = sorted({i for f in frames for i in f})
    remap = {v: i for i, v in enumerate(all_ids)}
    return SupervoxelMap(np.array([[remap[i] for i in f] for f in frames], np.int32).reshape(len(frames), 4, 5))


def test_keyframes_where_scripted_churn_exceeds_threshold():
    new = [0, 5, 6, 1, 5, 0, 7]          # churn 0,10,12,2,10,0,14
    sv = _scripted_churn(new)
    expected = [0] + [t + 1 for t, k in enumerate(new) if 2 * k > 10]
    assert select_candidate_keyframes(Shot(0, sv.n_frames), sv) == expected == [0, 3, 7]


def test_eleven_new_ids_make_a_candidate():
    assert id_churn(frozenset(range(10)), frozenset(range(10)) | frozenset(range(100, 111))) == 11


def test_static_video_only_first_keyframe():
    img = np.zeros((16, 16, 3), np.uint8)
    img[:, 8:] = 200
    sv = extract_supervoxels(_static(img, 6), seed_grid=8, color_tol=20, min_size=4)
    assert [s.candidate_keyframes for s in shots_with_keyframes(sv)] == [(0,)]


def test_supervoxel_persistence(tmp_path):
    lab = np.random.default_rng(0).permutation(np.arange(3 * 10 * 10) % 300).reshape(3, 10, 10).astype(np.int32)
    sv = SupervoxelMap(lab)
    write_supervoxels(tmp_path, sv)
    np.testing.assert_array_equal(read_supervoxels(tmp_path).labels, lab)


def test_noncontiguous_ids_rejected():
    with pytest.raises(ValueError):
        SupervoxelMap(np.array([[[0, 2]]], np.int32))


@settings(max_examples=50, deadline=None)
@given(st.frozensets(st.integers(0, 30)), st.frozensets(st.integers(0, 30)))
def test_churn_is_a_symmetric_count(a, b):
    assert id_churn(a, b) == id_churn(b, a) == len(a - b) + len(b - a)


@settings(max_examples=10, deadline=None)
@given(st.integers(0, 2 ** 16))
def test_labels_cover_every_pixel(seed):
    rng = np.random.default_rng(seed)
    frames = rng.integers(0, 256, (2, 12, 12, 3), dtype=np.uint8)
    sv = extract_supervoxels(frames, seed_grid=4, color_tol=30, min_size=4)
    assert sv.labels.shape == (2, 12, 12)
    assert np.array_equal(np.unique(sv.labels), np.arange(sv.n_ids))


@settings(max_examples=8, deadline=None)
@given(st.integers(0, 2 ** 16))
def test_every_region_is_four_connected(seed):
    from scipy import ndimage
    rng = np.random.default_rng(seed)
    # blocky noise: large flat patches with ragged borders and speckle
    base = rng.integers(0, 256, (2, 4, 4, 3)).repeat(5, 1).repeat(5, 2)
    frames = np.clip(base + rng.normal(0, 12, base.shape), 0, 255).astype(np.uint8)
    sv = extract_supervoxels(frames, seed_grid=5, color_tol=25, min_size=6)
    for t in range(2):
        for i in np.unique(sv.labels[t]):
            assert ndimage.label(sv.labels[t] == i)[1] == 1


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2 ** 16))
def test_keyframes_invariant_to_id_renumbering(seed):
    rng = np.random.default_rng(seed)
    lab = rng.integers(0, 30, (6, 4, 5))
    lab = np.unique(lab, return_inverse=True)[1].reshape(lab.shape).astype(np.int32)
    perm = rng.permutation(lab.max() + 1).astype(np.int32)
    a, b = SupervoxelMap(lab), SupervoxelMap(perm[lab])
    assert select_candidate_keyframes(Shot(0, 6), a) == select_candidate_keyframes(Shot(0, 6), b)
    assert split_shots(a) == split_shots(b)


def test_supervoxels_cover_frames_and_live_in_contiguous_intervals():
    spec = SceneSpec(width=32, height=32, frames=6, seed=11,
                     actors=[ActorSpec(size=(8, 12), head=3, start=(6.0, 18.0), velocity=(2.5, 0.0))])
    sv = extract_supervoxels(generate_video(spec).frames, seed_grid=6, color_tol=20, min_size=8)
    for t in range(sv.n_frames):
        sizes = np.bincount(sv.labels[t].ravel())
        assert sizes.sum() == 32 * 32
    for frames in sv.id_index.values():
        assert frames == list(range(frames[0], frames[-1] + 1))
