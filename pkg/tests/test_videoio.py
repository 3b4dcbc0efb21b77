import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra import numpy as hnp

from svseg.videoio import (DetectionBox, FormatError, RegionProposal, compute_iou, read_detections,
                           read_frame_sequence, read_mask, read_pgm, read_ppm, read_proposals,
                           rle_decode, rle_encode, tight_box, write_detections, write_frame_sequence,
                           write_mask, write_pgm, write_ppm, write_proposals, frame_path)


def test_read_three_frames(tmp_path):
    rng = np.random.default_rng(0)
    frames = rng.integers(0, 256, (3, 48, 64, 3), dtype=np.uint8)
    write_frame_sequence(tmp_path, frames)
    seq = read_frame_sequence(tmp_path)
    assert len(seq) == 3 and seq.width == 64 and seq.height == 48
    np.testing.assert_array_equal(seq.frames, frames)


def test_gap_in_frames_reports_missing_index(tmp_path):
    rng = np.random.default_rng(1)
    for t in (0, 1, 3):
        write_ppm(frame_path(tmp_path, t), rng.integers(0, 256, (48, 64, 3), dtype=np.uint8))
    with pytest.raises(FormatError, match="missing frame 2"):
        read_frame_sequence(tmp_path)


def test_ppm_bytes_identical_after_roundtrip(tmp_path):
    rng = np.random.default_rng(2)
    img = rng.integers(0, 256, (9, 11, 3), dtype=np.uint8)
    write_ppm(tmp_path / "a.ppm", img)
    write_ppm(tmp_path / "b.ppm", read_ppm(tmp_path / "a.ppm"))
    assert (tmp_path / "a.ppm").read_bytes() == (tmp_path / "b.ppm").read_bytes()


def test_ppm_header_comments(tmp_path):
    body = bytes(range(12))
    (tmp_path / "c.ppm").write_bytes(b"P6\n# made by hand\n2 2\n# depth\n255\n" + body)
    np.testing.assert_array_equal(read_ppm(tmp_path / "c.ppm").ravel(), np.arange(12))


def test_truncated_ppm_is_rejected(tmp_path):
    (tmp_path / "t.ppm").write_bytes(b"P6\n4 4\n255\n" + bytes(10))
    with pytest.raises(FormatError):
        read_ppm(tmp_path / "t.ppm")


def test_sixteen_bit_pgm(tmp_path):
    arr = np.array([[0, 1, 256], [65535, 300, 7]], np.uint16)
    write_pgm(tmp_path / "g.pgm", arr, maxval=65535)
    back, maxval = read_pgm(tmp_path / "g.pgm")
    assert maxval == 65535
    np.testing.assert_array_equal(back, arr)


def test_mask_values_must_be_binary(tmp_path):
    write_pgm(tmp_path / "m.pgm", np.array([[0, 255], [128, 0]], np.uint8))
    with pytest.raises(FormatError):
        read_mask(tmp_path / "m.pgm")


def test_detection_line_parse(tmp_path):
    (tmp_path / "d.txt").write_text("4 0.7 10 10 30 40\n")
    (box,) = read_detections(tmp_path / "d.txt")
    assert (box.frame_index, box.score, box.x0, box.y0, box.x1, box.y1) == (4, 0.7, 10, 10, 30, 40)


def test_inverted_detection_box_is_an_error(tmp_path):
    (tmp_path / "d.txt").write_text("# header\n4 0.7 30 10 10 40\n")
    with pytest.raises(FormatError, match=":2:"):
        read_detections(tmp_path / "d.txt")


def test_empty_detection_file(tmp_path):
    (tmp_path / "d.txt").write_text("")
    assert read_detections(tmp_path / "d.txt") == []


def test_rle_full_mask():
    np.testing.assert_array_equal(rle_decode([(0, 4)], 2, 2), np.ones((2, 2), bool))


def test_rle_run_past_the_end():
    with pytest.raises(FormatError):
        rle_decode([(2, 3)], 2, 2)


def test_rle_random_32x32():
    mask = np.random.default_rng(3).random((32, 32)) < 0.4
    np.testing.assert_array_equal(rle_decode(rle_encode(mask), 32, 32), mask)


def test_iou_cases():
    m = np.zeros((4, 4), bool)
    m[1:3, 1:3] = True
    assert compute_iou(m, m) == 1.0
    assert compute_iou(m, np.roll(m, 2, axis=1)) == 0.0
    assert compute_iou(np.array([1, 1, 0], bool), np.array([0, 1, 1], bool)) == pytest.approx(1 / 3)
    assert compute_iou(np.zeros(3, bool), np.zeros(3, bool)) == 1.0


def test_tight_box_inclusive():
    m = np.zeros((6, 8), bool)
    m[2, 3] = m[4, 6] = True
    assert tight_box(m) == (3, 2, 6, 4)
    assert tight_box(np.zeros((2, 2), bool)) is None


def test_single_pixel_box_is_valid():
    DetectionBox(0, 1.0, 5, 5, 5, 5)


def test_proposals_grouped_by_frame(tmp_path):
    a = np.zeros((5, 7), bool)
    a[1:3, 2:5] = True
    b = np.zeros((5, 7), bool)
    b[4, 6] = True
    props = [RegionProposal(2, a), RegionProposal(0, b), RegionProposal(2, b)]
    write_proposals(tmp_path / "p.txt", props, 7, 5)
    back = read_proposals(tmp_path / "p.txt")
    assert sorted(back) == [0, 2]
    assert [p.tight_box for p in back[2]] == [(2, 1, 4, 2), (6, 4, 6, 4)]


@settings(max_examples=60, deadline=None)
@given(hnp.arrays(bool, hnp.array_shapes(min_dims=2, max_dims=2, min_side=1, max_side=24)))
def test_rle_roundtrip_property(mask):
    h, w = mask.shape
    runs = rle_encode(mask)
    assert all(n > 0 for _, n in runs)
    np.testing.assert_array_equal(rle_decode(runs, w, h), mask)


@settings(max_examples=40, deadline=None)
@given(hnp.arrays(bool, (6, 5)), hnp.arrays(bool, (6, 5)))
def test_iou_symmetric_and_bounded(a, b):
    v = compute_iou(a, b)
    assert v == compute_iou(b, a)
    assert 0.0 <= v <= 1.0


@settings(max_examples=40, deadline=None)
@given(st.lists(st.tuples(st.integers(0, 500), st.floats(-5, 5, allow_nan=False),
                          st.integers(0, 60), st.integers(0, 60), st.integers(0, 60), st.integers(0, 60)),
                max_size=20))
def test_detections_roundtrip_property(tmp_path_factory, rows):
    boxes = [DetectionBox(f, s, min(a, b), min(c, d), max(a, b), max(c, d)) for f, s, a, c, b, d in rows]
    path = tmp_path_factory.mktemp("det") / "d.txt"
    write_detections(path, boxes)
    assert read_detections(path) == boxes


def test_mask_file_roundtrip(tmp_path):
    m = np.random.default_rng(5).random((7, 9)) < 0.5
    write_mask(tmp_path / "m.pgm", m)
    np.testing.assert_array_equal(read_mask(tmp_path / "m.pgm"), m)
    assert read_pgm(tmp_path / "m.pgm")[1] == 255
