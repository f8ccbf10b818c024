import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import make_sample
from gaitlab.errors import (
    DegenerateWalkError,
    EmptyDatasetError,
    ParameterError,
    ParseError,
    SchemaError,
)
from gaitlab.mocap import (
    Dataset,
    GaitSample,
    normalize_sample,
    parse_dataset,
    parse_dataset_text,
    resample_cycle,
    vectorize,
    vectorize_all,
    vertical_rotation,
    write_dataset,
)
from gaitlab.skeleton import EXCLUSION_GROUPS, GROUPS, JOINTS, N_JOINTS, JointMask
from gaitlab.synth import SynthParams, synthesize_dataset


def test_skeleton_groups_partition_joints():
    assert len(JOINTS) == 31 == len(set(JOINTS))
    members = [j for g in GROUPS.values() for j in g]
    assert sorted(members) == sorted(JOINTS)
    assert len(EXCLUSION_GROUPS) == 14


def test_joint_mask_rejects_empty():
    with pytest.raises(ParameterError):
        JointMask.excluding(JOINTS)


# -- canonical format ---------------------------------------------------------

def test_parse_minimal_file(tmp_path):
    rows = "\n".join(" ".join(["0.5"] * 93) for _ in range(2))
    path = tmp_path / "one.txt"
    path.write_text(f"sample walker7 2\n{rows}\n")
    ds = parse_dataset(path)
    assert ds.n_classes == 1 and ds.n_samples == 1
    assert ds.samples[0].frames.shape == (2, 31, 3)


def test_write_parse_roundtrip_is_bit_exact(tmp_path, small_dataset):
    path = tmp_path / "ds.txt"
    write_dataset(small_dataset, path)
    back = parse_dataset(path, frame_rate=small_dataset.frame_rate)
    assert back == small_dataset
    assert back.labels == small_dataset.labels


def test_parse_errors_name_the_line():
    good = " ".join(["1"] * 93)
    with pytest.raises(ParseError) as exc:
        parse_dataset_text(f"sample a 2\n{good}\n1 2 x\n")
    assert exc.value.line == 3
    with pytest.raises(SchemaError) as exc:
        parse_dataset_text(f"sample a 2\n{good}\n" + " ".join(["1"] * 90) + "\n")
    assert exc.value.line == 3
    with pytest.raises(ParseError) as exc:
        parse_dataset_text("walker a 2\n")
    assert exc.value.line == 1
    with pytest.raises(EmptyDatasetError):
        parse_dataset_text("\n\n")


def test_parse_z_up_files():
    row = [0.0] * 93
    row[0:3] = [1.0, 2.0, 3.0]
    text = "sample a 2\n" + "\n".join(" ".join(map(str, row)) for _ in range(2)) + "\n"
    ds = parse_dataset_text(text, vertical_axis="z")
    assert np.allclose(ds.samples[0].frames[0, 0], [1.0, 3.0, -2.0])


def test_sample_invariants():
    with pytest.raises(SchemaError):
        GaitSample("a", np.zeros((1, N_JOINTS, 3)))
    with pytest.raises(SchemaError):
        GaitSample("a", np.zeros((3, 30, 3)))
    bad = np.zeros((3, N_JOINTS, 3))
    bad[1, 2, 0] = np.nan
    with pytest.raises(SchemaError):
        GaitSample("a", bad)


def test_dataset_counts():
    ds = Dataset(tuple(make_sample(lab, seed=i) for i, lab in enumerate("aabbb")))
    assert ds.class_counts == {"a": 2, "b": 3}
    assert sum(ds.class_counts.values()) == ds.n_samples


# -- normalization --------------------------------------------------------------

def test_normalize_walk_along_z_hand_computed():
    frames = np.zeros((2, N_JOINTS, 3))
    frames[1, :, 2] = 2.0
    out = normalize_sample(GaitSample("a", frames)).frames
    # centered: (0,0,-1) -> (0,0,1); heading z maps to +x
    assert np.allclose(out[0, 0], [-1.0, 0.0, 0.0], atol=1e-12)
    assert np.allclose(out[1, 0], [1.0, 0.0, 0.0], atol=1e-12)


def test_normalize_idempotent(walker):
    once = normalize_sample(walker)
    assert np.allclose(normalize_sample(once).frames, once.frames, atol=1e-9)


def test_normalize_removes_rotation_and_translation():
    s = make_sample(n_frames=6, seed=4)
    moved = s.frames @ vertical_rotation(np.pi / 2).T + np.array([5.0, 0.0, 3.0])
    a = normalize_sample(s).frames
    b = normalize_sample(s.with_frames(moved)).frames
    assert np.allclose(a, b, atol=1e-9)


@settings(max_examples=40, deadline=None)
@given(angle=st.floats(0, 2 * np.pi), tx=st.floats(-50, 50), ty=st.floats(-5, 5),
       tz=st.floats(-50, 50), seed=st.integers(0, 10_000))
def test_normalize_rigid_invariance_property(angle, tx, ty, tz, seed):
    s = make_sample(n_frames=5, seed=seed)
    moved = s.frames @ vertical_rotation(angle).T + np.array([tx, ty, tz])
    a = normalize_sample(s).frames
    b = normalize_sample(s.with_frames(moved)).frames
    assert np.allclose(a, b, atol=1e-9)


def test_normalize_preserves_distances(walker):
    out = normalize_sample(walker).frames
    for f in (0, walker.n_frames // 2):
        d0 = np.linalg.norm(walker.frames[f, 3] - walker.frames[f, 21])
        d1 = np.linalg.norm(out[f, 3] - out[f, 21])
        assert d0 == pytest.approx(d1, abs=1e-12)


def test_normalize_rejects_standing_still():
    frames = np.zeros((3, N_JOINTS, 3))
    frames[:, 0, 1] = [0.0, 0.5, 1.0]  # vertical motion only
    with pytest.raises(DegenerateWalkError):
        normalize_sample(GaitSample("a", frames))


# -- resampling and vectors ---------------------------------------------------------

def test_resample_identity_when_counts_match(walker):
    out = resample_cycle(walker, walker.n_frames)
    assert np.array_equal(out.frames, walker.frames)


def test_resample_midpoint():
    frames = np.zeros((2, N_JOINTS, 3))
    frames[1, 4, 0] = 4.0
    out = resample_cycle(GaitSample("a", frames), 3)
    assert out.frames[:, 4, 0].tolist() == [0.0, 2.0, 4.0]


def test_resample_matches_interp_oracle():
    t_old = np.linspace(0, 1, 5)
    frames = np.zeros((5, N_JOINTS, 3))
    frames[:, :, :] = np.sin(2 * np.pi * t_old)[:, None, None] * np.arange(1, 94).reshape(31, 3)
    out = resample_cycle(GaitSample("a", frames), 9).frames
    t_new = np.linspace(0, 1, 9)
    for j in range(N_JOINTS):
        for a in range(3):
            expected = np.interp(t_new, t_old, frames[:, j, a])
            assert np.allclose(out[:, j, a], expected, atol=1e-12, rtol=0)


@settings(max_examples=30, deadline=None)
@given(n=st.integers(2, 40), T=st.integers(2, 60))
def test_resample_keeps_endpoints(n, T):
    s = make_sample(n_frames=n, seed=n)
    out = resample_cycle(s, T).frames
    assert out.shape[0] == T
    assert np.array_equal(out[0], s.frames[0]) and np.array_equal(out[-1], s.frames[-1])


def test_resample_rejects_short_target(walker):
    with pytest.raises(ParameterError):
        resample_cycle(walker, 1)


def test_vectorize_lengths(walker):
    assert vectorize(walker, JointMask.full(), 32).shape == (2976,)
    root = vectorize(walker, JointMask((0,)), 2)
    assert np.array_equal(root, np.concatenate([walker.frames[0, 0], walker.frames[-1, 0]]))


@settings(max_examples=25, deadline=None)
@given(joints=st.sets(st.integers(0, 30), min_size=1), T=st.integers(2, 12))
def test_vectorize_restrict_equals_index_map(walker, joints, T):
    mask = JointMask(tuple(joints))
    full = vectorize(walker, JointMask.full(), T)
    idx = [(t * N_JOINTS + j) * 3 + a for t in range(T) for j in mask.included for a in range(3)]
    restricted = vectorize(walker, mask, T)
    assert restricted.shape == (3 * len(mask) * T,)
    assert np.array_equal(restricted, full[idx])


# -- synthetic data ---------------------------------------------------------------

def test_synth_deterministic():
    a = synthesize_dataset(3, 2, seed=11)
    b = synthesize_dataset(3, 2, seed=11)
    assert a == b
    assert a != synthesize_dataset(3, 2, seed=12)


def test_synth_counts():
    ds = synthesize_dataset(3, 4, seed=0)
    assert ds.n_classes == 3 and ds.n_samples == 12
    assert set(ds.class_counts.values()) == {4}


def test_synth_samples_are_normalized():
    for s in synthesize_dataset(2, 3, seed=5):
        assert np.allclose(normalize_sample(s).frames, s.frames, atol=1e-9)


def test_synth_between_identity_distance_exceeds_within():
    ds = synthesize_dataset(10, 10, seed=0)
    X = vectorize_all(ds)
    y = np.array(ds.labels)
    within, between = [], []
    for i in range(len(y)):
        for j in range(i + 1, len(y)):
            (within if y[i] == y[j] else between).append(np.linalg.norm(X[i] - X[j]))
    assert np.mean(between) > np.mean(within)


def test_synth_body_only_variation():
    ds = synthesize_dataset(4, 3, seed=2, params=SynthParams(gait_spread=0.0))
    assert ds.n_samples == 12
