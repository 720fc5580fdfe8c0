import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from fedaq.datasets import Dataset, class_means, idx_load, iid_partition, synth_generate, write_idx
from fedaq.errors import FormatError, InvalidArgument

IMAGES_2x2x2 = bytes.fromhex("00000803" "00000002" "00000002" "00000002") + bytes([0, 255, 51, 102, 1, 2, 3, 4])
LABELS_07 = bytes.fromhex("00000801" "00000002") + bytes([0, 7])


@pytest.fixture
def idx_files(tmp_path):
    img, lab = tmp_path / "img.idx", tmp_path / "lab.idx"
    img.write_bytes(IMAGES_2x2x2)
    lab.write_bytes(LABELS_07)
    return img, lab


def test_idx_examples(idx_files):
    ds = idx_load(*idx_files)
    assert ds.features.shape == (2, 4)
    assert ds.features[0].tolist() == [0.0, 1.0, 0.2, 0.4]
    assert ds.labels.tolist() == [0, 7]


def test_idx_roundtrip(tmp_path, rng):
    imgs = rng.integers(0, 256, (5, 3, 4), dtype=np.uint8)
    labs = rng.integers(0, 10, 5, dtype=np.uint8)
    write_idx(tmp_path / "i", imgs)
    write_idx(tmp_path / "l", labs)
    assert (tmp_path / "i").read_bytes()[:4] == bytes.fromhex("00000803")
    ds = idx_load(tmp_path / "i", tmp_path / "l")
    np.testing.assert_array_equal(ds.features * 255, imgs.reshape(5, 12))
    np.testing.assert_array_equal(ds.labels, labs)


def test_idx_count_mismatch(tmp_path, idx_files):
    lab3 = tmp_path / "lab3.idx"
    lab3.write_bytes(bytes.fromhex("00000801" "00000003") + bytes([0, 1, 2]))
    with pytest.raises(FormatError, match="offset"):
        idx_load(idx_files[0], lab3)


@pytest.mark.parametrize("data, offset", [
    (b"\x00\x00\x08\x01" + IMAGES_2x2x2[4:], 0),  # labels magic in image file
    (IMAGES_2x2x2[:-1], len(IMAGES_2x2x2) - 1),  # truncated payload
    (IMAGES_2x2x2[:10], 10),  # truncated header
    (IMAGES_2x2x2 + b"\x00", 24),  # trailing byte
])
def test_idx_malformed(tmp_path, idx_files, data, offset):
    bad = tmp_path / "bad.idx"
    bad.write_bytes(data)
    with pytest.raises(FormatError) as exc:
        idx_load(bad, idx_files[1])
    assert exc.value.offset == offset


def test_dataset_validation():
    with pytest.raises(InvalidArgument):
        Dataset(np.zeros((2, 2)), [0])
    with pytest.raises(InvalidArgument):
        Dataset(np.array([[np.nan]]), [0])
    with pytest.raises(InvalidArgument):
        Dataset(np.zeros((1, 2)), [-1])
    with pytest.raises(InvalidArgument):
        Dataset(np.zeros((0, 2)), [])


def test_synth_determinism_and_balance():
    a = synth_generate(101, 5, 3, 0.5, seed=9)
    b = synth_generate(101, 5, 3, 0.5, seed=9)
    assert a.features.tobytes() == b.features.tobytes()
    assert a.labels.tobytes() == b.labels.tobytes()
    assert np.bincount(a.labels).tolist() == [34, 34, 33]
    assert synth_generate(101, 5, 3, 0.5, seed=10).features.tobytes() != a.features.tobytes()
    with pytest.raises(InvalidArgument):
        synth_generate(2, 5, 3, 0.5, seed=1)


@pytest.mark.parametrize("F, C", [(10, 2), (2, 5), (3, 3)])
def test_class_means_on_radius_two(F, C):
    m = class_means(F, C)
    assert m.shape == (C, F)
    np.testing.assert_allclose(np.linalg.norm(m, axis=1), 2.0, rtol=1e-12)
    assert len({tuple(r) for r in m}) == C


def test_zero_spread_samples_are_means():
    ds = synth_generate(20, 4, 2, 0.0, seed=1)
    np.testing.assert_array_equal(ds.features, class_means(4, 2)[ds.labels])


def test_partition_examples():
    ds = synth_generate(100, 2, 2, 1.0, seed=0)
    part = iid_partition(ds, 4, seed=1)
    assert part.sizes == [25] * 4
    assert part.p.tolist() == [0.25] * 4
    small = ds.subset(range(10))
    part = iid_partition(small, 3, seed=1)
    assert part.sizes == [4, 3, 3]
    np.testing.assert_allclose(part.p, [0.4, 0.3, 0.3], rtol=1e-15)
    again = iid_partition(small, 3, seed=1)
    assert all(np.array_equal(x, y) for x, y in zip(part.client_indices, again.client_indices))
    with pytest.raises(InvalidArgument):
        iid_partition(small, 11, seed=0)


@given(st.integers(1, 300), st.integers(1, 40), st.integers(0, 2**32))
def test_partition_is_bijection(N, n, seed):
    n = min(n, N)
    ds = Dataset(np.zeros((N, 1)), np.zeros(N, dtype=int))
    part = iid_partition(ds, n, seed)
    assert np.array_equal(np.sort(np.concatenate(part.client_indices)), np.arange(N))
    assert max(part.sizes) - min(part.sizes) <= 1
    assert abs(part.p.sum() - 1.0) <= 1e-15
