import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from latent_steer.dgm import (
    DimensionMismatch, EmptyDataset, Fingerprint, GraphObject, SyntheticDgm, UnknownProperty,
    factor_labels, property_value, read_dataset, write_dataset,
)
from latent_steer.disent import mig


def test_sample_prior_empty_and_deterministic():
    dgm = SyntheticDgm(4, 4)
    assert dgm.sample_prior(0, seed=1).shape == (0, 4)
    a, b = dgm.sample_prior(7, seed=3), dgm.sample_prior(7, seed=3)
    assert a.tobytes() == b.tobytes()
    assert not np.array_equal(a, dgm.sample_prior(7, seed=4))


def test_sample_prior_moments():
    z = SyntheticDgm(4, 4).sample_prior(10000, seed=0)
    assert np.all(np.abs(z.mean(axis=0)) < 0.05)
    var = z.var(axis=0)
    assert np.all((var > 0.9) & (var < 1.1))


def test_identity_decode_at_origin():
    dgm = SyntheticDgm(5, 5, scale=1.0, offset=2.0, rotate=False)
    assert dgm.decode(np.zeros(5)).motif_counts == (2,) * 5


def test_negative_pre_activation_clamps_to_zero():
    dgm = SyntheticDgm(3, 3, scale=1.0, offset=2.0, rotate=False)
    counts = dgm.decode([-2.5, 0.0, 10.0]).motif_counts
    assert counts == (0, 2, dgm.t_max + 2)


def test_dimension_mismatch():
    dgm = SyntheticDgm(4, 2)
    with pytest.raises(DimensionMismatch):
        dgm.decode(np.zeros(3))
    with pytest.raises(DimensionMismatch):
        dgm.counts(np.zeros((2, 5)))


def _straight_line_counts(q, a, b, t_max, z):
    out = []
    for j in range(len(q)):
        s = 0.0
        for k in range(len(z)):
            s += q[j][k] * z[k]
        c = math.floor(a[j] * s + b[j])
        out.append(min(max(c, 0), t_max + 2))
    return tuple(out)


@pytest.mark.parametrize("seed", range(20))
def test_decode_matches_straight_line_oracle(seed):
    rng = np.random.default_rng(seed)
    k = int(rng.integers(1, 9))
    f = int(rng.integers(1, k + 1))
    a = rng.uniform(0.2, 3.0, f)
    b = rng.uniform(-1.0, 4.0, f)
    dgm = SyntheticDgm(k, f, t_max=int(rng.integers(1, 6)), scale=a, offset=b, seed=seed)
    for z in rng.standard_normal((10, k)) * 2:
        expected = _straight_line_counts(dgm.mixing.tolist(), a, b, dgm.t_max, z.tolist())
        assert dgm.decode(z).motif_counts == expected


@pytest.mark.parametrize("seed", range(10))
def test_mixing_rows_orthonormal(seed):
    q = SyntheticDgm(8, 5, seed=seed).mixing
    gram = q @ q.T
    assert np.all(np.abs(gram - np.eye(5)) < 1e-9)


def test_non_orthonormal_mixing_rejected():
    with pytest.raises(ValueError):
        SyntheticDgm(2, 2, mixing=np.array([[1.0, 0.0], [1.0, 1.0]]))


@settings(max_examples=100, deadline=None)
@given(arrays(np.float64, (6,), elements=st.floats(-6, 6)))
def test_fingerprint_prefix_property(z):
    dgm = SyntheticDgm(6, 6, t_max=4, seed=1)
    obj = dgm.decode(z)
    on = set(obj.fingerprint.on_bits())
    for j in range(6):
        for t in range(2, 5):
            if j * 4 + t - 1 in on:
                assert j * 4 + t - 2 in on
        for t in range(1, 5):
            assert (j * 4 + t - 1 in on) == (obj.motif_counts[j] >= t)


def test_fingerprint_words_match_objects():
    dgm = SyntheticDgm(8, 8, t_max=9, seed=2)  # 72 bits spans two words
    z = dgm.sample_prior(50, seed=0) * 3
    objs = dgm.decode_batch(z)
    words = dgm.fingerprint_words(dgm.counts(z))
    for w, o in zip(words, objs):
        assert w.tolist() == o.fingerprint.words().tolist()


def test_fingerprint_hex_round_trip():
    fp = Fingerprint.from_bits([0, 3, 65], 70)
    assert Fingerprint.from_hex(fp.to_hex(), 70) == fp
    assert fp.popcount() == 3
    with pytest.raises(ValueError):
        Fingerprint.from_bits([70], 70)


def test_factor_labels_examples():
    assert factor_labels(np.array([[0], [0], [0], [0]])).ravel().tolist() == [0, 0, 0, 0]
    assert factor_labels(np.array([[1], [2], [3]])).ravel().tolist() == [0, 0, 1]
    obj = GraphObject((3, 1), Fingerprint.from_counts((3, 1), 4))
    assert factor_labels([obj, obj]).tolist() == [[0, 0], [0, 0]]
    with pytest.raises(EmptyDataset):
        factor_labels([obj])


def test_property_value_examples(rng):
    obj = GraphObject((1, 2, 3), Fingerprint.from_counts((1, 2, 3), 4))
    assert property_value(obj, "total_count") == 6
    assert property_value(obj, "weighted_count", [0, 0, 1]) == 3
    with pytest.raises(UnknownProperty):
        property_value(obj, "logp")
    with pytest.raises(UnknownProperty):
        property_value(obj, "weighted_count", [1.0])
    for _ in range(20):
        c = rng.integers(0, 7, 5)
        w = rng.standard_normal(5)
        o = GraphObject(tuple(int(x) for x in c), Fingerprint.from_counts(c, 6))
        assert property_value(o, "weighted_count", w) == pytest.approx(sum(wi * ci for wi, ci in zip(w, c)))


def test_dataset_round_trip(tmp_path):
    dgm = SyntheticDgm(4, 3, seed=5)
    z = dgm.sample_prior(12, seed=1)
    objs = dgm.decode_batch(z)
    path = tmp_path / "d.jsonl"
    write_dataset(path, z, objs)
    z2, objs2 = read_dataset(path, dgm.t_max)
    assert z2.tobytes() == z.tobytes()
    assert objs2 == objs


def test_to_dict_round_trip():
    dgm = SyntheticDgm(5, 3, seed=9, scale=[1.0, 2.0, 0.5])
    back = SyntheticDgm.from_dict(dgm.to_dict())
    z = dgm.sample_prior(20, seed=0)
    assert np.array_equal(back.counts(z), dgm.counts(z))


@pytest.mark.parametrize("seed", range(3))
def test_rotation_entangles_latents(seed):
    aligned = SyntheticDgm(8, 8, seed=seed, rotate=False)
    rotated = SyntheticDgm(8, 8, seed=seed, rotate=True)
    z = aligned.sample_prior(2000, seed=seed)
    m_aligned = mig(z, factor_labels(aligned.counts(z)))
    m_rotated = mig(z, factor_labels(rotated.counts(z)))
    assert m_rotated < m_aligned
