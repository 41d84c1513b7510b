import numpy as np
import pytest

from sketchmatch.datamodel import PairedSet
from sketchmatch.exceptions import SamplingError
from sketchmatch.losses import GENUINE, IMPOSTOR
from sketchmatch.sampling import (DIFF_TAG, SAME_FALLBACK_TAG, SAME_TAG, ImpostorSampler,
                                  check_batch, sample_pairs)


def _set(attrs, reps=1):
    attrs = np.repeat(np.asarray(attrs, dtype=np.uint8), reps, axis=0)
    n, t = attrs.shape
    ids = np.repeat(np.arange(len(attrs) // reps), reps)
    return PairedSet(np.zeros((n, 4, 4, 3)), np.zeros((n, 4, 4, 1)), ids, attrs, attrs.copy())


def test_counts_and_labels(paired):
    batch = sample_pairs(paired, 8, seed=0)
    assert len(batch) == 40
    assert (batch.labels == GENUINE).sum() == 8 and (batch.labels == IMPOSTOR).sum() == 32
    genuine = batch.labels == GENUINE
    assert np.all(batch.photo_identities[genuine] == batch.sketch_identities[genuine])
    assert np.all(batch.photo_identities[~genuine] != batch.sketch_identities[~genuine])
    assert check_batch(batch, ImpostorSampler(paired)) == []


def test_deterministic(paired):
    a, b = sample_pairs(paired, 5, 3), sample_pairs(paired, 5, 3)
    np.testing.assert_array_equal(a.sketch_keys, b.sketch_keys)
    assert a.provenance == b.provenance


def test_unique_vectors_fall_back_to_nearest():
    attrs = np.array([[0, 0, 0, 0], [0, 0, 0, 1], [0, 0, 1, 1], [1, 1, 1, 1]])
    data = _set(attrs)
    sampler = ImpostorSampler(data)
    batch = sample_pairs(data, 4, 1, sampler)
    tags = np.array(batch.provenance).reshape(4, 5)
    assert np.all(tags[:, 1:3] == SAME_FALLBACK_TAG) and np.all(tags[:, 3:] == DIFF_TAG)
    # identity 0's nearest vector (distance 1) belongs to identity 1 only
    pool, _ = sampler.same[0]
    assert pool.tolist() == [1]
    assert check_batch(batch, sampler) == []


def test_exact_matches_preferred():
    attrs = np.array([[1, 0], [1, 0], [0, 1], [0, 1]])
    data = _set(attrs, reps=2)
    sampler = ImpostorSampler(data)
    for seed in range(20):
        batch = sample_pairs(data, 3, seed, sampler)
        for g in range(0, len(batch), 5):
            pid = batch.photo_identities[g]
            assert batch.provenance[g + 1:g + 3] == [SAME_TAG, SAME_TAG]
            same = batch.sketch_identities[g + 1:g + 3]
            assert np.all(same == {0: 1, 1: 0, 2: 3, 3: 2}[int(pid)])


def test_single_identity():
    with pytest.raises(SamplingError):
        ImpostorSampler(_set([[1, 0]], reps=3))


def test_genuine_count_range(paired):
    with pytest.raises(SamplingError):
        sample_pairs(paired, 0, 0)
    with pytest.raises(SamplingError):
        sample_pairs(paired, len(paired) + 1, 0)


def test_check_batch_detects_tampering(paired):
    sampler = ImpostorSampler(paired)
    batch = sample_pairs(paired, 2, 0, sampler)
    batch.labels[1] = GENUINE
    assert check_batch(batch, sampler)
