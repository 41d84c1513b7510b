import numpy as np
import pytest

from sketchmatch.datamodel import AttributeVocabulary, load_manifest
from sketchmatch.exceptions import DomainError
from sketchmatch.synth import render_face, synth_dataset, synth_identities


def test_counts_and_valid_manifest(tmp_path):
    m = synth_dataset(40, 1, tmp_path, size=(24, 24))
    loaded = load_manifest(tmp_path / "manifest.csv")
    assert m.n_identities == 40 and loaded.n_identities == 40
    assert len(loaded.photo_entries()) == 40 and len(loaded.sketch_entries()) == 40


def test_too_few_identities(tmp_path):
    with pytest.raises(DomainError):
        synth_dataset(1, 0, tmp_path)


def test_deterministic_files(tmp_path):
    synth_dataset(3, 9, tmp_path / "a", size=(20, 20))
    synth_dataset(3, 9, tmp_path / "b", size=(20, 20))
    for sub in ("manifest.csv", "photos/00002.png", "sketches/00001.png"):
        assert (tmp_path / "a" / sub).read_bytes() == (tmp_path / "b" / sub).read_bytes()


def test_eyeglasses_bit_controls_overlay():
    vocab = AttributeVocabulary()
    g = vocab.index("eyeglasses")
    for latent, att in synth_identities(6, 4, vocab):
        on, off = att.copy(), att.copy()
        on[g], off[g] = 1, 0
        assert not np.array_equal(render_face(latent, on, vocab, (48, 48)),
                                  render_face(latent, off, vocab, (48, 48)))
        np.testing.assert_array_equal(render_face(latent, off, vocab, (48, 48)),
                                      render_face(latent, off.copy(), vocab, (48, 48)))


def test_attribute_structure():
    vocab = AttributeVocabulary()
    hair = [vocab.index(n) for n in ("bald", "black_hair", "blond_hair", "brown_hair", "gray_hair")]
    eth = [vocab.index(n) for n in ("asian", "indian", "white", "black")]
    for _, att in synth_identities(200, 0, vocab):
        assert att[hair].sum() == 1 and att[eth].sum() == 1
        assert set(np.unique(att)) <= {0, 1}
