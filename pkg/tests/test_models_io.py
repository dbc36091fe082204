import numpy as np
import pytest

from rslh import dataio
from rslh.boosting import BoostedModel, boost
from rslh.core import Hyperparams, RslhModel, encode, train


@pytest.fixture(scope="module")
def models(small_blobs):
    hp = Hyperparams(L=3, n_anchors=40, sigma=None)
    return train(small_blobs, hp, seed=1), boost(small_blobs, hp, T=2, seed=1)


def test_plain_model_roundtrip(tmp_path, models, small_blobs):
    model = models[0]
    dataio.save_model(model, tmp_path / "m.slhm")
    got = dataio.load_model(tmp_path / "m.slhm")
    assert isinstance(got, RslhModel)
    for name in ("W", "B", "H", "P", "R", "G"):
        np.testing.assert_array_equal(getattr(got, name), getattr(model, name))
    assert got.hyper == model.hyper
    assert got.kernel.sigma == model.kernel.sigma
    assert got.objective_trace == model.objective_trace
    np.testing.assert_array_equal(encode(got, small_blobs.features), encode(model, small_blobs.features))
    dataio.save_model(got, tmp_path / "again.slhm")
    assert (tmp_path / "m.slhm").read_bytes() == (tmp_path / "again.slhm").read_bytes()


def test_boosted_model_roundtrip(tmp_path, models, small_blobs):
    model = models[1]
    dataio.save_model(model, tmp_path / "b.slhm")
    _, flags = dataio.read_container(tmp_path / "b.slhm")
    assert flags & dataio.FLAG_BOOSTED
    got = dataio.load_model(tmp_path / "b.slhm")
    assert isinstance(got, BoostedModel)
    np.testing.assert_array_equal(got.selected, model.selected)
    np.testing.assert_array_equal(got.P, model.P)
    np.testing.assert_array_equal(got.encode(small_blobs.features), model.encode(small_blobs.features))


def test_identical_seeds_give_identical_files(tmp_path, small_blobs):
    hp = Hyperparams(L=3, n_anchors=40)
    dataio.save_model(train(small_blobs, hp, seed=9), tmp_path / "a.slhm")
    dataio.save_model(train(small_blobs, hp, seed=9), tmp_path / "b.slhm")
    assert (tmp_path / "a.slhm").read_bytes() == (tmp_path / "b.slhm").read_bytes()


def test_missing_entry_is_a_format_error(tmp_path):
    dataio.write_container(tmp_path / "m.slhm", {"P": np.ones((2, 2))})
    with pytest.raises(dataio.FormatError):
        dataio.load_model(tmp_path / "m.slhm")
