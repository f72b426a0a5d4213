import numpy as np
import pytest

from prefcf.classic import AspectParams, ClusterParams
from prefcf.decoupled import BaselineParams, DecoupledParams
from prefcf.errors import ParseError
from prefcf.ordering import OrderingParams
from prefcf.persist import load_model, save_model


def _assert_tables_equal(a, b):
    assert type(a) is type(b)
    for name, table in vars(a).items():
        assert np.array_equal(table, vars(b)[name]), name


@pytest.mark.parametrize("factory", [
    lambda rng: DecoupledParams.random(rng, 7, 5, 4, 3, 2, 2, 3),
    lambda rng: BaselineParams.random(rng, 7, 5, 4, 3, 2),
    lambda rng: OrderingParams.random(rng, 7, 5, n_user_classes=2, n_item_classes=3),
    lambda rng: AspectParams.random(rng, 7, 5, 4, n_classes=3),
    lambda rng: ClusterParams.random(rng, 5, 4, n_classes=3),
])
def test_round_trip_is_bit_faithful(tmp_path, factory):
    params = factory(np.random.default_rng(0))
    path = tmp_path / "model.txt"
    save_model(params, path)
    _assert_tables_equal(load_model(path), params)


def test_document_is_self_describing(tmp_path):
    params = DecoupledParams.random(np.random.default_rng(1), 3, 4, 5, 2, 2, 2, 2)
    path = tmp_path / "model.txt"
    save_model(params, path)
    text = path.read_text()
    for line in ("kind dm", "users 3", "items 4", "scale 5",
                 "item_classes 2", "pref_classes 2", "rating_classes 2",
                 "pref_levels 2"):
        assert line in text


def test_rejects_foreign_file(tmp_path):
    path = tmp_path / "junk.txt"
    path.write_text("not a model\n")
    with pytest.raises(ParseError):
        load_model(path)


def test_rejects_unpersistable_object(tmp_path):
    with pytest.raises(Exception):
        save_model({"not": "params"}, tmp_path / "x.txt")
