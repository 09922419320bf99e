import json
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from secinfer.errors import DimMismatch, ModelParseError
from secinfer.nn_model import (ModelParams, canonical_model, deep_model, deviation, infer_fhe_approx,
                               infer_gc_fixed, infer_plain, load_inputs, load_model, model_from_dict,
                               model_to_dict, save_model, sigmoid_poly, stress_inputs)

X0 = [1.0, -1.0, 0.5]
coords = st.floats(-3, 3, allow_nan=False)
vec3 = st.tuples(coords, coords, coords)


def test_golden_canonical_outputs():
    """Frozen values, checked by exact rational arithmetic and a hand trace of the integer pipeline."""
    m = canonical_model()
    # hidden pre-activations: -0.759, 0.1135, -1.325, 0.2155; z = -0.2918435
    assert infer_plain(m, X0) == pytest.approx(0.4275526077670741560, abs=1e-15)
    assert infer_fhe_approx(m, X0) == pytest.approx(0.594115776397528, abs=1e-14)
    assert infer_gc_fixed(m, X0) == 0.443


def test_plain_by_formula():
    m = canonical_model()
    h = np.maximum(m.W1 @ np.array(X0) + m.b1, 0)
    z = float(m.W2[0] @ h + m.b2)
    assert infer_plain(m, X0) == pytest.approx(1 / (1 + math.exp(-z)), rel=1e-14)


@given(vec3)
def test_gc_oracle_tracks_plain_pipeline(x):
    m = canonical_model()
    # relu kept exact and only the sigmoid approximated: gap bounded by rounding + the polynomial error
    z = float(m.W2[0] @ np.maximum(m.W1 @ np.array(x) + m.b1, 0) + m.b2)
    assert abs(infer_gc_fixed(m, x) - sigmoid_poly(z)) < 0.02


def test_zero_model():
    m = ModelParams.zeros(4)
    assert infer_plain(m, X0) == 0.5 and infer_fhe_approx(m, X0) == 0.5 and infer_gc_fixed(m, X0) == 0.5


def test_model_file_roundtrip(tmp_path):
    m = ModelParams.random(5, seed=3, decimals=None)
    p = tmp_path / "m.json"
    save_model(m, p)
    assert load_model(p) == m


def test_committed_model_is_seed_seven():
    assert canonical_model() == ModelParams.random(4, seed=7)


@pytest.mark.parametrize("obj,err", [
    ([], ModelParseError),
    ({"W1": [[1, 2, 3]], "b1": [0], "W2": [[1]]}, ModelParseError),
    ({"W1": [[1, 2]], "b1": [0], "W2": [[1]], "b2": 0}, DimMismatch),
    ({"W1": [[1, 2, 3]], "b1": [0, 1], "W2": [[1]], "b2": 0}, DimMismatch),
    ({"W1": [[1, 2, 3]], "b1": [0], "W2": [[1]], "b2": [0, 1]}, DimMismatch),
    ({"W1": [["a", 2, 3]], "b1": [0], "W2": [[1]], "b2": 0}, ModelParseError),
    ({"W1": [[float("nan"), 2, 3]], "b1": [0], "W2": [[1]], "b2": 0}, ModelParseError),
])
def test_bad_models(obj, err):
    with pytest.raises(err):
        model_from_dict(obj)


def test_model_dict_fields():
    d = model_to_dict(canonical_model())
    assert d["d"] == 3 and d["h"] == 4 and len(d["W2"][0]) == 4


def test_inputs_file(tmp_path):
    p = tmp_path / "x.json"
    p.write_text(json.dumps([[1, 2, 3], [0, 0, 0]]))
    assert load_inputs(p).shape == (2, 3)
    p.write_text(json.dumps([[1, 2]]))
    with pytest.raises(DimMismatch):
        load_inputs(p)
    p.write_text("not json")
    with pytest.raises(ModelParseError):
        load_inputs(p)


def test_input_dimension_checked():
    with pytest.raises(DimMismatch):
        infer_plain(canonical_model(), [1, 2])


def test_deviation():
    assert deviation(1.1, 1.0) == pytest.approx(10.0)
    assert not deviation(1.1, 1.0).absolute
    d = deviation(0.25, 0.0)
    assert d == 0.25 and d.absolute


def test_stress_set_and_deep_models():
    s = stress_inputs()
    assert s.shape == (10, 3)
    layers = deep_model(3, h=4, seed=0)
    assert [l.W.shape for l in layers] == [(4, 3), (4, 4), (1, 4)]
    assert [l.activation for l in layers] == ["relu", "relu", "sigmoid"]
    # the two-layer synthetic model evaluates like a ModelParams of the same weights
    two = deep_model(2, h=4, seed=1)
    m = ModelParams(two[0].W, two[0].b, two[1].W, float(two[1].b[0]))
    assert infer_plain(two, X0) == infer_plain(m, X0)
    assert infer_gc_fixed(two, X0) == infer_gc_fixed(m, X0)
