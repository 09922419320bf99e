"""The two-layer network and its reference oracles.

``y = sigmoid(W2 . relu(W1 x + b1) + b2)`` evaluated three ways:

* ``infer_plain``: exact activations in double precision;
* ``infer_fhe_approx``: relu -> z^2 and sigmoid -> 0.5 + 0.197 z - 0.004 z^2,
  the arithmetic the CKKS pipeline approximates;
* ``infer_gc_fixed``: the integer pipeline the garbled circuit computes,
  bit for bit.

Deeper stacks (used by the layer sweep) are plain lists of :class:`Layer`.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import numpy as np

from .errors import DimMismatch, ModelParseError
from .gc.fixedpoint import (FixedPointSpec, fixed_decode, fixed_encode, fx_add, fx_mul_scaled, fx_relu,
                            fx_sigmoid)

INPUT_DIM = 3
SIGMOID_POLY = (0.5, 0.197, -0.004)


@dataclass(frozen=True)
class ActivationSpec:
    relu_mode: str  # "exact" | "square"
    sigmoid_mode: str  # "exact" | "poly2"


MODES = {
    "plain": ActivationSpec("exact", "exact"),
    "fhe": ActivationSpec("square", "poly2"),
    "gc": ActivationSpec("exact", "poly2"),
}


@dataclass(frozen=True)
class Layer:
    W: np.ndarray  # (rows, cols)
    b: np.ndarray  # (rows,)
    activation: str  # "relu" | "sigmoid" | "none"


@dataclass(frozen=True, eq=False)
class ModelParams:
    W1: np.ndarray
    b1: np.ndarray
    W2: np.ndarray
    b2: float

    def __post_init__(self):
        W1 = np.asarray(self.W1, dtype=np.float64)
        b1 = np.asarray(self.b1, dtype=np.float64).reshape(-1)
        W2 = np.asarray(self.W2, dtype=np.float64)
        if W2.ndim == 1:
            W2 = W2[None, :]
        object.__setattr__(self, "W1", W1)
        object.__setattr__(self, "b1", b1)
        object.__setattr__(self, "W2", W2)
        object.__setattr__(self, "b2", float(self.b2))
        if W1.ndim != 2 or W1.shape[1] != INPUT_DIM:
            raise DimMismatch(f"W1 must be h x {INPUT_DIM}, got shape {W1.shape}")
        h = W1.shape[0]
        if h < 1 or b1.shape != (h,) or W2.shape != (1, h):
            raise DimMismatch(f"inconsistent shapes W1 {W1.shape}, b1 {b1.shape}, W2 {W2.shape}")
        if not all(np.all(np.isfinite(a)) for a in (W1, b1, W2)) or not math.isfinite(self.b2):
            raise ModelParseError("model parameters must be finite")

    @property
    def d(self) -> int:
        return self.W1.shape[1]

    @property
    def h(self) -> int:
        return self.W1.shape[0]

    def layers(self) -> list[Layer]:
        return [Layer(self.W1, self.b1, "relu"), Layer(self.W2, np.array([self.b2]), "sigmoid")]

    def __eq__(self, other):
        if not isinstance(other, ModelParams):
            return NotImplemented
        return (np.array_equal(self.W1, other.W1) and np.array_equal(self.b1, other.b1)
                and np.array_equal(self.W2, other.W2) and self.b2 == other.b2)

    @classmethod
    def zeros(cls, h: int = 4) -> "ModelParams":
        return cls(np.zeros((h, INPUT_DIM)), np.zeros(h), np.zeros((1, h)), 0.0)

    @classmethod
    def random(cls, h: int = 4, seed: int = 0, decimals: int | None = 3) -> "ModelParams":
        """Uniform weights in [-1, 1]; rounded so they are exact at scale 1000."""
        rng = np.random.default_rng(seed)
        vals = [rng.uniform(-1, 1, size=s) for s in ((h, INPUT_DIM), (h,), (1, h), (1,))]
        if decimals is not None:
            vals = [np.round(v, decimals) for v in vals]
        return cls(vals[0], vals[1], vals[2], float(vals[3][0]))


# -- persistence --------------------------------------------------------------

def model_to_dict(model: ModelParams) -> dict:
    return {"d": model.d, "h": model.h, "W1": model.W1.tolist(), "b1": model.b1.tolist(),
            "W2": model.W2.tolist(), "b2": model.b2}


def model_from_dict(obj) -> ModelParams:
    if not isinstance(obj, dict):
        raise ModelParseError("model file must hold a JSON object")
    missing = [k for k in ("W1", "b1", "W2", "b2") if k not in obj]
    if missing:
        raise ModelParseError(f"model file lacks field(s): {', '.join(missing)}")
    try:
        W1 = np.array(obj["W1"], dtype=np.float64)
        b1 = np.array(obj["b1"], dtype=np.float64)
        W2 = np.array(obj["W2"], dtype=np.float64)
        b2 = np.array(obj["b2"], dtype=np.float64).reshape(-1)
    except (TypeError, ValueError) as exc:
        raise ModelParseError(f"non-numeric or ragged model entry: {exc}") from exc
    if b2.size != 1:
        raise DimMismatch(f"b2 must be a single number, got {b2.size} values")
    d, h = obj.get("d", INPUT_DIM), obj.get("h", W1.shape[0] if W1.ndim == 2 else None)
    if d != INPUT_DIM:
        raise DimMismatch(f"input dimension must be {INPUT_DIM}, file says d={d}")
    if W1.ndim != 2 or W1.shape != (h, INPUT_DIM):
        raise DimMismatch(f"W1 must be {h} x {INPUT_DIM}, got shape {W1.shape}")
    return ModelParams(W1, b1, W2, float(b2[0]))


def save_model(model: ModelParams, path) -> None:
    # json writes doubles with repr, which round-trips exactly
    Path(path).write_text(json.dumps(model_to_dict(model), indent=2) + "\n")


def load_model(path) -> ModelParams:
    try:
        obj = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ModelParseError(f"{path}: {exc}") from exc
    return model_from_dict(obj)


def load_inputs(path) -> np.ndarray:
    """JSON array of 3-element vectors -> (n, 3) array."""
    try:
        arr = np.array(json.loads(Path(path).read_text()), dtype=np.float64)
    except (json.JSONDecodeError, TypeError, ValueError) as exc:
        raise ModelParseError(f"{path}: {exc}") from exc
    if arr.ndim == 1 and arr.size == INPUT_DIM:
        arr = arr[None]
    if arr.ndim != 2 or arr.shape[1] != INPUT_DIM:
        raise DimMismatch(f"inputs must be vectors of length {INPUT_DIM}, got shape {arr.shape}")
    return arr


def _data_text(name: str) -> str:
    return resources.files("secinfer").joinpath("data", name).read_text()


def canonical_model() -> ModelParams:
    """The committed h=4 model every golden value refers to."""
    return model_from_dict(json.loads(_data_text("canonical_model.json")))


def stress_inputs() -> np.ndarray:
    return np.array(json.loads(_data_text("stress_inputs.json")), dtype=np.float64)


def deep_model(n_layers: int, h: int = 4, seed: int = 0) -> list[Layer]:
    """Synthetic stack 3 -> h -> ... -> h -> 1 with ``n_layers`` weight layers."""
    if n_layers < 1:
        raise ValueError("n_layers must be >= 1")
    rng = np.random.default_rng(seed)
    dims = [INPUT_DIM] + [h] * (n_layers - 1) + [1]
    layers = []
    for i in range(n_layers):
        W = np.round(rng.uniform(-1, 1, size=(dims[i + 1], dims[i])), 3)
        b = np.round(rng.uniform(-1, 1, size=dims[i + 1]), 3)
        layers.append(Layer(W, b, "sigmoid" if i == n_layers - 1 else "relu"))
    return layers


# -- oracles -------------------------------------------------------------------

def sigmoid(z):
    return 1.0 / (1.0 + np.exp(-np.asarray(z, dtype=np.float64)))


def sigmoid_poly(z):
    z = np.asarray(z, dtype=np.float64)
    c0, c1, c2 = SIGMOID_POLY
    return c0 + c1 * z + c2 * z * z


def _as_layers(model) -> list[Layer]:
    return model.layers() if isinstance(model, ModelParams) else list(model)


def _check_x(x) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64).reshape(-1)
    if x.shape != (INPUT_DIM,):
        raise DimMismatch(f"input must have {INPUT_DIM} entries, got {x.size}")
    return x


def _infer_float(model, x, act: ActivationSpec) -> float:
    v = _check_x(x)
    for layer in _as_layers(model):
        z = layer.W @ v + layer.b
        if layer.activation == "relu":
            v = np.maximum(z, 0.0) if act.relu_mode == "exact" else z * z
        elif layer.activation == "sigmoid":
            v = sigmoid(z) if act.sigmoid_mode == "exact" else sigmoid_poly(z)
        else:
            v = z
    return float(v[0])


def infer_plain(model, x) -> float:
    return _infer_float(model, x, MODES["plain"])


def infer_fhe_approx(model, x) -> float:
    return _infer_float(model, x, MODES["fhe"])


def encode_layers(model, spec: FixedPointSpec = FixedPointSpec()):
    """Fixed-point integers for every weight and bias, layer by layer."""
    return [([[fixed_encode(float(w), spec) for w in row] for row in layer.W],
             [fixed_encode(float(b), spec) for b in layer.b], layer.activation)
            for layer in _as_layers(model)]


def infer_gc_fixed_int(model, x, spec: FixedPointSpec = FixedPointSpec()) -> int:
    """Integer output of the garbled pipeline (before decoding)."""
    v = [fixed_encode(float(xi), spec) for xi in _check_x(x)]
    for W, b, act in encode_layers(model, spec):
        z = []
        for row, bias in zip(W, b):
            acc = None
            for w, vi in zip(row, v):
                t = fx_mul_scaled(w, vi, spec)
                acc = t if acc is None else fx_add(acc, t, spec)
            z.append(fx_add(acc, bias, spec))
        if act == "relu":
            v = [fx_relu(zi, spec) for zi in z]
        elif act == "sigmoid":
            v = [fx_sigmoid(zi, spec) for zi in z]
        else:
            v = z
    return v[0]


def infer_gc_fixed(model, x, spec: FixedPointSpec = FixedPointSpec()) -> float:
    return fixed_decode(infer_gc_fixed_int(model, x, spec), spec)


class Deviation(float):
    """Percentage deviation; ``absolute`` flags the y_plain == 0 fallback."""
    absolute: bool = False


def deviation(y_mode: float, y_plain: float) -> Deviation:
    """100 |y_mode - y_plain| / |y_plain|, or the absolute difference (flagged) when y_plain is 0."""
    if y_plain == 0:
        d = Deviation(abs(y_mode - y_plain))
        d.absolute = True
        return d
    return Deviation(100.0 * abs(y_mode - y_plain) / abs(y_plain))
