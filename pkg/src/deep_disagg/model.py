"""Domain types for multi-layer dictionary models of appliance power data.

Everything here is an immutable value object; the learning and disaggregation
algorithms live in the solver modules. Invariants that concern a single array
(finiteness, dimensionality) are enforced at construction. Invariants that
span a whole model (unit-norm atoms, layer chaining, declared widths) are
reported by :func:`validate`, so models loaded from disk can be inspected
without raising.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

UNIT_NORM_TOL = 1e-12


def _frozen_array(values, ndim: int, name: str) -> np.ndarray:
    arr = np.array(values, dtype=float)
    if arr.ndim != ndim:
        raise ValueError(f"{name} must be {ndim}-D, got {arr.ndim}-D")
    arr.setflags(write=False)
    return arr


def matrix_of(obj) -> np.ndarray:
    """Underlying 2-D array of a matrix-like domain object or a bare array."""
    for attr in ("data", "matrix"):
        inner = getattr(obj, attr, None)
        if isinstance(inner, np.ndarray):
            return inner
    return np.asarray(obj, dtype=float)


@dataclass(frozen=True)
class EnergySeries:
    """Power readings (watts) for one meter channel at increasing timestamps."""

    timestamps: np.ndarray
    values: np.ndarray
    appliance_id: str | None = None

    def __post_init__(self):
        object.__setattr__(self, "timestamps", _frozen_array(self.timestamps, 1, "timestamps"))
        object.__setattr__(self, "values", _frozen_array(self.values, 1, "values"))
        if self.timestamps.shape != self.values.shape:
            raise ValueError("timestamps and values must have the same length")
        if self.timestamps.size > 1 and not np.all(np.diff(self.timestamps) > 0):
            raise ValueError("timestamps must be strictly increasing")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("values must be finite")

    def __len__(self) -> int:
        return int(self.values.size)

    @property
    def period_seconds(self) -> float:
        """Sampling period; requires at least two samples."""
        if len(self) < 2:
            raise ValueError("period undefined for a series with fewer than 2 samples")
        return float(self.timestamps[1] - self.timestamps[0])


@dataclass(frozen=True)
class SignalMatrix:
    """Matrix whose columns are fixed-length windows of meter readings."""

    data: np.ndarray
    window_seconds: float

    def __post_init__(self):
        object.__setattr__(self, "data", _frozen_array(self.data, 2, "data"))
        if self.data.shape[0] < 1 or self.data.shape[1] < 1:
            raise ValueError("signal matrix must have at least one row and one column")
        if not np.all(np.isfinite(self.data)):
            raise ValueError("signal matrix entries must be finite")
        if self.window_seconds <= 0:
            raise ValueError("window_seconds must be positive")

    @property
    def window_length(self) -> int:
        return int(self.data.shape[0])

    @property
    def n_windows(self) -> int:
        return int(self.data.shape[1])


@dataclass(frozen=True)
class LayerDictionary:
    """One dictionary layer; columns are atoms.

    ``unit_columns`` declares that every atom has unit l2 norm. The claim is
    not enforced here so that loaded models can be checked by :func:`validate`.
    """

    matrix: np.ndarray
    unit_columns: bool = False

    def __post_init__(self):
        object.__setattr__(self, "matrix", _frozen_array(self.matrix, 2, "matrix"))

    @property
    def rows(self) -> int:
        return int(self.matrix.shape[0])

    @property
    def cols(self) -> int:
        return int(self.matrix.shape[1])


@dataclass(frozen=True)
class DeepDictionary:
    """Ordered cascade of dictionary layers for one appliance."""

    layers: tuple[LayerDictionary, ...]
    layer_widths: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "layers", tuple(self.layers))
        object.__setattr__(self, "layer_widths", tuple(int(w) for w in self.layer_widths))
        if not self.layers:
            raise ValueError("a deep dictionary needs at least one layer")

    @property
    def n_layers(self) -> int:
        return len(self.layers)

    @property
    def window_length(self) -> int:
        return self.layers[0].rows

    def chained_product(self) -> np.ndarray:
        return chained_product(self.layers)


def chained_product(layers) -> np.ndarray:
    """Left-to-right product of the layer matrices."""
    mats = [matrix_of(layer) for layer in layers]
    if not mats:
        raise ValueError("no layers to multiply")
    product = mats[0]
    for idx, mat in enumerate(mats[1:], start=2):
        if product.shape[1] != mat.shape[0]:
            raise ValueError(f"chain mismatch at layer {idx}")
        product = product @ mat
    return product


@dataclass(frozen=True)
class SparseCode:
    """Coefficient matrix pairing a dictionary with data."""

    matrix: np.ndarray
    nonneg: bool = False
    lam: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "matrix", _frozen_array(self.matrix, 2, "matrix"))
        if not np.all(np.isfinite(self.matrix)):
            raise ValueError("code entries must be finite")
        if self.nonneg and np.any(self.matrix < 0):
            raise ValueError("code declared non-negative has negative entries")


@dataclass(frozen=True)
class ApplianceModel:
    """An appliance identity, its learned dictionary cascade, and how it was trained.

    ``training_config`` must hold everything needed to reproduce the run
    (solver, l1 weight, coupling weights, iteration counts, seed). Treat it
    as read-only.
    """

    appliance_id: str
    dictionary: DeepDictionary
    training_config: dict = field(default_factory=dict)


@dataclass(frozen=True)
class DisaggregationResult:
    """Per-appliance estimates for one aggregate signal matrix."""

    per_appliance_estimate: dict[str, SignalMatrix]
    codes: dict[str, SparseCode]
    residual: float
    residual_matrix: SignalMatrix

    def __post_init__(self):
        if set(self.per_appliance_estimate) != set(self.codes):
            raise ValueError("estimate and code appliance sets differ")
        shape = self.residual_matrix.data.shape
        for appliance_id, estimate in self.per_appliance_estimate.items():
            if estimate.data.shape != shape:
                raise ValueError(f"estimate for {appliance_id} has shape {estimate.data.shape}, "
                                 f"expected {shape}")


def validate(model: ApplianceModel, expected_window_length: int | None = None) -> list[str]:
    """Collect invariant violations; an empty list means the model is well formed.

    Violations are returned as data rather than raised, so corrupted model
    files can be reported in full.
    """
    violations: list[str] = []
    if not model.appliance_id:
        violations.append("empty appliance_id")
    layers = model.dictionary.layers
    widths = model.dictionary.layer_widths
    if len(widths) != len(layers):
        violations.append(f"layer_widths has {len(widths)} entries for {len(layers)} layers")
    for idx, layer in enumerate(layers, start=1):
        mat = layer.matrix
        if not np.all(np.isfinite(mat)):
            violations.append(f"non-finite entries in layer {idx}")
            continue
        if idx <= len(widths) and widths[idx - 1] != mat.shape[1]:
            violations.append(f"layer width mismatch at layer {idx}")
        if layer.unit_columns:
            norms = np.linalg.norm(mat, axis=0)
            if np.any(norms == 0):
                violations.append(f"zero column in layer {idx}")
            elif np.any(np.abs(norms - 1.0) > UNIT_NORM_TOL):
                violations.append(f"non-unit column in layer {idx}")
    for idx in range(len(layers) - 1):
        if layers[idx].cols != layers[idx + 1].rows:
            violations.append(f"chain mismatch at layer {idx + 2}")
    if expected_window_length is not None and layers and layers[0].rows != expected_window_length:
        violations.append(f"first layer has {layers[0].rows} rows, "
                          f"expected window length {expected_window_length}")
    if not isinstance(model.training_config, dict) or \
            not {"solver", "seed"} <= set(model.training_config):
        violations.append("training_config missing solver/seed")
    return violations


def _plain(obj):
    """Recursively convert numpy scalars and arrays into plain Python values."""
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def model_to_document(model: ApplianceModel) -> dict:
    """JSON-ready document for a model; matrix values stored row-major."""
    return {
        "appliance_id": model.appliance_id,
        "layer_widths": [int(w) for w in model.dictionary.layer_widths],
        "layers": [
            {
                "rows": layer.rows,
                "cols": layer.cols,
                "unit_columns": bool(layer.unit_columns),
                "values": layer.matrix.reshape(-1).tolist(),
            }
            for layer in model.dictionary.layers
        ],
        "training_config": _plain(model.training_config),
    }


def model_from_document(doc: dict) -> ApplianceModel:
    layers = []
    for entry in doc["layers"]:
        rows, cols = int(entry["rows"]), int(entry["cols"])
        values = np.asarray(entry["values"], dtype=float)
        if values.size != rows * cols:
            raise ValueError(f"layer declares {rows}x{cols} but holds {values.size} values")
        layers.append(LayerDictionary(values.reshape(rows, cols),
                                      unit_columns=bool(entry.get("unit_columns", False))))
    dictionary = DeepDictionary(tuple(layers), tuple(doc["layer_widths"]))
    return ApplianceModel(appliance_id=str(doc["appliance_id"]),
                          dictionary=dictionary,
                          training_config=dict(doc.get("training_config", {})))


def model_to_json(model: ApplianceModel) -> str:
    # json encodes floats with their shortest round-tripping repr, so every
    # matrix entry survives save/load bit-exactly
    return json.dumps(model_to_document(model), indent=2) + "\n"


def save_model(model: ApplianceModel, path) -> None:
    Path(path).write_text(model_to_json(model), encoding="utf-8")


def load_model(path) -> ApplianceModel:
    return model_from_document(json.loads(Path(path).read_text(encoding="utf-8")))
