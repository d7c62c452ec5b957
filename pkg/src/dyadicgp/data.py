"""Synthetic GP data, CSV ingestion, [0,1] normalization, model persistence.

CSV contract: comma-separated, UTF-8, '.' decimal separator, mandatory header
row; one target column (the last one unless named), all feature columns
numeric.  Model files are JSON documents with flat parameter arrays and
declared shapes; JSON's shortest-roundtrip float encoding makes reloads
bit-faithful.
"""

from __future__ import annotations

import csv
import json
import os
import tempfile
import warnings
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .layers import Model, VariationalLayer
from .grid import build_grid
from .vi import CategoricalLikelihood, GaussianLikelihood

MODEL_FORMAT_VERSION = 1
_JITTERS = (1e-8, 1e-6, 1e-4)


class Normalizer:
    """Per-feature min-max map to [0, 1]; out-of-range inputs clamp.

    Bounds come either from data (`fit`) or from a declared domain.  Clamping
    is counted on the instance and warned about, so silent truncation of
    out-of-distribution inputs cannot go unnoticed.  A constant feature maps
    to 0.5.
    """

    def __init__(self, mins: np.ndarray, maxs: np.ndarray):
        self.mins = np.asarray(mins, dtype=float)
        self.maxs = np.asarray(maxs, dtype=float)
        if self.mins.shape != self.maxs.shape or self.mins.ndim != 1:
            raise ValueError("bounds must be matching 1-d arrays")
        if np.any(self.maxs < self.mins):
            raise ValueError("upper bounds must not be below lower bounds")
        self.clamped = 0

    @property
    def n_features(self) -> int:
        return self.mins.size

    def __call__(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.ndim != 2 or x.shape[1] != self.n_features:
            raise ValueError(
                f"expected (n, {self.n_features}) inputs, got shape {x.shape}"
            )
        span = self.maxs - self.mins
        degenerate = span == 0.0
        out = (x - self.mins) / np.where(degenerate, 1.0, span)
        out[:, degenerate] = 0.5
        below = out < 0.0
        above = out > 1.0
        n_clamped = int(below.sum() + above.sum())
        if n_clamped:
            self.clamped += n_clamped
            warnings.warn(
                f"{n_clamped} input values fell outside the normalizer range "
                "and were clamped to [0, 1]",
                stacklevel=2,
            )
            out = np.clip(out, 0.0, 1.0)
        return out


def fit_normalizer(x: np.ndarray, bounds: Optional[np.ndarray] = None) -> Normalizer:
    """Normalizer from per-feature data extremes, or from declared bounds.

    bounds, when given, is (n_features, 2) rows of (min, max) and takes
    precedence over the data; use it when the meaningful domain is known to
    exceed the training range.
    """
    x = np.asarray(x, dtype=float)
    if x.ndim != 2:
        raise ValueError("training inputs must be 2-d")
    if bounds is not None:
        bounds = np.asarray(bounds, dtype=float)
        if bounds.shape != (x.shape[1], 2):
            raise ValueError(f"bounds must be ({x.shape[1]}, 2), got {bounds.shape}")
        return Normalizer(bounds[:, 0], bounds[:, 1])
    return Normalizer(x.min(axis=0), x.max(axis=0))


def apply_normalizer(normalizer: Normalizer, x: np.ndarray) -> np.ndarray:
    return normalizer(x)


@dataclass
class Dataset:
    x: np.ndarray
    y: np.ndarray
    feature_names: list = field(default_factory=list)
    target_name: str = "y"
    label_names: Optional[list] = None  # classification only
    normalizer: Optional[Normalizer] = None

    @property
    def n(self) -> int:
        return self.x.shape[0]


def se_covariance(grid_x: np.ndarray, lengthscale: float = 1.0) -> np.ndarray:
    """Squared-exponential kernel matrix exp(-((x - x') / lengthscale)^2)."""
    if lengthscale <= 0:
        raise ValueError("lengthscale must be positive")
    d = (grid_x[:, None] - grid_x[None, :]) / lengthscale
    return np.exp(-d * d)


def sample_se_gp(
    grid_x: np.ndarray,
    lengthscale: float = 1.0,
    noise_std: float = 0.0,
    rng: Optional[np.random.Generator] = None,
) -> Dataset:
    """One draw from a zero-mean SE-kernel GP at grid_x, plus Gaussian noise.

    The covariance factorization retries with jitter 1e-8, 1e-6, 1e-4 on the
    diagonal before giving up; grid_x values must be distinct.
    """
    rng = rng or np.random.default_rng()
    grid_x = np.asarray(grid_x, dtype=float).ravel()
    if np.unique(grid_x).size != grid_x.size:
        raise ValueError("grid_x values must be distinct")
    if noise_std < 0:
        raise ValueError("noise_std must be non-negative")
    cov = se_covariance(grid_x, lengthscale)
    chol = None
    for jitter in _JITTERS:
        try:
            chol = np.linalg.cholesky(cov + jitter * np.eye(grid_x.size))
            break
        except np.linalg.LinAlgError:
            continue
    if chol is None:
        raise ValueError(
            f"SE covariance factorization failed even with jitter {_JITTERS[-1]}; "
            "grid points may be too close together"
        )
    f = chol @ rng.standard_normal(grid_x.size)
    y = f + noise_std * rng.standard_normal(grid_x.size) if noise_std else f
    return Dataset(x=grid_x[:, None], y=y, feature_names=["x"], target_name="y")


def load_csv(path, target_column: Optional[str] = None, task: str = "regression") -> Dataset:
    """Parse a dataset CSV.  The last column is the target unless named.

    Classification targets may be arbitrary strings; they map to contiguous
    0-based labels in sorted order and the mapping is kept on the dataset.
    Parse failures name the offending data row (1-based, header excluded)
    and column.
    """
    if task not in ("regression", "classification"):
        raise ValueError(f"unknown task {task!r}")
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        rows = [row for row in reader if row]
    if not rows:
        raise ValueError(f"{path}: file is empty")
    header = [h.strip() for h in rows[0]]
    if len(header) < 2:
        raise ValueError(f"{path}: need at least one feature column and a target")
    if target_column is None:
        target_column = header[-1]
    if target_column not in header:
        raise ValueError(f"{path}: no column named {target_column!r} in header {header}")
    t_idx = header.index(target_column)
    feature_names = [h for i, h in enumerate(header) if i != t_idx]
    data_rows = rows[1:]
    if not data_rows:
        raise ValueError(f"{path}: no data rows after the header")

    feats = np.empty((len(data_rows), len(feature_names)))
    raw_targets = []
    for r, row in enumerate(data_rows, start=1):
        if len(row) != len(header):
            raise ValueError(
                f"{path}: row {r} has {len(row)} cells, expected {len(header)}"
            )
        ci = 0
        for i, cell in enumerate(row):
            if i == t_idx:
                raw_targets.append(cell.strip())
                continue
            try:
                feats[r - 1, ci] = float(cell)
            except ValueError:
                raise ValueError(
                    f"{path}: non-numeric value {cell.strip()!r} at row {r}, "
                    f"column {header[i]!r}"
                ) from None
            ci += 1

    if task == "regression":
        y = np.empty(len(raw_targets))
        for r, cell in enumerate(raw_targets, start=1):
            try:
                y[r - 1] = float(cell)
            except ValueError:
                raise ValueError(
                    f"{path}: non-numeric target {cell!r} at row {r}, "
                    f"column {target_column!r}"
                ) from None
        return Dataset(feats, y, feature_names, target_column)

    names = sorted(set(raw_targets))
    mapping = {name: i for i, name in enumerate(names)}
    y = np.array([mapping[t] for t in raw_targets], dtype=np.int64)
    return Dataset(feats, y, feature_names, target_column, label_names=names)


def write_csv(path, header: list, rows, footer_rows=None) -> None:
    """Write a CSV atomically (temp file + rename, same directory)."""
    path = os.fspath(path)
    directory = os.path.dirname(path) or "."
    fd, tmp = tempfile.mkstemp(dir=directory, suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(header)
            writer.writerows(rows)
            if footer_rows:
                writer.writerow([])
                writer.writerows(footer_rows)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _atomic_write_text(path, text: str) -> None:
    path = os.fspath(path)
    directory = os.path.dirname(path) or "."
    fd, tmp = tempfile.mkstemp(dir=directory, suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _array_doc(arr: np.ndarray) -> dict:
    return {"shape": list(arr.shape), "data": arr.ravel().tolist()}


def _array_from_doc(doc: dict, context: str) -> np.ndarray:
    shape = tuple(doc["shape"])
    data = np.asarray(doc["data"], dtype=float)
    if data.size != int(np.prod(shape)):
        raise ValueError(
            f"model file corrupt: {context} declares shape {shape} "
            f"but carries {data.size} values"
        )
    return data.reshape(shape)


def save_model(model: Model, likelihood, normalizer: Optional[Normalizer], path) -> None:
    """Serialize model + likelihood + normalizer as a versioned JSON document."""
    layers = []
    for layer in model.layers:
        layers.append(
            {
                "in_dim": layer.in_dim,
                "out_dim": layer.out_dim,
                "depth": layer.grid.depth,
                "theta": layer.theta,
                "layout": "feature-major",
                "weight_mean": _array_doc(layer.weight_mean),
                "weight_rho": _array_doc(layer.weight_rho),
                "bias_mean": _array_doc(layer.bias_mean),
                "bias_rho": _array_doc(layer.bias_rho),
            }
        )
    if likelihood.kind == "gaussian":
        lik_doc = {
            "kind": "gaussian",
            "raw_noise": float(likelihood.raw_noise[0]),
            "trainable": bool(likelihood.trainable),
        }
    else:
        lik_doc = {
            "kind": "categorical",
            "n_classes": likelihood.n_classes,
            "labels": likelihood.labels,
        }
    doc = {
        "format_version": MODEL_FORMAT_VERSION,
        "squash": model.squash,
        "layers": layers,
        "likelihood": lik_doc,
        "normalizer": None
        if normalizer is None
        else {"mins": normalizer.mins.tolist(), "maxs": normalizer.maxs.tolist()},
    }
    _atomic_write_text(path, json.dumps(doc, indent=1))


def load_model(path):
    """Inverse of save_model.  Returns (model, likelihood, normalizer)."""
    try:
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
    except json.JSONDecodeError as err:
        raise ValueError(f"{path}: model file is corrupt or truncated: {err}") from err
    version = doc.get("format_version")
    if version != MODEL_FORMAT_VERSION:
        raise ValueError(
            f"{path}: unsupported model format version {version!r} "
            f"(this build reads {MODEL_FORMAT_VERSION})"
        )
    layers = []
    for i, ld in enumerate(doc["layers"]):
        grid = build_grid(ld["depth"])
        layer = VariationalLayer(
            in_dim=int(ld["in_dim"]),
            out_dim=int(ld["out_dim"]),
            grid=grid,
            theta=float(ld["theta"]),
            weight_mean=_array_from_doc(ld["weight_mean"], f"layer {i} weight_mean"),
            weight_rho=_array_from_doc(ld["weight_rho"], f"layer {i} weight_rho"),
            bias_mean=_array_from_doc(ld["bias_mean"], f"layer {i} bias_mean"),
            bias_rho=_array_from_doc(ld["bias_rho"], f"layer {i} bias_rho"),
        )
        expected = (layer.in_dim * grid.size, layer.out_dim)
        if layer.weight_mean.shape != expected or layer.weight_rho.shape != expected:
            raise ValueError(
                f"{path}: layer {i} weight arrays have shape "
                f"{layer.weight_mean.shape}, expected {expected}"
            )
        if layer.bias_mean.shape != (layer.out_dim,):
            raise ValueError(f"{path}: layer {i} bias shape mismatch")
        layers.append(layer)
    model = Model(layers, squash=doc["squash"])
    lik_doc = doc["likelihood"]
    if lik_doc["kind"] == "gaussian":
        likelihood = GaussianLikelihood(trainable=lik_doc.get("trainable", True))
        likelihood.raw_noise = np.array([float(lik_doc["raw_noise"])])
    elif lik_doc["kind"] == "categorical":
        likelihood = CategoricalLikelihood(lik_doc["n_classes"], lik_doc.get("labels"))
    else:
        raise ValueError(f"{path}: unknown likelihood kind {lik_doc['kind']!r}")
    norm_doc = doc.get("normalizer")
    normalizer = (
        None
        if norm_doc is None
        else Normalizer(np.asarray(norm_doc["mins"]), np.asarray(norm_doc["maxs"]))
    )
    return model, likelihood, normalizer
