"""File formats: JSONL datasets, JSON models, JSONL predictions.

A dataset file starts with one header line naming the format, version,
class count, and feature width; every further line is one bag.  Models are
a single JSON document.  All writers are deterministic: identical inputs
produce identical bytes, and no file ever embeds wall-clock information.
"""
from __future__ import annotations

import json
from typing import IO, Any

import numpy as np

from .bags import Bag, Dataset, LabelSet, ValidationReport, validate_dataset
from .errors import DataError
from .kernelize import KernelDictionary
from .metrics import Predictions
from .model import Model

DATASET_FORMAT = "mimla-dataset"
MODEL_FORMAT = "mimla-model"
PREDICTIONS_FORMAT = "mimla-predictions"
FORMAT_VERSION = 1


def _reject_constant(token: str):
    raise DataError(f"non-finite number {token!r} is not allowed")


def _parse_line(text: str, path: str, lineno: int) -> Any:
    try:
        return json.loads(text, parse_constant=_reject_constant)
    except json.JSONDecodeError as exc:
        raise DataError(f"{path}:{lineno}: invalid JSON: {exc.msg}") from None


def _dump(obj: Any) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"),
                      allow_nan=False)


def load_dataset(path: str) -> tuple[Dataset, ValidationReport]:
    """Read a dataset file and validate it.

    Parse problems raise :class:`DataError` with the offending line number;
    structural problems are returned in the report for the caller to act
    on (the CLI aborts on fatal findings and prints warnings).
    """
    try:
        handle = open(path, "r", encoding="utf-8")
    except OSError as exc:
        raise DataError(f"cannot open dataset {path!r}: {exc}") from None
    with handle:
        header_text = handle.readline()
        if not header_text.strip():
            raise DataError(f"{path}:1: empty file, expected a header line")
        header = _parse_line(header_text, path, 1)
        if not isinstance(header, dict) or \
                header.get("format") != DATASET_FORMAT:
            raise DataError(f"{path}:1: not a {DATASET_FORMAT} file")
        if header.get("version") != FORMAT_VERSION:
            raise DataError(
                f"{path}:1: unsupported version {header.get('version')!r}")
        try:
            num_classes = int(header["num_classes"])
            feature_dim = int(header["feature_dim"])
        except (KeyError, TypeError, ValueError):
            raise DataError(
                f"{path}:1: header must carry integer num_classes "
                "and feature_dim") from None
        bags = []
        for lineno, text in enumerate(handle, start=2):
            if not text.strip():
                continue
            row = _parse_line(text, path, lineno)
            bags.append(_bag_from_row(row, path, lineno))
    ds = Dataset(num_classes, feature_dim, bags,
                 str(header.get("name", "")))
    return ds, validate_dataset(ds)


def _bag_from_row(row: Any, path: str, lineno: int) -> Bag:
    where = f"{path}:{lineno}"
    if not isinstance(row, dict):
        raise DataError(f"{where}: bag line must be a JSON object")
    try:
        bag_id = str(row["id"])
        label = row["label"]
        instances = row["instances"]
    except KeyError as exc:
        raise DataError(f"{where}: missing field {exc.args[0]!r}") from None
    if not isinstance(label, list) or \
            not all(isinstance(c, int) and not isinstance(c, bool)
                    for c in label):
        raise DataError(f"{where}: label must be a list of integers")
    if any(c < 0 for c in label):
        raise DataError(f"{where}: negative class index in label")
    try:
        features = np.array(instances, dtype=np.float64)
    except (TypeError, ValueError):
        raise DataError(f"{where}: instances must be a rectangular "
                        "list of number lists") from None
    if features.ndim != 2:
        raise DataError(f"{where}: instances must be a 2-d list "
                        f"(got shape {features.shape})")
    if not np.isfinite(features).all():
        raise DataError(f"{where}: features contain non-finite values")
    true_labels = None
    if row.get("instance_labels") is not None:
        raw = row["instance_labels"]
        if not isinstance(raw, list) or \
                not all(isinstance(c, int) and not isinstance(c, bool)
                        for c in raw):
            raise DataError(f"{where}: instance_labels must be a list of "
                            "integers")
        if len(raw) != features.shape[0]:
            raise DataError(f"{where}: {len(raw)} instance_labels for "
                            f"{features.shape[0]} instances")
        true_labels = np.array(raw, dtype=np.int64)
    return Bag(bag_id, features, LabelSet.from_classes(label), true_labels)


def save_dataset(ds: Dataset, path: str) -> None:
    with open(path, "w", encoding="utf-8") as out:
        header = {"format": DATASET_FORMAT, "version": FORMAT_VERSION,
                  "num_classes": ds.num_classes,
                  "feature_dim": ds.feature_dim}
        if ds.name:
            header["name"] = ds.name
        out.write(_dump(header) + "\n")
        for bag in ds.bags:
            row: dict[str, Any] = {
                "id": bag.id,
                "label": bag.label.classes(),
                "instances": bag.features.tolist(),
            }
            if bag.true_labels is not None:
                row["instance_labels"] = bag.true_labels.tolist()
            out.write(_dump(row) + "\n")


def save_model(model: Model, path: str) -> None:
    doc: dict[str, Any] = {
        "format": MODEL_FORMAT,
        "version": FORMAT_VERSION,
        "mode": model.mode,
        "num_classes": model.num_classes,
        "input_dim": model.input_dim,
        "weights": model.weights.tolist(),
        "config": model.config,
    }
    if model.dictionary is not None:
        doc["dictionary"] = {
            "anchors": model.dictionary.anchors.tolist(),
            "delta": model.dictionary.delta,
            "scale": model.dictionary.scale,
            "anchor_indices": model.dictionary.anchor_indices.tolist(),
        }
    with open(path, "w", encoding="utf-8") as out:
        out.write(_dump(doc) + "\n")


def load_model(path: str) -> Model:
    try:
        with open(path, "r", encoding="utf-8") as handle:
            doc = _parse_line(handle.read(), path, 1)
    except OSError as exc:
        raise DataError(f"cannot open model {path!r}: {exc}") from None
    if not isinstance(doc, dict) or doc.get("format") != MODEL_FORMAT:
        raise DataError(f"{path}: not a {MODEL_FORMAT} file")
    if doc.get("version") != FORMAT_VERSION:
        raise DataError(f"{path}: unsupported version {doc.get('version')!r}")
    try:
        weights = np.array(doc["weights"], dtype=np.float64)
        mode = str(doc["mode"])
        num_classes = int(doc["num_classes"])
        input_dim = int(doc["input_dim"])
    except (KeyError, TypeError, ValueError):
        raise DataError(f"{path}: malformed model fields") from None
    if weights.ndim != 2 or weights.shape[1] != num_classes:
        raise DataError(f"{path}: weights shape {weights.shape} does not "
                        f"match {num_classes} classes")
    dictionary = None
    if doc.get("dictionary") is not None:
        d = doc["dictionary"]
        try:
            dictionary = KernelDictionary(
                anchors=np.array(d["anchors"], dtype=np.float64),
                delta=float(d["delta"]),
                scale=float(d["scale"]),
                anchor_indices=np.array(d["anchor_indices"],
                                        dtype=np.int64),
            )
        except (KeyError, TypeError, ValueError):
            raise DataError(f"{path}: malformed dictionary") from None
    model = Model(weights, num_classes, input_dim, mode=mode,
                  dictionary=dictionary, config=dict(doc.get("config", {})))
    expected = (dictionary.size if mode == "kernel" else input_dim) + 1
    if weights.shape[0] != expected:
        raise DataError(f"{path}: weights expect {weights.shape[0] - 1} "
                        f"feature dims, model implies {expected - 1}")
    return model


def save_predictions(preds: Predictions, path_or_file: "str | IO[str]") -> None:
    def _write(out: IO[str]):
        out.write(_dump({"format": PREDICTIONS_FORMAT,
                         "version": FORMAT_VERSION,
                         "mode": preds.mode,
                         "num_classes": preds.num_classes}) + "\n")
        for i, bag_id in enumerate(preds.bag_ids):
            out.write(_dump({
                "id": bag_id,
                "instance_labels": preds.instance_labels[i].tolist(),
                "bag_label": preds.bag_labels[i].classes(),
                "scores": preds.bag_scores[i].tolist(),
            }) + "\n")

    if isinstance(path_or_file, str):
        with open(path_or_file, "w", encoding="utf-8") as out:
            _write(out)
    else:
        _write(path_or_file)
