import json
from pathlib import Path
from typing import Optional

import numpy as np
from loguru import logger

from src.dataset.schema import LabelSchema
from src.embeddings.io import load_vectors
from src.neural.embedding import TokenIndex
from src.neural.intents import CnnIntentClassifier
from src.neural.search import GridPoint
from src.neural.tagger import BiLstmTagger
from src.utils.errors import DataError
from src.utils.files import atomic_write_bytes, atomic_write_text, canonical_json, sha256_file, sha256_text

NEURAL_FORMAT = "nlu-forge-neural/1"
DTYPE = "<f8"


def binary_path(path: str | Path) -> Path:
    path = Path(path)
    return path.with_name(path.stem + ".bin")


def schema_checksum(schema: LabelSchema) -> str:
    return sha256_text(canonical_json(schema.model_dump()))


def save_model(
    model: BiLstmTagger | CnnIntentClassifier, path: str | Path, schema: Optional[LabelSchema] = None
) -> str:
    """
    Write a JSON manifest and a flat little-endian float64 parameter file

    Parameters are stored in sorted name order; the manifest lists each name with
    its shape so the flat array can be cut back into tensors.

    Args:
        model: Tagger or intent classifier
        path: Manifest path; parameters go to the same stem with ".bin"
        schema: Label schema whose checksum is recorded

    Returns:
        str: Path to the manifest
    """
    names = sorted(model.params)
    blob = b"".join(np.ascontiguousarray(model.params[n], dtype=DTYPE).tobytes() for n in names)
    bin_path = binary_path(path)
    atomic_write_bytes(bin_path, blob)

    record = {
        "format": NEURAL_FORMAT,
        "kind": model.kind,
        "point": model.point.model_dump(),
        "tokens": model.index.tokens,
        "freeze_embeddings": model.freeze_embeddings,
        "parameters": [{"name": n, "shape": list(model.params[n].shape)} for n in names],
        "binary": bin_path.name,
        "binary_sha256": sha256_file(bin_path),
        "schema_sha256": schema_checksum(schema) if schema is not None else None,
        "embeddings": model.embedding_ref,
    }
    if isinstance(model, BiLstmTagger):
        record.update({"labels": model.labels, "output": model.output})
    else:
        axes = [[axis, categories] for axis, categories in model.axes.items()]
        record.update({"axes": axes, "shared": model.shared})

    output_path = atomic_write_text(path, canonical_json(record))
    logger.info(f"Saved {model.kind} model to {output_path} ({len(blob) // 8} parameters)")
    return output_path


def load_model(path: str | Path, schema: Optional[LabelSchema] = None) -> BiLstmTagger | CnnIntentClassifier:
    """
    Read a model written by save_model

    Raises:
        DataError: If a file is missing, the binary size or checksum does not match
            the manifest, or the schema differs from the recorded one
    """
    path = Path(path)
    if not path.exists():
        raise DataError(f"missing model: {path}")
    try:
        with open(path, "r", encoding="utf-8") as f:
            record = json.load(f)
    except json.JSONDecodeError as e:
        raise DataError(f"{path}: malformed model manifest ({e.msg})")
    if record.get("format") != NEURAL_FORMAT:
        raise DataError(f"{path}: not a neural model manifest")

    bin_path = path.with_name(record["binary"])
    if not bin_path.exists():
        raise DataError(f"missing model parameters: {bin_path}")
    if sha256_file(bin_path) != record["binary_sha256"]:
        raise DataError(f"{bin_path}: checksum differs from the manifest")
    if schema is not None and record.get("schema_sha256") not in (None, schema_checksum(schema)):
        raise DataError(f"{path}: model was trained with a different label schema")

    flat = np.fromfile(bin_path, dtype=DTYPE).astype(np.float64)
    expected = sum(int(np.prod(p["shape"])) for p in record["parameters"])
    if flat.size != expected:
        raise DataError(f"{bin_path}: {flat.size} values, manifest declares {expected}")

    params, offset = {}, 0
    for entry in record["parameters"]:
        size = int(np.prod(entry["shape"]))
        params[entry["name"]] = flat[offset:offset + size].reshape(entry["shape"]).copy()
        offset += size

    ref = record.get("embeddings")
    pretrained = None
    if ref:
        vector_path = Path(ref["path"])
        if vector_path.is_file() and sha256_file(vector_path) == ref.get("sha256"):
            pretrained = load_vectors(vector_path)
        else:
            logger.warning(f"Embeddings {vector_path} missing or changed; unknown words use the <unk> row")

    common = dict(
        index=TokenIndex(record["tokens"]),
        point=GridPoint(**record["point"]),
        params=params,
        freeze_embeddings=record["freeze_embeddings"],
        pretrained=pretrained,
        embedding_ref=ref,
    )
    if record["kind"] == BiLstmTagger.kind:
        model = BiLstmTagger(labels=record["labels"], output=record["output"], **common)
    elif record["kind"] == CnnIntentClassifier.kind:
        axes = {axis: categories for axis, categories in record["axes"]}
        model = CnnIntentClassifier(axes=axes, shared=record["shared"], **common)
    else:
        raise DataError(f"{path}: unknown model kind {record['kind']!r}")

    logger.info(f"Loaded {model.kind} model from {path}")
    return model
