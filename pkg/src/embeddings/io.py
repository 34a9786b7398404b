from pathlib import Path
from typing import Dict, List, Optional

import numpy as np
from loguru import logger

from src.embeddings.skipgram import EmbeddingModel, composed_matrix
from src.embeddings.subword import SubwordConfig
from src.utils.errors import DataError
from src.utils.files import atomic_write_text


def subword_sidecar(path: str | Path) -> Path:
    path = Path(path)
    return path.with_name(path.name + ".subwords")


def _format_row(values: np.ndarray) -> str:
    return " ".join(f"{x:.6g}" for x in values)


def save_vectors(model: EmbeddingModel, path: str | Path) -> List[Path]:
    """
    Write word vectors in the word2vec text format

    The first line is "<count> <dim>", then one "<token> <v1> ... <vd>" line per
    word in vocabulary order. When subword rows exist they go to a
    "<path>.subwords" sidecar headed "<rows> <dim> <n_min> <n_max> <buckets>".

    Returns:
        List[Path]: Files written
    """
    path = Path(path)
    matrix = composed_matrix(model)
    lines = [f"{len(model.vocab)} {model.dim}"]
    lines.extend(f"{token} {_format_row(row)}" for token, row in zip(model.vocab.tokens, matrix))
    atomic_write_text(path, "\n".join(lines) + "\n")
    written = [path]

    if model.subword.enabled and len(model.subword_input):
        cfg = model.subword
        sidecar = [f"{len(model.bucket_rows)} {model.dim} {cfg.n_min} {cfg.n_max} {cfg.bucket_count}"]
        for bucket, row in sorted(model.bucket_rows.items()):
            sidecar.append(f"{bucket} {_format_row(model.subword_input[row])}")
        atomic_write_text(subword_sidecar(path), "\n".join(sidecar) + "\n")
        written.append(subword_sidecar(path))

    logger.info(f"Saved {len(model.vocab)} vectors of dim {model.dim} to {path}")
    return written


def _parse_floats(fields: List[str], dim: int, where: str) -> np.ndarray:
    if len(fields) != dim:
        raise DataError(f"{where}: expected {dim} values, got {len(fields)}")
    try:
        return np.array([float(x) for x in fields], dtype=np.float64)
    except ValueError as e:
        raise DataError(f"{where}: {e}")


def _read_header(line: str, where: str, size: int) -> List[int]:
    try:
        values = [int(x) for x in line.split()]
    except ValueError:
        values = []
    if len(values) != size:
        raise DataError(f"{where}: malformed header {line.strip()!r}")
    return values


def _load_sidecar(path: Path, dim: int):
    with open(path, "r", encoding="utf-8") as f:
        lines = f.read().splitlines()
    if not lines:
        raise DataError(f"{path}: empty subword file")
    rows, sub_dim, n_min, n_max, buckets = _read_header(lines[0], str(path), 5)
    if sub_dim != dim:
        raise DataError(f"{path}: subword dim {sub_dim} does not match word dim {dim}")
    body = [line for line in lines[1:] if line.strip()]
    if len(body) != rows:
        raise DataError(f"{path}: header announces {rows} rows, found {len(body)}")

    bucket_rows: Dict[int, int] = {}
    table = np.zeros((rows, dim))
    for i, line in enumerate(body):
        fields = line.split()
        try:
            bucket = int(fields[0])
        except (ValueError, IndexError):
            raise DataError(f"{path}:{i + 2}: bad bucket id")
        bucket_rows[bucket] = i
        table[i] = _parse_floats(fields[1:], dim, f"{path}:{i + 2}")
    cfg = SubwordConfig(n_min=n_min, n_max=n_max, bucket_count=buckets, enabled=True)
    return cfg, table, bucket_rows


def load_vectors(path: str | Path) -> EmbeddingModel:
    """
    Read a word2vec text file, plus its subword sidecar when present

    Raises:
        DataError: If the file is missing, or the header disagrees with the body
    """
    path = Path(path)
    if not path.exists():
        raise DataError(f"Vector file not found: {path}")
    with open(path, "r", encoding="utf-8") as f:
        lines = f.read().splitlines()
    if not lines:
        raise DataError(f"{path}: empty vector file")

    count, dim = _read_header(lines[0], str(path), 2)
    body = [line for line in lines[1:] if line.strip()]
    if len(body) != count:
        raise DataError(f"{path}: header announces {count} vectors, found {len(body)}")

    tokens: List[str] = []
    matrix = np.zeros((count, dim))
    for i, line in enumerate(body):
        fields = line.rstrip().split(" ")
        tokens.append(fields[0])
        matrix[i] = _parse_floats(fields[1:], dim, f"{path}:{i + 2}")
    if len(set(tokens)) != len(tokens):
        raise DataError(f"{path}: duplicate tokens")

    sidecar = subword_sidecar(path)
    if sidecar.exists():
        cfg, table, bucket_rows = _load_sidecar(sidecar, dim)
        model = EmbeddingModel.from_vectors(tokens, matrix, subword=cfg, subword_input=table, bucket_rows=bucket_rows)
    else:
        model = EmbeddingModel.from_vectors(tokens, matrix, subword=SubwordConfig(enabled=False))

    logger.info(f"Loaded {count} vectors of dim {dim} from {path}")
    return model
