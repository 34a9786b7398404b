import re
from typing import Dict, List, NamedTuple, Optional, Sequence

import numpy as np

from src.embeddings.skipgram import EmbeddingModel, word_vector
from src.utils.errors import DataError

WINDOW = 2
BOS = "__BOS__"
EOS = "__EOS__"
DATE_RE = re.compile(r"^(\d{1,2}/\d{1,2}(/\d{2,4})?|\d{1,2}/\d{4}|(19|20)\d{2})$")


class FeatureVector(NamedTuple):
    """Active binary feature names plus the optional dense embedding of the token"""

    sparse: List[str]
    dense: Optional[np.ndarray]


def word_shape(token: str) -> str:
    """Character classes with runs collapsed: "27/03/2015" -> "d/d/d", "Créat" -> "Xx" """
    shape = []
    for ch in token:
        if ch.isdigit():
            c = "d"
        elif ch.isalpha():
            c = "X" if ch.isupper() else "x"
        else:
            c = ch
        if not shape or shape[-1] != c:
            shape.append(c)
    return "".join(shape)


def _at(values: Sequence[str], i: int) -> str:
    if i < 0:
        return BOS
    if i >= len(values):
        return EOS
    return values[i]


def extract_features(
    tokens: Sequence[str],
    t: int,
    lemmas: Optional[Sequence[str]] = None,
    pos: Optional[Sequence[str]] = None,
    embeddings: Optional[EmbeddingModel] = None,
) -> FeatureVector:
    """
    Features of token t

    Args:
        tokens: Sentence tokens
        t: Position
        lemmas: Optional lemma column, same length as tokens
        pos: Optional POS column, same length as tokens
        embeddings: When given, the token's vector becomes the dense part

    Returns:
        FeatureVector: Sparse feature names and dense values

    Raises:
        DataError: If t is out of range
    """
    if not 0 <= t < len(tokens):
        raise DataError(f"Feature position {t} out of range for {len(tokens)} tokens")

    token = tokens[t]
    feats = ["bias"]
    for offset in range(-WINDOW, WINDOW + 1):
        feats.append(f"w[{offset}]={_at(tokens, t + offset)}")
    feats.append(f"w[-1:0]={_at(tokens, t - 1)}|{token}")
    feats.append(f"w[0:1]={token}|{_at(tokens, t + 1)}")

    feats.append(f"shape={word_shape(token)}")
    for n in range(1, 4):
        if len(token) >= n:
            feats.append(f"prefix{n}={token[:n]}")
            feats.append(f"suffix{n}={token[-n:]}")
    if DATE_RE.match(token):
        feats.append("is_date")
    if token.isdigit():
        feats.append("is_digit")

    for name, column in (("lemma", lemmas), ("pos", pos)):
        if column is None:
            continue
        for offset in range(-WINDOW, WINDOW + 1):
            feats.append(f"{name}[{offset}]={_at(column, t + offset)}")

    dense = word_vector(embeddings, token).vector if embeddings is not None else None
    return FeatureVector(feats, dense)


class FeatureIndex:
    """Feature name -> id dictionary; grows while training, frozen afterwards"""

    def __init__(self, names: Optional[Sequence[str]] = None):
        self.names: List[str] = list(names or [])
        self.ids: Dict[str, int] = {name: i for i, name in enumerate(self.names)}
        self.frozen = names is not None

    def __len__(self) -> int:
        return len(self.names)

    def freeze(self):
        self.frozen = True

    def lookup(self, names: Sequence[str]) -> np.ndarray:
        """Ids of known features; new names are added unless the index is frozen"""
        ids = []
        for name in names:
            fid = self.ids.get(name)
            if fid is None and not self.frozen:
                fid = len(self.names)
                self.ids[name] = fid
                self.names.append(name)
            if fid is not None:
                ids.append(fid)
        return np.array(ids, dtype=np.int64)


class DenseScaler(NamedTuple):
    """Per-dimension standardisation fitted on training tokens"""

    mean: np.ndarray
    std: np.ndarray

    @classmethod
    def fit(cls, rows: np.ndarray) -> "DenseScaler":
        mean = rows.mean(axis=0)
        std = rows.std(axis=0)
        return cls(mean, np.where(std > 1e-8, std, 1.0))

    def transform(self, rows: np.ndarray) -> np.ndarray:
        return (rows - self.mean) / self.std
