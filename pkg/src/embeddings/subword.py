from typing import List

from pydantic import BaseModel, ConfigDict, model_validator

FNV_OFFSET = 2166136261
FNV_PRIME = 16777619


class SubwordConfig(BaseModel):
    """Character n-gram range and hashing space"""

    model_config = ConfigDict(frozen=True)

    n_min: int = 3
    n_max: int = 6
    bucket_count: int = 2 ** 21
    enabled: bool = True

    @model_validator(mode="after")
    def _check_range(self) -> "SubwordConfig":
        if not 1 <= self.n_min <= self.n_max:
            raise ValueError(f"Need 1 <= n_min <= n_max, got {self.n_min}..{self.n_max}")
        if self.bucket_count < 1:
            raise ValueError("bucket_count must be >= 1")
        return self


def char_ngrams(word: str, cfg: SubwordConfig) -> List[str]:
    """
    Character n-grams of "<word>" for n in [n_min, n_max]

    The bracketed word itself is always included once: it comes out of the
    enumeration when its length is in range, otherwise it is appended.
    """
    bracketed = f"<{word}>"
    ngrams = [
        bracketed[i:i + n]
        for n in range(cfg.n_min, cfg.n_max + 1)
        for i in range(len(bracketed) - n + 1)
    ]
    if not cfg.n_min <= len(bracketed) <= cfg.n_max:
        ngrams.append(bracketed)
    return ngrams


def hash_ngram(ngram: str, buckets: int) -> int:
    """FNV-1a (32-bit) over the UTF-8 bytes, modulo the bucket count"""
    h = FNV_OFFSET
    for byte in ngram.encode("utf-8"):
        h ^= byte
        h = (h * FNV_PRIME) & 0xFFFFFFFF
    return h % buckets
