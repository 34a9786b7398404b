import copy
import json
from pathlib import Path
from typing import Any, Dict, List, Literal, Optional, Sequence

import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError

from src.crf.train import TrainOpts
from src.neural.search import GridPoint
from src.paraphraser.pivot import DEFAULT_LANGUAGE_POOL
from src.utils.errors import ConfigError
from src.utils.files import sha256_text

DEFAULT_CONFIG = Path("config/default.yaml")


class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid")


class PathsConfig(_Section):
    pack: Path
    schema_file: Optional[Path] = None
    synonyms: Optional[Path] = None
    train_pack: Path
    dev_pack: Path
    paraphrased_pack: Path
    train: Path
    dev: Path
    test: Optional[Path] = None
    embedding_corpus: Optional[Path] = None
    vectors: Path
    slot_model: Path
    intent_model: Path
    report: Path
    stats: Path


class LoggingConfig(_Section):
    level: str = "INFO"
    log_file: Optional[Path] = Path("logs/nlu-forge.log")


class GenerationConfig(_Section):
    seed: int
    train_count: int = Field(16000, ge=1)
    dev_count: int = Field(4000, ge=1)
    template_ratio: float = Field(170 / 223, gt=0, lt=1)
    mention_ratio: float = Field(336 / 409, gt=0, lt=1)
    modifier_prob: float = Field(0.5, ge=0, le=1)
    use_paraphrases: bool = True


class PivotSection(_Section):
    seed: int
    n_languages: int = 10
    language_pool: List[str] = Field(default_factory=lambda: list(DEFAULT_LANGUAGE_POOL))
    max_in_flight: int = 4


class TranslationConfig(_Section):
    backend: Literal["identity", "mock", "http"] = "mock"
    timeout: float = 10.0
    source_lang: str = "fr"


class EmbeddingConfig(_Section):
    seed: int
    source: Literal["corpus", "train-corpus"] = "corpus"
    dim: int = Field(100, ge=1)
    window: int = Field(5, ge=1)
    negatives: int = Field(5, ge=1)
    epochs: int = Field(5, ge=0)
    lr: float = Field(0.05, gt=0)
    min_count: int = Field(1, ge=1)
    subwords: bool = True
    n_min: int = 3
    n_max: int = 6
    bucket_count: int = 2 ** 21


class CrfConfig(TrainOpts):
    model_config = ConfigDict(extra="forbid")

    use_embeddings: bool = False


class TaggerConfig(_Section):
    seed: int
    use_embeddings: bool = True
    freeze_embeddings: bool = False
    point: GridPoint = Field(default_factory=GridPoint)


class IntentsConfig(_Section):
    seed: int
    shared: bool = True
    use_embeddings: bool = True
    freeze_embeddings: bool = False
    point: GridPoint = Field(default_factory=GridPoint)


class SearchConfig(_Section):
    seed: int
    n_points: int = Field(0, ge=0)


class EvaluationConfig(_Section):
    seed: int
    k: int = Field(5, ge=1)
    repetitions: int = Field(10, ge=1)


class ProjectConfig(_Section):
    """Every setting of a pipeline run; seeds have no defaults"""

    paths: PathsConfig
    logging: LoggingConfig = Field(default_factory=LoggingConfig)
    generation: GenerationConfig
    pivot: PivotSection
    translation: TranslationConfig = Field(default_factory=TranslationConfig)
    embedding: EmbeddingConfig
    crf: CrfConfig
    tagger: TaggerConfig
    intents: IntentsConfig
    search: SearchConfig
    evaluation: EvaluationConfig
    threads: int = Field(1, ge=1)

    def config_hash(self) -> str:
        """Checksum of the effective settings (secrets never live in the config)"""
        return sha256_text(json.dumps(self.model_dump(mode="json"), sort_keys=True))


SEEDED_SECTIONS = ("generation", "pivot", "embedding", "crf", "tagger", "intents", "search", "evaluation")


def _parse_override(item: str) -> tuple[List[str], Any]:
    key, sep, value = item.partition("=")
    if not sep or not key.strip():
        raise ConfigError(f"Override must look like section.key=value, got {item!r}")
    return key.strip().split("."), yaml.safe_load(value)


def apply_overrides(data: Dict[str, Any], overrides: Sequence[str]) -> Dict[str, Any]:
    """Set nested keys from "a.b.c=value" strings; values are parsed as YAML scalars"""
    data = copy.deepcopy(data)
    for item in overrides:
        keys, value = _parse_override(item)
        node = data
        for key in keys[:-1]:
            child = node.setdefault(key, {})
            if not isinstance(child, dict):
                raise ConfigError(f"Cannot override {item!r}: {key!r} is not a section")
            node = child
        node[keys[-1]] = value
    return data


def _resolve_paths(section: Dict[str, Any], base: Path) -> None:
    for key, value in section.items():
        if value is not None and not Path(value).is_absolute():
            section[key] = str((base / value).resolve())


def load_config(
    path: str | Path = DEFAULT_CONFIG,
    overrides: Sequence[str] = (),
    seed: Optional[int] = None,
    threads: Optional[int] = None,
) -> ProjectConfig:
    """
    Load the project configuration

    Relative paths in the `paths` and `logging` sections resolve against the config
    file's directory. `seed` replaces every stage seed and `threads` the thread
    count; both win over `--set` overrides.

    Args:
        path: YAML config file
        overrides: "section.key=value" strings
        seed: Seed for every stage
        threads: Worker threads

    Returns:
        ProjectConfig: The validated configuration

    Raises:
        ConfigError: If the file is missing or invalid
    """
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"Config file not found: {path}")
    try:
        with open(path, "r", encoding="utf-8") as f:
            data = yaml.safe_load(f) or {}
    except yaml.YAMLError as e:
        raise ConfigError(f"{path}: invalid YAML ({e})")

    data = apply_overrides(data, overrides)
    if seed is not None:
        for section in SEEDED_SECTIONS:
            data.setdefault(section, {})["seed"] = seed
    if threads is not None:
        data["threads"] = threads

    base = path.resolve().parent
    _resolve_paths(data.get("paths", {}), base)
    logging_section = data.get("logging") or {}
    if logging_section.get("log_file"):
        logging_section["log_file"] = str((base / logging_section["log_file"]).resolve())

    try:
        return ProjectConfig.model_validate(data)
    except ValidationError as e:
        first = e.errors()[0]
        location = ".".join(str(part) for part in first["loc"])
        raise ConfigError(f"{path}: {location}: {first['msg']}")
