import json
import re
from pathlib import Path
from typing import Dict, List, Optional

from loguru import logger
from pydantic import BaseModel, ConfigDict, Field, ValidationError

from src.dataset.schema import LabelSchema, default_schema
from src.utils.errors import DataError
from src.utils.files import atomic_write_text, canonical_json

PLACEHOLDER_RE = re.compile(r"<([^<>]*)>")
LAB_PLACEHOLDER = "<lab>"
TEMPORAL_KINDS = {"date": "absolute", "duration": "relative", "range": "range", "event": "event"}


class CoreTemplate(BaseModel):
    """Question core with one <lab> placeholder and its intent categories"""

    model_config = ConfigDict(frozen=True)

    id: str
    text: str
    intents: Dict[str, str]
    source_id: Optional[str] = None
    paraphrase_lang: Optional[str] = None


class ModifierTemplate(BaseModel):
    """Temporal modifier with one <date|duration|range|event> placeholder"""

    model_config = ConfigDict(frozen=True)

    id: str
    text: str
    time_constraint: str = "none"
    source_id: Optional[str] = None
    paraphrase_lang: Optional[str] = None

    @property
    def placeholder(self) -> str:
        return PLACEHOLDER_RE.search(self.text).group(0)

    @property
    def date_kinds(self) -> List[str]:
        """Date expression kinds the placeholder accepts, in declaration order"""
        names = self.placeholder[1:-1].split("|")
        return [TEMPORAL_KINDS[name] for name in names]


class TemplatePack(BaseModel):
    """The generative grammar: cores, temporal modifiers and the lab lexicon"""

    model_config = ConfigDict(frozen=True)

    cores: List[CoreTemplate] = Field(default_factory=list)
    modifiers: List[ModifierTemplate] = Field(default_factory=list)
    lab_lexicon: List[str] = Field(default_factory=list)

    def to_record(self) -> dict:
        return self.model_dump(exclude_none=True)


def validate_pack(pack: TemplatePack, schema: LabelSchema) -> None:
    """
    Check pack invariants against a label schema

    Raises:
        DataError: Naming the offending template id
    """
    ids = [c.id for c in pack.cores] + [m.id for m in pack.modifiers]
    seen = set()
    for template_id in ids:
        if template_id in seen:
            raise DataError(f"Duplicate template id: {template_id}")
        seen.add(template_id)

    core_axes = [axis for axis in schema.intent_axes if axis != "time_constraint"]
    for core in pack.cores:
        placeholders = PLACEHOLDER_RE.findall(core.text)
        if placeholders != ["lab"]:
            raise DataError(
                f"Core template {core.id} must contain exactly one <lab> placeholder, found {placeholders}"
            )
        for axis in core_axes:
            if axis not in core.intents:
                raise DataError(f"Core template {core.id} has no category for axis {axis!r}")
        for axis, category in core.intents.items():
            if axis not in schema.intent_axes or category not in schema.intent_axes[axis]:
                raise DataError(
                    f"Core template {core.id}: unknown intent category {category!r} for axis {axis!r}"
                )

    for modifier in pack.modifiers:
        placeholders = PLACEHOLDER_RE.findall(modifier.text)
        if len(placeholders) != 1 or not all(
            name in TEMPORAL_KINDS for name in placeholders[0].split("|")
        ):
            raise DataError(
                f"Modifier template {modifier.id} must contain exactly one "
                f"<date|duration|range|event> placeholder, found {placeholders}"
            )
        if modifier.time_constraint not in schema.intent_axes.get("time_constraint", []):
            raise DataError(
                f"Modifier template {modifier.id}: unknown time_constraint {modifier.time_constraint!r}"
            )

    for mention in pack.lab_lexicon:
        if not mention.strip():
            raise DataError("Lab lexicon contains an empty mention")


def pack_summary(pack: TemplatePack) -> Dict[str, int]:
    return {
        "cores": len(pack.cores),
        "modifiers": len(pack.modifiers),
        "mentions": len(pack.lab_lexicon),
        "paraphrased_cores": sum(1 for c in pack.cores if c.source_id),
        "paraphrased_modifiers": sum(1 for m in pack.modifiers if m.source_id),
    }


def parse_pack(path: str | Path, schema: Optional[LabelSchema] = None) -> TemplatePack:
    """
    Load and validate a template pack

    Args:
        path: JSON file with "cores", "modifiers" and "lab_lexicon" arrays
        schema: Label schema the intent categories must belong to

    Returns:
        TemplatePack: The validated pack

    Raises:
        DataError: If the file is malformed or a template breaks an invariant
    """
    try:
        with open(path, "r", encoding="utf-8") as f:
            pack = TemplatePack.model_validate(json.load(f))
    except json.JSONDecodeError as e:
        raise DataError(f"Template pack {path} is not valid JSON: {e}")
    except ValidationError as e:
        error = e.errors()[0]
        raise DataError(f"Template pack {path}: {'.'.join(map(str, error['loc']))}: {error['msg']}")

    validate_pack(pack, schema or default_schema())

    summary = pack_summary(pack)
    logger.info(
        f"Parsed template pack {path}: {summary['cores']} cores, "
        f"{summary['modifiers']} modifiers, {summary['mentions']} lab mentions"
    )
    return pack


def save_pack(pack: TemplatePack, path: str | Path) -> str:
    return atomic_write_text(path, canonical_json(pack.to_record()))
