import json
from pathlib import Path
from typing import Dict, List

from pydantic import BaseModel, ConfigDict, ValidationError, model_validator

from src.utils.errors import DataError

SLOT_KINDS = ("LAB", "DATE")

DEFAULT_SLOT_LABELS = ["O", "B-LAB", "I-LAB", "B-DATE", "I-DATE"]

# Order matters: classifier heads follow it.
DEFAULT_INTENT_AXES: Dict[str, List[str]] = {
    "result_type": ["value", "evolution", "date", "count", "reference"],
    "interpretation": ["normality", "value", "low", "high", "presence"],
    "time": ["first", "last", "all"],
    "time_constraint": ["none", "range", "date", "number"],
}

AXIS_CARDINALITIES = {
    "result_type": 5,
    "interpretation": 5,
    "time": 3,
    "time_constraint": 4,
}


class LabelSchema(BaseModel):
    """Slot tag set and intent axes shared by every corpus and model"""

    model_config = ConfigDict(frozen=True)

    slot_labels: List[str]
    intent_axes: Dict[str, List[str]]
    allow_custom_counts: bool = False

    @model_validator(mode="after")
    def _check_labels(self) -> "LabelSchema":
        if "O" not in self.slot_labels:
            raise ValueError("slot_labels must contain 'O'")
        if len(set(self.slot_labels)) != len(self.slot_labels):
            raise ValueError("slot_labels contains duplicates")

        for label in self.slot_labels:
            if label == "O":
                continue
            prefix, _, kind = label.partition("-")
            if prefix not in ("B", "I") or not kind:
                raise ValueError(f"Slot label {label!r} is not O, B-X or I-X")
            partner = f"{'I' if prefix == 'B' else 'B'}-{kind}"
            if partner not in self.slot_labels:
                raise ValueError(f"Slot label {label!r} has no matching {partner!r}")

        if self.allow_custom_counts:
            return self

        if list(self.intent_axes) != list(AXIS_CARDINALITIES):
            raise ValueError(
                f"intent_axes must be {list(AXIS_CARDINALITIES)}, got {list(self.intent_axes)}"
            )
        for axis, categories in self.intent_axes.items():
            if len(categories) != AXIS_CARDINALITIES[axis]:
                raise ValueError(
                    f"Axis {axis!r} must have {AXIS_CARDINALITIES[axis]} categories, "
                    f"got {len(categories)}"
                )
            if len(set(categories)) != len(categories):
                raise ValueError(f"Axis {axis!r} has duplicate categories")
        return self

    @property
    def slot_kinds(self) -> List[str]:
        return [label[2:] for label in self.slot_labels if label.startswith("B-")]

    def axis_index(self, axis: str, category: str) -> int:
        try:
            return self.intent_axes[axis].index(category)
        except (KeyError, ValueError):
            raise DataError(f"Unknown category {category!r} for axis {axis!r}")


def default_schema() -> LabelSchema:
    return LabelSchema(slot_labels=list(DEFAULT_SLOT_LABELS), intent_axes=DEFAULT_INTENT_AXES)


def load_schema(path: str | Path) -> LabelSchema:
    """
    Load a label schema from a JSON file

    Args:
        path: JSON file with "slot_labels" and "intent_axes"

    Returns:
        LabelSchema: The validated schema

    Raises:
        DataError: If the file is not valid JSON or violates schema invariants
    """
    try:
        with open(path, "r", encoding="utf-8") as f:
            return LabelSchema.model_validate(json.load(f))
    except json.JSONDecodeError as e:
        raise DataError(f"Schema file {path} is not valid JSON: {e}")
    except ValidationError as e:
        raise DataError(f"Invalid schema in {path}: {e.errors()[0]['msg']}")
