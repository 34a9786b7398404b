from typing import Iterable, List, Optional, Sequence

from pydantic import BaseModel, ConfigDict, model_validator

from src.dataset.schema import DEFAULT_SLOT_LABELS
from src.utils.errors import DataError


class SlotSpan(BaseModel):
    """Token span [start, end) of one slot kind"""

    model_config = ConfigDict(frozen=True)

    start: int
    end: int
    kind: str

    @model_validator(mode="after")
    def _check_bounds(self) -> "SlotSpan":
        if not 0 <= self.start < self.end:
            raise ValueError(f"Invalid span bounds ({self.start}, {self.end})")
        return self


def _split_tag(tag: str, labels: Optional[set]) -> tuple[str, str]:
    if labels is not None and tag not in labels:
        raise DataError(f"Unknown slot tag: {tag!r}")
    if tag == "O":
        return "O", ""
    prefix, _, kind = tag.partition("-")
    if prefix not in ("B", "I") or not kind:
        raise DataError(f"Unknown slot tag: {tag!r}")
    return prefix, kind


def spans_from_bio(
    tags: Sequence[str], labels: Optional[Iterable[str]] = DEFAULT_SLOT_LABELS
) -> List[SlotSpan]:
    """
    Convert a BIO tag sequence to maximal spans

    An "I-X" that does not continue a B-X/I-X span opens a new span, which repairs
    invalid sequences produced by decoders.

    Args:
        tags: Tag sequence
        labels: Allowed tags; None accepts any well-formed B-/I-/O tag

    Returns:
        List[SlotSpan]: Spans in order of appearance

    Raises:
        DataError: If a tag is not in labels
    """
    label_set = set(labels) if labels is not None else None
    spans: List[SlotSpan] = []
    start: Optional[int] = None
    kind: Optional[str] = None

    for i, tag in enumerate(tags):
        prefix, tag_kind = _split_tag(tag, label_set)
        if prefix == "I" and start is not None and tag_kind == kind:
            continue
        if start is not None:
            spans.append(SlotSpan(start=start, end=i, kind=kind))
            start, kind = None, None
        if prefix in ("B", "I"):
            start, kind = i, tag_kind

    if start is not None:
        spans.append(SlotSpan(start=start, end=len(tags), kind=kind))
    return spans


def bio_from_spans(length: int, spans: Iterable[SlotSpan]) -> List[str]:
    tags = ["O"] * length
    for span in spans:
        tags[span.start] = f"B-{span.kind}"
        for i in range(span.start + 1, span.end):
            tags[i] = f"I-{span.kind}"
    return tags


def is_bio_valid(tags: Sequence[str]) -> bool:
    """True if no I-X follows O, the sequence start, or a tag of another kind"""
    previous_kind: Optional[str] = None
    for tag in tags:
        prefix, kind = _split_tag(tag, None)
        if prefix == "I" and previous_kind != kind:
            return False
        previous_kind = kind if prefix in ("B", "I") else None
    return True
