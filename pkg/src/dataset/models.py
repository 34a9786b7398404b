from typing import Dict, Iterable, List, Optional

from pydantic import BaseModel, ConfigDict, Field, model_validator

from src.dataset.bio import SlotSpan, is_bio_valid, spans_from_bio
from src.dataset.schema import LabelSchema, default_schema
from src.utils.errors import DataError


class Provenance(BaseModel):
    """Where a generated utterance came from"""

    model_config = ConfigDict(frozen=True)

    template_id: str
    modifier_id: Optional[str] = None
    mention_id: Optional[str] = None
    paraphrase_lang: Optional[str] = None


class Utterance(BaseModel):
    """One annotated question: tokens, BIO slot tags and one category per intent axis"""

    model_config = ConfigDict(frozen=True)

    id: str
    tokens: List[str]
    slot_tags: List[str]
    intents: Dict[str, str]
    provenance: Optional[Provenance] = None
    # Externally supplied columns, never computed here
    lemmas: Optional[List[str]] = None
    pos: Optional[List[str]] = None

    @model_validator(mode="after")
    def _check_alignment(self) -> "Utterance":
        if len(self.slot_tags) != len(self.tokens):
            raise ValueError(
                f"Utterance {self.id}: {len(self.slot_tags)} tags for {len(self.tokens)} tokens"
            )
        for column in ("lemmas", "pos"):
            values = getattr(self, column)
            if values is not None and len(values) != len(self.tokens):
                raise ValueError(f"Utterance {self.id}: {column} length differs from tokens")
        try:
            valid = is_bio_valid(self.slot_tags)
        except DataError as e:
            raise ValueError(f"Utterance {self.id}: {e}")
        if not valid:
            raise ValueError(f"Utterance {self.id}: slot tags are not BIO-valid")
        return self

    def spans(self) -> List[SlotSpan]:
        return spans_from_bio(self.slot_tags, labels=None)

    def span_text(self, span: SlotSpan) -> str:
        return " ".join(self.tokens[span.start:span.end])

    def to_record(self) -> dict:
        """Plain dict in the corpus file layout"""
        return self.model_dump(exclude_none=True)


def check_utterance(utterance: Utterance, schema: LabelSchema) -> None:
    """
    Check an utterance against a label schema

    Raises:
        DataError: Naming the utterance id and the offending tag or axis
    """
    allowed = set(schema.slot_labels)
    for tag in utterance.slot_tags:
        if tag not in allowed:
            raise DataError(f"Utterance {utterance.id}: unknown slot tag {tag!r}")

    if set(utterance.intents) != set(schema.intent_axes):
        missing = sorted(set(schema.intent_axes) - set(utterance.intents))
        extra = sorted(set(utterance.intents) - set(schema.intent_axes))
        raise DataError(
            f"Utterance {utterance.id}: intent axes mismatch (missing={missing}, unexpected={extra})"
        )
    for axis, category in utterance.intents.items():
        if category not in schema.intent_axes[axis]:
            raise DataError(
                f"Utterance {utterance.id}: unknown category {category!r} for axis {axis!r}"
            )


class Corpus(BaseModel):
    """A schema plus the utterances that conform to it"""

    model_config = ConfigDict(frozen=True, populate_by_name=True)

    schema_: LabelSchema = Field(default_factory=default_schema, alias="schema")
    utterances: List[Utterance] = Field(default_factory=list)

    @model_validator(mode="after")
    def _check_utterances(self) -> "Corpus":
        seen = set()
        for utterance in self.utterances:
            if utterance.id in seen:
                raise ValueError(f"Duplicate utterance id: {utterance.id}")
            seen.add(utterance.id)
            check_utterance(utterance, self.schema_)
        return self

    @property
    def schema(self) -> LabelSchema:
        return self.schema_

    def __len__(self) -> int:
        return len(self.utterances)

    def subset(self, indices: Iterable[int]) -> "Corpus":
        return Corpus(schema=self.schema_, utterances=[self.utterances[i] for i in indices])
