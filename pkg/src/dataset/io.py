import json
from pathlib import Path
from typing import List, NamedTuple, Optional

from loguru import logger
from pydantic import ValidationError

from src.dataset.models import Corpus, Utterance, check_utterance
from src.dataset.schema import LabelSchema, default_schema
from src.utils.errors import DataError
from src.utils.files import atomic_write_text


def utterance_to_line(utterance: Utterance) -> str:
    return json.dumps(utterance.to_record(), sort_keys=True, ensure_ascii=False)


def dumps_corpus(corpus: Corpus) -> str:
    """Canonical JSON-lines text: sorted keys, one utterance per line, "\\n" endings"""
    return "".join(utterance_to_line(u) + "\n" for u in corpus.utterances)


def write_corpus(corpus: Corpus, path: str | Path) -> str:
    """Write a corpus as canonical JSON lines (atomically)"""
    output_path = atomic_write_text(path, dumps_corpus(corpus))
    logger.info(f"Wrote {len(corpus)} utterances to {output_path}")
    return output_path


def read_corpus(path: str | Path, schema: Optional[LabelSchema] = None) -> Corpus:
    """
    Read a JSON-lines corpus

    Args:
        path: Corpus file, one utterance object per line
        schema: Label schema to validate against (default schema if omitted)

    Returns:
        Corpus: The validated corpus

    Raises:
        DataError: On a malformed line (with its line number) or a schema
            violation (with the utterance id)
    """
    schema = schema or default_schema()
    utterances: List[Utterance] = []
    seen = set()

    with open(path, "r", encoding="utf-8") as f:
        for lineno, line in enumerate(f, 1):
            if not line.strip():
                continue
            try:
                utterance = Utterance.model_validate(json.loads(line))
            except json.JSONDecodeError as e:
                raise DataError(f"{path}:{lineno}: malformed JSON ({e.msg})")
            except ValidationError as e:
                raise DataError(f"{path}:{lineno}: invalid utterance ({e.errors()[0]['msg']})")

            check_utterance(utterance, schema)
            if utterance.id in seen:
                raise DataError(f"{path}:{lineno}: duplicate utterance id {utterance.id}")
            seen.add(utterance.id)
            utterances.append(utterance)

    logger.debug(f"Read {len(utterances)} utterances from {path}")
    return Corpus(schema=schema, utterances=utterances)


def to_conll(corpus: Corpus) -> str:
    """
    Export a corpus in CoNLL layout

    One token per line as TOKEN[<TAB>LEMMA][<TAB>POS]<TAB>TAG, with a blank line
    after every utterance.
    """
    lines: List[str] = []
    for utterance in corpus.utterances:
        for i, (token, tag) in enumerate(zip(utterance.tokens, utterance.slot_tags)):
            columns = [token]
            if utterance.lemmas is not None:
                columns.append(utterance.lemmas[i])
            if utterance.pos is not None:
                columns.append(utterance.pos[i])
            columns.append(tag)
            lines.append("\t".join(columns) + "\n")
        lines.append("\n")
    return "".join(lines)


class ConllSentence(NamedTuple):
    tokens: List[str]
    tags: List[str]
    lemmas: Optional[List[str]] = None
    pos: Optional[List[str]] = None


def parse_conll(text: str) -> List[ConllSentence]:
    """
    Parse CoNLL text written by to_conll

    Two columns are TOKEN TAG, three TOKEN LEMMA TAG, four TOKEN LEMMA POS TAG.

    Raises:
        DataError: On a line with an unsupported number of columns
    """
    sentences: List[ConllSentence] = []
    rows: List[List[str]] = []

    def _flush():
        if not rows:
            return
        width = len(rows[0])
        tokens = [r[0] for r in rows]
        tags = [r[-1] for r in rows]
        lemmas = [r[1] for r in rows] if width >= 3 else None
        pos = [r[2] for r in rows] if width == 4 else None
        sentences.append(ConllSentence(tokens, tags, lemmas, pos))
        rows.clear()

    for lineno, line in enumerate(text.split("\n"), 1):
        if not line.strip():
            _flush()
            continue
        columns = line.split("\t")
        if not 2 <= len(columns) <= 4 or (rows and len(columns) != len(rows[0])):
            raise DataError(f"CoNLL line {lineno}: unexpected column count {len(columns)}")
        rows.append(columns)
    _flush()
    return sentences
