import re
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from typing import Dict, List, Optional, Set, Tuple

import numpy as np
from loguru import logger
from pydantic import BaseModel, model_validator

from src.dataset.schema import LabelSchema, default_schema
from src.dataset.tokenize import normalize
from src.generator.pack import CoreTemplate, ModifierTemplate, TemplatePack, validate_pack
from src.paraphraser.base import TranslationBackend
from src.utils.errors import BackendError, DataError

SENTINEL_RE = re.compile(r"XSLOT\d+")

DEFAULT_LANGUAGE_POOL = [
    "af", "am", "ar", "az", "be", "bg", "bn", "bs", "ca", "cs",
    "cy", "da", "de", "el", "en", "eo", "es", "et", "eu", "fa",
    "fi", "ga", "gl", "gu", "ha", "hi", "hr", "hu", "hy", "id",
    "is", "it", "ja", "ka", "kk", "km", "kn", "ko", "lt", "lv",
    "mk", "ml", "mn", "mr", "ms", "mt", "ne", "nl", "no", "pl",
    "pt", "ro", "ru", "sk", "sl", "sq", "sv", "sw", "tr", "zh",
]


class PivotConfig(BaseModel):
    """How many pivot languages to draw per template, and from which pool"""

    seed: int
    n_languages: int = 10
    language_pool: List[str] = list(DEFAULT_LANGUAGE_POOL)
    source_lang: str = "fr"
    max_in_flight: int = 4

    @model_validator(mode="after")
    def _check_pool(self) -> "PivotConfig":
        if self.source_lang in self.language_pool:
            raise ValueError(f"language_pool must not contain the source language {self.source_lang!r}")
        if not 1 <= self.n_languages <= len(self.language_pool):
            raise ValueError(
                f"n_languages must be between 1 and {len(self.language_pool)}, got {self.n_languages}"
            )
        if self.max_in_flight < 1:
            raise ValueError("max_in_flight must be >= 1")
        return self


def protect_slots(template_text: str) -> Tuple[str, Dict[str, str]]:
    """
    Replace every <...> placeholder by a sentinel token XSLOTk

    Args:
        template_text: Template with placeholders

    Returns:
        Tuple[str, Dict[str, str]]: Masked text and the sentinel -> placeholder map

    Raises:
        DataError: On nested or unbalanced angle brackets
    """
    parts: List[str] = []
    mask_map: Dict[str, str] = {}
    i = 0
    while i < len(template_text):
        ch = template_text[i]
        if ch == "<":
            j = i + 1
            while j < len(template_text) and template_text[j] != ">":
                if template_text[j] == "<":
                    raise DataError(f"Nested '<' in template: {template_text!r}")
                j += 1
            if j == len(template_text):
                raise DataError(f"Unclosed placeholder in template: {template_text!r}")
            sentinel = f"XSLOT{len(mask_map)}"
            mask_map[sentinel] = template_text[i:j + 1]
            parts.append(sentinel)
            i = j + 1
        elif ch == ">":
            raise DataError(f"Unbalanced '>' in template: {template_text!r}")
        else:
            parts.append(ch)
            i += 1
    return "".join(parts), mask_map


def unprotect_slots(masked_text: str, mask_map: Dict[str, str]) -> str:
    return SENTINEL_RE.sub(lambda m: mask_map.get(m.group(0), m.group(0)), masked_text)


def sentinels_intact(text: str, mask_map: Dict[str, str]) -> bool:
    """True if every sentinel appears exactly once and no unknown one appears"""
    return Counter(SENTINEL_RE.findall(text)) == Counter(mask_map.keys())


def pivot_translate(
    text: str, pivot_lang: str, backend: TranslationBackend, source_lang: str = "fr"
) -> str:
    """
    Translate text into the pivot language and back

    Raises:
        BackendError: Carrying the pivot language and the cause
    """
    try:
        pivot_text = backend.translate(text, source_lang, pivot_lang)
        return backend.translate(pivot_text, pivot_lang, source_lang)
    except Exception as e:
        raise BackendError(f"Pivot {pivot_lang} failed: {e}", pivot_lang=pivot_lang) from e


def _clean(text: str) -> str:
    return " ".join(text.split())


def paraphrase_pack(
    pack: TemplatePack,
    config: PivotConfig,
    backend: TranslationBackend,
    schema: Optional[LabelSchema] = None,
) -> TemplatePack:
    """
    Add pivot-translation paraphrases of every core and modifier template

    For each template, `config.n_languages` pivots are drawn from the pool. Round
    trips that keep every placeholder exactly once and produce a new surface form
    are appended as templates inheriting the source's intents, with the pivot
    language recorded. Original templates are kept.

    Args:
        pack: Source pack
        config: Pivot sampling configuration
        backend: Translation backend
        schema: Schema used to re-validate the resulting pack

    Returns:
        TemplatePack: The augmented pack
    """
    rng = np.random.default_rng(config.seed)
    pool = config.language_pool
    templates: List[CoreTemplate | ModifierTemplate] = list(pack.cores) + list(pack.modifiers)

    jobs: List[Tuple[int, str, str, Dict[str, str]]] = []
    for index, template in enumerate(templates):
        masked, mask_map = protect_slots(template.text)
        chosen = rng.choice(len(pool), size=config.n_languages, replace=False)
        for pivot in sorted(pool[int(i)] for i in chosen):
            jobs.append((index, pivot, masked, mask_map))

    def _run(job) -> str | BackendError:
        _, pivot, masked, _ = job
        try:
            return pivot_translate(masked, pivot, backend, config.source_lang)
        except BackendError as e:
            return e

    if backend.concurrent and config.max_in_flight > 1:
        with ThreadPoolExecutor(max_workers=config.max_in_flight) as executor:
            results = list(executor.map(_run, jobs))
    else:
        results = [_run(job) for job in jobs]

    per_template: Dict[int, List[Tuple[str, str | BackendError, Dict[str, str]]]] = {}
    for (index, pivot, _, mask_map), result in zip(jobs, results):
        per_template.setdefault(index, []).append((pivot, result, mask_map))

    seen_surfaces: Dict[str, Set[str]] = {
        "core": {normalize(c.text) for c in pack.cores},
        "modifier": {normalize(m.text) for m in pack.modifiers},
    }
    taken_ids = {t.id for t in templates}
    new_cores: List[CoreTemplate] = []
    new_modifiers: List[ModifierTemplate] = []
    failed_templates = 0

    for index, template in enumerate(templates):
        kind = "core" if isinstance(template, CoreTemplate) else "modifier"
        candidates: Dict[str, Tuple[str, str]] = {}
        failures = 0

        for pivot, result, mask_map in per_template.get(index, []):
            if isinstance(result, BackendError):
                failures += 1
                logger.warning(f"Skipping pivot for template {template.id}: {result}")
                continue
            if not sentinels_intact(result, mask_map):
                logger.debug(f"Discarding paraphrase of {template.id} via {pivot}: placeholder lost")
                continue
            text = _clean(unprotect_slots(result, mask_map))
            surface = normalize(text)
            if surface in seen_surfaces[kind] or surface in candidates:
                continue
            candidates[surface] = (text, pivot)

        if failures and failures == len(per_template.get(index, [])):
            failed_templates += 1
            logger.warning(f"All pivots failed for template {template.id}; kept unchanged")

        number = 0
        for surface in sorted(candidates):
            text, pivot = candidates[surface]
            seen_surfaces[kind].add(surface)
            while f"{template.id}-pp{number}" in taken_ids:
                number += 1
            new_id = f"{template.id}-pp{number}"
            taken_ids.add(new_id)
            root = template.source_id or template.id
            update = {
                "id": new_id,
                "text": text,
                "source_id": root,
                "paraphrase_lang": pivot,
            }
            if kind == "core":
                new_cores.append(template.model_copy(update=update))
            else:
                new_modifiers.append(template.model_copy(update=update))

    result_pack = TemplatePack(
        cores=list(pack.cores) + new_cores,
        modifiers=list(pack.modifiers) + new_modifiers,
        lab_lexicon=list(pack.lab_lexicon),
    )
    validate_pack(result_pack, schema or default_schema())

    logger.info(
        f"Paraphrasing added {len(new_cores)} cores and {len(new_modifiers)} modifiers "
        f"({failed_templates} templates without any successful pivot)"
    )
    return result_pack
