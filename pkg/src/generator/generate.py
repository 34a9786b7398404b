from typing import Dict, List, Optional, Tuple

import numpy as np
from loguru import logger

from src.dataset.models import Corpus, Provenance, Utterance
from src.dataset.schema import LabelSchema, default_schema
from src.dataset.tokenize import tokenize
from src.generator.dates import synth_date
from src.generator.pack import LAB_PLACEHOLDER, CoreTemplate, ModifierTemplate, TemplatePack
from src.utils.errors import ConfigError, DataError


def _render_modifier(modifier: ModifierTemplate, rng: np.random.Generator) -> List[str]:
    kinds = modifier.date_kinds
    kind = kinds[int(rng.integers(len(kinds)))] if len(kinds) > 1 else kinds[0]
    date = synth_date(kind, rng)

    before, after = modifier.text.split(modifier.placeholder, 1)
    head = tokenize(before)
    date_tokens = list(date.tokens)
    # A head word already written in the modifier ("depuis <duration>") is not repeated.
    if head and date_tokens and head[-1] == date_tokens[0]:
        date_tokens = date_tokens[1:]
    return head + date_tokens + tokenize(after)


def instantiate(
    core: CoreTemplate,
    modifier: Optional[ModifierTemplate],
    mention: str,
    rng: np.random.Generator,
    utterance_id: str = "utt-000000",
) -> Utterance:
    """
    Build one annotated utterance from a core, an optional modifier and a mention

    The mention tokens are tagged B-LAB/I-LAB and every token of the rendered
    modifier (head word included) is tagged B-DATE/I-DATE. The modifier goes
    before a trailing question mark, otherwise at the end.

    Raises:
        DataError: If the mention has no tokens
    """
    mention_tokens = tokenize(mention)
    if not mention_tokens:
        raise DataError(f"Lab mention {mention!r} has no tokens")

    before, after = core.text.split(LAB_PLACEHOLDER, 1)
    prefix, suffix = tokenize(before), tokenize(after)
    tokens = prefix + mention_tokens + suffix
    tags = (
        ["O"] * len(prefix)
        + ["B-LAB"] + ["I-LAB"] * (len(mention_tokens) - 1)
        + ["O"] * len(suffix)
    )

    intents = dict(core.intents)
    intents["time_constraint"] = "none"

    if modifier is not None:
        modifier_tokens = _render_modifier(modifier, rng)
        modifier_tags = ["B-DATE"] + ["I-DATE"] * (len(modifier_tokens) - 1) if modifier_tokens else []
        at = len(tokens) - 1 if tokens and tokens[-1] == "?" else len(tokens)
        tokens = tokens[:at] + modifier_tokens + tokens[at:]
        tags = tags[:at] + modifier_tags + tags[at:]
        intents["time_constraint"] = modifier.time_constraint

    return Utterance(
        id=utterance_id,
        tokens=tokens,
        slot_tags=tags,
        intents=intents,
        provenance=Provenance(
            template_id=core.id,
            modifier_id=modifier.id if modifier else None,
            mention_id=mention,
            paraphrase_lang=core.paraphrase_lang or (modifier.paraphrase_lang if modifier else None),
        ),
    )


def generate(
    pack: TemplatePack,
    count: int,
    seed: int,
    modifier_prob: float = 0.5,
    schema: Optional[LabelSchema] = None,
    id_prefix: str = "utt",
    attempts_per_utterance: int = 50,
) -> Corpus:
    """
    Generate a corpus of unique utterances from a template pack

    Each attempt draws a core, a lab mention and, with probability modifier_prob,
    one temporal modifier. Utterances whose token sequence was already produced
    are discarded and redrawn.

    Args:
        pack: Template pack
        count: Number of utterances to produce
        seed: Seed of the random generator; the output depends only on (pack, count, seed)
        modifier_prob: Probability of attaching a modifier
        schema: Label schema of the resulting corpus
        id_prefix: Prefix of utterance ids
        attempts_per_utterance: Retry budget factor

    Returns:
        Corpus: Exactly `count` utterances

    Raises:
        DataError: If the pack is empty or `count` unique utterances cannot be reached
    """
    if count < 1:
        raise ConfigError(f"count must be >= 1, got {count}")
    if not pack.cores or not pack.lab_lexicon:
        raise DataError("Template pack needs at least one core template and one lab mention")

    if not pack.modifiers or modifier_prob <= 0:
        achievable = len(pack.cores) * len(pack.lab_lexicon)
        if count > achievable:
            raise DataError(
                f"Cannot generate {count} unique utterances: at most {achievable} "
                f"are possible without modifiers"
            )

    rng = np.random.default_rng(seed)
    budget = max(1000, attempts_per_utterance * count)
    utterances: List[Utterance] = []
    seen = set()
    attempts = 0

    while len(utterances) < count and attempts < budget:
        attempts += 1
        core = pack.cores[int(rng.integers(len(pack.cores)))]
        mention = pack.lab_lexicon[int(rng.integers(len(pack.lab_lexicon)))]
        use_modifier = bool(pack.modifiers) and rng.random() < modifier_prob
        modifier = pack.modifiers[int(rng.integers(len(pack.modifiers)))] if use_modifier else None

        utterance = instantiate(core, modifier, mention, rng, f"{id_prefix}-{len(utterances):06d}")
        key = tuple(utterance.tokens)
        if key in seen:
            continue
        seen.add(key)
        utterances.append(utterance)

    if len(utterances) < count:
        raise DataError(
            f"Could only generate {len(utterances)} unique utterances out of {count} "
            f"requested within {budget} attempts"
        )

    logger.info(f"Generated {count} unique utterances in {attempts} attempts (seed={seed})")
    return Corpus(schema=schema or default_schema(), utterances=utterances)


def _partition(n: int, ratio: float, rng: np.random.Generator, what: str) -> Tuple[List[int], List[int]]:
    n_first = int(round(ratio * n))
    if n_first <= 0 or n_first >= n:
        raise DataError(f"Splitting {n} {what} at ratio {ratio} would leave one half empty")
    order = rng.permutation(n)
    first = sorted(int(i) for i in order[:n_first])
    second = sorted(int(i) for i in order[n_first:])
    return first, second


def split_pack(
    pack: TemplatePack, template_ratio: float, mention_ratio: float, seed: int
) -> Tuple[TemplatePack, TemplatePack]:
    """
    Split core templates and lab mentions into two disjoint packs

    The pack is paraphrased once, before the split. `template_ratio` counts source
    templates and every paraphrase follows its source into the same half, so no
    rewording of a dev template reaches the train pack. Modifiers are shared by
    both halves.

    Args:
        pack: Pack to split
        template_ratio: Fraction of core templates in the first pack
        mention_ratio: Fraction of lab mentions in the first pack
        seed: Seed of the shuffles

    Returns:
        Tuple[TemplatePack, TemplatePack]: (train pack, dev pack)

    Raises:
        ConfigError: If a ratio is outside (0, 1)
        DataError: If a half would be empty
    """
    for name, ratio in (("template_ratio", template_ratio), ("mention_ratio", mention_ratio)):
        if not 0 < ratio < 1:
            raise ConfigError(f"{name} must be in (0, 1), got {ratio}")

    rng = np.random.default_rng(seed)

    groups: Dict[str, List[CoreTemplate]] = {}
    for core in pack.cores:
        groups.setdefault(core.source_id or core.id, []).append(core)
    roots = list(groups)
    first_roots, second_roots = _partition(len(roots), template_ratio, rng, "core templates")

    mentions = list(dict.fromkeys(pack.lab_lexicon))
    first_mentions, second_mentions = _partition(len(mentions), mention_ratio, rng, "lab mentions")

    def _half(root_indices: List[int], mention_indices: List[int]) -> TemplatePack:
        kept = {roots[i] for i in root_indices}
        return TemplatePack(
            cores=[c for c in pack.cores if (c.source_id or c.id) in kept],
            modifiers=list(pack.modifiers),
            lab_lexicon=[mentions[i] for i in mention_indices],
        )

    train, dev = _half(first_roots, first_mentions), _half(second_roots, second_mentions)
    logger.info(
        f"Split pack: train {len(train.cores)} cores / {len(train.lab_lexicon)} mentions, "
        f"dev {len(dev.cores)} cores / {len(dev.lab_lexicon)} mentions"
    )
    return train, dev
