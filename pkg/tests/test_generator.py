import numpy as np
import pytest

from src.dataset.bio import is_bio_valid
from src.dataset.io import dumps_corpus
from src.dataset.tokenize import normalize, tokenize
from src.generator.dates import parse_date, synth_date
from src.generator.generate import generate, instantiate, split_pack
from src.generator.pack import (
    CoreTemplate,
    ModifierTemplate,
    TemplatePack,
    parse_pack,
    save_pack,
    validate_pack,
)
from src.utils.config import load_config
from src.utils.errors import ConfigError, DataError
from tests.conftest import DATA_DIR, REPO_ROOT

INTENTS = {"result_type": "value", "interpretation": "value", "time": "last"}


def test_bundled_pack_is_valid(schema):
    pack = parse_pack(DATA_DIR / "sample_pack.json", schema)

    assert len(pack.cores) >= 20
    assert len(pack.modifiers) >= 5
    assert len(pack.lab_lexicon) >= 50
    assert len(set(pack.lab_lexicon)) == len(pack.lab_lexicon)


@pytest.mark.parametrize(
    "pack",
    [
        TemplatePack(cores=[CoreTemplate(id="c", text="le <lab> et le <lab>", intents=INTENTS)]),
        TemplatePack(cores=[CoreTemplate(id="c", text="le résultat", intents=INTENTS)]),
        TemplatePack(cores=[CoreTemplate(id="c", text="le <lab>", intents={"result_type": "value"})]),
        TemplatePack(cores=[CoreTemplate(id="c", text="le <lab>", intents={**INTENTS, "time": "soon"})]),
        TemplatePack(modifiers=[ModifierTemplate(id="m", text="hier")]),
        TemplatePack(modifiers=[ModifierTemplate(id="m", text="le <jour>")]),
        TemplatePack(modifiers=[ModifierTemplate(id="m", text="le <date>", time_constraint="week")]),
        TemplatePack(
            cores=[CoreTemplate(id="x", text="le <lab>", intents=INTENTS)],
            modifiers=[ModifierTemplate(id="x", text="le <date>")],
        ),
    ],
)
def test_validate_pack_rejects(pack, schema):
    with pytest.raises(DataError):
        validate_pack(pack, schema)


def test_save_and_parse_pack(tmp_path, small_pack, schema):
    path = save_pack(small_pack, tmp_path / "pack.json")
    assert parse_pack(path, schema) == small_pack


@pytest.mark.parametrize("seed", [0, 1, 2, 3])
def test_synth_date_kinds(seed):
    rng = np.random.default_rng(seed)

    absolute = synth_date("absolute", rng)
    assert len(absolute.tokens) == 1
    assert 2000 <= parse_date(absolute.tokens[0]).year <= 2024

    relative = synth_date("relative", rng)
    assert relative.tokens[0] == "depuis"
    assert 1 <= int(relative.tokens[1]) <= 30
    assert relative.tokens[2] in ("jours", "mois", "ans")

    span = synth_date("range", rng)
    assert span.tokens[0] == "entre" and span.tokens[2] == "et"
    assert parse_date(span.tokens[1]) <= parse_date(span.tokens[3])

    assert synth_date("event", rng).tokens == []


def test_instantiate_tags_mention_and_modifier(small_pack):
    """The modifier lands before the question mark and is tagged as one DATE span"""
    core = small_pack.cores[0]
    modifier = small_pack.modifiers[0]
    utterance = instantiate(core, modifier, "protéine C réactive", np.random.default_rng(0), "q-1")

    assert utterance.tokens[:4] == ["quel", "est", "le", "dernier"]
    assert utterance.tokens[-1] == "?"
    lab, date = utterance.spans()
    assert lab.kind == "LAB" and utterance.span_text(lab) == "protéine c réactive"
    assert date.kind == "DATE" and date.end == len(utterance.tokens) - 1
    # "depuis" is written once even though both the modifier and the date carry it
    assert utterance.tokens[date.start:date.end].count("depuis") == 1
    assert date.end - date.start == 3

    assert utterance.intents["time_constraint"] == "number"
    assert utterance.provenance.template_id == "c1"
    assert utterance.provenance.modifier_id == "m1"
    assert utterance.provenance.mention_id == "protéine C réactive"


def test_instantiate_without_modifier(small_pack):
    utterance = instantiate(small_pack.cores[2], None, "crp", np.random.default_rng(0))

    assert utterance.tokens == ["combien", "de", "crp", "ont", "été", "faits"]
    assert utterance.slot_tags == ["O", "O", "B-LAB", "O", "O", "O"]
    assert utterance.intents == {
        "result_type": "count", "interpretation": "presence", "time": "all", "time_constraint": "none",
    }


def test_instantiate_rejects_empty_mention(small_pack):
    with pytest.raises(DataError):
        instantiate(small_pack.cores[0], None, "  ", np.random.default_rng(0))


def test_generate_is_deterministic(small_pack):
    first = generate(small_pack, 50, seed=7)
    second = generate(small_pack, 50, seed=7)
    other = generate(small_pack, 50, seed=8)

    assert dumps_corpus(first) == dumps_corpus(second)
    assert dumps_corpus(first) != dumps_corpus(other)


def test_generate_produces_unique_annotated_utterances(small_pack):
    corpus = generate(small_pack, 80, seed=3)
    mentions = {normalize(m) for m in small_pack.lab_lexicon}

    assert len(corpus) == 80
    assert len({tuple(u.tokens) for u in corpus.utterances}) == 80
    for utterance in corpus.utterances:
        labs = [s for s in utterance.spans() if s.kind == "LAB"]
        assert len(labs) == 1
        assert utterance.span_text(labs[0]) in mentions
        has_date = any(s.kind == "DATE" for s in utterance.spans())
        assert has_date == (utterance.intents["time_constraint"] != "none")


def test_generate_without_modifiers_caps_count(small_pack):
    no_modifiers = small_pack.model_copy(update={"modifiers": []})

    assert len(generate(no_modifiers, 24, seed=0)) == 24
    with pytest.raises(DataError):
        generate(no_modifiers, 25, seed=0)


def test_split_pack_is_disjoint(small_pack):
    paraphrase = small_pack.cores[0].model_copy(
        update={"id": "c1-pp0", "text": "quelle est la dernière <lab> ?", "source_id": "c1", "paraphrase_lang": "de"}
    )
    pack = small_pack.model_copy(update={"cores": [*small_pack.cores, paraphrase]})
    train, dev = split_pack(pack, 0.5, 0.5, seed=4)

    train_roots = {c.source_id or c.id for c in train.cores}
    dev_roots = {c.source_id or c.id for c in dev.cores}
    assert not train_roots & dev_roots
    assert train_roots | dev_roots == {"c1", "c2", "c3", "c4"}
    assert not set(train.lab_lexicon) & set(dev.lab_lexicon)
    assert train.modifiers == dev.modifiers == pack.modifiers
    # The paraphrase follows its source template
    holder = train if "c1" in train_roots else dev
    assert "c1-pp0" in {c.id for c in holder.cores}


def test_split_pack_reference_ratios():
    pack = TemplatePack(
        cores=[CoreTemplate(id=f"c{i}", text="le <lab>", intents=INTENTS) for i in range(223)],
        lab_lexicon=[f"analyse {i}" for i in range(409)],
    )
    train, dev = split_pack(pack, 170 / 223, 336 / 409, seed=0)

    assert (len(train.cores), len(dev.cores)) == (170, 53)
    assert (len(train.lab_lexicon), len(dev.lab_lexicon)) == (336, 73)


@pytest.mark.parametrize("ratio", [0.0, 1.0, 1.5])
def test_split_pack_rejects_bad_ratio(small_pack, ratio):
    with pytest.raises(ConfigError):
        split_pack(small_pack, ratio, 0.5, seed=0)


def test_bundled_pack_generates_faithful_annotations(schema):
    pack = parse_pack(DATA_DIR / "sample_pack.json", schema)
    corpus = generate(pack, 10000, seed=13)

    assert dumps_corpus(corpus) == dumps_corpus(generate(pack, 10000, seed=13))
    assert len({tuple(u.tokens) for u in corpus.utterances}) == 10000
    for utterance in corpus.utterances:
        assert is_bio_valid(utterance.slot_tags)
        labs = [s for s in utterance.spans() if s.kind == "LAB"]
        assert len(labs) == 1
        assert utterance.tokens[labs[0].start:labs[0].end] == tokenize(utterance.provenance.mention_id)


def test_default_generation_counts_fit_the_bundled_pack(schema):
    settings = load_config(REPO_ROOT / "config" / "default.yaml").generation
    assert (settings.train_count, settings.dev_count) == (16000, 4000)

    pack = parse_pack(DATA_DIR / "sample_pack.json", schema)
    train_pack, dev_pack = split_pack(pack, settings.template_ratio, settings.mention_ratio, settings.seed)
    train = generate(train_pack, settings.train_count, settings.seed, settings.modifier_prob, id_prefix="train")
    dev = generate(dev_pack, settings.dev_count, settings.seed, settings.modifier_prob, id_prefix="dev")

    assert (len(train), len(dev)) == (16000, 4000)
    assert not {u.provenance.mention_id for u in train.utterances} & {u.provenance.mention_id for u in dev.utterances}
