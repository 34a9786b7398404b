from pathlib import Path

import pytest
import yaml

from src.dataset.models import Corpus, Utterance
from src.dataset.schema import default_schema
from src.generator.generate import generate
from src.generator.pack import CoreTemplate, ModifierTemplate, TemplatePack

REPO_ROOT = Path(__file__).resolve().parent.parent
DATA_DIR = REPO_ROOT / "data"
EXAMPLE_DATA = Path(__file__).resolve().parent / "example-data"


@pytest.fixture
def schema():
    return default_schema()


@pytest.fixture
def small_pack():
    """A hand-written pack small enough to reason about"""
    return TemplatePack(
        cores=[
            CoreTemplate(
                id="c1",
                text="quel est le dernier <lab> ?",
                intents={"result_type": "value", "interpretation": "value", "time": "last"},
            ),
            CoreTemplate(
                id="c2",
                text="le <lab> est-il normal ?",
                intents={"result_type": "value", "interpretation": "normality", "time": "last"},
            ),
            CoreTemplate(
                id="c3",
                text="combien de <lab> ont été faits",
                intents={"result_type": "count", "interpretation": "presence", "time": "all"},
            ),
            CoreTemplate(
                id="c4",
                text="comment évolue la <lab> ?",
                intents={"result_type": "evolution", "interpretation": "value", "time": "all"},
            ),
        ],
        modifiers=[
            ModifierTemplate(id="m1", text="depuis <duration>", time_constraint="number"),
            ModifierTemplate(id="m2", text="le <date>", time_constraint="date"),
            ModifierTemplate(id="m3", text="<range>", time_constraint="range"),
        ],
        lab_lexicon=["créatinine", "protéine C réactive", "glycémie", "hémoglobine", "crp", "ferritine"],
    )


def make_utterance(uid, tokens, tags, intents=None, **kwargs):
    intents = intents or {"result_type": "value", "interpretation": "value", "time": "last", "time_constraint": "none"}
    return Utterance(id=uid, tokens=tokens, slot_tags=tags, intents=intents, **kwargs)


@pytest.fixture
def tiny_corpus():
    """Three annotated utterances covering LAB and DATE spans"""
    return Corpus(
        utterances=[
            make_utterance(
                "u1",
                ["quel", "est", "le", "dernier", "protéine", "c", "réactive", "?"],
                ["O", "O", "O", "O", "B-LAB", "I-LAB", "I-LAB", "O"],
            ),
            make_utterance(
                "u2",
                ["la", "créatinine", "depuis", "3", "jours", "?"],
                ["O", "B-LAB", "B-DATE", "I-DATE", "I-DATE", "O"],
                {"result_type": "evolution", "interpretation": "value", "time": "all", "time_constraint": "number"},
            ),
            make_utterance(
                "u3",
                ["combien", "de", "glycémie"],
                ["O", "O", "B-LAB"],
                {"result_type": "count", "interpretation": "presence", "time": "all", "time_constraint": "none"},
            ),
        ]
    )


@pytest.fixture
def generated_corpora(small_pack):
    """Small train/dev corpora generated from the hand-written pack"""
    train = generate(small_pack, 60, seed=1, id_prefix="train")
    dev = generate(small_pack, 20, seed=2, id_prefix="dev")
    return train, dev


@pytest.fixture
def project_config(tmp_path):
    """
    Write a fast project configuration into tmp_path

    Returns a function taking dotted overrides and returning the config path.
    """
    def _write(**sections):
        config = {
            "paths": {
                "pack": str(DATA_DIR / "sample_pack.json"),
                "schema_file": str(DATA_DIR / "schema.json"),
                "synonyms": str(DATA_DIR / "mock_synonyms.json"),
                "paraphrased_pack": "work/paraphrased.json",
                "train_pack": "work/train_pack.json",
                "dev_pack": "work/dev_pack.json",
                "train": "work/train.jsonl",
                "dev": "work/dev.jsonl",
                "embedding_corpus": str(DATA_DIR / "sample_notes.txt"),
                "vectors": "work/notes.vec",
                "slot_model": "work/slots.json",
                "intent_model": "work/intents.json",
                "report": "work/report.json",
                "stats": "work/stats.json",
            },
            "logging": {"level": "WARNING", "log_file": None},
            "generation": {"seed": 3, "train_count": 120, "dev_count": 40},
            "pivot": {"seed": 3, "n_languages": 2},
            "translation": {"backend": "mock"},
            "embedding": {"seed": 3, "dim": 8, "epochs": 1, "bucket_count": 1000},
            "crf": {"seed": 3, "epochs": 2, "batch_size": 16},
            "tagger": {"seed": 3, "use_embeddings": False, "point": {"embedding_dim": 8, "hidden": 6, "epochs": 1}},
            "intents": {"seed": 3, "use_embeddings": False, "point": {"embedding_dim": 8, "filters": 6, "epochs": 1}},
            "search": {"seed": 3},
            "evaluation": {"seed": 3, "k": 5, "repetitions": 2},
        }
        for section, values in sections.items():
            config.setdefault(section, {}).update(values)
        path = tmp_path / "config.yaml"
        path.write_text(yaml.safe_dump(config, allow_unicode=True), encoding="utf-8")
        return path

    return _write
