import pytest
import requests

from src.generator.pack import parse_pack
from src.paraphraser.backends import (
    ENDPOINT_ENV,
    HttpTranslationBackend,
    IdentityBackend,
    SynonymMockBackend,
    build_backend,
)
from src.paraphraser.base import TranslationBackend
from src.paraphraser.pivot import (
    PivotConfig,
    paraphrase_pack,
    pivot_translate,
    protect_slots,
    sentinels_intact,
    unprotect_slots,
)
from src.utils.errors import BackendError, ConfigError, DataError
from tests.conftest import DATA_DIR

POOL = ["de", "en", "es", "it"]


class DroppingBackend(TranslationBackend):
    """Loses every placeholder sentinel on the way back"""

    def translate(self, text, source_lang, target_lang):
        return "quelque chose de nouveau" if target_lang == "fr" else text


class FakeResponse:
    def __init__(self, status_code, payload=None):
        self.status_code = status_code
        self.payload = payload
        self.text = str(payload)

    def json(self):
        return self.payload


def test_protect_and_unprotect_slots():
    masked, mask_map = protect_slots("depuis <date|duration> pour le <lab> ?")

    assert masked == "depuis XSLOT0 pour le XSLOT1 ?"
    assert mask_map == {"XSLOT0": "<date|duration>", "XSLOT1": "<lab>"}
    assert unprotect_slots(masked, mask_map) == "depuis <date|duration> pour le <lab> ?"
    assert sentinels_intact(masked, mask_map)
    assert not sentinels_intact("depuis XSLOT0 ?", mask_map)
    assert not sentinels_intact(masked + " XSLOT1", mask_map)


@pytest.mark.parametrize("text", ["le <a <b>>", "le <lab", "le lab> ?"])
def test_protect_slots_rejects_unbalanced_brackets(text):
    with pytest.raises(DataError):
        protect_slots(text)


def test_mock_backend_rewrites_on_return_leg():
    backend = SynonymMockBackend({"le patient": "le malade"})

    assert backend.translate("le patient XSLOT0", "fr", "de") == "le patient XSLOT0"
    assert backend.translate("le patient XSLOT0", "de", "fr") == "le malade XSLOT0"
    assert pivot_translate("le patient XSLOT0", "de", backend) == "le malade XSLOT0"


def test_pivot_translate_carries_the_failing_language():
    backend = SynonymMockBackend({}, failing_langs=["ja"])

    with pytest.raises(BackendError) as excinfo:
        pivot_translate("texte", "ja", backend)
    assert excinfo.value.pivot_lang == "ja"


def test_pivot_config_checks_pool():
    with pytest.raises(ValueError):
        PivotConfig(seed=0, language_pool=["fr", "de"], n_languages=1)
    with pytest.raises(ValueError):
        PivotConfig(seed=0, language_pool=POOL, n_languages=5)


def test_paraphrase_pack_adds_inheriting_templates(small_pack, schema):
    """Paraphrases keep their placeholders and inherit intents from their source"""
    backend = SynonymMockBackend({"quel est": "quelle est", "depuis": "à partir de"})
    config = PivotConfig(seed=0, n_languages=3, language_pool=POOL)
    result = paraphrase_pack(small_pack, config, backend, schema)

    assert result.cores[: len(small_pack.cores)] == small_pack.cores
    assert result.lab_lexicon == small_pack.lab_lexicon

    new_cores = result.cores[len(small_pack.cores):]
    assert [c.id for c in new_cores] == ["c1-pp0"]
    paraphrase = new_cores[0]
    assert paraphrase.text == "quelle est le dernier <lab> ?"
    assert paraphrase.intents == small_pack.cores[0].intents
    assert paraphrase.source_id == "c1"
    assert paraphrase.paraphrase_lang in POOL

    new_modifiers = result.modifiers[len(small_pack.modifiers):]
    assert [(m.id, m.text, m.time_constraint) for m in new_modifiers] == [
        ("m1-pp0", "à partir de <duration>", "number")
    ]


def test_paraphrase_pack_is_deterministic(small_pack):
    backend = SynonymMockBackend.from_file(DATA_DIR / "mock_synonyms.json")
    config = PivotConfig(seed=5, n_languages=2, language_pool=POOL)

    assert paraphrase_pack(small_pack, config, backend) == paraphrase_pack(small_pack, config, backend)


def test_paraphrase_pack_skips_unusable_round_trips(small_pack):
    config = PivotConfig(seed=0, n_languages=2, language_pool=POOL)

    # Identity round trips give nothing new
    assert paraphrase_pack(small_pack, config, IdentityBackend()) == small_pack
    # Lost placeholders are discarded
    assert paraphrase_pack(small_pack, config, DroppingBackend()) == small_pack
    # Failing pivots leave the templates unchanged instead of aborting
    failing = SynonymMockBackend({"quel": "lequel"}, failing_langs=POOL)
    assert paraphrase_pack(small_pack, config, failing) == small_pack


def test_http_backend_retries_server_errors(monkeypatch):
    answers = [FakeResponse(503), FakeResponse(200, {"translatedText": "bonjour"})]
    calls = []

    def fake_post(url, json, timeout):
        calls.append(json)
        return answers.pop(0)

    monkeypatch.setattr(requests, "post", fake_post)
    backend = HttpTranslationBackend("http://translate.test/translate", api_key="secret")

    assert backend.translate("hello", "en", "fr") == "bonjour"
    assert len(calls) == 2
    assert calls[0] == {"q": "hello", "source": "en", "target": "fr", "format": "text", "api_key": "secret"}


@pytest.mark.parametrize(
    "response",
    [FakeResponse(400, {"error": "bad language"}), FakeResponse(200, {"unexpected": True})],
)
def test_http_backend_reports_failures(monkeypatch, response):
    monkeypatch.setattr(requests, "post", lambda url, json, timeout: response)
    backend = HttpTranslationBackend("http://translate.test/translate")

    with pytest.raises(BackendError):
        backend.translate("hello", "en", "fr")


def test_build_backend(monkeypatch):
    assert isinstance(build_backend("identity"), IdentityBackend)
    assert isinstance(build_backend("mock", synonyms_path=DATA_DIR / "mock_synonyms.json"), SynonymMockBackend)

    monkeypatch.delenv(ENDPOINT_ENV, raising=False)
    for kind, kwargs in (("http", {}), ("mock", {}), ("carrier-pigeon", {})):
        with pytest.raises(ConfigError):
            build_backend(kind, **kwargs)

    monkeypatch.setenv(ENDPOINT_ENV, "http://translate.test/translate")
    assert isinstance(build_backend("http"), HttpTranslationBackend)


def test_paraphrase_pack_doubles_a_two_core_pack(small_pack, schema):
    pack = small_pack.model_copy(update={"cores": small_pack.cores[:2]})
    backend = SynonymMockBackend({"dernier": "plus récent", "normal": "habituel"})
    result = paraphrase_pack(pack, PivotConfig(seed=1, n_languages=2, language_pool=POOL), backend, schema)

    assert len(result.cores) == 4
    assert [c.text for c in result.cores[2:]] == ["quel est le plus récent <lab> ?", "le <lab> est-il habituel ?"]


def test_bundled_synonyms_paraphrase_the_sample_pack(schema):
    pack = parse_pack(DATA_DIR / "sample_pack.json", schema)
    backend = SynonymMockBackend.from_file(DATA_DIR / "mock_synonyms.json")
    result = paraphrase_pack(pack, PivotConfig(seed=13, n_languages=2), backend, schema)

    texts = {t.id: t.text for t in result.cores + result.modifiers}
    assert texts["c01-pp0"] == "quelle est la valeur du dernier <lab> ?"
    assert texts["m05-pp0"] == "antérieurement au <date>"
    assert all(t.source_id for t in result.cores[len(pack.cores):])
