import json
import os
from pathlib import Path
from typing import Dict, Iterable, Optional

import requests
from loguru import logger
from tenacity import retry, retry_if_exception_type, stop_after_attempt, wait_exponential

from src.paraphraser.base import TranslationBackend
from src.utils.errors import BackendError, ConfigError

ENDPOINT_ENV = "NLU_FORGE_TRANSLATE_URL"
API_KEY_ENV = "NLU_FORGE_TRANSLATE_KEY"


class IdentityBackend(TranslationBackend):
    """Returns its input unchanged; every pivot round trip is a no-op"""

    def translate(self, text: str, source_lang: str, target_lang: str) -> str:
        return text


class SynonymMockBackend(TranslationBackend):
    """
    Offline backend driven by a synonym table

    The outbound leg returns the text unchanged; the return leg (into
    `source_lang`) applies every {phrase: replacement} pair left to right.
    """

    def __init__(
        self,
        synonyms: Dict[str, str],
        source_lang: str = "fr",
        failing_langs: Iterable[str] = (),
    ):
        self.synonyms = dict(synonyms)
        self.source_lang = source_lang
        self.failing_langs = set(failing_langs)

    @classmethod
    def from_file(cls, path: str | Path, source_lang: str = "fr") -> "SynonymMockBackend":
        with open(path, "r", encoding="utf-8") as f:
            return cls(json.load(f), source_lang=source_lang)

    def translate(self, text: str, source_lang: str, target_lang: str) -> str:
        if source_lang in self.failing_langs or target_lang in self.failing_langs:
            raise BackendError(f"mock backend refuses {source_lang}->{target_lang}")
        if target_lang != self.source_lang:
            return text
        for phrase, replacement in self.synonyms.items():
            text = text.replace(phrase, replacement)
        return text


class _TransientError(Exception):
    pass


class HttpTranslationBackend(TranslationBackend):
    """
    JSON-over-HTTP translation client

    POST {"q", "source", "target"} -> {"translatedText"}. Connection errors and
    5xx answers are retried; any remaining 4xx/5xx is a backend failure.
    """

    concurrent = True

    def __init__(self, endpoint: str, api_key: Optional[str] = None, timeout: float = 10.0):
        if not endpoint:
            raise ConfigError(f"Translation endpoint not set. Please set {ENDPOINT_ENV}")
        self.endpoint = endpoint
        self.api_key = api_key
        self.timeout = timeout

    @retry(
        retry=retry_if_exception_type(_TransientError),
        stop=stop_after_attempt(3),
        wait=wait_exponential(multiplier=0.5, max=8),
        reraise=True,
    )
    def _post(self, payload: dict) -> dict:
        try:
            response = requests.post(self.endpoint, json=payload, timeout=self.timeout)
        except (requests.ConnectionError, requests.Timeout) as e:
            raise _TransientError(str(e))

        if response.status_code >= 500:
            raise _TransientError(f"HTTP {response.status_code}")
        if response.status_code >= 400:
            raise BackendError(f"HTTP {response.status_code}: {response.text[:200]}")
        return response.json()

    def translate(self, text: str, source_lang: str, target_lang: str) -> str:
        payload = {"q": text, "source": source_lang, "target": target_lang, "format": "text"}
        if self.api_key:
            payload["api_key"] = self.api_key

        try:
            answer = self._post(payload)
        except _TransientError as e:
            raise BackendError(f"Translation service unavailable: {e}")
        except ValueError as e:
            raise BackendError(f"Translation service returned invalid JSON: {e}")

        if not isinstance(answer, dict) or "translatedText" not in answer:
            raise BackendError("Translation service answer has no 'translatedText'")
        return answer["translatedText"]


def build_backend(
    kind: str,
    synonyms_path: Optional[str | Path] = None,
    timeout: float = 10.0,
    source_lang: str = "fr",
) -> TranslationBackend:
    """
    Create the configured translation backend

    Args:
        kind: "identity", "mock" or "http"
        synonyms_path: Synonym table for the mock backend
        timeout: Per-call timeout of the HTTP backend in seconds
        source_lang: Language the mock backend rewrites on the return leg

    Returns:
        TranslationBackend: The backend; HTTP endpoint and key come from the environment
    """
    if kind == "identity":
        return IdentityBackend()
    if kind == "mock":
        if not synonyms_path:
            raise ConfigError("Mock translation backend needs a synonym table")
        return SynonymMockBackend.from_file(synonyms_path, source_lang=source_lang)
    if kind == "http":
        logger.debug(f"Using HTTP translation backend from ${ENDPOINT_ENV}")
        return HttpTranslationBackend(
            endpoint=os.getenv(ENDPOINT_ENV, ""),
            api_key=os.getenv(API_KEY_ENV),
            timeout=timeout,
        )
    raise ConfigError(f"Unknown translation backend: {kind}")
