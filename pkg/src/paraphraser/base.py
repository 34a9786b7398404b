from abc import ABC, abstractmethod


class TranslationBackend(ABC):
    """Base class for machine translation services used for pivot paraphrasing"""

    # Remote backends may be called from several threads at once
    concurrent: bool = False

    @abstractmethod
    def translate(self, text: str, source_lang: str, target_lang: str) -> str:
        """
        Translate text from one language to another

        Args:
            text: Text to translate
            source_lang: Language code of the text (e.g. "fr")
            target_lang: Language code to translate into

        Returns:
            str: The translated text

        Raises:
            BackendError: If the service fails or returns an unusable answer
        """
        pass
