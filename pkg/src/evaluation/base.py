from abc import ABC, abstractmethod
from typing import Dict, List, Optional, Sequence, Tuple

from src.crf.model import CrfModel, predict as crf_predict
from src.dataset.bio import SlotSpan
from src.neural.intents import CnnIntentClassifier, predict_intents
from src.neural.tagger import BiLstmTagger, predict as tagger_predict


class SlotPredictor(ABC):
    """Base class for anything that tags slots in a tokenized utterance"""

    @abstractmethod
    def predict_slots(
        self,
        tokens: Sequence[str],
        lemmas: Optional[Sequence[str]] = None,
        pos: Optional[Sequence[str]] = None,
    ) -> Tuple[List[str], List[SlotSpan]]:
        """
        Tag an utterance

        Args:
            tokens: Utterance tokens
            lemmas: Optional lemma column
            pos: Optional POS column

        Returns:
            Tuple[List[str], List[SlotSpan]]: BIO tags and the spans they describe
        """
        pass


class IntentPredictor(ABC):
    """Base class for per-axis intent classifiers"""

    @abstractmethod
    def predict_intents(self, tokens: Sequence[str]) -> Dict[str, str]:
        """
        Classify an utterance

        Args:
            tokens: Utterance tokens

        Returns:
            Dict[str, str]: One category per intent axis
        """
        pass


class CrfSlotPredictor(SlotPredictor):
    def __init__(self, model: CrfModel):
        self.model = model

    def predict_slots(self, tokens, lemmas=None, pos=None):
        return crf_predict(self.model, tokens, lemmas, pos)


class NeuralSlotPredictor(SlotPredictor):
    def __init__(self, model: BiLstmTagger):
        self.model = model

    def predict_slots(self, tokens, lemmas=None, pos=None):
        return tagger_predict(self.model, tokens)


class CnnIntentPredictor(IntentPredictor):
    def __init__(self, model: CnnIntentClassifier):
        self.model = model

    def predict_intents(self, tokens):
        return predict_intents(self.model, tokens)
