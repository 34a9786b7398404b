import re
from typing import List

# Alternatives are tried in order: elided article/pronoun ("l'", "qu'"),
# digit/slash runs ("27/03/2015"), words, then any single punctuation mark.
_TOKEN_RE = re.compile(r"[^\W\d_]+'|\d+(?:/\d+)+|\w+|[^\w\s]")

_APOSTROPHES = str.maketrans({"’": "'", "ʼ": "'", "`": "'"})


def tokenize(text: str) -> List[str]:
    """
    Split French text into lowercased tokens

    Elided forms keep their apostrophe ("l'hémoglobine" -> ["l'", "hémoglobine"])
    and dates written with slashes stay in one token.
    """
    if not text:
        return []
    return _TOKEN_RE.findall(text.lower().translate(_APOSTROPHES))


def normalize(text: str) -> str:
    """Tokenize and re-join with single spaces"""
    return " ".join(tokenize(text))
