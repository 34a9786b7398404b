from datetime import date, datetime
from typing import List, Literal

import numpy as np
from pydantic import BaseModel, ConfigDict, field_validator

DateKind = Literal["absolute", "relative", "range", "event"]

DATE_FORMAT = "%d/%m/%Y"
FIRST_DAY = date(2000, 1, 1).toordinal()
LAST_DAY = date(2024, 12, 31).toordinal()
RELATIVE_UNITS = ("jours", "mois", "ans")
MAX_DATE_TOKENS = 6


class DateExpr(BaseModel):
    """Synthetic temporal expression inserted into a modifier"""

    model_config = ConfigDict(frozen=True)

    tokens: List[str]
    kind: DateKind

    @field_validator("tokens")
    @classmethod
    def _check_length(cls, tokens: List[str]) -> List[str]:
        if len(tokens) > MAX_DATE_TOKENS:
            raise ValueError(f"Date expression has {len(tokens)} tokens (max {MAX_DATE_TOKENS})")
        return tokens


def parse_date(token: str) -> date:
    return datetime.strptime(token, DATE_FORMAT).date()


def _random_day(rng: np.random.Generator) -> int:
    return int(rng.integers(FIRST_DAY, LAST_DAY + 1))


def _format_day(ordinal: int) -> str:
    return date.fromordinal(ordinal).strftime(DATE_FORMAT)


def synth_date(kind: DateKind, rng: np.random.Generator) -> DateExpr:
    """
    Draw a date expression of the given kind

    absolute -> ["27/03/2015"], relative -> ["depuis", "3", "jours"],
    range -> ["entre", d1, "et", d2] with d1 <= d2, event -> [].
    """
    if kind == "absolute":
        tokens = [_format_day(_random_day(rng))]
    elif kind == "relative":
        amount = int(rng.integers(1, 31))
        unit = RELATIVE_UNITS[int(rng.integers(len(RELATIVE_UNITS)))]
        tokens = ["depuis", str(amount), unit]
    elif kind == "range":
        first, last = sorted((_random_day(rng), _random_day(rng)))
        tokens = ["entre", _format_day(first), "et", _format_day(last)]
    elif kind == "event":
        tokens = []
    else:
        raise ValueError(f"Unknown date kind: {kind}")
    return DateExpr(tokens=tokens, kind=kind)
