"""Sleep stage vocabulary shared by the data pipeline and the models."""

from __future__ import annotations

from enum import IntEnum

from .errors import ParseError

N_STAGES = 5


class StageLabel(IntEnum):
    W = 0
    N1 = 1
    N2 = 2
    N3 = 3
    REM = 4


WAKE, N1, N2, N3, REM = StageLabel

STAGE_NAMES = ("W", "N1", "N2", "N3", "REM")

# one character per 30 s epoch in label sidecar files
STAGE_CHARS = ("W", "1", "2", "3", "R")

_CHAR_TO_STAGE = {ch: i for i, ch in enumerate(STAGE_CHARS)}


def stage_from_char(ch: str, line: int | None = None) -> int:
    try:
        return _CHAR_TO_STAGE[ch]
    except KeyError:
        where = "" if line is None else f" on line {line}"
        raise ParseError(f"unknown stage character {ch!r}{where}") from None


def stage_to_char(stage: int) -> str:
    if not 0 <= stage < N_STAGES:
        raise ValueError(f"stage index {stage} outside [0, {N_STAGES})")
    return STAGE_CHARS[stage]
