"""Phone labels, lexicon lookup and context expansion.

Label files are line-oriented text, one phone per line, either
"phoneme" or "start end phoneme" with times in 100 ns units.  Lexicon
files map words to phone strings.  Context expansion produces the
triphone/quinphone units the acoustic models are keyed by.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Iterable, Optional, Sequence

from .errors import (
    EmptyLabelFile,
    EmptySequence,
    MalformedLine,
    NonMonotonicTimes,
    NotFound,
    OutOfVocabulary,
)

TIME_UNITS_PER_SECOND = 10_000_000  # 100 ns ticks

SIL = "sil"
BOUNDARY = "#"

# ARPAbet-style inventory plus the silence symbol.
DEFAULT_PHONE_SET = frozenset(
    """
    aa ae ah ao aw ay b ch d dh eh er ey f g hh ih iy jh k l m n ng ow oy
    p r s sh t th uh uw v w y z zh
    """.split()
) | {SIL}


@dataclass(frozen=True)
class PhoneLabel:
    phoneme: str
    start: Optional[int] = None  # 100 ns units
    end: Optional[int] = None

    def __post_init__(self):
        if (self.start is None) != (self.end is None):
            raise ValueError("start and end must be given together")
        if self.start is not None and not self.start < self.end:
            raise ValueError("require start < end")

    @property
    def timed(self) -> bool:
        return self.start is not None


@dataclass(frozen=True)
class ContextLabel:
    """A phone with two neighbors on each side; '#' pads the edges.

    position_in_word / word_length describe the silence-delimited stretch
    the phone sits in.  They are descriptive context only and do not enter
    the model key (desk-scale corpora cannot estimate that split).
    """

    left2: str
    left1: str
    center: str
    right1: str
    right2: str
    position_in_word: int = 0
    word_length: int = 1

    def __post_init__(self):
        if self.center == BOUNDARY:
            raise ValueError("center phone cannot be the boundary symbol")

    def key(self) -> tuple:
        return (self.left2, self.left1, self.center, self.right1, self.right2)


class Lexicon:
    """Case-insensitive word -> phone-sequence map."""

    def __init__(self, entries: dict[str, Sequence[str]], phone_set=DEFAULT_PHONE_SET):
        self._entries = {}
        for word, phones in entries.items():
            phones = tuple(phones)
            if not phones:
                raise ValueError(f"empty pronunciation for {word!r}")
            bad = [p for p in phones if p not in phone_set]
            if bad:
                raise ValueError(f"{word!r} uses unknown phones {bad}")
            self._entries[word.lower()] = phones
        self.phone_set = phone_set

    def __len__(self) -> int:
        return len(self._entries)

    def __contains__(self, word: str) -> bool:
        return word.lower() in self._entries

    def lookup(self, word: str) -> tuple:
        try:
            return self._entries[word.lower()]
        except KeyError:
            raise OutOfVocabulary(word) from None

    @classmethod
    def from_file(cls, path, phone_set=DEFAULT_PHONE_SET) -> "Lexicon":
        """Parse "word ph1 ph2 ..." lines; '#' starts a comment."""
        entries = {}
        try:
            text = open(path, encoding="utf-8").read()
        except FileNotFoundError as exc:
            raise NotFound(str(path)) from exc
        for number, line in enumerate(text.splitlines(), start=1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            parts = line.split()
            if len(parts) < 2:
                raise MalformedLine(number, line)
            entries[parts[0]] = parts[1:]
        return cls(entries, phone_set)


def parse_label_file(path) -> list[PhoneLabel]:
    """Read a label file; rejects empty files and non-monotonic spans."""
    try:
        text = open(path, encoding="utf-8").read()
    except FileNotFoundError as exc:
        raise NotFound(str(path)) from exc
    return parse_label_text(text)


def parse_label_text(text: str) -> list[PhoneLabel]:
    labels: list[PhoneLabel] = []
    previous_end = None
    for number, line in enumerate(text.splitlines(), start=1):
        line = line.strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) == 1:
            labels.append(PhoneLabel(parts[0]))
            continue
        if len(parts) != 3:
            raise MalformedLine(number, line)
        try:
            start, end = int(parts[0]), int(parts[1])
        except ValueError:
            raise MalformedLine(number, line) from None
        if start >= end:
            raise NonMonotonicTimes(f"line {number}: span [{start}, {end})")
        if previous_end is not None and start < previous_end:
            raise NonMonotonicTimes(f"line {number}: overlaps previous label")
        previous_end = end
        labels.append(PhoneLabel(parts[2], start, end))
    if not labels:
        raise EmptyLabelFile("no labels found")
    return labels


def format_labels(labels: Iterable[PhoneLabel]) -> str:
    lines = []
    for lab in labels:
        if lab.timed:
            lines.append(f"{lab.start} {lab.end} {lab.phoneme}")
        else:
            lines.append(lab.phoneme)
    return "\n".join(lines) + "\n"


def write_label_file(labels: Iterable[PhoneLabel], path) -> None:
    with open(path, "w", encoding="utf-8") as handle:
        handle.write(format_labels(labels))


_PUNCT = re.compile(r"[^\w']+", re.UNICODE)


def text_to_phonemes(text: str, lex: Lexicon) -> list[PhoneLabel]:
    """Expand text through the lexicon; silence wraps the utterance."""
    words = [w for w in _PUNCT.split(text.lower()) if w]
    phones = [SIL]
    for word in words:
        phones.extend(lex.lookup(word))
    phones.append(SIL)
    return [PhoneLabel(p) for p in phones]


def expand_context(phones: Sequence[PhoneLabel], width: str = "quinphone") -> list[ContextLabel]:
    """Attach neighbor context to every phone.

    width "triphone" keeps one neighbor each side (outer slots padded),
    "quinphone" keeps two.  Out-of-range neighbors become '#'.
    """
    if width not in ("triphone", "quinphone"):
        raise ValueError(f"unknown context width {width!r}")
    if not phones:
        raise EmptySequence("cannot expand an empty phone sequence")
    symbols = [p.phoneme for p in phones]

    # word spans = stretches between silence markers
    word_pos = [0] * len(symbols)
    word_len = [1] * len(symbols)
    i = 0
    while i < len(symbols):
        if symbols[i] == SIL:
            i += 1
            continue
        j = i
        while j < len(symbols) and symbols[j] != SIL:
            j += 1
        for k in range(i, j):
            word_pos[k] = k - i
            word_len[k] = j - i
        i = j

    def at(index: int) -> str:
        if 0 <= index < len(symbols):
            return symbols[index]
        return BOUNDARY

    out = []
    for i in range(len(symbols)):
        if width == "quinphone":
            l2, r2 = at(i - 2), at(i + 2)
        else:
            l2 = r2 = BOUNDARY
        out.append(
            ContextLabel(l2, at(i - 1), symbols[i], at(i + 1), r2, word_pos[i], word_len[i])
        )
    return out
