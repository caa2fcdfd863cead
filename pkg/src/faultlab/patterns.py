"""Dictionary-driven log template mining.

Messages become patterns: dictionary words stay, every other word turns into
the wildcard ``•`` and punctuation is kept verbatim.  Patterns whose skeletons
agree once each run of wildcards is collapsed to one share a meta-pattern.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from importlib import resources
from typing import Iterable

WILDCARD = "•"

# token kinds
WORD, PUNCT, WILD, SPACE = "word", "punct", "wild", "space"

Token = tuple[str, str]
_SPACE: Token = (SPACE, " ")
_WILD: Token = (WILD, WILDCARD)


def _is_word_char(ch: str) -> bool:
    return ch.isalnum() or ch == "_"


def tokenize(message: str) -> list[Token]:
    """Whitespace chunks, split further so every punctuation character is its own token.

    Chunk boundaries are kept as single space tokens.
    """
    out: list[Token] = []
    for chunk in message.split():
        if out:
            out.append(_SPACE)
        word = []
        for ch in chunk:
            if _is_word_char(ch) and ch != WILDCARD:
                word.append(ch)
                continue
            if word:
                out.append((WORD, "".join(word)))
                word = []
            out.append(_WILD if ch == WILDCARD else (PUNCT, ch))
        if word:
            out.append((WORD, "".join(word)))
    return out


def token_texts(tokens: Iterable[Token]) -> list[str]:
    """Tokens without the chunk separators, e.g. ``['blade', 'c11', '-', '8c1s3']``."""
    return [text for kind, text in tokens if kind != SPACE]


def render(tokens: Iterable[Token]) -> str:
    return "".join(text for _, text in tokens)


@dataclass
class Dictionary:
    words: dict[str, float] = field(default_factory=dict)

    def __contains__(self, word: str) -> bool:
        return word.lower() in self.words

    def weight(self, word: str) -> float:
        return self.words.get(word.lower(), 0.0)

    @classmethod
    def from_lines(cls, lines: Iterable[str]) -> "Dictionary":
        """``word`` or ``word weight`` per line; ``#`` starts a comment."""
        words: dict[str, float] = {}
        for line in lines:
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            parts = line.split()
            word = parts[0].lower()
            if not all(_is_word_char(c) for c in word):
                raise ValueError(f"dictionary entry {word!r} contains punctuation")
            words[word] = float(parts[1]) if len(parts) > 1 else 1.0
        return cls(words)

    @classmethod
    def from_words(cls, words: Iterable[str]) -> "Dictionary":
        return cls.from_lines(words)

    @classmethod
    def default(cls) -> "Dictionary":
        text = resources.files("faultlab").joinpath("data/dictionary.txt").read_text(encoding="utf-8")
        return cls.from_lines(text.splitlines())


@dataclass(frozen=True)
class Pattern:
    tokens: tuple[Token, ...]

    @property
    def text(self) -> str:
        return render(self.tokens)

    def collapsed(self) -> tuple[Token, ...]:
        """Each maximal run of wildcards (separated only by spaces) becomes one wildcard."""
        out: list[Token] = []
        for tok in self.tokens:
            if tok == _WILD:
                while out and out[-1] == _SPACE and len(out) >= 2 and out[-2] == _WILD:
                    out.pop()
                if out and out[-1] == _WILD:
                    continue
            out.append(tok)
        return tuple(out)

    def weight(self, dictionary: Dictionary) -> float:
        return sum(dictionary.weight(t) for k, t in self.tokens if k == WORD)


def extract_pattern(message: str, dictionary: Dictionary) -> Pattern:
    toks = []
    for kind, text in tokenize(message):
        if kind == WORD and text not in dictionary:
            toks.append(_WILD)
        else:
            toks.append((kind, text))
    return Pattern(tuple(toks))


@dataclass
class PatternCount:
    pattern: Pattern
    count: int


@dataclass
class MetaPattern:
    tokens: tuple[Token, ...]
    members: list[PatternCount]

    @property
    def text(self) -> str:
        return render(self.tokens)

    @property
    def count(self) -> int:
        return sum(m.count for m in self.members)


def count_patterns(messages: Iterable[str], dictionary: Dictionary) -> list[PatternCount]:
    """Distinct patterns with their counts, in first-seen order."""
    counts: dict[Pattern, PatternCount] = {}
    for msg in messages:
        p = extract_pattern(msg, dictionary)
        pc = counts.get(p)
        if pc is None:
            counts[p] = PatternCount(p, 1)
        else:
            pc.count += 1
    return list(counts.values())


def aggregate(patterns: Iterable[PatternCount | Pattern]) -> list[MetaPattern]:
    """Group by collapsed skeleton; sorted by total count descending, then first seen."""
    groups: dict[tuple[Token, ...], MetaPattern] = {}
    for item in patterns:
        pc = item if isinstance(item, PatternCount) else PatternCount(item, 1)
        key = pc.pattern.collapsed()
        meta = groups.get(key)
        if meta is None:
            groups[key] = MetaPattern(key, [pc])
        else:
            meta.members.append(pc)
    order = {key: i for i, key in enumerate(groups)}
    return sorted(groups.values(), key=lambda m: (-m.count, order[m.tokens]))


def sort_by_weight(metas: list[MetaPattern], dictionary: Dictionary) -> list[MetaPattern]:
    """Reorder for reports so patterns carrying significant words come first."""
    return sorted(metas, key=lambda m: -Pattern(m.tokens).weight(dictionary))
