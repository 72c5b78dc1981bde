"""ProGuard's rename sequence and checks of observed names against it.

ProGuard hands out replacement identifiers by counting in a bijective numeral
system over its alphabet: ``a .. z A .. Z aa ab .. aZ ba ..``. With
``-dontusemixedcaseclassnames`` the uppercase digits are dropped. A custom
alphabet (for instance an obfuscation dictionary of words) counts the same way
with words as digits.
"""

from __future__ import annotations

import string
from dataclasses import dataclass
from functools import lru_cache
from typing import Collection, Iterable

MIXED_CASE = "mixed_case"
LOWER_CASE = "lower_case"
CUSTOM = "custom"


@dataclass(frozen=True)
class RenameAlphabet:
    mode: str
    digits: tuple[str, ...]

    def __post_init__(self):
        object.__setattr__(self, "digits", tuple(self.digits))
        if not self.digits:
            raise ValueError("alphabet needs at least one digit")
        if len(set(self.digits)) != len(self.digits):
            raise ValueError("alphabet digits must be unique")
        if any(not d for d in self.digits):
            raise ValueError("alphabet digits must be non-empty")

    @classmethod
    def mixed_case(cls) -> "RenameAlphabet":
        return cls(MIXED_CASE, tuple(string.ascii_lowercase + string.ascii_uppercase))

    @classmethod
    def lower_case(cls) -> "RenameAlphabet":
        return cls(LOWER_CASE, tuple(string.ascii_lowercase))

    @classmethod
    def custom(cls, words: Iterable[str]) -> "RenameAlphabet":
        return cls(CUSTOM, tuple(words))

    @classmethod
    def from_mode(cls, mode: str) -> "RenameAlphabet":
        if mode == MIXED_CASE:
            return cls.mixed_case()
        if mode == LOWER_CASE:
            return cls.lower_case()
        raise ValueError(f"unknown alphabet mode {mode!r}")

    def __len__(self) -> int:
        return len(self.digits)


DEFAULT_WINDOWS_KEYWORDS = frozenset(
    {"AUX", "NUL", "CON", "PRN"}
    | {f"COM{i}" for i in range(1, 10)}
    | {f"LPT{i}" for i in range(1, 10)}
)


@dataclass(frozen=True)
class WindowsKeywordSet:
    keywords: frozenset[str] = DEFAULT_WINDOWS_KEYWORDS

    def __post_init__(self):
        object.__setattr__(self, "keywords", frozenset(k.upper() for k in self.keywords))

    def __contains__(self, name: object) -> bool:
        return isinstance(name, str) and name.upper() in self.keywords


def nth_name(alphabet: RenameAlphabet, n: int) -> str:
    """Return the ``n``-th (0-based) generated name."""
    if n < 0:
        raise ValueError("n must be non-negative")
    base = len(alphabet.digits)
    out = []
    n += 1
    while n > 0:
        n, rem = divmod(n - 1, base)
        out.append(alphabet.digits[rem])
    return "".join(reversed(out))


@lru_cache(maxsize=64)
def _prefix_list(alphabet: RenameAlphabet, k: int) -> tuple[str, ...]:
    return tuple(nth_name(alphabet, i) for i in range(k))


def generated_prefix(alphabet: RenameAlphabet, k: int) -> frozenset[str]:
    """The first ``k`` names of the sequence, as a set."""
    if k < 1:
        raise ValueError("k must be at least 1")
    return frozenset(_prefix_list(alphabet, k))


def match_scope(names: Collection[str], alphabet: RenameAlphabet) -> float:
    """Fraction of ``names`` that a fresh rename of ``len(names)`` items would produce."""
    names = set(names)
    if not names:
        raise ValueError("match_scope needs a non-empty name set")
    hits = len(names & generated_prefix(alphabet, len(names)))
    return hits / len(names)


def is_windows_keyword(name: str, keywords: WindowsKeywordSet = WindowsKeywordSet()) -> bool:
    return name in keywords


def has_uppercase_single_letter(names: Iterable[str]) -> bool:
    return any(len(n) == 1 and "A" <= n <= "Z" for n in names)
