"""Block dictionaries: which surface forms get masked, and when.

A block dictionary maps each source token to its immediate successor; when
the decoder has just generated a source token, the successor is masked for
one step so the copied phrase cannot continue. Blocked words are expanded
to their inflections and case variants, and entries whose blocked word is
closed-class are dropped (function words have few synonyms and blocking
them mostly produces broken sentences). Static blocking is the blunt
variant: every open-class source word is masked at every step.
"""

import os
import random
from dataclasses import dataclass
from typing import Callable, Iterable

from .errors import ConfigError
from .tokens import EOS, SourceSequence, Token, normalize_key

MorphologyProvider = Callable[[str], set[str]]

# function words only; punctuation stays blockable
DEFAULT_CLOSED_CLASS = frozenset("""
a about above after again against all am an and another any anybody anyone
anything are as at be because been before being below between both but by
can could did do does doing down during each either every few for from
further had has have having he her hers herself him himself his how i if
in into is it its itself just may me might more most much must my myself
neither no nobody nor not nothing now of off on once only or other our ours
ourselves out over own shall she should since so some somebody someone
something such than that the their theirs them themselves then there these
they this those through to too under until up us very was we were what when
where whether which while who whom whose why will with would yet you your
yours yourself yourselves
""".split())

_IRREGULAR_VERBS = {
    "be": ("am", "is", "are", "was", "were", "been", "being"),
    "begin": ("began", "begun"),
    "break": ("broke", "broken"),
    "bring": ("brought",),
    "buy": ("bought",),
    "catch": ("caught",),
    "choose": ("chose", "chosen"),
    "come": ("came",),
    "do": ("did", "done"),
    "draw": ("drew", "drawn"),
    "drive": ("drove", "driven"),
    "eat": ("ate", "eaten"),
    "fall": ("fell", "fallen"),
    "feel": ("felt",),
    "find": ("found",),
    "fly": ("flew", "flown"),
    "forget": ("forgot", "forgotten"),
    "get": ("got", "gotten"),
    "give": ("gave", "given"),
    "go": ("went", "gone"),
    "grow": ("grew", "grown"),
    "have": ("had",),
    "hear": ("heard",),
    "hold": ("held",),
    "keep": ("kept",),
    "know": ("knew", "known"),
    "leave": ("left",),
    "lose": ("lost",),
    "make": ("made",),
    "meet": ("met",),
    "pay": ("paid",),
    "ride": ("rode", "ridden"),
    "rise": ("rose", "risen"),
    "run": ("ran",),
    "say": ("said",),
    "see": ("saw", "seen"),
    "sell": ("sold",),
    "send": ("sent",),
    "sing": ("sang", "sung"),
    "sit": ("sat",),
    "sleep": ("slept",),
    "speak": ("spoke", "spoken"),
    "spend": ("spent",),
    "stand": ("stood",),
    "swim": ("swam", "swum"),
    "take": ("took", "taken"),
    "teach": ("taught",),
    "tell": ("told",),
    "think": ("thought",),
    "throw": ("threw", "thrown"),
    "wear": ("wore", "worn"),
    "win": ("won",),
    "write": ("wrote", "written"),
}

_IRREGULAR_NOUNS = {
    "child": ("children",),
    "foot": ("feet",),
    "man": ("men",),
    "mouse": ("mice",),
    "person": ("people",),
    "tooth": ("teeth",),
    "woman": ("women",),
}

_VOWELS = "aeiou"


def rule_inflections(key: str) -> set[str]:
    """English inflections of a lowercase key by suffix rules plus a small
    irregular table. Always contains the key itself; non-alphabetic keys
    (punctuation, numbers) come back unchanged."""
    forms = {key}
    if not key.isalpha():
        return forms
    forms.update(_IRREGULAR_VERBS.get(key, ()))
    forms.update(_IRREGULAR_NOUNS.get(key, ()))
    if key.endswith(("s", "x", "z", "ch", "sh")):
        forms.add(key + "es")
    elif key.endswith("y") and len(key) > 1 and key[-2] not in _VOWELS:
        forms.add(key[:-1] + "ies")
        forms.add(key[:-1] + "ied")
    else:
        forms.add(key + "s")
    if key.endswith("e"):
        forms.add(key + "d")
        if not key.endswith("ee"):
            forms.add(key[:-1] + "ing")
        else:
            forms.add(key + "ing")
    else:
        if not (key.endswith("y") and len(key) > 1 and key[-2] not in _VOWELS):
            forms.add(key + "ed")
        forms.add(key + "ing")
    return forms


def case_variants(form: str) -> set[str]:
    return {form, form[:1].upper() + form[1:], form.upper()}


def expand_key(key: str, morph: MorphologyProvider) -> set[str]:
    """All surface forms to mask for one blocked key: every inflection in
    every case variant."""
    out = set()
    for form in morph(key):
        out.update(case_variants(form))
    return out


@dataclass(frozen=True)
class BlockDictionary:
    entries: tuple[tuple[str, str], ...]
    expansion: dict[str, frozenset[str]]

    def __len__(self) -> int:
        return len(self.entries)

    def triggers(self) -> set[str]:
        return {t for t, _ in self.entries}


@dataclass(frozen=True)
class ActiveBlockDictionary:
    entries: tuple[tuple[str, str], ...]
    expansion: dict[str, frozenset[str]]
    p: float
    seed: int | None = None

    def __len__(self) -> int:
        return len(self.entries)


def build_dictionary(source: SourceSequence,
                     closed_class: Iterable[str] = DEFAULT_CLOSED_CLASS,
                     morph: MorphologyProvider = rule_inflections,
                     ) -> BlockDictionary:
    """One entry per adjacent word-initial source pair, minus entries whose
    blocked word is closed-class. Duplicate (trigger, blocked) pairs
    collapse to one entry."""
    closed = set(closed_class)
    entries = []
    seen = set()
    expansion = {}
    for i in range(len(source) - 1):
        left, right = source[i], source[i + 1]
        if not (left.word_initial and right.word_initial):
            continue
        trigger, blocked = left.norm, right.norm
        if blocked in closed or blocked == normalize_key(EOS):
            continue
        if (trigger, blocked) in seen:
            continue
        seen.add((trigger, blocked))
        entries.append((trigger, blocked))
        if blocked not in expansion:
            expansion[blocked] = frozenset(expand_key(blocked, morph))
    return BlockDictionary(tuple(entries), expansion)


def sample_active(dictionary: BlockDictionary, p: float,
                  seed: int) -> ActiveBlockDictionary:
    """Keep each entry independently with probability p.

    One uniform is drawn per entry in order, so for a fixed seed the
    active set grows monotonically with p.
    """
    if not 0.0 <= p <= 1.0:
        raise ConfigError(f"sampling probability must be in [0, 1], got {p}")
    rng = random.Random(seed)
    kept = tuple(e for e in dictionary.entries if rng.random() < p)
    expansion = {b: dictionary.expansion[b] for _, b in kept}
    return ActiveBlockDictionary(kept, expansion, p, seed)


def full_active(dictionary: BlockDictionary) -> ActiveBlockDictionary:
    """The whole dictionary as an active set (used by tests and p=1 paths)."""
    return ActiveBlockDictionary(dictionary.entries, dict(dictionary.expansion),
                                 1.0, None)


def triggered_block_set(active: ActiveBlockDictionary,
                        last_generated: Token) -> set[str]:
    """Surface forms to mask right now, given the token just generated.

    Only a word-initial generated token can trigger; the blocked sets of
    every active entry for that trigger are unioned, so a word occurring
    twice in the source blocks both of its successors.
    """
    if not last_generated.word_initial:
        return set()
    key = last_generated.norm
    out: set[str] = set()
    for trigger, blocked in active.entries:
        if trigger == key:
            out.update(active.expansion[blocked])
    return out


def static_block_set(source: SourceSequence,
                     closed_class: Iterable[str] = DEFAULT_CLOSED_CLASS,
                     morph: MorphologyProvider = rule_inflections) -> set[str]:
    """Every open-class source word's expansion, for masking at all steps."""
    closed = set(closed_class)
    out: set[str] = set()
    for tok in source:
        if not tok.word_initial:
            continue
        key = tok.norm
        if key in closed or key == normalize_key(EOS):
            continue
        out.update(expand_key(key, morph))
    return out


def load_closed_class(path: str) -> frozenset[str]:
    """Closed-class word list file: UTF-8, one lowercase word per line."""
    words = set()
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            word = normalize_key(line.strip())
            if word:
                words.add(word)
    return frozenset(words)


def closed_class_from_env() -> frozenset[str]:
    """The PARABLOCK_CLOSED_CLASS file if set, else the built-in list."""
    path = os.environ.get("PARABLOCK_CLOSED_CLASS")
    if path:
        return load_closed_class(path)
    return DEFAULT_CLOSED_CLASS
