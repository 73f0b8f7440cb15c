"""Word-level tokenization and word-boundary bookkeeping.

The canonical text form is space-separated tokens: punctuation is split off
from the words it touches and runs of whitespace collapse to single spaces.
``tokenize`` accepts arbitrary text; ``detokenize`` emits canonical form, so
the declared round-trip normalization is exactly "canonicalize the spacing".
Apostrophes and hyphens between letters stay inside their word ("don't",
"state-of-the-art").

Every token carries a ``word_initial`` flag so that a subword tokenizer can
be substituted without changing any downstream module; the built-in
word-level tokenizer marks all of its pieces word-initial.
"""

import re
from dataclasses import dataclass, field

BOS = "<s>"
EOS = "</s>"
UNK = "<unk>"

BOS_ID = 0
EOS_ID = 1
UNK_ID = 2

_SENTINELS = (BOS, EOS, UNK)

_PIECE_RE = re.compile(r"\w+(?:['’-]\w+)*|[^\w\s]", re.UNICODE)


def normalize_key(surface: str) -> str:
    """Case-fold a surface form into the key used by dictionaries and IDF tables."""
    return surface.casefold()


@dataclass(frozen=True)
class Token:
    surface: str
    id: int
    word_initial: bool = True

    @property
    def norm(self) -> str:
        return normalize_key(self.surface)


@dataclass(frozen=True)
class SourceSequence:
    tokens: tuple[Token, ...] = field(default_factory=tuple)

    def __len__(self) -> int:
        return len(self.tokens)

    def __iter__(self):
        return iter(self.tokens)

    def __getitem__(self, i):
        return self.tokens[i]

    def surfaces(self) -> list[str]:
        return [t.surface for t in self.tokens]

    def norms(self) -> list[str]:
        return [t.norm for t in self.tokens]

    def text(self) -> str:
        return detokenize(self.tokens)


class Vocab:
    """Immutable surface <-> id mapping with reserved sentinel ids 0..2."""

    def __init__(self, surfaces=()):
        self._surfaces = list(_SENTINELS)
        self._index = {s: i for i, s in enumerate(self._surfaces)}
        for s in surfaces:
            if s not in self._index:
                self._index[s] = len(self._surfaces)
                self._surfaces.append(s)

    def __len__(self) -> int:
        return len(self._surfaces)

    def __contains__(self, surface: str) -> bool:
        return surface in self._index

    def id_of(self, surface: str) -> int:
        return self._index.get(surface, UNK_ID)

    def surface_of(self, token_id: int) -> str:
        return self._surfaces[token_id]

    def token_for_id(self, token_id: int, word_initial: bool = True) -> Token:
        return Token(self._surfaces[token_id], token_id, word_initial)

    def surfaces(self) -> tuple[str, ...]:
        return tuple(self._surfaces)

    def words(self) -> tuple[str, ...]:
        """All non-sentinel surfaces, in id order."""
        return tuple(self._surfaces[len(_SENTINELS):])

    def extend(self, surfaces) -> "Vocab":
        """New vocab with any unseen surfaces appended; shared ids keep their value."""
        v = Vocab()
        v._surfaces = list(self._surfaces)
        v._index = dict(self._index)
        for s in surfaces:
            if s not in v._index:
                v._index[s] = len(v._surfaces)
                v._surfaces.append(s)
        return v

    def token(self, surface: str, word_initial: bool = True) -> Token:
        return Token(surface, self.id_of(surface), word_initial)

    def bos(self) -> Token:
        return Token(BOS, BOS_ID)

    def eos(self) -> Token:
        return Token(EOS, EOS_ID)


def tokenize(text: str, vocab: Vocab | None = None) -> SourceSequence:
    """Split text into word-level tokens.

    Ids come from ``vocab`` when given (unknown surfaces map to UNK_ID);
    otherwise they are assigned per call in order of first occurrence,
    starting after the reserved sentinel ids.
    """
    pieces = _PIECE_RE.findall(text)
    tokens = []
    local: dict[str, int] = {}
    for piece in pieces:
        if vocab is not None:
            tid = vocab.id_of(piece)
        else:
            tid = local.setdefault(piece, len(_SENTINELS) + len(local))
        tokens.append(Token(piece, tid, True))
    return SourceSequence(tuple(tokens))


def detokenize(tokens) -> str:
    """Inverse of tokenize up to canonical spacing.

    Word-initial tokens are preceded by a single space; non-word-initial
    pieces (as a subword tokenizer would produce) attach directly.
    """
    parts = []
    for i, t in enumerate(tokens):
        if i > 0 and t.word_initial:
            parts.append(" ")
        parts.append(t.surface)
    return "".join(parts)
