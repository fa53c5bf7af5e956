"""Synonym substitution table for paraphrasing explanation template words,
plus the inverse normalization used when converting text back to clauses.

``SYNONYMS`` maps each template word to its substitute set. Normalization maps
any synonym back to its template word; canonical multi-word template phrases
are self-mapped so longest-match protects their inner words (e.g. the "top" in
"return the top", the "where" in "keep the groups where").
"""

from __future__ import annotations

import re

SYNONYMS: dict[str, tuple[str, ...]] = {
    "return": (
        "get", "find", "find out", "discover", "show", "show me", "determine",
        "demonstrate", "give me", "obtain", "select", "choose", "search",
        "display", "list", "acquire", "gain",
    ),
    "keep the records where": (
        "make", "make sure", "where", "filter the records where",
    ),
    "greater than": (
        "more than", "exceed", "no less than", "over", "above", "larger than",
        "beyond", "in excess of", "transcend", "surpass",
    ),
    "less than": (
        "lower than", "no more than", "below", "lesser", "under", "underneath",
        "not so much as", "beneath",
    ),
    "ascending": (
        "increasing", "ascendant", "growing", "rising", "soaring", "climbing",
        "mounting",
    ),
    "descending": (
        "decreasing", "descendant", "falling", "declining", "dropping",
        "lessening", "diminishing",
    ),
    "maximum": (
        "max", "utmost", "greatest", "most", "topmost", "highest", "top",
        "largest", "biggest",
    ),
    "minimum": (
        "lowest", "smallest", "least", "min", "minimal", "bottom",
        "bottommost", "lowermost",
    ),
    "number of": ("amount of", "quantity of", "total of"),
    "in the form of": (
        "appearing as", "with the appearance of", "in the shape of",
    ),
    "that has": ("associated with", "connected to"),
    "based on": (
        "according to", "in terms of", "specified by", "built on",
        "established on", "considering", "regarding",
    ),
    "distinct": (
        "different", "disparate", "distinctive", "particular", "diverse",
        "dissimilar", "unique",
    ),
    "all": ("each", "every", "any", "whole", "entire", "total"),
    "group": (
        "batch", "organize", "categorize", "classify", "arrange", "separate",
        "label", "tag", "mark", "pack", "collect", "assemble", "distribute",
        "gather", "merge", "put together", "index", "concentrate", "combine",
    ),
    "sort": ("order", "rank", "sequence"),
}

# Synonyms that only mean their template word at the start of a sentence;
# elsewhere they are ordinary connectives (the FROM step's "where", etc.).
SENTENCE_INITIAL_ONLY = {"where", "make", "make sure"}

# Canonical template phrases whose inner words must never be re-mapped.
PROTECTED_PHRASES = (
    "keep the records where",
    "keep the groups where",
    "group the records based on",
    "sort the records based on",
    "return the first record",
    "return the top",
    "the number of records",
    "number of",
    "all the records",
    "in ascending order",
    "in descending order",
    "in the form of",
    "greater than",
    "less than",
    "based on",
    "that has",
    "in table",
    "and table",
)

_ASC_WORDS = ("ascending",) + SYNONYMS["ascending"]
_DESC_WORDS = ("descending",) + SYNONYMS["descending"]
_DIRECTION_RE = re.compile(
    r"\bin (%s) order\b" % "|".join(map(re.escape, _ASC_WORDS + _DESC_WORDS)),
    re.IGNORECASE,
)


def _build_normal_map() -> dict[str, str]:
    mapping: dict[str, str] = {}
    for phrase in PROTECTED_PHRASES:
        mapping[phrase] = phrase
    for template, subs in SYNONYMS.items():
        mapping.setdefault(template, template)
        for s in subs:
            mapping.setdefault(s, template)
    return mapping


NORMAL_MAP = _build_normal_map()
# phrase lengths to try, longest first
_PHRASE_LENGTHS = sorted({len(p.split()) for p in NORMAL_MAP}, reverse=True)

_NUMERIC_RE = re.compile(r"^\d+(\.\d+)?$")


def _skip_mapping(phrase: str, next_token: str | None) -> bool:
    # "top" right before a record count is the LIMIT phrase, not "maximum";
    # fragment-final "top" precedes an entity (the count) in chunked input
    if phrase == "top":
        return next_token is None or _NUMERIC_RE.match(next_token) is not None
    return False


def _normalize_directions(text: str) -> str:
    def repl(m: re.Match) -> str:
        word = m.group(1).lower()
        return "in ascending order" if word in _ASC_WORDS else "in descending order"

    return _DIRECTION_RE.sub(repl, text)


def normalize_text(text: str, protected_spans: list[tuple[int, int]] | None = None,
                   at_sentence_start: bool = True) -> str:
    """Map synonyms back to template words, leaving protected regions alone.

    ``protected_spans`` are (start, end) character ranges (schema entities,
    literals) that must pass through untouched. ``at_sentence_start`` is False
    when ``text`` is a mid-sentence fragment, which disables the synonyms that
    only carry template meaning at the start of a step ("where", "make").
    """
    text = _normalize_directions(text)
    protected = protected_spans or []

    # token scan with character offsets
    tokens = [(m.group(), m.start(), m.end()) for m in re.finditer(r"\S+", text)]

    def tok_protected(start: int, end: int) -> bool:
        return any(s < end and start < e for s, e in protected)

    out: list[str] = []
    i = 0
    while i < len(tokens):
        replaced = False
        if not tok_protected(tokens[i][1], tokens[i][2]):
            for n in _PHRASE_LENGTHS:
                if i + n > len(tokens):
                    continue
                window = tokens[i:i + n]
                if any(tok_protected(t[1], t[2]) for t in window):
                    continue
                phrase = " ".join(t[0] for t in window).lower()
                target = NORMAL_MAP.get(phrase)
                if target is None:
                    continue
                if phrase in SENTENCE_INITIAL_ONLY and (i != 0 or not at_sentence_start):
                    continue
                next_token = tokens[i + n][0].lower() if i + n < len(tokens) else None
                if _skip_mapping(phrase, next_token):
                    continue
                out.append(target)
                i += n
                replaced = True
                break
        if not replaced:
            out.append(tokens[i][0])
            i += 1
    return " ".join(out)
