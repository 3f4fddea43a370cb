"""Shared tokenizer and sentence splitter.

Tokenization rules, applied in order:

1. split on whitespace;
2. a chunk that looks like a reserved marker (``[SEC]``, ``[L_DOWN]`` ...)
   is kept verbatim;
3. otherwise leading and trailing punctuation characters are peeled off one
   at a time and emitted as separate tokens;
4. the remaining core is lowercased unless ``lower=False``.
"""

import re
import string

_PUNCT = frozenset(string.punctuation)
MARKER_RE = re.compile(r"^\[[A-Z][A-Z0-9_\-]*\]$")
_SENT_RE = re.compile(r"(?<=[.!?])\s+")


def is_marker(token):
    return bool(MARKER_RE.match(token))


def tokenize(text, lower=True):
    tokens = []
    for chunk in text.split():
        if MARKER_RE.match(chunk):
            tokens.append(chunk)
            continue
        start, end = 0, len(chunk)
        while start < end and chunk[start] in _PUNCT:
            start += 1
        while end > start and chunk[end - 1] in _PUNCT:
            end -= 1
        tokens.extend(chunk[:start])
        core = chunk[start:end]
        if core:
            tokens.append(core.lower() if lower else core)
        tokens.extend(chunk[end:])
    return tokens


def is_word(token):
    return any(ch.isalnum() for ch in token)


def split_sentences(text):
    """Split after ``.``, ``!`` or ``?`` when followed by whitespace."""
    return [s.strip() for s in _SENT_RE.split(text.strip()) if s.strip()]
