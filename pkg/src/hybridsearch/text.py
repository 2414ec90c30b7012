"""Tokenization for the lexical path.

Lowercase first, then take maximal runs of Unicode word characters with
underscore excluded, so hyphens, punctuation and underscores all split.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

_TOKEN_RE = re.compile(r"[^\W_]+", re.UNICODE)


@dataclass(frozen=True)
class TokenizerConfig:
    lowercase: bool = True


def tokenize(text: str, config: TokenizerConfig = TokenizerConfig()) -> list[str]:
    if config.lowercase:
        text = text.lower()
    return _TOKEN_RE.findall(text)
