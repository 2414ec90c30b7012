"""Tokenizer behaviour."""

from hybridsearch.text import TokenizerConfig, tokenize


def test_hyphen_and_case():
    assert tokenize("Red Sports-Shoes") == ["red", "sports", "shoes"]


def test_underscore_splits():
    assert tokenize("snake_case_name") == ["snake", "case", "name"]


def test_punctuation_and_digits():
    assert tokenize("v2.0, beta! (x10)") == ["v2", "0", "beta", "x10"]


def test_unicode_words():
    assert tokenize("Crème brûlée") == ["crème", "brûlée"]


def test_empty_and_symbol_only():
    assert tokenize("") == []
    assert tokenize("--- ### !!!") == []


def test_lowercase_off():
    cfg = TokenizerConfig(lowercase=False)
    assert tokenize("Red Shoes", cfg) == ["Red", "Shoes"]
