"""Text cleaning, tokenization, and tf-idf features.

Cleaning order: lowercase, replace non-alphanumeric characters with spaces,
split on whitespace, drop stopwords, drop short tokens.
"""

from __future__ import annotations

import math
import re
from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .errors import SaineError

DEFAULT_STOPWORDS = frozenset("""
a about above after again all also an and any are as at be because been
before being below between both but by can could did do does doing down
during each few for from further had has have having he her here hers him
his how i if in into is it its itself just me more most my no nor not of
off on once only or other our ours out over own same she should so some
such than that the their theirs them then there these they this those
through to too under until up very was we were what when where which while
who whom why will with would you your yours
""".split())

_NON_ALNUM = re.compile(r"[^0-9a-zA-Z]+")


@dataclass
class CleaningConfig:
    lowercase: bool = True
    strip_non_alphanumeric: bool = True
    stopword_list: frozenset[str] = DEFAULT_STOPWORDS
    min_token_length: int = 3

    def __post_init__(self):
        if self.min_token_length < 1:
            raise SaineError("min_token_length must be >= 1")
        self.stopword_list = frozenset(self.stopword_list)

    def to_dict(self) -> dict:
        return {
            "lowercase": self.lowercase,
            "strip_non_alphanumeric": self.strip_non_alphanumeric,
            "stopword_list": sorted(self.stopword_list),
            "min_token_length": self.min_token_length,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "CleaningConfig":
        return cls(
            lowercase=data.get("lowercase", True),
            strip_non_alphanumeric=data.get("strip_non_alphanumeric", True),
            stopword_list=frozenset(data.get("stopword_list",
                                             DEFAULT_STOPWORDS)),
            min_token_length=data.get("min_token_length", 3),
        )


def clean_and_tokenize(text: str, config: CleaningConfig | None = None,
                       ) -> list[str]:
    config = config or CleaningConfig()
    if config.lowercase:
        text = text.lower()
    if config.strip_non_alphanumeric:
        text = _NON_ALNUM.sub(" ", text)
    tokens = text.split()
    tokens = [t for t in tokens if t not in config.stopword_list]
    return [t for t in tokens if len(t) >= config.min_token_length]


@dataclass
class FeatureVocabulary:
    """Dense term index with smoothed idf weights.

    idf(term) = ln((1 + N) / (1 + df)) + 1, built from training documents
    only. Terms are ranked by document frequency (ties broken
    lexicographically) and truncated at max_terms.
    """

    index: dict[str, int]
    idf: np.ndarray
    max_terms: int
    cleaning: CleaningConfig
    corpus_size: int = 0
    df: dict[str, int] = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.index)

    @property
    def terms(self) -> list[str]:
        return sorted(self.index, key=self.index.get)

    def idf_of(self, term: str) -> float:
        """Smoothed idf for any term, vocabulary member or not."""
        df = self.df.get(term, 0)
        return math.log((1 + self.corpus_size) / (1 + df)) + 1.0

    def to_dict(self) -> dict:
        terms = self.terms
        return {
            "terms": terms,
            "idf": [float(self.idf[self.index[t]]) for t in terms],
            "max_terms": self.max_terms,
            "cleaning": self.cleaning.to_dict(),
            "corpus_size": self.corpus_size,
            "df": {t: self.df[t] for t in sorted(self.df)},
        }

    @classmethod
    def from_dict(cls, data: dict) -> "FeatureVocabulary":
        terms = data["terms"]
        return cls(
            index={t: i for i, t in enumerate(terms)},
            idf=np.array(data["idf"], dtype=float),
            max_terms=data["max_terms"],
            cleaning=CleaningConfig.from_dict(data["cleaning"]),
            corpus_size=data.get("corpus_size", 0),
            df={t: int(n) for t, n in data.get("df", {}).items()},
        )


def build_vocabulary(corpus: Sequence[str],
                     cleaning: CleaningConfig | None = None,
                     max_terms: int = 5000) -> FeatureVocabulary:
    if not corpus:
        raise SaineError("cannot build a vocabulary from an empty corpus")
    cleaning = cleaning or CleaningConfig()
    df: Counter[str] = Counter()
    for doc in corpus:
        df.update(set(clean_and_tokenize(doc, cleaning)))
    if not df:
        raise SaineError("no features: corpus empty after cleaning")
    ranked = sorted(df, key=lambda t: (-df[t], t))[:max_terms]
    n = len(corpus)
    index = {t: i for i, t in enumerate(ranked)}
    idf = np.array([math.log((1 + n) / (1 + df[t])) + 1.0 for t in ranked])
    return FeatureVocabulary(index=index, idf=idf, max_terms=max_terms,
                             cleaning=cleaning, corpus_size=n, df=dict(df))


def featurize(text: str, vocab: FeatureVocabulary) -> np.ndarray:
    """tf * idf over the vocabulary, L2-normalized; zero vector on no match."""
    vec = np.zeros(len(vocab))
    for token in clean_and_tokenize(text, vocab.cleaning):
        i = vocab.index.get(token)
        if i is not None:
            vec[i] += 1.0
    if not vec.any():
        return vec
    vec *= vocab.idf
    return vec / np.linalg.norm(vec)


def featurize_all(texts: Iterable[str], vocab: FeatureVocabulary) -> np.ndarray:
    return np.array([featurize(t, vocab) for t in texts])
