"""Annotator-article matching: keyword profiles, similarity, 2D projection.

Keywords come from corpus tf-idf ranking behind a small extractor surface;
similarity compares keyword sets as tf-idf vectors over a shared vocabulary;
the 2D map is a principal-component projection of tf-idf document vectors.
"""

from __future__ import annotations

import json
import math
import warnings
from collections import Counter
from dataclasses import dataclass, field
from itertools import zip_longest
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .errors import MatchingError
from .textproc import CleaningConfig, FeatureVocabulary, clean_and_tokenize, featurize_all

TOP_CITED_ARTICLES = 25


@dataclass
class MatchingConfig:
    author_keyword_count: int = 250
    article_keyword_count: int = 15
    union_category_count: int = 5
    cleaning: CleaningConfig = field(default_factory=CleaningConfig)

    def __post_init__(self):
        for value in (self.author_keyword_count, self.article_keyword_count,
                      self.union_category_count):
            if value < 1:
                raise MatchingError("matching counts must be >= 1")


@dataclass
class Article:
    id: str
    abstract: str


@dataclass
class AuthorArticle:
    title: str
    abstract: str
    citation_count: int


@dataclass
class AuthorProfile:
    author_id: str
    articles: list[AuthorArticle]
    selected: list[AuthorArticle]
    keywords: list[str]

    @property
    def selected_text(self) -> str:
        return " ".join(a.abstract for a in self.selected)


@dataclass
class SimilarityRanking:
    article_id: str
    ranked: list[tuple[str, float]]  # (author_id, cosine), descending


@dataclass(frozen=True)
class ProjectedPoint:
    document_id: str
    owner: str
    x: float
    y: float


def warn_if_mostly_non_ascii(text: str, threshold: float = 0.3) -> None:
    # Inputs are assumed English; a high non-ASCII ratio usually means an
    # untranslated abstract slipped in.
    if not text:
        return
    ratio = sum(1 for ch in text if ord(ch) > 127) / len(text)
    if ratio > threshold:
        warnings.warn(f"text is {ratio:.0%} non-ASCII; expected English input",
                      stacklevel=3)


def extract_keywords(texts: Sequence[str], k: int,
                     corpus: Sequence[str] = (),
                     cleaning: CleaningConfig | None = None) -> list[str]:
    """Top-k terms of the concatenated texts by tf-idf against `corpus`.

    Term frequency is counted over the token multiset of all texts, so
    concatenation order does not matter. Ties break lexicographically.
    """
    cleaning = cleaning or CleaningConfig()
    tf: Counter[str] = Counter()
    for text in texts:
        warn_if_mostly_non_ascii(text)
        tf.update(clean_and_tokenize(text, cleaning))
    if not tf:
        raise MatchingError("no keywords: nothing survives cleaning")
    df: Counter[str] = Counter()
    for doc in corpus:
        df.update(set(clean_and_tokenize(doc, cleaning)))
    n = len(corpus)

    def score(term: str) -> float:
        return tf[term] * (math.log((1 + n) / (1 + df[term])) + 1.0)

    return sorted(tf, key=lambda t: (-score(t), t))[:k]


def build_author_profile(author_id: str, articles: Sequence[AuthorArticle],
                         config: MatchingConfig | None = None,
                         corpus: Sequence[str] | None = None) -> AuthorProfile:
    """Keyword fingerprint from the author's top-cited articles.

    Selects the most-cited articles (ties by title) that carry an abstract,
    then extracts the configured number of keywords from their concatenated
    abstracts. With no reference corpus given, the selected abstracts
    themselves provide the idf statistics.
    """
    config = config or MatchingConfig()
    with_abstracts = [a for a in articles if a.abstract.strip()]
    if not with_abstracts:
        raise MatchingError(f"author {author_id!r} has no article abstracts")
    selected = sorted(with_abstracts,
                      key=lambda a: (-a.citation_count, a.title))
    selected = selected[:TOP_CITED_ARTICLES]
    abstracts = [a.abstract for a in selected]
    keywords = extract_keywords(
        abstracts, config.author_keyword_count,
        corpus=corpus if corpus is not None else abstracts,
        cleaning=config.cleaning)
    return AuthorProfile(author_id=author_id, articles=list(articles),
                         selected=selected, keywords=keywords)


def keyword_set_vectors(keyword_sets: Sequence[Sequence[str]],
                        ) -> tuple[list[str], np.ndarray]:
    """tf-idf vectors treating each (deduplicated) keyword set as a document."""
    vocab = sorted({kw for kws in keyword_sets for kw in kws})
    index = {kw: i for i, kw in enumerate(vocab)}
    df = Counter(kw for kws in keyword_sets for kw in set(kws))
    n = len(keyword_sets)
    idf = np.array([math.log((1 + n) / (1 + df[kw])) + 1.0 for kw in vocab])
    matrix = np.zeros((n, len(vocab)))
    for row, kws in enumerate(keyword_sets):
        for kw in set(kws):
            matrix[row, index[kw]] = idf[index[kw]]
    return vocab, matrix


def cosine_similarity(a: np.ndarray, b: np.ndarray) -> float:
    denom = np.linalg.norm(a) * np.linalg.norm(b)
    if denom == 0:
        return 0.0
    return float(np.dot(a, b) / denom)


def rank_authors(article: Article, profiles: Sequence[AuthorProfile],
                 config: MatchingConfig | None = None) -> SimilarityRanking:
    """Rank author profiles by cosine similarity of keyword-set vectors."""
    config = config or MatchingConfig()
    if not profiles:
        raise MatchingError("no author profiles to rank")
    corpus = [article.abstract] + [p.selected_text for p in profiles]
    article_keywords = extract_keywords(
        [article.abstract], config.article_keyword_count,
        corpus=corpus, cleaning=config.cleaning)
    sets = [article_keywords] + [p.keywords for p in profiles]
    _, matrix = keyword_set_vectors(sets)
    scores = [
        (profile.author_id, cosine_similarity(matrix[0], matrix[i + 1]))
        for i, profile in enumerate(profiles)
    ]
    scores.sort(key=lambda pair: (-pair[1], pair[0]))
    return SimilarityRanking(article_id=article.id, ranked=scores)


CategoryScorer = Callable[[str], Sequence[tuple[str, float]]]


def suggest_category_union(article: Article, top_profile: AuthorProfile,
                           category_scorer: CategoryScorer,
                           config: MatchingConfig | None = None) -> list[str]:
    """Union the article's and the top author's best-scoring categories.

    Interleaves article-first, deduplicates keeping first occurrence, and
    truncates to the configured union size.
    """
    config = config or MatchingConfig()
    if category_scorer is None:
        raise MatchingError("no category scorer available")
    limit = config.union_category_count
    article_top = [c for c, _ in category_scorer(article.abstract)][:limit]
    author_top = [c for c, _ in category_scorer(top_profile.selected_text)][:limit]
    union: list[str] = []
    for pair in zip_longest(article_top, author_top):
        for category in pair:
            if category is not None and category not in union:
                union.append(category)
    return union[:limit]


def _power_iteration(matrix: np.ndarray, rng: np.random.RandomState,
                     tol: float = 1e-9, max_iter: int = 10000,
                     ) -> tuple[float, np.ndarray]:
    v = rng.uniform(-1.0, 1.0, size=matrix.shape[0])
    v /= np.linalg.norm(v)
    eigenvalue = 0.0
    for _ in range(max_iter):
        w = matrix @ v
        norm = np.linalg.norm(w)
        if norm < tol:
            return 0.0, v
        v = w / norm
        new_eigenvalue = float(v @ matrix @ v)
        if abs(new_eigenvalue - eigenvalue) <= tol * max(1.0, abs(new_eigenvalue)):
            return new_eigenvalue, v
        eigenvalue = new_eigenvalue
    return eigenvalue, v


def project_2d(documents: Sequence[tuple[str, str, str]],
               vocab: FeatureVocabulary | None = None,
               seed: int = 0,
               ) -> tuple[list[ProjectedPoint], tuple[float, float]]:
    """Project documents onto their top-2 principal components.

    `documents` rows are (id, owner, text). Returns the points and the two
    leading eigenvalues (descending). A feature matrix of rank < 2 zeroes
    the second coordinate with a warning.
    """
    if len(documents) < 3:
        raise MatchingError("projection needs at least 3 documents")
    if vocab is None:
        from .textproc import build_vocabulary

        vocab = build_vocabulary([text for _, _, text in documents])
    features = featurize_all([text for _, _, text in documents], vocab)
    centered = features - features.mean(axis=0)
    cov = centered.T @ centered / max(len(documents) - 1, 1)

    rng = np.random.RandomState(seed)
    lambda1, v1 = _power_iteration(cov, rng)
    deflated = cov - lambda1 * np.outer(v1, v1)
    lambda2, v2 = _power_iteration(deflated, rng)
    if lambda2 < 1e-12:
        warnings.warn("feature matrix has rank < 2; second coordinate zeroed")
        lambda2 = 0.0
        xs = centered @ v1
        ys = np.zeros(len(documents))
    else:
        xs = centered @ v1
        ys = centered @ v2
    points = [
        ProjectedPoint(document_id=doc_id, owner=owner,
                       x=float(x), y=float(y))
        for (doc_id, owner, _), x, y in zip(documents, xs, ys)
    ]
    return points, (lambda1, lambda2)


def load_author_articles(path: str | Path) -> dict[str, list[AuthorArticle]]:
    """Read JSON lines of {author_id, title, abstract, citation_count}."""
    authors: dict[str, list[AuthorArticle]] = {}
    with open(path, encoding="utf-8") as f:
        for line in f:
            line = line.strip()
            if not line:
                continue
            row = json.loads(line)
            authors.setdefault(str(row["author_id"]), []).append(AuthorArticle(
                title=row.get("title", ""),
                abstract=row.get("abstract", ""),
                citation_count=int(row.get("citation_count", 0)),
            ))
    return authors
