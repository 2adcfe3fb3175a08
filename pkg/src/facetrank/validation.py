"""Input checks shared by the estimators."""

from __future__ import annotations

from typing import Sequence

from .corpus import Document, PatientCase, RelExample


def check_nonempty(X, what: str = "examples") -> list:
    X = list(X)
    if not X:
        raise ValueError(f"no {what} given")
    return X


def check_rel_input(X, y=None) -> tuple[list[Document], list[tuple[str, ...]], list[bool] | None]:
    """Accept RelExamples, or (document, query sentences) pairs with labels ``y``."""
    X = check_nonempty(X)
    if all(isinstance(x, RelExample) for x in X):
        labels = [x.label for x in X] if y is None else [bool(v) for v in y]
        return [x.doc for x in X], [tuple(x.query_sentences) for x in X], labels
    docs, queries = [], []
    for i, item in enumerate(X):
        try:
            doc, query = item
        except (TypeError, ValueError):
            raise TypeError(f"item {i}: expected RelExample or (Document, query) pair") from None
        if isinstance(query, PatientCase):
            query = query.query_sentences
        elif isinstance(query, str):
            query = [query]
        if not isinstance(doc, Document):
            raise TypeError(f"item {i}: expected a Document, got {type(doc).__name__}")
        docs.append(doc)
        queries.append(tuple(query))
    if y is not None:
        y = [bool(v) for v in y]
        if len(y) != len(docs):
            raise ValueError(f"{len(docs)} inputs but {len(y)} labels")
    return docs, queries, y


def check_documents(X) -> list[Document]:
    X = check_nonempty(X, "documents")
    for i, d in enumerate(X):
        if not isinstance(d, Document):
            raise TypeError(f"item {i}: expected a Document, got {type(d).__name__}")
    return X


def check_same_length(a: Sequence, b: Sequence, what: str) -> None:
    if len(a) != len(b):
        raise ValueError(f"{what}: lengths differ ({len(a)} vs {len(b)})")
