"""Procedure document store with TF-IDF cosine retrieval.

A document is a procedure: an ordered list of steps plus routing
metadata (department, task kind, keywords). The scored surface is the
metadata and the steps; titles are display only. Tokens are lowercase
alphanumeric runs. Term weight is raw term frequency times a smoothed
inverse document frequency,

    idf(t) = ln((1 + N) / (1 + df(t))) + 1,

and similarity is the cosine between query and document vectors.
Ties rank by ascending document id so retrieval order is total;
documents sharing no terms with the query are dropped.

Corpus files are markdown with an optional key: value front-matter
block between --- fences (keys: id, department, task_kind, keywords)
followed by the numbered steps.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from pathlib import Path

from .errors import DuplicateDocumentError, EmptyQueryError, KnowledgeError

_TOKEN_RE = re.compile(r"[a-z0-9]+")


def tokenize(text: str) -> list[str]:
    return _TOKEN_RE.findall(text.lower())


@dataclass(frozen=True)
class Document:
    doc_id: str
    title: str
    steps: tuple[str, ...]
    department: str = ""
    task_kind: str = ""
    keywords: tuple[str, ...] = ()

    @property
    def body(self) -> str:
        """The steps with numbered formatting, ready for prompt injection."""
        return "\n".join(f"{i}. {s}" for i, s in enumerate(self.steps, start=1))

    @property
    def text(self) -> str:
        """The retrieval surface: department, keywords, and steps."""
        return " ".join((self.department, " ".join(self.keywords), self.body))


@dataclass(frozen=True)
class Match:
    doc_id: str
    score: float
    matched_terms: tuple[str, ...] = field(default=(), compare=False)


class KnowledgeStore:
    def __init__(self) -> None:
        self._docs: dict[str, Document] = {}
        self._index: dict[str, dict[str, float]] | None = None
        self._idf: dict[str, float] = {}

    def add(self, doc: Document) -> None:
        if doc.doc_id in self._docs:
            raise DuplicateDocumentError(f"document {doc.doc_id!r} already stored")
        if not doc.steps:
            raise KnowledgeError(f"document {doc.doc_id!r} has no steps")
        self._docs[doc.doc_id] = doc
        self._index = None

    def get(self, doc_id: str) -> Document:
        return self._docs[doc_id]

    def __len__(self) -> int:
        return len(self._docs)

    def doc_ids(self) -> list[str]:
        return sorted(self._docs)

    def _build(self) -> None:
        n = len(self._docs)
        df: dict[str, int] = {}
        counts: dict[str, dict[str, int]] = {}
        for doc_id, doc in self._docs.items():
            tf: dict[str, int] = {}
            for token in tokenize(doc.text):
                tf[token] = tf.get(token, 0) + 1
            counts[doc_id] = tf
            for token in tf:
                df[token] = df.get(token, 0) + 1
        self._idf = {
            t: math.log((1 + n) / (1 + d)) + 1.0 for t, d in df.items()
        }
        self._index = {}
        for doc_id, tf in counts.items():
            vec = {t: c * self._idf[t] for t, c in tf.items()}
            self._index[doc_id] = vec

    def retrieve(self, query: str, k: int = 1) -> list[Match]:
        """Top-k documents by cosine similarity; ties break on doc id."""
        if k < 1:
            raise KnowledgeError(f"k must be at least 1, got {k}")
        tokens = tokenize(query)
        if not tokens:
            raise EmptyQueryError(f"query has no indexable tokens: {query!r}")
        if not self._docs:
            return []
        if self._index is None:
            self._build()
        qtf: dict[str, int] = {}
        for t in tokens:
            qtf[t] = qtf.get(t, 0) + 1
        qvec = {t: c * self._idf.get(t, 0.0) for t, c in qtf.items()}
        qnorm = math.sqrt(sum(w * w for w in qvec.values()))

        scored: list[Match] = []
        for doc_id in sorted(self._docs):
            dvec = self._index[doc_id]
            dot = sum(w * dvec.get(t, 0.0) for t, w in qvec.items())
            dnorm = math.sqrt(sum(w * w for w in dvec.values()))
            if not (dot and qnorm and dnorm):
                continue
            matched = tuple(sorted(t for t in qvec if t in dvec))
            scored.append(Match(doc_id, dot / (qnorm * dnorm), matched))
        scored.sort(key=lambda m: (-m.score, m.doc_id))
        return scored[:k]


_HEADING_RE = re.compile(r"^#+\s+(.+)$", re.MULTILINE)
_STEP_RE = re.compile(r"^\s*\d+[.)]\s+(.*\S)\s*$")
_FRONT_KEYS = ("id", "department", "task_kind", "keywords")


def _split_front_matter(text: str, source: str) -> tuple[dict[str, str], str]:
    lines = text.splitlines()
    if not lines or lines[0].strip() != "---":
        return {}, text
    meta: dict[str, str] = {}
    for i, line in enumerate(lines[1:], start=2):
        if line.strip() == "---":
            return meta, "\n".join(lines[i:])
        stripped = line.strip()
        if not stripped:
            continue
        key, sep, value = stripped.partition(":")
        key = key.strip()
        if not sep or key not in _FRONT_KEYS:
            raise KnowledgeError(
                f"{source}: front-matter line {i} must be one of "
                f"{', '.join(_FRONT_KEYS)}: got {stripped!r}"
            )
        meta[key] = value.strip()
    raise KnowledgeError(f"{source}: front-matter block never closed")


def parse_document(text: str, fallback_id: str, source: str = "<text>") -> Document:
    """Front-matter metadata plus numbered step lines; prose between
    steps belongs to no step and is ignored."""
    meta, body = _split_front_matter(text, source)
    heading = _HEADING_RE.search(body)
    steps = tuple(
        m.group(1) for m in (_STEP_RE.match(line) for line in body.splitlines())
        if m
    )
    keywords = tuple(
        k.strip() for k in meta.get("keywords", "").split(",") if k.strip()
    )
    return Document(
        doc_id=meta.get("id") or fallback_id,
        title=heading.group(1).strip() if heading else fallback_id,
        steps=steps,
        department=meta.get("department", ""),
        task_kind=meta.get("task_kind", ""),
        keywords=keywords,
    )


def load_documents(directory: str | Path) -> KnowledgeStore:
    """Load every *.md and *.txt file in the directory, id defaulting
    to the filename stem."""
    store = KnowledgeStore()
    root = Path(directory)
    paths = sorted(
        p for p in root.iterdir() if p.suffix in (".md", ".txt") and p.is_file()
    )
    for path in paths:
        text = path.read_text(encoding="utf-8")
        store.add(parse_document(text, fallback_id=path.stem, source=str(path)))
    return store
