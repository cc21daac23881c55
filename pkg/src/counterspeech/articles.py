"""The verified-article store: a JSON array file with an embedding cache."""

from __future__ import annotations

import json
from pathlib import Path

from .embeddings import EmbeddingProvider, embed
from .errors import InvalidInputError
from .models import Article


def load_articles(
    path: str | Path, provider: EmbeddingProvider | None = None
) -> list[Article]:
    """Read the article store; embeds any article whose cache is missing or
    was produced by a different provider."""
    raw = json.loads(Path(path).read_text(encoding="utf-8"))
    if not isinstance(raw, list):
        raise InvalidInputError(f"article store {path} must be a JSON array")
    articles = []
    for entry in raw:
        embedding = entry.get("embedding")
        if embedding is not None and entry.get("embedding_provider") != getattr(
            provider, "tag", entry.get("embedding_provider")
        ):
            embedding = None
        article = Article(
            title=entry["title"],
            last_update=entry["last_update"],
            category=entry["category"],
            url=entry["url"],
            text=entry.get("text", ""),
            summary=entry.get("summary", ""),
            embedding=tuple(embedding) if embedding is not None else None,
        )
        if article.embedding is None and provider is not None:
            vector = embed(f"{article.title}\n{article.summary}\n{article.text}", provider)
            article = Article(
                title=article.title,
                last_update=article.last_update,
                category=article.category,
                url=article.url,
                text=article.text,
                summary=article.summary,
                embedding=tuple(vector.tolist()),
            )
        articles.append(article)
    return articles


def save_articles(
    articles: list[Article], path: str | Path, provider_tag: str | None = None
) -> None:
    payload = []
    for a in articles:
        entry = {
            "title": a.title,
            "last_update": a.last_update,
            "category": a.category,
            "url": a.url,
            "text": a.text,
            "summary": a.summary,
        }
        if a.embedding is not None:
            entry["embedding"] = list(a.embedding)
            if provider_tag:
                entry["embedding_provider"] = provider_tag
        payload.append(entry)
    Path(path).write_text(
        json.dumps(payload, ensure_ascii=False, indent=1), encoding="utf-8"
    )


def store_urls(articles: list[Article]) -> set[str]:
    return {a.url for a in articles}
