"""Counter-speech reply generation: cosine retrieval over the article store,
fixed-template prompt assembly with two pinned example exchanges, and a
pluggable generation client with a hard reply length cap.
"""

from __future__ import annotations

import hashlib
import json
import os
from dataclasses import dataclass
from datetime import datetime
from pathlib import Path

import httpx
import numpy as np

from .embeddings import cosine_similarity
from .errors import (
    ConfigurationError,
    InvalidEmbeddingError,
    InvalidInputError,
    LengthViolationError,
    TransientGenerationError,
)
from .models import REPLY_CHAR_LIMIT, Article, CandidateReply

GENERATION_API_KEY_ENV = "COUNTERSPEECH_GENERATION_KEY"

DEFAULT_TOP_K = 3


def rank_articles(
    target: np.ndarray, store: list[Article], k: int = DEFAULT_TOP_K
) -> list[tuple[Article, float]]:
    """Top-k store articles by cosine similarity to the target embedding.

    Ties break on title (ascending); anti-relevant articles (similarity
    below zero) are dropped even inside the top k.
    """
    if k < 1:
        raise InvalidInputError("k must be >= 1")
    target = np.asarray(target, dtype=float)
    scored = []
    for article in store:
        if article.embedding is None:
            raise InvalidEmbeddingError(f"article {article.title!r} has no embedding")
        sim = cosine_similarity(target, np.asarray(article.embedding))
        scored.append((article, sim))
    scored.sort(key=lambda pair: (-pair[1], pair[0].title))
    return [(a, s) for a, s in scored[:k] if s >= 0.0]


@dataclass(frozen=True)
class FewShotPair:
    tweet: str
    response: str


@dataclass(frozen=True)
class ArticleBlock:
    title: str
    body: str
    url: str
    similarity: float


@dataclass(frozen=True)
class ResponderConfig:
    """Fixed generation settings: preamble, the two pinned example
    exchanges, cost model inputs and the length-retry reminder.

    `self_identification` is the bot-account profile text declaring the
    account automated; live posting refuses to run without it.
    """

    system_preamble: str
    fewshot: tuple[FewShotPair, FewShotPair]
    use_summaries: bool = True
    char_limit: int = REPLY_CHAR_LIMIT
    tokens_per_request: int = 1600
    price_per_million_usd: float = 30.0
    length_reminder: str = (
        "Przypomnienie: odpowiedź nie może przekraczać 200 znaków."
    )
    self_identification: str | None = None

    @classmethod
    def from_file(cls, path: str | Path) -> "ResponderConfig":
        raw = json.loads(Path(path).read_text(encoding="utf-8"))
        try:
            pairs = tuple(
                FewShotPair(tweet=p["tweet"], response=p["response"])
                for p in raw["fewshot"]
            )
            if len(pairs) != 2:
                raise ConfigurationError(
                    f"exactly 2 few-shot pairs are required, found {len(pairs)}"
                )
            return cls(
                system_preamble=raw["system_preamble"],
                fewshot=pairs,  # type: ignore[arg-type]
                use_summaries=raw.get("use_summaries", True),
                char_limit=raw.get("char_limit", REPLY_CHAR_LIMIT),
                tokens_per_request=raw.get("tokens_per_request", 1600),
                price_per_million_usd=raw.get("price_per_million_usd", 30.0),
                length_reminder=raw.get(
                    "length_reminder", cls.length_reminder
                ),
                self_identification=raw.get("self_identification"),
            )
        except KeyError as exc:
            raise ConfigurationError(f"responder config missing {exc}") from exc


@dataclass(frozen=True)
class PromptAssembly:
    """Deterministic rendering order: preamble, ranked article blocks, the
    two example exchanges, then the target post."""

    system_preamble: str
    articles_section: tuple[ArticleBlock, ...]
    fewshot: tuple[FewShotPair, FewShotPair]
    target_text: str

    def __post_init__(self) -> None:
        if len(self.fewshot) != 2:
            raise ConfigurationError("prompt must carry exactly 2 few-shot pairs")
        if len(self.articles_section) > DEFAULT_TOP_K:
            raise InvalidInputError(
                f"at most {DEFAULT_TOP_K} article blocks allowed,"
                f" got {len(self.articles_section)}"
            )

    def render(self) -> str:
        parts = [self.system_preamble.rstrip()]
        for block in self.articles_section:
            parts.append(
                f"Artykuł: {block.title}\n{block.body.strip()}\nLink: {block.url}"
            )
        for pair in self.fewshot:
            parts.append(f"Tweet: {pair.tweet}\nOdpowiedź: {pair.response}")
        parts.append(f"Tweet: {self.target_text}\nOdpowiedź:")
        return "\n\n".join(parts)


def assemble_prompt(
    target_text: str,
    ranked: list[tuple[Article, float]],
    config: ResponderConfig,
) -> PromptAssembly:
    if not target_text.strip():
        raise InvalidInputError("target text must be nonempty")
    if config.fewshot is None or len(config.fewshot) != 2:
        raise ConfigurationError("responder config must define 2 few-shot pairs")
    blocks = tuple(
        ArticleBlock(
            title=article.title,
            body=(article.summary if config.use_summaries and article.summary else article.text),
            url=article.url,
            similarity=sim,
        )
        for article, sim in ranked
    )
    return PromptAssembly(
        system_preamble=config.system_preamble,
        articles_section=blocks,
        fewshot=config.fewshot,
        target_text=target_text,
    )


# -- generation clients --------------------------------------------------------


class ScriptedGenerationClient:
    """Test stub: serves canned texts, either per target id or in sequence."""

    def __init__(
        self,
        by_target: dict[str, str] | None = None,
        sequence: list[str] | None = None,
    ) -> None:
        self._by_target = dict(by_target or {})
        self._sequence = list(sequence or [])
        self.calls: list[str] = []

    def generate(self, prompt_text: str, target_post_id: str) -> str:
        self.calls.append(prompt_text)
        if target_post_id in self._by_target:
            return self._by_target[target_post_id]
        if self._sequence:
            return self._sequence.pop(0)
        raise TransientGenerationError(f"no scripted reply for {target_post_id}")


class ReplayLogClient:
    """Reproduction mode: replies come from a recorded generation log."""

    def __init__(self, log_path: str | Path) -> None:
        self._log = json.loads(Path(log_path).read_text(encoding="utf-8"))

    def generate(self, prompt_text: str, target_post_id: str) -> str:
        try:
            return self._log[target_post_id]
        except KeyError as exc:
            raise TransientGenerationError(
                f"generation log has no entry for {target_post_id}"
            ) from exc


class RemoteGenerationClient:
    """Chat-completion style HTTP client; the API key comes from the env."""

    def __init__(
        self,
        base_url: str,
        model: str = "gpt-4",
        transport: httpx.BaseTransport | None = None,
    ) -> None:
        key = os.environ.get(GENERATION_API_KEY_ENV)
        if not key:
            raise ConfigurationError(
                f"set {GENERATION_API_KEY_ENV} to use the remote generation client"
            )
        self._model = model
        self._client = httpx.Client(
            base_url=base_url,
            headers={"Authorization": f"Bearer {key}"},
            transport=transport,
        )

    def generate(self, prompt_text: str, target_post_id: str) -> str:
        try:
            resp = self._client.post(
                "/v1/chat/completions",
                json={
                    "model": self._model,
                    "messages": [{"role": "system", "content": prompt_text}],
                },
            )
            resp.raise_for_status()
        except httpx.HTTPError as exc:
            raise TransientGenerationError(f"generation request failed: {exc}") from exc
        return resp.json()["choices"][0]["message"]["content"]


def reply_id_for(target_post_id: str, text: str) -> str:
    digest = hashlib.sha1(f"{target_post_id}\n{text}".encode()).hexdigest()[:12]
    return f"reply-{digest}"


def generate_reply(
    prompt: PromptAssembly,
    client,
    target_post_id: str,
    config: ResponderConfig,
    now: datetime,
    store_urls: set[str],
) -> CandidateReply:
    """Run the generation client and wrap the text as a CandidateReply.

    An over-long text gets one retry with the length reminder appended;
    a second violation raises rather than truncating silently. Cited URLs
    are store URLs appearing verbatim in the text.
    """
    rendered = prompt.render()
    text = client.generate(rendered, target_post_id)
    if len(text) > config.char_limit:
        retry_prompt = f"{rendered}\n\n{config.length_reminder}"
        text = client.generate(retry_prompt, target_post_id)
        if len(text) > config.char_limit:
            raise LengthViolationError(len(text), config.char_limit)
    cited = tuple(url for url in sorted(store_urls) if url in text)
    scores = tuple(
        (block.title, block.similarity) for block in prompt.articles_section
    )
    return CandidateReply(
        reply_id=reply_id_for(target_post_id, text),
        target_post_id=target_post_id,
        text=text,
        cited_urls=cited,
        retrieval_scores=scores,
        generation_cost_usd=estimate_cost(
            config.tokens_per_request, config.price_per_million_usd
        ),
        created_at=now,
    )


def estimate_cost(tokens_per_request: int, price_per_million: float) -> float:
    """Cost per generated reply in USD."""
    if tokens_per_request <= 0 or price_per_million <= 0:
        raise InvalidInputError("cost inputs must be positive")
    return tokens_per_request * price_per_million / 1_000_000
