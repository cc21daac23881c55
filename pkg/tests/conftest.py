import json
from datetime import datetime, timezone

import pytest

from counterspeech.articles import load_articles
from counterspeech.classifier import LabeledExample, train
from counterspeech.embeddings import LocalHashEmbedder, embed
from counterspeech.responder import ResponderConfig
from counterspeech.store import Store
from counterspeech.synthetic import DATA_DIR

T0 = datetime(2023, 8, 24, 8, 0, tzinfo=timezone.utc)


@pytest.fixture
def store():
    s = Store(":memory:")
    yield s
    s.close()


@pytest.fixture(scope="session")
def provider():
    return LocalHashEmbedder()


@pytest.fixture(scope="session")
def articles(provider):
    return load_articles(DATA_DIR / "articles.json", provider)


@pytest.fixture(scope="session")
def responder_config():
    return ResponderConfig.from_file(DATA_DIR / "responder_config.json")


@pytest.fixture(scope="session")
def training_examples(provider):
    out = []
    with open(DATA_DIR / "training_posts.jsonl", encoding="utf-8") as fh:
        for i, line in enumerate(fh):
            rec = json.loads(line)
            out.append(
                LabeledExample(
                    post_id=f"train-{i}",
                    embedding=tuple(embed(rec["text"], provider)),
                    label=rec["label"],
                )
            )
    return out


@pytest.fixture(scope="session")
def fixture_model(training_examples, provider):
    return train(training_examples, provider.tag, l2=0.001, max_iter=2000)
