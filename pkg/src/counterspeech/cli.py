"""Command-line entry points for every pipeline stage.

Replay-mode commands accept --now so scheduled operations are reproducible;
live-mode commands use the wall clock and environment credentials.
"""

from __future__ import annotations

import json
import sys
from datetime import datetime, timedelta, timezone
from pathlib import Path

import click
import numpy as np

from . import synthetic
from .analysis import (
    build_observations,
    compare_groups,
    percentile_table,
    render_percentiles_text,
    render_results_text,
    result_to_dict,
)
from .articles import load_articles
from .classifier import (
    LabeledExample,
    load_model,
    predict,
    save_model,
    train,
)
from .clock import SimulatedClock, SystemClock
from .embeddings import LocalHashEmbedder, embed
from .errors import CounterspeechError
from .experiment import ExperimentRunner, parse_schedule_config
from .ingest import fetch_recent as ingest_fetch_recent
from .ingest import load_query_spec
from .models import AnalysisFilter
from .platforms import LivePlatformClient, ReplaySource
from .responder import ReplayLogClient, ResponderConfig, assemble_prompt, rank_articles
from .store import Store


def _parse_now(value: str | None) -> datetime:
    if value is None:
        return datetime.now(timezone.utc)
    ts = datetime.fromisoformat(value)
    return ts if ts.tzinfo else ts.replace(tzinfo=timezone.utc)


@click.group()
def main() -> None:
    """Counter-speech intervention engine."""


@main.command("ingest")
@click.option("--query-file", required=True, type=click.Path(exists=True))
@click.option("--mode", type=click.Choice(["live", "replay"]), default="replay")
@click.option("--corpus", type=click.Path(exists=True), help="replay corpus (jsonl)")
@click.option("--base-url", help="platform API base URL (live mode)")
@click.option("--max-age-hours", type=float, default=4.0, show_default=True)
@click.option("--store", "store_path", required=True, type=click.Path())
@click.option("--now", "now_str", help="fetch time (ISO); defaults to wall clock")
def ingest_cmd(query_file, mode, corpus, base_url, max_age_hours, store_path, now_str):
    """Fetch recent posts matching the query and persist them."""
    spec = load_query_spec(query_file)
    now = _parse_now(now_str)
    if mode == "replay":
        if not corpus:
            raise click.UsageError("--corpus is required in replay mode")
        source = ReplaySource(corpus)
    else:
        if not base_url:
            raise click.UsageError("--base-url is required in live mode")
        source = LivePlatformClient(base_url)
    fetched = ingest_fetch_recent(source, spec, now, timedelta(hours=max_age_hours))
    store = Store(store_path)
    written = store.persist([p for p, _ in fetched], [s for _, s in fetched])
    click.echo(f"fetched {len(fetched)} posts, wrote {written} new rows")


@main.group("classify")
def classify_group() -> None:
    """Train and apply the hate-speech model."""


@classify_group.command("train")
@click.option("--data", required=True, type=click.Path(exists=True), help="jsonl: {text, label}")
@click.option("--out", "out_path", required=True, type=click.Path())
@click.option("--dim", type=int, default=256, show_default=True)
@click.option("--l2", type=float, default=1e-4, show_default=True)
@click.option("--max-iter", type=int, default=2000, show_default=True)
def classify_train(data, out_path, dim, l2, max_iter):
    """Fit the embeddings + logistic-regression model on labeled texts."""
    provider = LocalHashEmbedder(dim=dim)
    examples = []
    with open(data, encoding="utf-8") as fh:
        for i, line in enumerate(fh):
            if not line.strip():
                continue
            rec = json.loads(line)
            examples.append(
                LabeledExample(
                    post_id=rec.get("post_id", f"row-{i}"),
                    embedding=tuple(embed(rec["text"], provider)),
                    label=rec["label"],
                )
            )
    model = train(examples, provider.tag, l2=l2, max_iter=max_iter)
    save_model(model, out_path)
    click.echo(
        f"trained on {len(examples)} examples"
        f" (threshold {model.threshold_:.6f}, {model.n_iter_} iterations)"
    )


@classify_group.command("score")
@click.option("--model", "model_path", required=True, type=click.Path(exists=True))
@click.option("--input", "input_path", required=True, type=click.Path(exists=True))
def classify_score(model_path, input_path):
    """Score jsonl posts ({post_id?, text}); writes jsonl to stdout."""
    model = load_model(model_path)
    provider = LocalHashEmbedder(dim=model.dim_)
    with open(input_path, encoding="utf-8") as fh:
        for i, line in enumerate(fh):
            if not line.strip():
                continue
            rec = json.loads(line)
            prob, harmful = predict(model, embed(rec["text"], provider))
            click.echo(
                json.dumps(
                    {
                        "post_id": rec.get("post_id", f"row-{i}"),
                        "probability": prob,
                        "is_harmful": harmful,
                    }
                )
            )


@main.command("respond")
@click.option("--post-id", required=True)
@click.option("--store", "store_path", required=True, type=click.Path(exists=True))
@click.option("--articles", "articles_path", default=str(synthetic.DATA_DIR / "articles.json"), show_default=True)
@click.option("--config", "config_path", default=str(synthetic.DATA_DIR / "responder_config.json"), show_default=True)
@click.option("--dry-run", is_flag=True, help="print the assembled prompt, no generation call")
def respond_cmd(post_id, store_path, articles_path, config_path, dry_run):
    """Assemble (and optionally send) the counter-speech prompt for a post."""
    store = Store(store_path)
    post = store.get_post(post_id)
    if post is None:
        raise click.ClickException(f"post {post_id} not in store")
    provider = LocalHashEmbedder()
    articles = load_articles(articles_path, provider)
    config = ResponderConfig.from_file(config_path)
    ranked = rank_articles(embed(post.text, provider), articles)
    prompt = assemble_prompt(post.text, ranked, config)
    if dry_run:
        click.echo(prompt.render())
        return
    raise click.ClickException(
        "live generation needs a configured client; use --dry-run or the experiment pipeline"
    )


@main.group("review")
def review_group() -> None:
    """Human review queue service."""


@review_group.command("serve")
@click.option("--store", "store_path", required=True, type=click.Path())
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", type=int, default=8400, show_default=True)
@click.option("--articles", "articles_path", default=str(synthetic.DATA_DIR / "articles.json"), show_default=True)
@click.option("--corpus", type=click.Path(exists=True), help="replay corpus; enables simulated posting")
@click.option("--sim-clock", "sim_clock_start", help="start the server on a simulated clock (ISO time)")
def review_serve(store_path, host, port, articles_path, corpus, sim_clock_start):
    """Serve the review HTTP API (and SSE stream) for the reviewer console."""
    import uvicorn

    from .review_api import create_app

    store = Store(store_path)
    clock = (
        SimulatedClock(_parse_now(sim_clock_start)) if sim_clock_start else SystemClock()
    )
    provider = LocalHashEmbedder()
    articles = load_articles(articles_path, provider)
    poster = ReplaySource(corpus) if corpus else None
    app = create_app(
        store,
        clock,
        poster=poster,
        article_urls={a.url for a in articles},
        allow_clock_control=sim_clock_start is not None,
    )
    uvicorn.run(app, host=host, port=port, log_level="warning")


@main.group("experiment")
def experiment_group() -> None:
    """A/B experiment orchestration."""


def _runner_from_config(config_path: str, seed: int | None, mode: str) -> ExperimentRunner:
    schedule, entries = parse_schedule_config(config_path)
    base = Path(config_path).resolve().parent

    def path_of(key: str, default: str | None = None) -> Path:
        raw = entries.get(key, default)
        if raw is None:
            raise click.ClickException(f"config is missing {key}")
        p = Path(raw)
        return p if p.is_absolute() else base / p

    store = Store(path_of("store"))
    provider = LocalHashEmbedder()
    responder_config = ResponderConfig.from_file(path_of("responder_config"))
    if mode == "replay":
        source = ReplaySource(path_of("corpus"))
        generation = ReplayLogClient(path_of("generations"))
    else:
        from .responder import RemoteGenerationClient

        for key in ("base_url", "generation_url"):
            if key not in entries:
                raise click.ClickException(f"live mode needs {key} in the config")
        source = LivePlatformClient(
            entries["base_url"],
            self_identification=responder_config.self_identification,
        )
        generation = RemoteGenerationClient(
            entries["generation_url"], model=entries.get("generation_model", "gpt-4")
        )
    stored_seed = store.get_meta("assignment_seed")
    if seed is None:
        seed = int(stored_seed) if stored_seed else int(entries.get("seed", "0"))
    return ExperimentRunner(
        store=store,
        source=source,
        classifier=load_model(path_of("model")),
        provider=provider,
        articles=load_articles(path_of("articles"), provider),
        responder_config=responder_config,
        generation_client=generation,
        query_spec=load_query_spec(path_of("query")),
        schedule=schedule,
        seed=seed,
    )


@experiment_group.command("run")
@click.option("--config", "config_path", required=True, type=click.Path(exists=True))
@click.option("--seed", type=int, default=None)
@click.option("--mode", type=click.Choice(["live", "replay"]), default="replay")
@click.option("--now", "now_str", help="window time (ISO); defaults to wall clock")
def experiment_run(config_path, seed, mode, now_str):
    """Run one classification window end to end."""
    runner = _runner_from_config(config_path, seed, mode)
    summary = runner.run_window(_parse_now(now_str))
    click.echo(json.dumps(summary.__dict__))


@experiment_group.command("snapshot")
@click.option("--config", "config_path", required=True, type=click.Path(exists=True))
@click.option("--due", is_flag=True, default=True, help="process everything currently due")
@click.option("--now", "now_str")
def experiment_snapshot(config_path, due, now_str):
    """Fetch metrics for due snapshot tasks and due final snapshots."""
    runner = _runner_from_config(config_path, None, "replay")
    now = _parse_now(now_str)
    tasks = runner.process_due_snapshots(now)
    finals = runner.snapshot_all_due_finals(now)
    click.echo(json.dumps({"snapshot_tasks": tasks, "final_snapshots": finals}))


@experiment_group.command("status")
@click.option("--store", "store_path", required=True, type=click.Path(exists=True))
def experiment_status(store_path):
    """Assignment and review-queue counters."""
    store = Store(store_path)
    assignments = store.list_assignments()
    click.echo(
        json.dumps(
            {
                "assignments_total": len(assignments),
                "experimental": sum(1 for a in assignments if a.arm == "experimental"),
                "control": sum(1 for a in assignments if a.arm == "control"),
                "posted": sum(1 for a in assignments if a.posted_reply_id is not None),
                "unposted_flagged": sum(1 for a in assignments if a.unposted),
                "removed": sum(1 for a in assignments if a.removed_at is not None),
                "final_snapshots": sum(
                    1 for a in assignments if a.final_snapshot_at is not None
                ),
                "pending_reviews": len(store.list_review_items(state="pending")),
            }
        )
    )


@experiment_group.command("replay")
@click.option("--store", "store_path", required=True, type=click.Path())
def experiment_replay(store_path):
    """Drive the bundled synthetic scenario end to end (offline demo)."""
    store = Store(store_path)
    summaries, manifest = synthetic.run_replay(store)
    for window, summary in zip(manifest["windows"], summaries):
        click.echo(f"{window}: {json.dumps(summary.__dict__)}")
    click.echo(f"analysis seed: {manifest['analysis_seed']}")


@main.group("analyze")
def analyze_group() -> None:
    """Reports over completed assignments."""


@analyze_group.command("report")
@click.option("--store", "store_path", required=True, type=click.Path(exists=True))
@click.option("--metric", type=click.Choice(["engagement", "replies"]), default="engagement", show_default=True)
@click.option("--position", type=click.Choice(["original", "reply"]), default="original", show_default=True)
@click.option("--min-impr", type=int, default=10, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--resamples", type=int, default=10_000, show_default=True)
@click.option("--format", "fmt", type=click.Choice(["text", "json"]), default="text", show_default=True)
def analyze_report(store_path, metric, position, min_impr, seed, resamples, fmt):
    """Group comparison for one stratum, plus the percentile table."""
    store = Store(store_path)
    observations = build_observations(store)
    metric_name = "engagement" if metric == "engagement" else "reply_ratio"
    f = AnalysisFilter(thread_position=position, min_delta_impressions=min_impr)
    result = compare_groups(
        observations, f, metric_name, rng=np.random.default_rng(seed), resamples=resamples
    )
    if fmt == "json":
        click.echo(json.dumps(result_to_dict(result, seed, resamples), indent=2))
        return
    click.echo(render_results_text([result]))
    from .analysis import filter_observations

    stratum = filter_observations(
        observations, f, anomaly_rule="engagement" if metric == "engagement" else "replies"
    )
    click.echo("")
    click.echo(render_percentiles_text(percentile_table(stratum)))


def entrypoint() -> None:
    try:
        main(standalone_mode=True)
    except CounterspeechError as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(1)


if __name__ == "__main__":
    entrypoint()
