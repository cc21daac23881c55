"""Bundled synthetic replay scenario: corpus generation and the replay driver.

`make_fixture` writes a 1,000-post corpus with planted harmful posts whose
scripted metric trajectories are constructed so the (original, min-10
impressions) stratum reproduces a 23% engagement drop in the experimental
arm. It precomputes detection and arm assignment by running the same model,
seed and iteration order the replay run will use, then solves for integer
like/impression deltas that hit the target group means.

`run_replay` drives the bundled scenario end to end against a store:
windows, scripted approvals, posting, snapshot tasks, final snapshots.
Everything is offline and deterministic under the recorded seed.
"""

from __future__ import annotations

import json
import random
from dataclasses import dataclass
from datetime import datetime, timedelta
from pathlib import Path
from zoneinfo import ZoneInfo

import numpy as np

from .articles import load_articles
from .classifier import LabeledExample, load_model, save_model, train
from .embeddings import LocalHashEmbedder, embed
from .experiment import ExperimentRunner, ScheduleConfig, WindowSummary
from .ingest import load_query_spec
from .models import to_iso
from .platforms import ReplaySource
from .responder import ReplayLogClient, ResponderConfig
from .store import Store

DATA_DIR = Path(__file__).resolve().parent / "data"
REPLAY_DIR = DATA_DIR / "replay"

DEFAULT_SEED = 20230824
ANALYSIS_SEED = 1282

# Target group means for the (original, min 10 impressions) stratum.
TARGET_CG_MEAN = 0.0346
TARGET_EG_MEAN = 0.0266

_WARSAW = ZoneInfo("Europe/Warsaw")

# The corpus reuses the labeled example texts verbatim: the hashed
# bag-of-words model keys on class vocabulary, so sampling known-vocabulary
# texts keeps planted posts and model detections in exact agreement.
def _load_text_banks(spec) -> tuple[list[str], list[str]]:
    from .ingest import matches_query
    from .models import PostRecord

    harmful, benign = [], []
    with open(DATA_DIR / "training_posts.jsonl", encoding="utf-8") as fh:
        for i, line in enumerate(fh):
            rec = json.loads(line)
            probe = PostRecord(
                post_id=f"probe-{i}",
                author_id="x",
                text=rec["text"],
                created_at=datetime(2023, 8, 1, tzinfo=ZoneInfo("UTC")),
                is_reply=False,
            )
            if not matches_query(spec, probe):
                continue
            (harmful if rec["label"] == "harmful" else benign).append(rec["text"])
    if len(harmful) < 5 or len(benign) < 5:
        raise AssertionError("text banks too small after query filtering")
    return harmful, benign

_REPLY_TEMPLATES_LINKED = [
    "To fake news. Pracujący Ukraińcy płacą u nas podatki i składki, bilans jest dodatni. Sprawdź: {url}",
    "Nieprawda, zweryfikowano to tutaj: {url} Te same zasady dla wszystkich.",
    "Zanim podasz dalej, sprawdź fakty: {url} Dane mówią co innego.",
    "Fakty: większość uchodźców pracuje i utrzymuje się sama. Źródło: {url}",
    "To obalony mit, tu rzetelne źródło: {url} Warto czytać dalej niż nagłówek.",
]

_REPLY_TEMPLATES_PLAIN = [
    "Mowa nienawiści niczego nie rozwiązuje. Uchodźcy to ludzie uciekający przed wojną, a większość z nich pracuje i płaci podatki.",
    "Dane pokazują coś innego: pomoc się bilansuje, a rynek pracy zyskuje. Hejt nie zastąpi faktów.",
    "Łatwo obrażać, trudniej sprawdzić fakty. Większość uchodźców utrzymuje się samodzielnie.",
    "Takie uogólnienia krzywdzą konkretnych ludzi. Sąsiedzi z Ukrainy pracują i płacą u nas składki.",
    "Wojna to nie wybór. Pomaganie to nasza wspólna decyzja i ona się Polsce opłaca.",
]

_LINK_URLS = [
    "https://www.tvp.info/64268612/ukraincy-zaplacili-w-polsce-10-mld-zlotych-podatku",
    "https://demagog.org.pl/wypowiedzi/emerytura-dla-ukraincow-po-dniu-pracy-to-nieprawda/",
    "https://edialog.media/2023/08/09/co-dziesiata-firma-w-polsce-ukrainska/",
    "https://www.zus.pl/-/coraz-wi",
]


def _windows_utc(start_day: datetime) -> list[datetime]:
    """Eight classification windows: 10/14/18/22 local over two days."""
    out = []
    for day in range(2):
        for hour in (10, 14, 18, 22):
            local = datetime(
                start_day.year, start_day.month, start_day.day, hour, tzinfo=_WARSAW
            ) + timedelta(days=day)
            out.append(local.astimezone(ZoneInfo("UTC")))
    return out


@dataclass
class _PlannedPost:
    post_id: str
    text: str
    created_at: datetime
    is_reply: bool
    parent_id: str | None
    window: datetime
    harmful: bool


def _plan_posts(
    rng: random.Random,
    windows: list[datetime],
    n_posts: int,
    n_harmful: int,
    banks: tuple[list[str], list[str]],
):
    harmful_bank, benign_bank = banks
    per_window = n_posts // len(windows)
    harmful_per_window = [n_harmful // len(windows)] * len(windows)
    for i in range(n_harmful - sum(harmful_per_window)):
        harmful_per_window[i] += 1
    # 36 of the 51 planted posts are thread roots, the rest replies.
    reply_flags = [False] * 36 + [True] * (n_harmful - 36)
    rng.shuffle(reply_flags)
    flag_iter = iter(reply_flags)

    posts: list[_PlannedPost] = []
    idx = 0
    for w, window in enumerate(windows):
        harmful_slots = set(rng.sample(range(per_window), harmful_per_window[w]))
        for slot in range(per_window):
            harmful = slot in harmful_slots
            offset_min = rng.randint(10, 225)
            created = window - timedelta(minutes=offset_min, seconds=rng.randint(0, 59))
            if harmful:
                text = rng.choice(harmful_bank)
                is_reply = next(flag_iter)
            else:
                text = rng.choice(benign_bank)
                is_reply = rng.random() < 0.35
            posts.append(
                _PlannedPost(
                    post_id=f"p{idx:04d}",
                    text=text,
                    created_at=created,
                    is_reply=is_reply,
                    parent_id=f"ext-{idx:04d}" if is_reply else None,
                    window=window,
                    harmful=harmful,
                )
            )
            idx += 1
    return posts


def _solve_stratum_deltas(
    nrng: np.random.Generator,
    n: int,
    target_mean: float,
    spread: float,
) -> list[tuple[int, int]]:
    """Integer (delta_likes, delta_impressions) pairs whose engagement mean
    lands on `target_mean` to a few 1e-6.

    Ratios are drawn around the target, realized as integer counts, then the
    residual is absorbed greedily by the highest-impression posts (one post
    is forced to 20k impressions so the correction granularity is fine).
    """
    if n < 4:
        raise ValueError("stratum needs at least 4 posts")
    pairs: list[list[int]] = []
    for k in range(n):
        if k == 0:
            impr = 20_000
        elif k == 1:
            impr = 2_500
        else:
            # Floor of 200 keeps the like-count quantization (1/impressions)
            # small next to the drawn spread, so the realized group variance
            # stays close to the designed one.
            impr = int(np.exp(nrng.uniform(np.log(200), np.log(3000))))
        ratio = float(np.clip(nrng.normal(target_mean, spread), 0.004, 0.09))
        pairs.append([max(0, round(ratio * impr)), impr])

    def mean() -> float:
        return sum(l / i for l, i in pairs) / n

    # Only high-impression posts absorb the residual: one like there shifts
    # the post's ratio by <= 1/800, so corrections never create outliers.
    # The 20k-impression post corrects last, then a one-unit trim finishes.
    eligible = [i for i in range(n) if pairs[i][1] >= 800]
    for idx in sorted(eligible, key=lambda i: pairs[i][1]):
        correction = round((target_mean - mean()) * n * pairs[idx][1])
        pairs[idx][0] = max(0, pairs[idx][0] + correction)
    fine = max(range(n), key=lambda i: pairs[i][1])
    base = pairs[fine][0]
    pairs[fine][0] = max(
        0,
        min((base + d for d in (-1, 0, 1)), key=lambda v: _abs_after(pairs, fine, v, target_mean, n)),
    )
    residual = abs(mean() - target_mean)
    if residual > 3e-6:
        raise ValueError(f"could not land stratum mean, residual {residual}")
    return [(l, i) for l, i in pairs]


def _abs_after(pairs, idx: int, value: int, target: float, n: int) -> float:
    saved = pairs[idx][0]
    pairs[idx][0] = value
    out = abs(sum(l / i for l, i in pairs) / n - target)
    pairs[idx][0] = saved
    return out


def make_fixture(
    out_dir: str | Path = REPLAY_DIR,
    seed: int = DEFAULT_SEED,
    n_posts: int = 1000,
    n_harmful: int = 51,
) -> dict:
    """Generate the bundled replay scenario and self-verify it end to end."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rng = random.Random(seed)
    nrng = np.random.default_rng(seed)

    spec = load_query_spec(DATA_DIR / "query.json")
    windows = _windows_utc(datetime(2023, 8, 24))
    posts = _plan_posts(rng, windows, n_posts, n_harmful, _load_text_banks(spec))

    # Train the detection model, then reload it so replay scoring uses the
    # serialized weights. Stronger regularization than the library default
    # keeps scores away from saturation and the decision margin healthy.
    provider = LocalHashEmbedder()
    examples = []
    with open(DATA_DIR / "training_posts.jsonl", encoding="utf-8") as fh:
        for i, line in enumerate(fh):
            rec = json.loads(line)
            examples.append(
                LabeledExample(
                    post_id=f"train-{i}",
                    embedding=tuple(embed(rec["text"], provider)),
                    label=rec["label"],
                )
            )
    model = train(examples, provider.tag, l2=0.001, max_iter=2000)
    save_model(model, out / "model.json")
    model = load_model(out / "model.json")

    # Detection pass in exact replay order (window by window, corpus order).
    detected: list[_PlannedPost] = []
    by_window: dict[datetime, list[_PlannedPost]] = {}
    for post in posts:
        by_window.setdefault(post.window, []).append(post)
    for window in windows:
        for post in by_window[window]:
            if not _matches(spec, post):
                continue
            vec = embed(post.text, provider)
            prob = float(model.predict_proba(vec.reshape(1, -1))[0])
            if prob >= model.threshold_:
                detected.append(post)

    planted = {p.post_id for p in posts if p.harmful}
    if {p.post_id for p in detected} != planted:
        raise AssertionError(
            "planted and detected sets differ; retune the text banks"
        )

    from .experiment import ArmAssigner

    arms = ArmAssigner.arm_sequence(seed, len(detected))
    arm_of = {post.post_id: arm for post, arm in zip(detected, arms)}

    # Stratum roles among detected originals: per arm, one anomaly (negative
    # like change), one below the min-10 impression cut; one experimental
    # post is deleted mid-monitoring. The rest carry the engineered means.
    originals = {"experimental": [], "control": []}
    replies = {"experimental": [], "control": []}
    for post in detected:
        (replies if post.is_reply else originals)[arm_of[post.post_id]].append(post)

    roles: dict[str, str] = {}
    for arm in ("experimental", "control"):
        group = originals[arm]
        roles[group[0].post_id] = "anomaly"
        roles[group[1].post_id] = "low_impressions"
        start = 2
        if arm == "experimental":
            roles[group[2].post_id] = "deleted"
            start = 3
        for post in group[start:]:
            roles[post.post_id] = "stratum"

    stratum_posts = {
        arm: [p for p in originals[arm] if roles[p.post_id] == "stratum"]
        for arm in ("experimental", "control")
    }
    deltas = {
        "control": _solve_stratum_deltas(
            nrng, len(stratum_posts["control"]), TARGET_CG_MEAN, 0.005
        ),
        "experimental": _solve_stratum_deltas(
            nrng, len(stratum_posts["experimental"]), TARGET_EG_MEAN, 0.006
        ),
    }

    # Link flags and reply texts for every experimental-arm detection.
    generations: dict[str, str] = {}
    has_link: dict[str, bool] = {}
    for post in detected:
        if arm_of[post.post_id] != "experimental":
            continue
        linked = rng.random() < 0.53
        has_link[post.post_id] = linked
        if linked:
            text = rng.choice(_REPLY_TEMPLATES_LINKED).format(url=rng.choice(_LINK_URLS))
        else:
            text = rng.choice(_REPLY_TEMPLATES_PLAIN)
        if len(text) > 200:
            raise AssertionError(f"scripted reply too long: {len(text)}")
        generations[post.post_id] = text

    trajectories = _build_trajectories(
        nrng, rng, posts, arm_of, roles, stratum_posts, deltas, has_link
    )

    corpus_path = out / "corpus.jsonl"
    with open(corpus_path, "w", encoding="utf-8") as fh:
        for post in posts:
            fh.write(
                json.dumps(
                    {
                        "post_id": post.post_id,
                        "author_id": f"author-{int(post.post_id[1:]) % 311:03d}",
                        "text": post.text,
                        "created_at": to_iso(post.created_at),
                        "is_reply": post.is_reply,
                        "parent_id": post.parent_id,
                        "language_tag": "pl",
                        "snapshots": trajectories[post.post_id],
                    },
                    ensure_ascii=False,
                )
                + "\n"
            )

    (out / "generations.json").write_text(
        json.dumps(generations, ensure_ascii=False, indent=1), encoding="utf-8"
    )

    (out / "experiment.cfg").write_text(
        "# schedule\n"
        "window_times = 10:00,14:00,18:00,22:00\n"
        "max_age_hours = 4\n"
        "quiet_start = 00:00\n"
        "quiet_end = 06:00\n"
        "monitoring_days = 6\n"
        "initial_snapshot_delay_minutes = 15\n"
        "timezone = Europe/Warsaw\n"
        "\n"
        "# wiring, relative to this file\n"
        "store = replay-store.sqlite\n"
        "corpus = corpus.jsonl\n"
        "generations = generations.json\n"
        "model = model.json\n"
        "articles = ../articles.json\n"
        "responder_config = ../responder_config.json\n"
        "query = ../query.json\n"
        f"seed = {seed}\n",
        encoding="utf-8",
    )

    manifest = {
        "seed": seed,
        "analysis_seed": ANALYSIS_SEED,
        "n_posts": n_posts,
        "planted_harmful": sorted(planted),
        "windows": [to_iso(w) for w in windows],
        "arms": {p.post_id: arm_of[p.post_id] for p in detected},
        "targets": {
            "cg_mean": TARGET_CG_MEAN,
            "eg_mean": TARGET_EG_MEAN,
            "stratum": "original, min 10 impression change",
        },
    }
    (out / "manifest.json").write_text(
        json.dumps(manifest, ensure_ascii=False, indent=1), encoding="utf-8"
    )

    verified = _verify_fixture(out)
    manifest["verified"] = verified
    (out / "manifest.json").write_text(
        json.dumps(manifest, ensure_ascii=False, indent=1), encoding="utf-8"
    )
    return manifest


def _matches(spec, post: _PlannedPost) -> bool:
    from .ingest import matches_query
    from .models import PostRecord

    record = PostRecord(
        post_id=post.post_id,
        author_id="x",
        text=post.text,
        created_at=post.created_at,
        is_reply=post.is_reply,
        parent_id=post.parent_id,
        language_tag="pl",
    )
    return matches_query(spec, record)


def _build_trajectories(
    nrng: np.random.Generator,
    rng: random.Random,
    posts: list[_PlannedPost],
    arm_of: dict[str, str],
    roles: dict[str, str],
    stratum_posts: dict[str, list[_PlannedPost]],
    deltas: dict[str, list[tuple[int, int]]],
    has_link: dict[str, bool],
) -> dict[str, list[dict]]:
    """Two-point step trajectories: initial values hold from creation until
    the window day is over, final values from +24h on. Snapshot timing
    anywhere inside those plateaus reads identical numbers."""
    stratum_delta = {
        post.post_id: delta
        for arm in ("experimental", "control")
        for post, delta in zip(stratum_posts[arm], deltas[arm])
    }

    trajectories: dict[str, list[dict]] = {}
    for post in posts:
        arm = arm_of.get(post.post_id)
        role = roles.get(post.post_id)
        likes0 = rng.randint(0, 30)
        impr0 = rng.randint(60, 2500)
        replies0 = rng.randint(0, 6)

        if arm is None:
            dl = rng.randint(0, 25)
            di = rng.randint(5, 4000)
            dr = rng.randint(0, 5)
        elif role == "stratum":
            dl, di = stratum_delta[post.post_id]
            ratio = _reply_ratio_target(arm, post.is_reply, has_link.get(post.post_id))
            dr = max(0, round(float(nrng.normal(ratio, ratio / 4)) * di))
            if arm == "experimental" and rng.random() < 0.45:
                replies0 = 0  # bot reply opened the discussion
        elif role == "anomaly":
            likes0 = max(likes0, 5)
            dl = -rng.randint(1, 3)
            di = rng.randint(40, 800)
            dr = rng.randint(0, 3)
        elif role == "low_impressions":
            dl = rng.randint(0, 1)
            di = rng.randint(1, 9)
            dr = 0
        elif role == "deleted":
            dl, di, dr = 5, 200, 1
        else:  # detected replies: loose reply-strata flavor
            di = int(np.exp(nrng.uniform(np.log(12), np.log(2000))))
            e_target = 0.0362 if arm == "experimental" else 0.0331
            dl = max(0, round(float(nrng.normal(e_target, 0.006)) * di))
            ratio = _reply_ratio_target(arm, True, has_link.get(post.post_id))
            dr = max(0, round(float(nrng.normal(ratio, ratio / 4)) * di))
            if arm == "experimental" and rng.random() < 0.55:
                replies0 = 0

        snapshots = [
            {
                "taken_at": to_iso(post.created_at),
                "likes": likes0,
                "impressions": impr0,
                "replies": replies0,
            },
            {
                "taken_at": to_iso(post.window + timedelta(hours=24)),
                "likes": likes0 + dl,
                "impressions": impr0 + di,
                "replies": replies0 + dr,
            },
        ]
        if role == "deleted":
            snapshots.append(
                {"deleted_at": to_iso(post.window + timedelta(days=2))}
            )
        trajectories[post.post_id] = snapshots
    return trajectories


def _reply_ratio_target(arm: str | None, is_reply: bool, linked: bool | None) -> float:
    if arm == "control":
        return 0.0028 if is_reply else 0.0032
    base = 0.0134 if is_reply else 0.0081
    if linked:
        base *= 1.24
    return base


# -- replay driver -------------------------------------------------------------


def build_replay_runner(
    store: Store, data_dir: str | Path = DATA_DIR
) -> tuple[ExperimentRunner, dict]:
    """Wire an ExperimentRunner onto the bundled replay scenario."""
    data_dir = Path(data_dir)
    replay_dir = data_dir / "replay"
    manifest = json.loads((replay_dir / "manifest.json").read_text(encoding="utf-8"))
    provider = LocalHashEmbedder()
    runner = ExperimentRunner(
        store=store,
        source=ReplaySource(replay_dir / "corpus.jsonl"),
        classifier=load_model(replay_dir / "model.json"),
        provider=provider,
        articles=load_articles(data_dir / "articles.json", provider),
        responder_config=ResponderConfig.from_file(data_dir / "responder_config.json"),
        generation_client=ReplayLogClient(replay_dir / "generations.json"),
        query_spec=load_query_spec(data_dir / "query.json"),
        schedule=ScheduleConfig(),
        seed=manifest["seed"],
    )
    return runner, manifest


def run_replay(
    store: Store, data_dir: str | Path = DATA_DIR
) -> tuple[list[WindowSummary], dict]:
    """Drive the bundled scenario: every window, scripted approvals 10
    minutes after each window, snapshots, and final metrics after the
    monitoring period."""
    runner, manifest = build_replay_runner(store, data_dir)
    windows = [datetime.fromisoformat(w) for w in manifest["windows"]]
    summaries = []
    for window in windows:
        summary = runner.run_window(window)
        decide_at = window + timedelta(minutes=10)
        for item in runner.store.list_review_items(state="pending"):
            decided = runner.queue.decide(item.item_id, "approve", "replay-reviewer", decide_at)
            if decided.kind == "experimental":
                runner.queue.post_approved(decided, runner.source, decide_at)
        runner.process_due_snapshots(window + timedelta(minutes=30))
        summaries.append(summary)
    final_time = windows[-1] + runner.schedule.monitoring_period + timedelta(hours=2)
    runner.snapshot_all_due_finals(final_time)
    return summaries, manifest


def _verify_fixture(replay_dir: Path) -> dict:
    """Run the bundled scenario in memory and check the headline numbers."""
    from .analysis import build_observations, compare_groups
    from .models import AnalysisFilter

    store = Store(":memory:")
    summaries, manifest = run_replay(store, data_dir=replay_dir.parent)
    obs = build_observations(store)
    result = compare_groups(
        obs,
        AnalysisFilter(thread_position="original", min_delta_impressions=10),
        "engagement",
        rng=ANALYSIS_SEED,
    )
    target_diff = (TARGET_EG_MEAN - TARGET_CG_MEAN) / TARGET_CG_MEAN * 100
    checks = {
        "fetched_total": sum(s.fetched for s in summaries),
        "classified_harmful": sum(s.classified_harmful for s in summaries),
        "cg_mean": result.cg_mean,
        "eg_mean": result.eg_mean,
        "diff_pct_of_cg": result.diff_pct_of_cg,
        "p_bootstrap": result.p_bootstrap,
        "p_t_test": result.p_t_test,
        "n_cg": result.n_cg,
        "n_eg": result.n_eg,
    }
    if abs(result.diff_pct_of_cg - target_diff) > 0.5:
        raise AssertionError(f"stratum diff off target: {checks}")
    if result.p_bootstrap >= 0.01:
        raise AssertionError(f"bootstrap p too large: {checks}")
    store.close()
    return checks


def main(argv: list[str] | None = None) -> None:
    import argparse

    parser = argparse.ArgumentParser(description="regenerate the bundled replay fixture")
    parser.add_argument("--out", default=str(REPLAY_DIR))
    parser.add_argument("--seed", type=int, default=DEFAULT_SEED)
    args = parser.parse_args(argv)
    manifest = make_fixture(out_dir=args.out, seed=args.seed)
    print(json.dumps(manifest["verified"], indent=2))


if __name__ == "__main__":
    main()
