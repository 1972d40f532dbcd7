"""End-to-end pipeline: stage orchestration, artifacts, and resumability.

Stages run in a fixed order, each writing its artifacts to the workdir
atomically.  A stage is skipped on re-run when its recorded hash (own params,
chained upstream hashes, external input digests) still matches and no
upstream stage re-ran; anything downstream of a re-run stage re-runs too.
"""

import hashlib
import json
import logging
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

from .classifier import (
    ReferenceEncoder,
    TrainConfig,
    classify_phrase,
    embed_phrase,
    finetune_on_phrases,
    load_checkpoint,
    phrase_input,
    save_checkpoint,
    train_on_sentences,
)
from .clustering import ClusterConfig, OpinionCluster, OpinionSummary, build_summary, summary_to_json
from .corpus import Vocabulary, build_vocab, load_corpus, load_manifest, load_schema, save_manifest
from .distill import (
    DistillConfig,
    PseudoPhraseLabel,
    PseudoSentenceLabel,
    joint_agreement_label,
    pseudo_sentence_labels,
)
from .embedding import EmbedConfig, SphereTrainer, init_space, load_space, phrase_similarity, save_space
from .extraction import extract_candidates, phrase_from_json, phrase_to_json

log = logging.getLogger("opinionsum")

_KINDS = ("aspect", "sentiment")


class ValidationError(ValueError):
    pass


class StageError(RuntimeError):
    def __init__(self, stage: str, message: str):
        super().__init__(message)
        self.stage = stage


@dataclass
class PipelineConfig:
    corpus: str = ""
    trees: str | None = None
    aspect_schema: str = ""
    sentiment_schema: str = ""
    workdir: str = "work"
    seed: int = 0
    thread_count: int = 0
    min_count: int = 1
    encoder_dim: int = 32
    embed: EmbedConfig = field(default_factory=EmbedConfig)
    distill: DistillConfig = field(default_factory=DistillConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    cluster: ClusterConfig = field(default_factory=ClusterConfig)

    @classmethod
    def from_dict(cls, data: dict) -> "PipelineConfig":
        data = dict(data)
        kwargs = {}
        for name, sub in (("embed", EmbedConfig), ("distill", DistillConfig),
                          ("train", TrainConfig), ("cluster", ClusterConfig)):
            if name in data:
                try:
                    kwargs[name] = sub(**data.pop(name))
                except TypeError as exc:
                    raise ValidationError(f"bad {name} config: {exc}") from None
        known = {"corpus", "trees", "aspect_schema", "sentiment_schema", "workdir",
                 "seed", "thread_count", "min_count", "encoder_dim"}
        unknown = set(data) - known
        if unknown:
            raise ValidationError(f"unknown config keys: {sorted(unknown)}")
        kwargs.update(data)
        return cls(**kwargs)

    def validate(self):
        missing = []
        for label, path in (
            ("corpus", self.corpus),
            ("trees", self.trees),
            ("aspect_schema", self.aspect_schema),
            ("sentiment_schema", self.sentiment_schema),
        ):
            if label == "trees" and path is None:
                continue
            if not path or not Path(path).exists():
                missing.append(f"{label}: {path!r}")
        if missing:
            raise ValidationError("missing input paths: " + "; ".join(missing))
        if not self.workdir:
            raise ValidationError("workdir not set")
        if self.thread_count < 0:
            raise ValidationError("thread_count must be >= 0")
        if self.min_count < 1:
            raise ValidationError("min_count must be >= 1")
        if self.encoder_dim < 2 or self.encoder_dim % 2:
            raise ValidationError("encoder_dim must be even and >= 2")
        try:
            self.embed.validate()
            self.distill.validate()
            self.train.validate()
            self.cluster.validate()
        except ValueError as exc:
            raise ValidationError(str(exc)) from None

    def schema_path(self, kind: str) -> str:
        return self.aspect_schema if kind == "aspect" else self.sentiment_schema


def seed_for(base: int, *tags: str) -> int:
    blob = f"{base}/" + "/".join(tags)
    return int.from_bytes(hashlib.sha256(blob.encode()).digest()[:4], "little")


def _atomic_write_text(path: Path, text: str):
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(text, encoding="utf-8")
    os.replace(tmp, path)


def _atomic_save(path: Path, saver):
    """Run saver(tmp_path), then rename over the target."""
    tmp = path.with_name(path.name + ".tmp")
    saver(tmp)
    os.replace(tmp, path)


def _map(fn, items, thread_count: int):
    if thread_count > 1:
        with ThreadPoolExecutor(max_workers=thread_count) as ex:
            return list(ex.map(fn, items))
    return [fn(x) for x in items]


def _read_jsonl(path: Path, parse):
    with open(path, encoding="utf-8") as f:
        return [parse(line) for line in f if line.strip()]


# ---------------------------------------------------------------------------
# stage bodies


def _workdir(cfg) -> Path:
    return Path(cfg.workdir)


def _run_extract(cfg: PipelineConfig):
    w = _workdir(cfg)
    sentences = load_corpus(cfg.corpus, cfg.trees)
    keep = []
    for kind in _KINDS:
        keep.extend(load_schema(cfg.schema_path(kind), kind).all_keywords())
    vocab = build_vocab(sentences, cfg.min_count, keep=keep)
    phrase_lists = _map(extract_candidates, sentences, cfg.thread_count)
    _atomic_save(w / "corpus.jsonl", lambda p: save_manifest(sentences, p))
    _atomic_save(w / "vocab.txt", vocab.save)
    lines = [phrase_to_json(p) for phrases in phrase_lists for p in phrases]
    _atomic_write_text(w / "phrases.jsonl", "\n".join(lines) + ("\n" if lines else ""))


def _run_train_embed(cfg: PipelineConfig):
    w = _workdir(cfg)
    sentences = load_manifest(w / "corpus.jsonl")
    vocab = Vocabulary.load(w / "vocab.txt")
    ids = [s.id for s in sentences]
    for kind in _KINDS:
        schema = load_schema(cfg.schema_path(kind), kind)
        econf = replace(cfg.embed, rng_seed=seed_for(cfg.seed, "embed", kind))
        space = init_space(vocab, schema, econf, ids)
        trainer = SphereTrainer(space, sentences, schema, econf)
        stats = trainer.run()
        log.info("train-embed[%s]: %d epochs, final gen loss %.2f", kind, len(stats), stats[-1].gen_loss)
        _atomic_save(w / f"embed_{kind}.txt", lambda p: save_space(space, p))


def _run_pseudo_label(cfg: PipelineConfig):
    w = _workdir(cfg)
    for kind in _KINDS:
        space = load_space(w / f"embed_{kind}.txt")
        labels = pseudo_sentence_labels(space, space.sent_ids, cfg.distill)
        _atomic_write_text(
            w / f"pseudo_sentences_{kind}.jsonl",
            "\n".join(l.to_json() for l in labels) + ("\n" if labels else ""),
        )


def _run_train_classifier(cfg: PipelineConfig):
    w = _workdir(cfg)
    sentences = load_manifest(w / "corpus.jsonl")
    vocab = Vocabulary.load(w / "vocab.txt")
    for kind in _KINDS:
        schema = load_schema(cfg.schema_path(kind), kind)
        labels = _read_jsonl(w / f"pseudo_sentences_{kind}.jsonl", PseudoSentenceLabel.from_json)
        model = ReferenceEncoder(
            len(vocab) + 1, cfg.encoder_dim, schema.names, seed_for(cfg.seed, "classifier", kind)
        )
        log.info("train-classifier[%s]: %d parameters", kind, model.parameter_count())
        tconf = replace(cfg.train, rng_seed=seed_for(cfg.seed, "train", kind))
        _, trajectory = train_on_sentences(model, labels, sentences, vocab, tconf)
        if trajectory:
            log.info("train-classifier[%s]: %d batches, last loss %.4f", kind, len(trajectory), trajectory[-1])
        _atomic_save(
            w / f"classifier_{kind}.ckpt",
            lambda p: save_checkpoint(model, p, tconf.rng_seed, schema.fingerprint()),
        )


def _phrases_and_sentences(w: Path):
    sentences = {s.id: s for s in load_manifest(w / "corpus.jsonl")}
    phrases = _read_jsonl(w / "phrases.jsonl", phrase_from_json)
    return sentences, phrases


def _run_phrase_labels(cfg: PipelineConfig):
    w = _workdir(cfg)
    vocab = Vocabulary.load(w / "vocab.txt")
    sentences, phrases = _phrases_and_sentences(w)
    for kind in _KINDS:
        space = load_space(w / f"embed_{kind}.txt")
        model = load_checkpoint(w / f"classifier_{kind}.ckpt")

        def label_one(phrase):
            sent = sentences[phrase.sentence_id]
            y = model.predict(phrase_input(vocab, sent, phrase))
            words = [sent.tokens[i].surface for i in phrase.token_indices]
            try:
                sim = phrase_similarity(space, words)
            except ValueError:
                return PseudoPhraseLabel.excluded(phrase.id)  # no in-vocab token
            return joint_agreement_label(phrase.id, y, sim, cfg.distill)

        labels = _map(label_one, phrases, cfg.thread_count)
        _atomic_write_text(
            w / f"phrase_labels_{kind}.jsonl",
            "\n".join(l.to_json() for l in labels) + ("\n" if labels else ""),
        )


def _run_finetune(cfg: PipelineConfig):
    w = _workdir(cfg)
    vocab = Vocabulary.load(w / "vocab.txt")
    sentences, phrases = _phrases_and_sentences(w)
    by_id = {p.id: p for p in phrases}
    for kind in _KINDS:
        model = load_checkpoint(w / f"classifier_{kind}.ckpt")
        labels = _read_jsonl(w / f"phrase_labels_{kind}.jsonl", PseudoPhraseLabel.from_json)
        tconf = replace(cfg.train, rng_seed=seed_for(cfg.seed, "finetune", kind))
        _, trajectory = finetune_on_phrases(model, labels, by_id, list(sentences.values()), vocab, tconf)
        if trajectory:
            log.info("finetune[%s]: %d batches, last loss %.4f", kind, len(trajectory), trajectory[-1])
        _atomic_save(
            w / f"classifier_{kind}_ft.ckpt",
            lambda p: save_checkpoint(model, p, tconf.rng_seed),
        )


def _run_classify(cfg: PipelineConfig):
    w = _workdir(cfg)
    vocab = Vocabulary.load(w / "vocab.txt")
    sentences, phrases = _phrases_and_sentences(w)
    models = {kind: load_checkpoint(w / f"classifier_{kind}_ft.ckpt") for kind in _KINDS}

    def classify_one(phrase):
        sent = sentences[phrase.sentence_id]
        inp = phrase_input(vocab, sent, phrase)
        row = {
            "phrase_id": phrase.id,
            "sentence_id": phrase.sentence_id,
            "target_id": sent.target_id,
            "surface": phrase.surface,
        }
        for kind in _KINDS:
            row[kind] = classify_phrase(models[kind], inp, cfg.distill.theta2)
        return json.dumps(row, sort_keys=True)

    lines = _map(classify_one, phrases, cfg.thread_count)
    _atomic_write_text(w / "classified.jsonl", "\n".join(lines) + ("\n" if lines else ""))


def _run_cluster(cfg: PipelineConfig):
    w = _workdir(cfg)
    vocab = Vocabulary.load(w / "vocab.txt")
    sentences, phrases = _phrases_and_sentences(w)
    rows = _read_jsonl(w / "classified.jsonl", json.loads)
    labels = {r["phrase_id"]: r for r in rows}
    model = load_checkpoint(w / "classifier_aspect_ft.ckpt")

    by_target: dict[str, list] = {}
    for phrase in phrases:
        row = labels[phrase.id]
        if row["aspect"] is None or row["sentiment"] is None:
            continue
        by_target.setdefault(row["target_id"], []).append(phrase)

    out_lines = []
    for target in sorted(by_target):
        members = by_target[target]
        embeddings = {
            p.id: embed_phrase(model, phrase_input(vocab, sentences[p.sentence_id], p))
            for p in members
        }
        summary = build_summary(
            target,
            members,
            {p.id: labels[p.id]["aspect"] for p in members},
            {p.id: labels[p.id]["sentiment"] for p in members},
            embeddings,
            cfg.cluster,
        )
        for (aspect, sentiment), clusters in sorted(summary.groups.items()):
            for k, cl in enumerate(clusters):
                out_lines.append(
                    json.dumps(
                        {
                            "target_id": target,
                            "aspect": aspect,
                            "sentiment": sentiment,
                            "cluster_id": f"{target}/{aspect}|{sentiment}/{k:03d}",
                            "members": cl.members,
                        },
                        sort_keys=True,
                    )
                )
    _atomic_write_text(w / "clusters.jsonl", "\n".join(out_lines) + ("\n" if out_lines else ""))


def _run_summarize(cfg: PipelineConfig):
    w = _workdir(cfg)
    rows = _read_jsonl(w / "clusters.jsonl", json.loads)
    classified = _read_jsonl(w / "classified.jsonl", json.loads)
    surfaces = {r["phrase_id"]: r["surface"] for r in classified}
    summaries: dict[str, OpinionSummary] = {}
    for row in rows:
        summary = summaries.setdefault(row["target_id"], OpinionSummary(row["target_id"]))
        key = (row["aspect"], row["sentiment"])
        summary.groups.setdefault(key, []).append(
            OpinionCluster(row["aspect"], row["sentiment"], row["members"])
        )
    text = summary_to_json([summaries[t] for t in sorted(summaries)], surfaces)
    _atomic_write_text(w / "summary.json", text + "\n")


# ---------------------------------------------------------------------------
# stage registry and driver


@dataclass
class _Stage:
    name: str
    artifacts: tuple[str, ...]
    params: object  # cfg -> dict
    run: object  # cfg -> None
    inputs: object = None  # cfg -> list of external paths


def _input_paths(cfg: PipelineConfig):
    paths = [cfg.corpus, cfg.aspect_schema, cfg.sentiment_schema]
    if cfg.trees:
        paths.append(cfg.trees)
    return paths


STAGES = (
    _Stage(
        "extract",
        ("corpus.jsonl", "vocab.txt", "phrases.jsonl"),
        lambda c: {"min_count": c.min_count},
        _run_extract,
        _input_paths,
    ),
    _Stage(
        "train-embed",
        ("embed_aspect.txt", "embed_sentiment.txt"),
        lambda c: {**asdict(c.embed), "seed": c.seed},
        _run_train_embed,
    ),
    _Stage(
        "pseudo-label",
        ("pseudo_sentences_aspect.jsonl", "pseudo_sentences_sentiment.jsonl"),
        lambda c: {"top_k": c.distill.top_k, "alpha": c.distill.alpha},
        _run_pseudo_label,
    ),
    _Stage(
        "train-classifier",
        ("classifier_aspect.ckpt", "classifier_sentiment.ckpt"),
        lambda c: {**asdict(c.train), "encoder_dim": c.encoder_dim, "seed": c.seed},
        _run_train_classifier,
    ),
    _Stage(
        "phrase-labels",
        ("phrase_labels_aspect.jsonl", "phrase_labels_sentiment.jsonl"),
        lambda c: {"theta1": c.distill.theta1, "theta2": c.distill.theta2, "alpha": c.distill.alpha},
        _run_phrase_labels,
    ),
    _Stage(
        "finetune-phrases",
        ("classifier_aspect_ft.ckpt", "classifier_sentiment_ft.ckpt"),
        lambda c: {**asdict(c.train), "seed": c.seed},
        _run_finetune,
    ),
    _Stage(
        "classify",
        ("classified.jsonl",),
        lambda c: {"theta2": c.distill.theta2},
        _run_classify,
    ),
    _Stage(
        "cluster",
        ("clusters.jsonl",),
        lambda c: asdict(c.cluster),
        _run_cluster,
    ),
    _Stage(
        "summarize",
        ("summary.json",),
        lambda c: {},
        _run_summarize,
    ),
)


def _file_digest(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _stage_hash(stage: _Stage, cfg: PipelineConfig, upstream: str) -> str:
    payload = {"stage": stage.name, "params": stage.params(cfg), "upstream": upstream}
    if stage.inputs is not None:
        payload["inputs"] = {str(p): _file_digest(p) for p in stage.inputs(cfg)}
    blob = json.dumps(payload, sort_keys=True)
    return hashlib.sha256(blob.encode()).hexdigest()


def run_stage(cfg: PipelineConfig, name: str):
    """Run a single stage, assuming its upstream artifacts exist."""
    for stage in STAGES:
        if stage.name == name:
            stage.run(cfg)
            return
    raise ValidationError(f"unknown stage {name!r}")


def run_pipeline(cfg: PipelineConfig, force: bool = False) -> dict[str, str]:
    """Run all stages in order; returns {stage: "ran" | "skipped"}."""
    cfg.validate()
    w = _workdir(cfg)
    w.mkdir(parents=True, exist_ok=True)
    meta_dir = w / ".meta"
    meta_dir.mkdir(exist_ok=True)

    report: dict[str, str] = {}
    upstream = ""
    upstream_ran = False
    last_good = "(none)"
    for stage in STAGES:
        expected = _stage_hash(stage, cfg, upstream)
        meta_path = meta_dir / f"{stage.name}.json"
        fresh = False
        if not force and not upstream_ran and meta_path.exists():
            try:
                recorded = json.loads(meta_path.read_text())
            except json.JSONDecodeError:
                recorded = {}
            fresh = recorded.get("hash") == expected and all(
                (w / a).exists() for a in stage.artifacts
            )
        if fresh:
            report[stage.name] = "skipped"
            log.info("stage %s: skipped (up to date)", stage.name)
        else:
            log.info("stage %s: running", stage.name)
            try:
                stage.run(cfg)
            except Exception as exc:
                raise StageError(
                    stage.name,
                    f"stage {stage.name!r} failed ({exc}); last good stage artifact: {last_good}",
                ) from exc
            meta_path.write_text(
                json.dumps({"hash": expected, "artifacts": list(stage.artifacts)}, sort_keys=True)
            )
            report[stage.name] = "ran"
            upstream_ran = True
        last_good = str(w / stage.artifacts[-1])
        upstream = expected
    return report
