"""Command-line entry points: generate / train / eval."""
from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import checkpoint as ckpt
from . import datagen, evaluate, matching
from . import tensor as tt
from .config import RunConfig
from .errors import CheckpointError, ConfigError, MomentSetError, OptimizerError
from .model import MomentSetModel
from .optim import Adam

log = logging.getLogger(__name__)

MANIFEST_NAME = "manifest.json"
VOCAB_NAME = "vocab.npz"
CHECKPOINT_NAME = "checkpoint.malc"
TRAIN_LOG_NAME = "train_log.csv"


# ---------------------------------------------------------------------------
# dataset generation
# ---------------------------------------------------------------------------

def cmd_generate(config: RunConfig, out_dir: Path, force: bool = False) -> Path:
    config.validate()
    out_dir = Path(out_dir)
    if out_dir.exists() and any(out_dir.iterdir()) and not force:
        raise ConfigError(f"output directory {out_dir} is not empty (use --force)")
    (out_dir / "chunks").mkdir(parents=True, exist_ok=True)

    rng = np.random.default_rng([config.seed, 0])
    vocab = datagen.ConceptVocabulary.generate(
        config.vocab_size, config.feature_dim, rng)
    vocab.save(out_dir / VOCAB_NAME)

    def make(v: int) -> datagen.VideoRecord:
        return datagen.generate_video(
            vocab, config.moments_per_video, config.duration, config.fps,
            config.noise_level, rng_seed=[config.seed, 1, v],
            video_id=f"video{v:04d}")

    indices = range(config.videos)
    if config.workers > 1:
        with ThreadPoolExecutor(max_workers=config.workers) as ex:
            records = list(ex.map(make, indices))
    else:
        records = [make(v) for v in indices]

    manifest = {"version": 1, "vocab": VOCAB_NAME,
                "config": config.to_dict(), "videos": {}}
    for record in records:
        chunks = datagen.chunk_video(record, config.chunk_seconds)
        paths = []
        for k, chunk in enumerate(chunks):
            rel = f"chunks/{record.video_id}_{k:03d}.maln"
            datagen.store(chunk, out_dir / rel)
            paths.append(rel)
        manifest["videos"][record.video_id] = {
            "duration": record.duration,
            "fps": record.fps,
            "chunk_seconds": config.chunk_seconds,
            "chunks": paths,
            "labels": sorted({n.concept_id for n in record.narrations}),
            "narrations": [
                {"concept_id": n.concept_id, "t": n.t, "a": n.a, "b": n.b}
                for n in record.narrations],
        }
    with open(out_dir / MANIFEST_NAME, "w") as f:
        json.dump(manifest, f, indent=2, sort_keys=True)
        f.write("\n")
    return out_dir / MANIFEST_NAME


def load_dataset(data_dir: Path):
    """Returns (manifest, vocab, {video_id: [chunk records]})."""
    data_dir = Path(data_dir)
    try:
        with open(data_dir / MANIFEST_NAME) as f:
            manifest = json.load(f)
    except OSError as e:
        raise ConfigError(
            f"{data_dir} is not a dataset directory ({e.strerror})") from e
    vocab = datagen.ConceptVocabulary.load(data_dir / manifest["vocab"])
    videos: dict[str, list[datagen.VideoRecord]] = {}
    for vid, meta in manifest["videos"].items():
        cs = meta["chunk_seconds"]
        chunks = []
        for k, rel in enumerate(meta["chunks"]):
            dur = min(cs, meta["duration"] - k * cs)
            chunks.append(datagen.load(
                data_dir / rel, f"{vid}_c{k}", dur, meta["fps"]))
        videos[vid] = chunks
    return manifest, vocab, videos


# ---------------------------------------------------------------------------
# training
# ---------------------------------------------------------------------------

def build_model(config: RunConfig) -> MomentSetModel:
    return MomentSetModel(config.model_config(), np.random.default_rng([config.seed, 2]))


def build_optimizer(config: RunConfig, model: MomentSetModel) -> Adam:
    return Adam(model.params, lr=config.lr, beta1=config.beta1,
                beta2=config.beta2, eps=config.epsilon)


def cmd_train(config: RunConfig, data_dir: Path, out_dir: Path,
              resume_from: Path | None = None,
              video_ids: list[str] | None = None) -> Path:
    config.validate()
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    _, vocab, videos = load_dataset(data_dir)
    if video_ids is not None:
        videos = {v: videos[v] for v in video_ids}
    chunks = [c for cs in videos.values() for c in cs]
    max_narr = max((len(c.narrations) for c in chunks), default=0)
    if max_narr > config.queries:
        raise ConfigError(
            f"a chunk has {max_narr} narrations but the model only has "
            f"{config.queries} queries")

    model = build_model(config)
    optimizer = build_optimizer(config, model)
    start_epoch = 0
    if resume_from is not None:
        data = ckpt.load_checkpoint(resume_from)
        ckpt.restore(data, config, model, optimizer)
        start_epoch = data.epochs_done

    fixed_samples = None
    if config.freeze_intervals:
        rng_fix = np.random.default_rng([config.seed, 4])
        fixed_samples = {
            c.video_id: matching.sample_chunk_intervals(c, rng_fix)
            for c in chunks if c.narrations}

    log_path = out_dir / TRAIN_LOG_NAME
    ckpt_path = out_dir / CHECKPOINT_NAME
    steps_per_epoch = math.ceil(len(chunks) / config.batch_size)
    step = start_epoch * steps_per_epoch
    mode = "a" if resume_from is not None and log_path.exists() else "w"
    with open(log_path, mode, newline="") as f:
        writer = csv.writer(f)
        if mode == "w":
            writer.writerow(["step", "loss", "matched_sim_mean",
                             "unmatched_sim_mean", "t", "b"])
        for epoch in range(start_epoch, config.epochs):
            rng = np.random.default_rng([config.seed, 3, epoch])
            order = rng.permutation(len(chunks))
            for b0 in range(0, len(chunks), config.batch_size):
                batch = [chunks[i] for i in order[b0:b0 + config.batch_size]]
                try:
                    stats = matching.train_step(
                        model, vocab, batch, optimizer, rng,
                        fixed_samples=fixed_samples)
                except OptimizerError:
                    log.error("aborting: non-finite loss/gradient at step %d; "
                              "last-good checkpoint kept at %s", step, ckpt_path)
                    raise
                step += 1
                writer.writerow([step, f"{stats.loss:.10g}",
                                 f"{stats.matched_sim_mean:.10g}",
                                 f"{stats.unmatched_sim_mean:.10g}",
                                 f"{stats.temperature:.10g}",
                                 f"{stats.bias:.10g}"])
            ckpt.save_checkpoint(ckpt_path, config, model, optimizer, epoch + 1)
    return ckpt_path


# ---------------------------------------------------------------------------
# evaluation
# ---------------------------------------------------------------------------

def _video_prediction_chunks(model, chunks, workers: int = 1):
    def run(chunk):
        with tt.no_grad():
            return model.forward(chunk.features)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as ex:
            return list(ex.map(run, chunks))
    return [run(c) for c in chunks]


def eval_recognition(config: RunConfig, model: MomentSetModel, vocab,
                     manifest, videos) -> dict:
    vids = sorted(videos)
    scores = np.zeros((len(vids), vocab.size))
    labels = np.zeros((len(vids), vocab.size), dtype=bool)
    for r, vid in enumerate(vids):
        preds = _video_prediction_chunks(model, videos[vid], config.workers)
        per_chunk = [evaluate.recognition_scores(p, vocab.vectors) for p in preds]
        scores[r] = np.mean(per_chunk, axis=0)
        labels[r, manifest["videos"][vid]["labels"]] = True
    return {"task": "recognition",
            "map": evaluate.video_map(scores, labels),
            "videos": len(vids),
            "config": config.to_dict()}


def nlq_video_candidates(model: MomentSetModel, chunks, chunk_seconds: float,
                         query_vec: np.ndarray, duration: float,
                         preds=None) -> list[tuple[float, float, float]]:
    """All (score, start, end) candidates for one query, global timeline.

    Chunks are decoded independently and their intervals re-based by the
    chunk offset; candidates are sorted by similarity, descending.
    """
    if preds is None:
        preds = _video_prediction_chunks(model, chunks)
    cands = []
    for k, (chunk, pred) in enumerate(zip(chunks, preds)):
        offset = k * chunk_seconds
        order, sims = evaluate.rank_queries(pred, query_vec)
        for i in order:
            s = model.temporal.decode_timestamp(pred.te_start.data[i], chunk.duration)
            e = model.temporal.decode_timestamp(pred.te_end.data[i], chunk.duration)
            if s > e:
                s, e = e, s
            cands.append((float(sims[i]), offset + s, offset + e))
    cands.sort(key=lambda c: -c[0])
    return cands


def eval_nlq(config: RunConfig, model: MomentSetModel, vocab,
             manifest, videos, outcomes_path: Path | None = None) -> dict:
    rows = []
    gt_intervals = []
    predictions = []
    for vid in sorted(videos):
        meta = manifest["videos"][vid]
        chunks = videos[vid]
        preds = _video_prediction_chunks(model, chunks, config.workers)
        for n in meta["narrations"]:
            qvec = vocab.vectors[n["concept_id"]]
            cands = nlq_video_candidates(
                model, chunks, meta["chunk_seconds"], qvec,
                meta["duration"], preds=preds)
            intervals = [(s, e) for _, s, e in cands]
            gt = (n["a"], n["b"])
            gt_intervals.append(gt)
            predictions.append(intervals)
            row = {"video_id": vid, "concept_id": n["concept_id"],
                   "gt_start": gt[0], "gt_end": gt[1],
                   "top1_start": intervals[0][0], "top1_end": intervals[0][1]}
            for k in config.nlq_topk:
                best = max((evaluate.temporal_iou(p, gt) for p in intervals[:k]),
                           default=0.0)
                row[f"best_iou_top{k}"] = best
            rows.append(row)
    recall = {}
    for k in config.nlq_topk:
        recall[str(k)] = {}
        for iou in config.iou_thresholds:
            recall[str(k)][str(iou)] = evaluate.nlq_recall(
                gt_intervals, predictions, k, iou)
    if outcomes_path is not None:
        with open(outcomes_path, "w", newline="") as f:
            writer = csv.DictWriter(f, fieldnames=list(rows[0].keys()))
            writer.writeheader()
            writer.writerows(rows)
    return {"task": "nlq", "recall": recall, "queries": len(rows),
            "config": config.to_dict()}


def cmd_eval(config: RunConfig, data_dir: Path, out_dir: Path, task: str,
             checkpoint_path: Path | None = None,
             video_ids: list[str] | None = None) -> dict:
    config.validate()
    if task not in ("recognition", "nlq"):
        raise ConfigError(f"unknown eval task '{task}'")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    manifest, vocab, videos = load_dataset(data_dir)
    if video_ids is not None:
        videos = {v: videos[v] for v in video_ids}
    model = build_model(config)
    if checkpoint_path is not None:
        data = ckpt.load_checkpoint(checkpoint_path)
        optimizer = build_optimizer(config, model)
        ckpt.restore(data, config, model, optimizer)
    if task == "recognition":
        report = eval_recognition(config, model, vocab, manifest, videos)
    else:
        report = eval_nlq(config, model, vocab, manifest, videos,
                          outcomes_path=out_dir / "nlq_outcomes.csv")
    with open(out_dir / f"report_{task}.json", "w") as f:
        json.dump(report, f, indent=2, sort_keys=True)
        f.write("\n")
    return report


# ---------------------------------------------------------------------------
# argument parsing
# ---------------------------------------------------------------------------

def _load_config(args) -> RunConfig:
    cfg = RunConfig.from_file(args.config) if args.config else RunConfig()
    if args.seed is not None:
        cfg.seed = args.seed
    if getattr(args, "workers", None) is not None:
        cfg.workers = args.workers
    return cfg


def make_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="momentset",
        description="Moment-set pre-training on synthetic untrimmed videos")
    sub = parser.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="JSON run config")
    common.add_argument("--seed", type=int, help="override config seed")
    common.add_argument("--workers", type=int, help="parallel workers")

    p = sub.add_parser("generate", parents=[common],
                       help="generate a synthetic dataset")
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--force", action="store_true",
                   help="write into a non-empty directory")

    p = sub.add_parser("train", parents=[common], help="train the model")
    p.add_argument("--data", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--checkpoint", type=Path, help="resume from checkpoint")

    p = sub.add_parser("eval", parents=[common], help="evaluate a checkpoint")
    p.add_argument("--data", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--checkpoint", type=Path)
    p.add_argument("--task", choices=["recognition", "nlq"], required=True)
    return parser


def main(argv=None) -> int:
    logging.basicConfig(level=os.environ.get("MOMENTSET_LOGLEVEL", "INFO"))
    args = make_parser().parse_args(argv)
    try:
        cfg = _load_config(args)
        if args.command == "generate":
            path = cmd_generate(cfg, args.out, force=args.force)
            print(f"wrote {path}")
        elif args.command == "train":
            path = cmd_train(cfg, args.data, args.out, resume_from=args.checkpoint)
            print(f"wrote {path}")
        elif args.command == "eval":
            report = cmd_eval(cfg, args.data, args.out, args.task,
                              checkpoint_path=args.checkpoint)
            print(json.dumps({k: v for k, v in report.items() if k != "config"}))
    except MomentSetError as e:
        print(f"error: {e.category}: {e}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
