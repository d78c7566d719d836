"""Command-line entry point: ``mater {extract,train,predict,ensemble,evaluate,make-splits}``.

Exit codes: 0 success, 1 invalid input or configuration, 2 runtime failure.
"""

from __future__ import annotations

import argparse
import json
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import fields, replace
from pathlib import Path

import numpy as np

from . import dataio, ensemble, metrics
from .dsp import AudioError
from .features import FeatureBundle, FeatureConfig, FeatureError, build_bundle
from .labels import CATEGORIES
from .neural import PRESETS, CheckpointError, ModelConfig, TrainConfig, TrainingError, load_model, predict, save_model, train

EXIT_OK, EXIT_INVALID, EXIT_RUNTIME = 0, 1, 2


class UsageError(ValueError):
    """Bad configuration or inputs; maps to exit code 1."""


# ---------------------------------------------------------------------------
# configuration


def load_config(path) -> dict:
    if path is None:
        return {}
    try:
        cfg = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise UsageError(f"cannot read config {path}: {exc}") from exc
    if not isinstance(cfg, dict):
        raise UsageError(f"config {path} must hold a JSON object")
    return cfg


def _pick(cls, overrides: dict, what: str) -> dict:
    known = {f.name for f in fields(cls)}
    unknown = set(overrides) - known
    if unknown:
        raise UsageError(f"unknown {what} option(s): {', '.join(sorted(unknown))}")
    return dict(overrides)


def model_config(cfg: dict, args) -> ModelConfig:
    section = dict(cfg.get("model", {}))
    preset = getattr(args, "preset", None) or section.pop("preset", "desk")
    section.pop("preset", None)
    if preset not in PRESETS:
        raise UsageError(f"unknown preset {preset!r}; choose from {sorted(PRESETS)}")
    kw = _pick(ModelConfig, section, "model")
    feats = cfg.get("features", {})
    if "word" in feats:
        kw["use_word"] = bool(feats["word"])
    if "utterance" in feats:
        kw["use_utterance"] = bool(feats["utterance"])
    if feats.get("embeddings") is not None:
        kw["embeddings"] = tuple(feats["embeddings"])
    kw["task"] = getattr(args, "task", None) or cfg.get("task", "categorical")
    try:
        mc = replace(PRESETS[preset], **kw)
    except (TypeError, ValueError) as exc:
        raise UsageError(str(exc)) from exc
    if not (mc.use_word or mc.use_utterance or mc.embeddings != ()):
        raise UsageError("at least one feature level must be enabled")
    return mc


def train_config(cfg: dict, args, task: str) -> TrainConfig:
    kw = _pick(TrainConfig, cfg.get("train", {}), "train")
    for attr, key in (("epochs", "epochs"), ("lr", "learning_rate"), ("batch_size", "batch_size"), ("loss", "loss")):
        val = getattr(args, attr, None)
        if val is not None:
            kw[key] = val
    if args.seed is not None:
        kw["seed"] = args.seed
    kw.setdefault("loss", "ccc" if task == "attributes" else "weighted_ce")
    try:
        return TrainConfig(**kw)
    except (TypeError, ValueError) as exc:
        raise UsageError(str(exc)) from exc


def feature_config(cfg: dict, base_dir: Path) -> FeatureConfig:
    section = dict(cfg.get("extract", {}))
    kw = {}
    for key in ("syntax_sidecar", "sentiment_sidecar"):
        path = section.pop(key, None)
        if path is not None:
            p = Path(path) if Path(path).is_absolute() else base_dir / path
            kw[key] = dataio.load_jsonl_vectors(p, key.split("_")[0])
    kw.update(_pick(FeatureConfig, section, "extract"))
    return FeatureConfig(**kw)


# ---------------------------------------------------------------------------
# feature cache


def _check_id(sid: str) -> None:
    if not sid or "/" in sid or "\\" in sid or sid.startswith("."):
        raise UsageError(f"sample id {sid!r} cannot be used as a cache file name")


def cache_paths(cache: Path, sid: str, sources=()) -> dict[str, Path]:
    out = {"word": cache / f"{sid}.word.mlev", "utt": cache / f"{sid}.utt.mlev"}
    for name in sources:
        out[f"emb.{name}"] = cache / f"{sid}.emb.{name}.mlev"
    return out


def _extract_one(job):
    sample, config = job
    try:
        return sample.id, build_bundle(sample, config), None
    except (FeatureError, AudioError, OSError, ValueError) as exc:
        return sample.id, None, str(exc)


def load_cached(cache: Path, sample) -> FeatureBundle:
    """Rebuild a bundle from cache files written by ``extract``."""
    paths = cache_paths(cache, sample.id, sample.embeddings)
    missing = [p for k, p in paths.items() if not p.exists()]
    if missing:
        raise UsageError(f"feature cache entry {missing[0]} is missing; run `mater extract` on this manifest first")
    embs = {k[4:]: dataio.read_matrix(p).astype(np.float64) for k, p in paths.items() if k.startswith("emb.")}
    return FeatureBundle(
        dataio.read_matrix(paths["word"]).astype(np.float64),
        dataio.read_matrix(paths["utt"]).astype(np.float64).reshape(-1),
        embs,
    )


def cmd_extract(args, cfg) -> int:
    samples = dataio.load_manifest(args.manifest)
    for s in samples:
        _check_id(s.id)
    fcfg = feature_config(cfg, Path(args.manifest).parent)
    cache = Path(args.cache)
    cache.mkdir(parents=True, exist_ok=True)
    workers = args.workers or cfg.get("workers", 1)
    jobs = [(s, fcfg) for s in samples]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_extract_one, jobs))
    else:
        results = [_extract_one(j) for j in jobs]
    failed = 0
    for sid, bundle, err in results:
        if err is not None:
            failed += 1
            print(f"error: {err}", file=sys.stderr)
            continue
        for note in bundle.warnings:
            print(f"warning: {sid}: {note}", file=sys.stderr)
        paths = cache_paths(cache, sid, bundle.embeddings)
        dataio.write_matrix(paths["word"], bundle.word_seq)
        dataio.write_matrix(paths["utt"], bundle.utterance[None, :])
        for name, mat in bundle.embeddings.items():
            dataio.write_matrix(paths[f"emb.{name}"], mat)
    print(f"extracted {len(samples) - failed}/{len(samples)} samples into {cache}", file=sys.stderr)
    return EXIT_RUNTIME if failed else EXIT_OK


def gold_label(sample) -> str | None:
    if sample.label is not None:
        return sample.label
    if sample.votes:
        try:
            return CATEGORIES[int(np.argmax(dataio.soft_targets(sample.votes)))]
        except ValueError:
            return None
    return None


def training_target(sample, task: str, loss: str):
    if task == "attributes":
        if sample.attributes is None:
            raise UsageError(f"sample {sample.id!r} has no attributes")
        return np.array(sample.attributes)
    if loss == "soft_ce" and sample.votes:
        return dataio.soft_targets(sample.votes)
    label = gold_label(sample)
    if label is None:
        raise UsageError(f"sample {sample.id!r} has no label or votes")
    return CATEGORIES.index(label)


def cmd_train(args, cfg) -> int:
    samples = dataio.load_manifest(args.manifest)
    mc = model_config(cfg, args)
    tc = train_config(cfg, args, mc.task)
    cache = Path(args.cache)
    bundles = [load_cached(cache, s) for s in samples]
    targets = [training_target(s, mc.task, tc.loss) for s in samples]
    model, history = train(bundles, targets, tc, mc)
    save_model(args.checkpoint, model)
    hist = Path(args.history) if args.history else Path(args.checkpoint).with_suffix(".history.csv")
    history.to_csv(hist)
    print(f"trained {tc.epochs} epochs, final loss {history.loss[-1]:.6g}; wrote {args.checkpoint}", file=sys.stderr)
    return EXIT_OK


def cmd_predict(args, cfg) -> int:
    model = load_model(args.checkpoint)
    samples = dataio.load_manifest(args.manifest)
    bundles = [load_cached(Path(args.cache), s) for s in samples]
    values = predict(model, bundles)
    dataio.write_predictions(args.out, [s.id for s in samples], values)
    return EXIT_OK


def _read_categorical(path):
    kind, ids, values = dataio.read_predictions(path)
    if kind != "categorical":
        raise UsageError(f"{path}: ensembling needs class-probability predictions, got {kind}")
    return ids, values


def cmd_ensemble(args, cfg) -> int:
    loaded = [_read_categorical(p) for p in args.predictions]
    ids = loaded[0][0]
    mats = []
    for path, (other, values) in zip(args.predictions, loaded):
        if set(other) != set(ids) or len(other) != len(ids):
            raise UsageError(f"{path}: id set differs from {args.predictions[0]}")
        pos = {sid: i for i, sid in enumerate(other)}
        mats.append(values[[pos[sid] for sid in ids]])
    names = list(args.predictions)
    if args.select_top:
        if not args.gold:
            raise UsageError("--select-top needs --gold MANIFEST")
        golds = {s.id: gold_label(s) for s in dataio.load_manifest(args.gold)}
        keep = [i for i, sid in enumerate(ids) if golds.get(sid)]
        if not keep:
            raise UsageError("no gold labels for the predicted ids")
        gold = [golds[ids[i]] for i in keep]
        scores = [metrics.macro_f1([CATEGORIES[k] for k in m[keep].argmax(axis=1)], gold) for m in mats]
        order = sorted(range(len(mats)), key=lambda i: (-scores[i], i))[: args.select_top]
        for i in order:
            print(f"selected {names[i]} (macro-F1 {scores[i]:.2f})", file=sys.stderr)
        mats = [mats[i] for i in sorted(order)]
    models = [ensemble.ProbMatrix(m, model_id=n) for m, n in zip(mats, names)]
    labels = ensemble.STRATEGIES[args.strategy](models)
    dataio.write_labels(args.out, ids, [CATEGORIES[k] for k in labels])
    return EXIT_OK


def cmd_evaluate(args, cfg) -> int:
    kind, ids, values = dataio.read_predictions(args.predictions)
    samples = {s.id: s for s in dataio.load_manifest(args.manifest)}
    unknown = [i for i in ids if i not in samples]
    if unknown:
        raise UsageError(f"prediction id {unknown[0]!r} is not in the manifest")
    if kind == "attributes":
        rows = [(v, samples[i].attributes) for i, v in zip(ids, values) if samples[i].attributes is not None]
        if len(rows) < 2:
            raise UsageError("need at least two samples with gold attributes")
        result = metrics.ccc_eval(np.array([r[0] for r in rows]), np.array([r[1] for r in rows]))
        text = json.dumps(result, indent=2)
    else:
        preds = [CATEGORIES[int(np.argmax(v))] for v in values] if kind == "categorical" else list(values)
        pairs = [(p, gold_label(samples[i])) for i, p in zip(ids, preds)]
        pairs = [(p, g) for p, g in pairs if g is not None]
        if not pairs:
            raise UsageError("no gold labels for the predicted ids")
        text = metrics.classification_report([p for p, _ in pairs], [g for _, g in pairs]).to_json()
    if args.out:
        Path(args.out).write_text(text + "\n", encoding="utf-8")
    print(text)
    return EXIT_OK


def cmd_make_splits(args, cfg) -> int:
    samples = dataio.load_manifest(args.manifest)
    seed = 0 if args.seed is None else args.seed
    spec = dataio.SplitSpec(n_sets=args.sets, per_class=args.per_class, seed=seed, overlap=not args.disjoint)
    sets = dataio.balanced_splits(samples, spec)
    doc = {
        "seed": seed,
        "per_class": spec.per_class,
        "overlap": spec.overlap,
        "sets": [[samples[i].id for i in s] for s in sets],
    }
    text = json.dumps(doc, indent=1)
    if args.out:
        Path(args.out).write_text(text + "\n", encoding="utf-8")
    else:
        print(text)
    return EXIT_OK


# ---------------------------------------------------------------------------


class _Parser(argparse.ArgumentParser):
    # argparse exits with 2 on bad flags; 2 is reserved for runtime failures here
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_INVALID, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--config", help="JSON run configuration")
    common.add_argument("--seed", type=int, help="seed for initialization, shuffling and sampling")

    parser = _Parser(prog="mater", description="Multi-level speech emotion recognition toolkit")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("extract", parents=[common], help="compute word/utterance features into a cache")
    p.add_argument("manifest")
    p.add_argument("--cache", required=True)
    p.add_argument("--workers", type=int)
    p.set_defaults(func=cmd_extract)

    p = sub.add_parser("train", parents=[common], help="train a model from cached features")
    p.add_argument("manifest")
    p.add_argument("--cache", required=True)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--history", help="history CSV (default: next to the checkpoint)")
    p.add_argument("--task", choices=["categorical", "attributes"])
    p.add_argument("--preset", choices=sorted(PRESETS))
    p.add_argument("--epochs", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--batch-size", type=int)
    p.add_argument("--loss", choices=["weighted_ce", "soft_ce", "ccc"])
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("predict", parents=[common], help="write predictions for a manifest")
    p.add_argument("checkpoint")
    p.add_argument("manifest")
    p.add_argument("--cache", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("ensemble", parents=[common], help="combine probability CSVs into labels")
    p.add_argument("predictions", nargs="+")
    p.add_argument("--strategy", choices=sorted(ensemble.STRATEGIES), default="uncertainty")
    p.add_argument("--select-top", type=int, help="keep the K models with the best macro-F1 on --gold")
    p.add_argument("--gold", help="manifest with gold labels for model selection")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_ensemble)

    p = sub.add_parser("evaluate", parents=[common], help="score predictions against manifest golds")
    p.add_argument("predictions")
    p.add_argument("manifest")
    p.add_argument("--out")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("make-splits", parents=[common], help="draw class-balanced evaluation sets")
    p.add_argument("manifest")
    p.add_argument("--sets", type=int, default=5)
    p.add_argument("--per-class", type=int, default=326)
    p.add_argument("--disjoint", action="store_true", help="draw sets without overlap")
    p.add_argument("--out")
    p.set_defaults(func=cmd_make_splits)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config)
        return args.func(args, cfg)
    except (TrainingError, FeatureError, AudioError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except (UsageError, dataio.ManifestError, dataio.FormatError, CheckpointError, ensemble.EnsembleError, metrics.MetricError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
