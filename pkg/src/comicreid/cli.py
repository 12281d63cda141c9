"""Command-line orchestration of the re-identification pipeline.

Every subcommand reads flags, optionally merged over a versioned JSON
config file (flags win), runs one module, and writes its artifacts plus a
``run_manifest.json`` capturing the resolved configuration, its hash, the
seed, and library versions — never timestamps, so reruns are byte-identical.

Exit codes: 0 success, 1 usage error, 2 data error, 3 numeric failure.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import os
import platform
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .cluster import ClusterConfig, assign_identities, write_assignments
from .evalkit import (
    calibrate_threshold,
    curate_global,
    global_eval,
    local_eval,
    write_curation_manifest,
)
from .ingest import (
    PairingConfig,
    SplitConfig,
    build_sequences,
    ingest_detections,
    split_sequences,
)
from .mining import MinerConfig
from .model import (
    DataError,
    embeddings_by_uuid,
    read_detections,
    read_embeddings,
    read_instances,
    read_sequences,
    write_instances,
    write_sequences,
)
from .projector import IdentityProjector, ProjectorConfig
from .ssl import SslConfig, SslExample, train_ssl
from .synth import (
    FEATURES_FILE,
    INSTANCES_FILE,
    SEQUENCES_FILE,
    TRUTH_FILE,
    SynthConfig,
    cross_modal_top1,
    embeddings_to_features,
    generate,
    read_dataset,
    ssl_examples,
    write_dataset,
)
from .trainer import (
    LOSS_KINDS,
    LossConfig,
    TrainConfig,
    embed_instances,
    finetune,
)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_NUMERIC = 3

CONFIG_VERSION = 1
MANIFEST_NAME = "run_manifest.json"

log = logging.getLogger("comicreid")


# --------------------------------------------------------------------------
# config plumbing


def _load_config_file(path) -> dict:
    try:
        with open(path, encoding="utf-8") as fh:
            raw = json.load(fh)
    except FileNotFoundError:
        raise DataError(f"config file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise DataError(f"config file {path} is not valid ({exc.msg})") from None
    if not isinstance(raw, dict):
        raise DataError(f"config file {path} must hold a JSON object")
    version = raw.pop("config_version", CONFIG_VERSION)
    if version != CONFIG_VERSION:
        raise DataError(
            f"config file {path} has config_version {version!r}, "
            f"expected {CONFIG_VERSION}")
    return raw


def resolve_config(defaults: dict, config_path, cli_overrides: dict) -> dict:
    """defaults < config file < explicit CLI flags; unknown keys rejected."""
    resolved = dict(defaults)
    if config_path is not None:
        from_file = _load_config_file(config_path)
        unknown = sorted(set(from_file) - set(defaults))
        if unknown:
            raise DataError(
                f"config file {config_path} has unknown keys: {unknown}")
        resolved.update(from_file)
    resolved.update({k: v for k, v in cli_overrides.items() if k in defaults})
    unknown = sorted(set(cli_overrides) - set(defaults))
    if unknown:
        raise DataError(f"unknown config keys: {unknown}")
    return resolved


def config_hash(resolved: dict) -> str:
    canonical = json.dumps(resolved, sort_keys=True, default=str)
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


def write_manifest(out_dir: Path, subcommand: str, resolved: dict) -> None:
    manifest = {
        "subcommand": subcommand,
        "config": resolved,
        "config_hash": config_hash(resolved),
        "seed": resolved.get("seed"),
        "versions": {
            "comicreid": __version__,
            "numpy": np.__version__,
            "python": platform.python_version(),
        },
    }
    out_dir.mkdir(parents=True, exist_ok=True)
    with open(out_dir / MANIFEST_NAME, "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, sort_keys=True, indent=1, default=str)
        fh.write("\n")


_STRUCTURAL_ARGS = ("func", "config", "subcommand", "out")


def _explicit(args: argparse.Namespace, skip=()) -> dict:
    """Flags the user actually passed (SUPPRESS hides the unset ones)."""
    drop = set(_STRUCTURAL_ARGS) | set(skip)
    return {k: v for k, v in vars(args).items() if k not in drop}


# --------------------------------------------------------------------------
# shared data loading


def _require(path: Path, what: str) -> Path:
    if not Path(path).exists():
        raise DataError(f"{what} not found: {path}")
    return Path(path)


def _load_features(data_dir: Path) -> dict[str, dict[str, np.ndarray]]:
    path = _require(Path(data_dir) / FEATURES_FILE, "features file")
    return embeddings_to_features(read_embeddings(path))


def _load_corpus(data_dir: Path, sequences_path=None):
    data_dir = Path(data_dir)
    instances = read_instances(_require(data_dir / INSTANCES_FILE,
                                        "instances file"))
    seq_path = Path(sequences_path) if sequences_path else \
        data_dir / SEQUENCES_FILE
    sequences = read_sequences(_require(seq_path, "sequences file"), instances)
    return instances, sequences


def _load_projector(path) -> IdentityProjector:
    return IdentityProjector.load(_require(path, "projector checkpoint"))


# --------------------------------------------------------------------------
# subcommands


SYNTH_DEFAULTS = {
    "identities": 20, "series": 4, "panels_per_series": 16,
    "window_stride": 1, "max_chars_per_panel": 3, "signal_dim": 24,
    "noise_dim": 8, "instance_spread": 0.3, "style_scale": 0.1,
    "nuisance_scale": 1.5, "face_dropout": 0.1, "body_dropout": 0.1,
    "seed": 7,
}


def cmd_synth(args) -> int:
    resolved = resolve_config(SYNTH_DEFAULTS, args.config, _explicit(args))
    dataset = generate(SynthConfig(**resolved))
    out = Path(args.out)
    write_dataset(dataset, out)
    write_manifest(out, "synth", resolved)
    log.info("synth: %d instances in %d sequences -> %s",
             len(dataset.features), len(dataset.sequences), out)
    return EXIT_OK


INGEST_DEFAULTS = {
    "min_bbox_area": 64, "min_score": 0.95, "min_overlap_ratio": 0.95,
    "face_scale": 1.2, "apply_filter": True, "window_stride": 4, "seed": 0,
}


def cmd_ingest(args) -> int:
    resolved = resolve_config(
        INGEST_DEFAULTS, args.config,
        _explicit(args, skip=("detections",)))
    detections = read_detections(_require(args.detections, "detections file"))
    pairing = PairingConfig(
        min_bbox_area=resolved["min_bbox_area"],
        min_score=resolved["min_score"],
        min_overlap_ratio=resolved["min_overlap_ratio"],
        face_scale=resolved["face_scale"],
    )
    rng = np.random.default_rng(resolved["seed"])
    instances = ingest_detections(detections, pairing, rng,
                                  apply_filter=resolved["apply_filter"])
    sequences = build_sequences(instances, stride=resolved["window_stride"])
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_instances(instances, out / INSTANCES_FILE)
    write_sequences(sequences, out / SEQUENCES_FILE)
    write_manifest(out, "ingest", resolved)
    log.info("ingest: %d detections -> %d instances, %d sequences",
             len(detections), len(instances), len(sequences))
    return EXIT_OK


SPLIT_DEFAULTS = {
    "sequence_threshold": 13, "val_fraction": 0.5, "test_fraction": 0.25,
    "seed": 0,
}


def cmd_split(args) -> int:
    resolved = resolve_config(
        SPLIT_DEFAULTS, args.config,
        _explicit(args, skip=("data",)))
    _, sequences = _load_corpus(args.data)
    splits = split_sequences(sequences, SplitConfig(**resolved))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for name in ("train", "val", "test"):
        write_sequences(splits[name], out / f"{name}_sequences.jsonl")
    write_manifest(out, "split", resolved)
    log.info("split: train=%d val=%d test=%d", len(splits["train"]),
             len(splits["val"]), len(splits["test"]))
    return EXIT_OK


PRETRAIN_DEFAULTS = {
    "encoder_hidden": [64], "encoder_out": 64, "head_hidden": [64, 64],
    "tau": 0.07, "lr": 0.0005, "weight_decay": 0.01, "grad_clip": 0.5,
    "lr_floor_divisor": 50.0, "steps": 300, "batch_size": 32,
    "view_noise_strong": 0.1, "view_noise_weak": 0.02, "aligned": True,
    "seed": 0,
}


def _feature_dim(features: dict[str, dict[str, np.ndarray]]) -> int:
    for parts in features.values():
        for vec in parts.values():
            return int(vec.size)
    raise DataError("features file holds no vectors")


def cmd_pretrain(args) -> int:
    resolved = resolve_config(
        PRETRAIN_DEFAULTS, args.config,
        _explicit(args, skip=("data",)))
    features = _load_features(args.data)
    examples = [SslExample(face=parts.get("face"), body=parts.get("body"))
                for _, parts in sorted(features.items())]
    input_dim = _feature_dim(features)
    cfg = SslConfig(
        input_dim=input_dim,
        encoder_hidden=tuple(resolved["encoder_hidden"]),
        encoder_out=resolved["encoder_out"],
        head_hidden=tuple(resolved["head_hidden"]),
        tau=resolved["tau"], lr=resolved["lr"],
        weight_decay=resolved["weight_decay"],
        grad_clip=resolved["grad_clip"],
        lr_floor_divisor=resolved["lr_floor_divisor"],
        steps=resolved["steps"], batch_size=resolved["batch_size"],
        view_noise_strong=resolved["view_noise_strong"],
        view_noise_weak=resolved["view_noise_weak"],
        aligned=resolved["aligned"], seed=resolved["seed"],
    )
    model, history = train_ssl(examples, cfg)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    model.save(out / "ssl_model.json")
    history.write_csv(out / "pretrain_history.csv")
    report: dict = {"steps": cfg.steps, "aligned": cfg.aligned}
    if history.rows:
        last = history.rows[-1]
        report["final"] = {k: repr(v) if isinstance(v, float) else v
                          for k, v in last.items()}
    truth_path = Path(args.data) / TRUTH_FILE
    if truth_path.exists():
        dataset = read_dataset(args.data)
        report["cross_modal_top1"] = repr(
            cross_modal_top1(model.project, dataset))
    with open(out / "pretrain_report.json", "w", encoding="utf-8") as fh:
        json.dump(report, fh, sort_keys=True, indent=1)
        fh.write("\n")
    write_manifest(out, "pretrain", resolved)
    return EXIT_OK


FINETUNE_DEFAULTS = {
    "loss": "triplet_margin", "fusion": "sum", "padding": "zero",
    "output_dim": 256, "random_mask_rate": 0.0,
    "contrastive_margin": 0.5, "triplet_margin": 0.2,
    "ms_alpha": 2.0, "ms_beta": 50.0, "ms_base": 0.5,
    "tuplet_weight": 1.0, "intra_weight": 0.5,
    "miner_base": "multi_similarity", "miner_epsilon": 0.1,
    "meta_mining": True, "mix_series": True,
    "lr": 0.00075, "gamma": 0.95, "weight_decay": 0.05, "grad_clip": 0.5,
    "max_epochs": 20, "patience": 3, "batch_series": 16, "seed": 0,
}


def cmd_finetune(args) -> int:
    resolved = resolve_config(
        FINETUNE_DEFAULTS, args.config,
        _explicit(args, skip=("data", "train_sequences", "val_sequences")))
    features = _load_features(args.data)
    instances, _ = _load_corpus(args.data)
    train_seqs = read_sequences(
        _require(args.train_sequences, "training sequences file"), instances)
    val_seqs = read_sequences(
        _require(args.val_sequences, "validation sequences file"), instances)
    input_dim = _feature_dim(features)
    projector_cfg = ProjectorConfig(
        input_dim=input_dim, output_dim=resolved["output_dim"],
        fusion=resolved["fusion"], padding=resolved["padding"],
        random_mask_rate=resolved["random_mask_rate"],
    )
    loss_cfg = LossConfig(
        kind=resolved["loss"],
        contrastive_margin=resolved["contrastive_margin"],
        triplet_margin=resolved["triplet_margin"],
        ms_alpha=resolved["ms_alpha"], ms_beta=resolved["ms_beta"],
        ms_base=resolved["ms_base"], tuplet_weight=resolved["tuplet_weight"],
        intra_weight=resolved["intra_weight"],
    )
    miner_cfg = MinerConfig(
        base=resolved["miner_base"], epsilon=resolved["miner_epsilon"],
        meta_mining=resolved["meta_mining"],
        mix_series=resolved["mix_series"],
    )
    train_cfg = TrainConfig(
        lr=resolved["lr"], gamma=resolved["gamma"],
        weight_decay=resolved["weight_decay"],
        grad_clip=resolved["grad_clip"], max_epochs=resolved["max_epochs"],
        patience=resolved["patience"], batch_series=resolved["batch_series"],
        seed=resolved["seed"],
    )
    result = finetune(train_seqs, val_seqs, features, projector_cfg,
                      loss_cfg, miner_cfg, train_cfg)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    result.projector.save(out / "projector.json")
    result.history.write_csv(out / "finetune_history.csv")
    summary = {
        "best_epoch": result.best_epoch,
        "best_val_map_at_r": repr(result.best_val_map_at_r),
        "epochs_run": len(result.history.rows),
    }
    with open(out / "finetune_report.json", "w", encoding="utf-8") as fh:
        json.dump(summary, fh, sort_keys=True, indent=1)
        fh.write("\n")
    write_manifest(out, "finetune", resolved)
    return EXIT_OK


EVALUATE_DEFAULTS = {
    "scope": "both", "map_at_r_variant": "standard",
}


def _identity_embeddings(args, instances, sequences):
    """Either load precomputed identity embeddings or project features."""
    if getattr(args, "embeddings", None):
        table = embeddings_by_uuid(
            read_embeddings(_require(args.embeddings, "embeddings file")))
        out = {}
        for uuid, parts in table.items():
            if "identity" in parts:
                out[uuid] = parts["identity"].values
        if not out:
            raise DataError(
                f"embeddings file {args.embeddings} holds no identity vectors")
        return out
    if not getattr(args, "projector", None):
        raise DataError("pass --projector or --embeddings")
    projector = _load_projector(args.projector)
    features = _load_features(args.data)
    uuids = sorted({i.instance_uuid for s in sequences for i in s.instances
                    if i.instance_uuid in features})
    return embed_instances(uuids, features, projector)


def cmd_evaluate(args) -> int:
    resolved = resolve_config(
        EVALUATE_DEFAULTS, args.config,
        _explicit(args, skip=("data", "sequences", "projector", "embeddings")))
    if resolved["scope"] not in ("local", "global", "both"):
        raise DataError(f"unknown scope {resolved['scope']!r}")
    instances, sequences = _load_corpus(args.data, args.sequences)
    embeddings = _identity_embeddings(args, instances, sequences)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    variant = resolved["map_at_r_variant"]
    if resolved["scope"] in ("local", "both"):
        report = local_eval(sequences, embeddings, map_at_r_variant=variant)
        report.write_csv(out / "eval_local.csv")
        (out / "eval_local.txt").write_text(report.pretty() + "\n",
                                            encoding="utf-8")
    if resolved["scope"] in ("global", "both"):
        report = global_eval(sequences, embeddings, map_at_r_variant=variant)
        report.write_csv(out / "eval_global.csv")
        (out / "eval_global.txt").write_text(report.pretty() + "\n",
                                             encoding="utf-8")
        write_curation_manifest(curate_global(sequences),
                                out / "curation_manifest.jsonl")
    write_manifest(out, "evaluate", resolved)
    return EXIT_OK


ASSIGN_DEFAULTS = {
    "distance_threshold": 0.82, "linkage": "average", "metric": "euclidean",
}


def cmd_assign(args) -> int:
    resolved = resolve_config(
        ASSIGN_DEFAULTS, args.config,
        _explicit(args, skip=("data", "sequences", "projector", "sequence_id")))
    _, sequences = _load_corpus(args.data, args.sequences)
    if args.sequence_id is not None:
        sequences = [s for s in sequences if s.sequence_id == args.sequence_id]
        if not sequences:
            raise DataError(f"sequence not found: {args.sequence_id}")
    projector = _load_projector(args.projector)
    features = _load_features(args.data)
    config = ClusterConfig(
        distance_threshold=resolved["distance_threshold"],
        linkage=resolved["linkage"], metric=resolved["metric"],
    )
    rows: list[tuple[str, str, int]] = []
    for seq in sorted(sequences, key=lambda s: s.sequence_id):
        labels = assign_identities(seq, features, projector, config)
        rows.extend((seq.sequence_id, uuid, labels[uuid])
                    for uuid in sorted(labels))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_assignments(out / "assignments.csv", rows)
    write_manifest(out, "assign", resolved)
    return EXIT_OK


CALIBRATE_DEFAULTS = {
    "method": "youden",
}


def cmd_calibrate(args) -> int:
    resolved = resolve_config(
        CALIBRATE_DEFAULTS, args.config,
        _explicit(args, skip=("data", "sequences", "projector")))
    _, sequences = _load_corpus(args.data, args.sequences)
    projector = _load_projector(args.projector)
    features = _load_features(args.data)
    uuids = sorted({i.instance_uuid for s in sequences for i in s.instances
                    if i.instance_uuid in features})
    embeddings = embed_instances(uuids, features, projector)
    similar, dissimilar = [], []
    for seq in sorted(sequences, key=lambda s: s.sequence_id):
        if not seq.annotations:
            continue
        class_of = {}
        for ann in seq.annotations:
            for u in ann.member_uuids:
                if u in embeddings:
                    class_of[u] = ann.identity_id
        members = sorted(class_of)
        for i, a in enumerate(members):
            for b in members[i + 1:]:
                d = float(np.linalg.norm(embeddings[a] - embeddings[b]))
                (similar if class_of[a] == class_of[b] else
                 dissimilar).append(d)
    result = calibrate_threshold(np.asarray(similar), np.asarray(dissimilar),
                                 method=resolved["method"])
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "calibration.json", "w", encoding="utf-8") as fh:
        json.dump({
            "threshold": repr(result.threshold),
            "method": result.method,
            "separation": repr(result.separation),
            "degenerate": result.degenerate,
            "n_similar": len(similar),
            "n_dissimilar": len(dissimilar),
        }, fh, sort_keys=True, indent=1)
        fh.write("\n")
    write_manifest(out, "calibrate", resolved)
    return EXIT_OK


SERVE_DEFAULTS = {
    "host": "127.0.0.1", "port": 8000, "distance_threshold": 0.82,
}


def cmd_serve(args) -> int:
    resolved = resolve_config(
        SERVE_DEFAULTS, args.config,
        _explicit(args, skip=("data", "projector", "store", "static")))
    from .service import create_app

    app = create_app(
        data_dir=args.data,
        projector_path=args.projector,
        store_path=args.store,
        static_dir=args.static,
        distance_threshold=resolved["distance_threshold"],
    )
    import uvicorn

    uvicorn.run(app, host=resolved["host"], port=resolved["port"])
    return EXIT_OK


# --------------------------------------------------------------------------
# parser


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="comicreid",
        description="comic character re-identification pipeline")
    sub = parser.add_subparsers(dest="subcommand", required=True)
    S = argparse.SUPPRESS

    p = sub.add_parser("synth", help="generate a synthetic benchmark corpus")
    p.add_argument("--out", required=True)
    p.add_argument("--config", default=None)
    p.add_argument("--identities", type=int, default=S)
    p.add_argument("--series", type=int, default=S)
    p.add_argument("--panels-per-series", dest="panels_per_series",
                   type=int, default=S)
    p.add_argument("--window-stride", dest="window_stride", type=int,
                   default=S)
    p.add_argument("--max-chars-per-panel", dest="max_chars_per_panel",
                   type=int, default=S)
    p.add_argument("--signal-dim", dest="signal_dim", type=int, default=S)
    p.add_argument("--noise-dim", dest="noise_dim", type=int, default=S)
    p.add_argument("--instance-spread", dest="instance_spread", type=float,
                   default=S)
    p.add_argument("--style-scale", dest="style_scale", type=float, default=S)
    p.add_argument("--nuisance-scale", dest="nuisance_scale", type=float,
                   default=S)
    p.add_argument("--face-dropout", dest="face_dropout", type=float,
                   default=S)
    p.add_argument("--body-dropout", dest="body_dropout", type=float,
                   default=S)
    p.add_argument("--seed", type=int, default=S)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("ingest", help="pair raw detections into instances")
    p.add_argument("--detections", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--config", default=None)
    p.add_argument("--min-bbox-area", dest="min_bbox_area", type=int,
                   default=S)
    p.add_argument("--min-score", dest="min_score", type=float, default=S)
    p.add_argument("--min-overlap-ratio", dest="min_overlap_ratio",
                   type=float, default=S)
    p.add_argument("--face-scale", dest="face_scale", type=float, default=S)
    p.add_argument("--no-filter", dest="apply_filter", action="store_false",
                   default=S)
    p.add_argument("--window-stride", dest="window_stride", type=int,
                   default=S)
    p.add_argument("--seed", type=int, default=S)
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("split", help="series-aware train/val/test split")
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--config", default=None)
    p.add_argument("--sequence-threshold", dest="sequence_threshold",
                   type=int, default=S)
    p.add_argument("--val-fraction", dest="val_fraction", type=float,
                   default=S)
    p.add_argument("--test-fraction", dest="test_fraction", type=float,
                   default=S)
    p.add_argument("--seed", type=int, default=S)
    p.set_defaults(func=cmd_split)

    p = sub.add_parser("pretrain", help="self-supervised feature pretraining")
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--config", default=None)
    p.add_argument("--steps", type=int, default=S)
    p.add_argument("--batch-size", dest="batch_size", type=int, default=S)
    p.add_argument("--lr", type=float, default=S)
    p.add_argument("--tau", type=float, default=S)
    p.add_argument("--aligned", dest="aligned", action="store_true",
                   default=S)
    p.add_argument("--unaligned", dest="aligned", action="store_false",
                   default=S)
    p.add_argument("--seed", type=int, default=S)
    p.set_defaults(func=cmd_pretrain)

    p = sub.add_parser("finetune", help="train the identity projector")
    p.add_argument("--data", required=True)
    p.add_argument("--train-sequences", dest="train_sequences", required=True)
    p.add_argument("--val-sequences", dest="val_sequences", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--config", default=None)
    p.add_argument("--loss", choices=sorted(LOSS_KINDS), default=S)
    p.add_argument("--fusion", default=S)
    p.add_argument("--padding", default=S)
    p.add_argument("--output-dim", dest="output_dim", type=int, default=S)
    p.add_argument("--random-mask-rate", dest="random_mask_rate", type=float,
                   default=S)
    p.add_argument("--miner-base", dest="miner_base", default=S)
    p.add_argument("--miner-epsilon", dest="miner_epsilon", type=float,
                   default=S)
    p.add_argument("--no-meta-mining", dest="meta_mining",
                   action="store_false", default=S)
    p.add_argument("--no-mix-series", dest="mix_series",
                   action="store_false", default=S)
    p.add_argument("--lr", type=float, default=S)
    p.add_argument("--gamma", type=float, default=S)
    p.add_argument("--weight-decay", dest="weight_decay", type=float,
                   default=S)
    p.add_argument("--max-epochs", dest="max_epochs", type=int, default=S)
    p.add_argument("--patience", type=int, default=S)
    p.add_argument("--batch-series", dest="batch_series", type=int, default=S)
    p.add_argument("--seed", type=int, default=S)
    p.set_defaults(func=cmd_finetune)

    p = sub.add_parser("evaluate", help="retrieval evaluation")
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--config", default=None)
    p.add_argument("--sequences", default=None)
    p.add_argument("--projector", default=None)
    p.add_argument("--embeddings", default=None)
    p.add_argument("--scope", choices=("local", "global", "both"), default=S)
    p.add_argument("--map-at-r-variant", dest="map_at_r_variant",
                   choices=("standard", "indicator"), default=S)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("assign", help="cluster sequences into identities")
    p.add_argument("--data", required=True)
    p.add_argument("--projector", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--config", default=None)
    p.add_argument("--sequences", default=None)
    p.add_argument("--sequence-id", dest="sequence_id", default=None)
    p.add_argument("--distance-threshold", dest="distance_threshold",
                   type=float, default=S)
    p.add_argument("--linkage", default=S)
    p.add_argument("--metric", default=S)
    p.set_defaults(func=cmd_assign)

    p = sub.add_parser("calibrate", help="pick the identity distance cut")
    p.add_argument("--data", required=True)
    p.add_argument("--projector", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--config", default=None)
    p.add_argument("--sequences", default=None)
    p.add_argument("--method", choices=("youden", "midpoint"), default=S)
    p.set_defaults(func=cmd_calibrate)

    p = sub.add_parser("serve", help="run the annotator HTTP service")
    p.add_argument("--data", required=True)
    p.add_argument("--config", default=None)
    p.add_argument("--projector", default=None)
    p.add_argument("--store", default=None)
    p.add_argument("--static", default=None)
    p.add_argument("--host", default=S)
    p.add_argument("--port", type=int, default=S)
    p.add_argument("--distance-threshold", dest="distance_threshold",
                   type=float, default=S)
    p.set_defaults(func=cmd_serve)

    return parser


def main(argv=None) -> int:
    logging.basicConfig(
        level=os.environ.get("COMICREID_LOG_LEVEL", "WARNING").upper(),
        format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        code = exc.code if exc.code is not None else 0
        return EXIT_OK if code == 0 else EXIT_USAGE
    try:
        return args.func(args)
    except DataError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except FileNotFoundError as exc:
        print(f"error: file not found: {exc.filename or exc}", file=sys.stderr)
        return EXIT_DATA
    except FloatingPointError as exc:
        print(f"error: numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
