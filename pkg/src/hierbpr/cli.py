"""Command-line entry point wiring the library into reproducible runs.

Subcommands: ``synth`` (generate a corpus), ``validate`` (ingestion report),
``train`` (fit and checkpoint a model), ``eval`` (warm/cold AUC from a
checkpoint), ``rank-dim`` (top items per visual dimension), ``bench-step``
(per-triple cost table), and ``run`` (manifest-driven experiment:
split, train, select best on validation, evaluate, write everything).

All randomness flows from three named seeds (split, init, sample) echoed in
every report. Reports and checkpoints are byte-deterministic; timing lives
only in the metrics TSV.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import dataclass, field
from pathlib import Path

from . import __version__
from .checkpoint import load_checkpoint, save_checkpoint
from .errors import HierBprError
from .evaluation import (
    ColdItemSet,
    auc,
    evaluate_report,
    split_leave_one_out,
)
from .hierarchy import AllocationScheme
from .ingestion import load_corpus, read_feedback
from .model import (
    KIND_RAND,
    KINDS,
    ModelConfig,
    PreferenceModel,
)
from .synthdata import SynthConfig, generate
from .training import RegWeights, TrainConfig, per_triple_cost_probe, train


@dataclass
class Seeds:
    split: int = 0
    init: int = 0
    sample: int = 0

    def to_dict(self) -> dict:
        return {"split": self.split, "init": self.init, "sample": self.sample}

    @classmethod
    def from_dict(cls, d: dict) -> "Seeds":
        return cls(split=int(d.get("split", 0)), init=int(d.get("init", 0)),
                   sample=int(d.get("sample", 0)))


@dataclass
class ExperimentManifest:
    """Serializable description of one end-to-end run."""

    feedback: str
    features: str
    hierarchy: str
    item_leaves: str
    out_dir: str
    model: dict
    train: dict = field(default_factory=dict)
    seeds: Seeds = field(default_factory=Seeds)
    cold_threshold: int = 5
    policy: str = "strict"
    feature_norm: str = "none"

    @classmethod
    def from_json(cls, path) -> "ExperimentManifest":
        with open(path, "r", encoding="utf-8") as fh:
            raw = json.load(fh)
        inputs = raw.get("inputs", raw)
        return cls(
            feedback=inputs["feedback"],
            features=inputs["features"],
            hierarchy=inputs["hierarchy"],
            item_leaves=inputs["item_leaves"],
            out_dir=raw["out_dir"],
            model=raw["model"],
            train=raw.get("train", {}),
            seeds=Seeds.from_dict(raw.get("seeds", {})),
            cold_threshold=int(raw.get("cold_threshold", 5)),
            policy=raw.get("policy", "strict"),
            feature_norm=raw.get("feature_norm", "none"),
        )

    def model_config(self) -> ModelConfig:
        m = self.model
        kind = m.get("kind", "HVBPR")
        scheme = AllocationScheme(tuple(m.get("scheme", [])))
        n_visual = int(m.get("n_visual", scheme.total))
        default_vb = n_visual > 0
        return ModelConfig(
            n_latent=int(m.get("n_latent", 0)),
            n_visual=n_visual,
            scheme=scheme,
            use_visual_bias=bool(m.get("use_visual_bias", default_vb)),
            use_category_bias=bool(m.get("use_category_bias", False)),
            rng_seed=self.seeds.init,
            kind=kind,
        )

    def train_config(self) -> TrainConfig:
        t = self.train
        reg = RegWeights(**t.get("reg", {}))
        return TrainConfig(
            learning_rate=float(t.get("learning_rate", 0.05)),
            reg=reg,
            iterations=int(t.get("iterations", 20)),
            rng_seed=self.seeds.sample,
            patience=t.get("patience"),
        )


def _write_json(path, payload: dict) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, sort_keys=True, indent=2)
        fh.write("\n")


def _write_metrics(path, history) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("epoch\tval_auc\ttrain_loss_estimate\tseconds\n")
        for stats in history:
            val = "" if stats.val_auc is None else repr(stats.val_auc)
            fh.write(f"{stats.epoch}\t{val}\t{stats.train_loss!r}"
                     f"\t{stats.seconds:.6f}\n")


def run_experiment(manifest: ExperimentManifest) -> dict:
    """split -> train -> select best on validation -> evaluate -> persist."""
    out_dir = Path(manifest.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    corpus, ingest_report = load_corpus(
        manifest.feedback, manifest.features, manifest.hierarchy,
        manifest.item_leaves, policy=manifest.policy,
        feature_norm=manifest.feature_norm)
    training_corpus, split = split_leave_one_out(corpus, manifest.seeds.split)
    cold = ColdItemSet.from_training(training_corpus,
                                     threshold=manifest.cold_threshold)

    config = manifest.model_config()
    model = PreferenceModel.create(config, corpus)

    history = []
    best_epoch = None
    best_val = None
    if config.kind != KIND_RAND:
        result = train(model, training_corpus, manifest.train_config(),
                       split=split)
        history = result.history
        if result.best_params is not None:
            model.params = result.best_params
        best_epoch = result.best_epoch
        best_val = result.best_val_auc

    report = evaluate_report(model, corpus, split, cold)
    persisted = {
        "config": report["config"],
        "seeds": manifest.seeds.to_dict(),
        "data": {
            "users": corpus.n_users,
            "items": corpus.n_items,
            "interactions": ingest_report["interactions"],
        },
        "warm": report["warm"],
        "cold": report["cold"],
        "cold_items": report["cold_items"],
        "cold_threshold": report["cold_threshold"],
        "best_epoch": best_epoch,
        "best_val_auc": best_val,
    }

    ckpt_path = out_dir / "model.ckpt"
    report_path = out_dir / "report.json"
    metrics_path = out_dir / "metrics.tsv"
    save_checkpoint(ckpt_path, model, split=split,
                    seeds=manifest.seeds.to_dict(),
                    item_train_count=training_corpus.item_counts())
    _write_json(report_path, persisted)
    _write_metrics(metrics_path, history)
    return {
        "report": str(report_path),
        "checkpoint": str(ckpt_path),
        "metrics": str(metrics_path),
        "warm_auc": report["warm"]["auc"],
        "cold_auc": report["cold"]["auc"],
    }


# ------------------------------------------------------------- subcommands

def _parse_ints(text: str) -> tuple[int, ...]:
    return tuple(int(part) for part in text.replace(",", ":").split(":"))


def _cmd_synth(args) -> int:
    cfg = SynthConfig(
        n_users=args.users,
        n_items=args.items,
        feature_dim=args.feature_dim,
        branching=_parse_ints(args.branching),
        n_positives=args.positives,
        planted_scheme=_parse_ints(args.planted_scheme),
        temperature=args.temperature,
        feature_noise=args.feature_noise,
        rng_seed=args.seed,
    )
    paths = generate(cfg, args.out_dir, features_format=args.features_format)
    print(json.dumps(paths, sort_keys=True, indent=2))
    return 0


def _cmd_validate(args) -> int:
    _corpus, report = load_corpus(
        args.feedback, args.features, args.hierarchy, args.item_leaves,
        policy=args.policy, feature_norm=args.feature_norm)
    print(json.dumps(report, sort_keys=True, indent=2))
    return 0


def _seeds_from_args(args) -> Seeds:
    base = args.seed
    return Seeds(
        split=base if args.split_seed is None else args.split_seed,
        init=base if args.init_seed is None else args.init_seed,
        sample=base if args.sample_seed is None else args.sample_seed,
    )


def _cmd_train(args) -> int:
    seeds = _seeds_from_args(args)
    if args.kprime > 0:
        scheme = (AllocationScheme.parse(args.scheme) if args.scheme
                  else AllocationScheme((args.kprime,)))
    else:
        scheme = AllocationScheme(())
    visual_bias = (args.kprime > 0) if args.visual_bias is None else args.visual_bias
    manifest = ExperimentManifest(
        feedback=args.feedback,
        features=args.features,
        hierarchy=args.hierarchy,
        item_leaves=args.item_leaves,
        out_dir=str(Path(args.out).parent),
        model={
            "kind": args.model_kind,
            "n_latent": args.k,
            "n_visual": args.kprime,
            "scheme": list(scheme.per_layer),
            "use_visual_bias": visual_bias,
            "use_category_bias": args.category_bias,
        },
        seeds=seeds,
        policy=args.policy,
        feature_norm=args.feature_norm,
    )
    corpus, _ = load_corpus(args.feedback, args.features, args.hierarchy,
                            args.item_leaves, policy=args.policy,
                            feature_norm=args.feature_norm)
    training_corpus, split = split_leave_one_out(corpus, seeds.split)
    config = manifest.model_config()
    model = PreferenceModel.create(config, corpus)
    history = []
    if config.kind != KIND_RAND:
        tconfig = TrainConfig(
            learning_rate=args.lr,
            reg=RegWeights(
                bias=args.reg_bias,
                latent=args.reg_latent,
                user_visual=args.reg_user_visual,
                visual_bias=args.reg_visual_bias,
                segments=args.reg_segments,
                category_bias=args.reg_category_bias,
            ),
            iterations=args.epochs,
            rng_seed=seeds.sample,
            patience=args.patience,
        )
        result = train(model, training_corpus, tconfig, split=split)
        history = result.history
        if args.patience is not None and result.best_params is not None:
            model.params = result.best_params
    save_checkpoint(args.out, model, split=split, seeds=seeds.to_dict(),
                    item_train_count=training_corpus.item_counts())
    if args.metrics:
        _write_metrics(args.metrics, history)
    last_val = next((s.val_auc for s in reversed(history)
                     if s.val_auc is not None), None)
    print(json.dumps({"checkpoint": args.out, "epochs_run": len(history),
                      "final_val_auc": last_val}, sort_keys=True))
    return 0


def _cmd_eval(args) -> int:
    bundle = load_checkpoint(args.model)
    if bundle.split is None:
        raise HierBprError("checkpoint carries no evaluation split")
    pairs = read_feedback(args.feedback)
    positives, dropped = bundle.positives_from_pairs(pairs)

    class _Corpus:
        pass

    shim = _Corpus()
    shim.positives = positives
    shim.n_items = bundle.n_items
    shim.n_users = bundle.n_users
    model = bundle.frozen_model()

    cold_set = None
    if args.setting == "cold":
        if bundle.item_train_count is None:
            raise HierBprError("checkpoint carries no item training counts")
        cold_set = ColdItemSet(
            threshold=args.cold_threshold,
            cold_mask=bundle.item_train_count < args.cold_threshold)
    result = auc(model, shim, bundle.split, setting=args.setting,
                 cold_set=cold_set, sample_candidates=args.sample_candidates,
                 rng=args.sample_seed)
    report = {
        "setting": args.setting,
        "auc": result.auc,
        "users_evaluated": result.users_evaluated,
        "items_total": bundle.n_items,
        "cold_items": cold_set.n_cold if cold_set is not None else None,
        "cold_threshold": args.cold_threshold if cold_set is not None else None,
        "seed": bundle.seeds,
        "config": bundle.config.to_dict(),
        "approximate": result.approximate,
        "feedback_pairs_ignored": dropped,
    }
    if args.out:
        _write_json(args.out, report)
    print(json.dumps(report, sort_keys=True, indent=2))
    return 0


def _cmd_rank_dim(args) -> int:
    bundle = load_checkpoint(args.model)
    model = bundle.frozen_model()
    category = None
    if args.category is not None:
        category = bundle.hierarchy.node_of(args.category)
    ranked = model.rank_by_dimension(args.dim, args.top, category=category)
    lines = ["rank\titem_id\tscore"]
    for rank, (item, score) in enumerate(ranked, start=1):
        lines.append(f"{rank}\t{bundle.item_ids[item]}\t{score!r}")
    text = "\n".join(lines) + "\n"
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    sys.stdout.write(text)
    return 0


def _cmd_bench_step(args) -> int:
    configs = []
    for feat in _parse_ints(args.feature_dims):
        for k in _parse_ints(args.latent_dims):
            configs.append({"n_latent": k, "n_visual": args.kprime,
                            "feature_dim": feat})
    rows = per_triple_cost_probe(configs, n_steps=args.steps, seed=args.seed)
    print("n_latent\tn_visual\tfeature_dim\tseconds_per_step")
    for row in rows:
        print(f"{row['n_latent']}\t{row['n_visual']}\t{row['feature_dim']}"
              f"\t{row['seconds_per_step']:.6e}")
    return 0


def _cmd_run(args) -> int:
    manifest = ExperimentManifest.from_json(args.manifest)
    if args.out_dir:
        manifest.out_dir = args.out_dir
    summary = run_experiment(manifest)
    print(json.dumps(summary, sort_keys=True, indent=2))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="hierbpr",
        description="Hierarchical visual embeddings for one-class "
                    "collaborative filtering")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic corpus")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--users", type=int, default=300)
    p.add_argument("--items", type=int, default=900)
    p.add_argument("--feature-dim", type=int, default=64)
    p.add_argument("--branching", default="6")
    p.add_argument("--positives", type=int, default=8)
    p.add_argument("--planted-scheme", default="5:5")
    p.add_argument("--temperature", type=float, default=0.35)
    p.add_argument("--feature-noise", type=float, default=1.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--features-format", choices=["binary", "csv"],
                   default="binary")
    p.set_defaults(func=_cmd_synth)

    p = sub.add_parser("validate", help="run ingestion and print the report")
    p.add_argument("--feedback", required=True)
    p.add_argument("--features", required=True)
    p.add_argument("--hierarchy", required=True)
    p.add_argument("--item-leaves", required=True)
    p.add_argument("--policy", choices=["strict", "prune"], default="strict")
    p.add_argument("--feature-norm", choices=["none", "l2"], default="none")
    p.set_defaults(func=_cmd_validate)

    p = sub.add_parser("train", help="fit a model and write a checkpoint")
    p.add_argument("--feedback", required=True)
    p.add_argument("--features", required=True)
    p.add_argument("--hierarchy", required=True)
    p.add_argument("--item-leaves", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--metrics")
    p.add_argument("--model-kind", choices=list(KINDS), default="HVBPR")
    p.add_argument("--k", type=int, default=10)
    p.add_argument("--kprime", type=int, default=10)
    p.add_argument("--scheme", help="colon-separated rows per layer, e.g. 5:3:2")
    p.add_argument("--visual-bias", action=argparse.BooleanOptionalAction,
                   default=None)
    p.add_argument("--category-bias", action="store_true")
    p.add_argument("--lr", type=float, default=0.05)
    p.add_argument("--epochs", type=int, default=20)
    p.add_argument("--patience", type=int)
    p.add_argument("--reg-bias", type=float, default=0.01)
    p.add_argument("--reg-latent", type=float, default=0.01)
    p.add_argument("--reg-user-visual", type=float, default=0.01)
    p.add_argument("--reg-visual-bias", type=float, default=0.0)
    p.add_argument("--reg-segments", type=float, default=0.0)
    p.add_argument("--reg-category-bias", type=float, default=0.01)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--split-seed", type=int)
    p.add_argument("--init-seed", type=int)
    p.add_argument("--sample-seed", type=int)
    p.add_argument("--policy", choices=["strict", "prune"], default="strict")
    p.add_argument("--feature-norm", choices=["none", "l2"], default="none")
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("eval", help="warm/cold AUC from a checkpoint")
    p.add_argument("--model", required=True)
    p.add_argument("--feedback", required=True)
    p.add_argument("--setting", choices=["warm", "cold"], default="warm")
    p.add_argument("--cold-threshold", type=int, default=5)
    p.add_argument("--sample-candidates", type=int,
                   help="approximate AUC with this many candidates per user")
    p.add_argument("--sample-seed", type=int, default=0)
    p.add_argument("--out")
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("rank-dim", help="top items along one visual dimension")
    p.add_argument("--model", required=True)
    p.add_argument("--dim", type=int, required=True)
    p.add_argument("--top", type=int, default=10)
    p.add_argument("--category", help="restrict to one leaf category id")
    p.add_argument("--out")
    p.set_defaults(func=_cmd_rank_dim)

    p = sub.add_parser("bench-step", help="per-triple update cost table")
    p.add_argument("--feature-dims", default="512,1024")
    p.add_argument("--latent-dims", default="10")
    p.add_argument("--kprime", type=int, default=10)
    p.add_argument("--steps", type=int, default=300)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=_cmd_bench_step)

    p = sub.add_parser("run", help="manifest-driven end-to-end experiment")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out-dir")
    p.set_defaults(func=_cmd_run)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (HierBprError, OSError, ValueError, KeyError) as exc:
        error = {"error": type(exc).__name__, "message": str(exc)}
        print(json.dumps(error, sort_keys=True), file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
