"""Command-line pipeline orchestrator.

Wires the four pipeline steps into reproducible runs: fine-tune the
text-to-text model on captions, generate label descriptions, generate and
cache synthetic images, mix datasets, then train/evaluate/sweep. Every
command validates its config before doing work, defaults to the hermetic stub
backends, and is idempotent given an intact cache.

Exit codes: 0 success, 2 configuration/input error, 3 backend/transport
error, 4 partial failure.
"""

from __future__ import annotations

import hashlib
import json
import os
import sys
import time
from fractions import Fraction
from pathlib import Path

import click
import numpy as np

from . import corpus, datasets, imagegen, metrics, textgen, trainer, wire
from .config import cache_root, config_digest, echo_config, load_config
from .convnet import SmallConvNet
from .datasets import AugmentationPlan, Dataset, ImageRecord
from .errors import ConfigError, GenAugError
from .imagegen import GenerationRequest, ImageCache, ImageSpec
from .textgen import DecodeConfig, LabelSpec


def _collect_overrides(sets, output_dir, seed):
    overrides = {}
    for item in sets:
        key, sep, value = item.partition("=")
        if not sep:
            raise ConfigError(f"--set expects KEY=VALUE, got {item!r}")
        overrides[key] = value
    if output_dir is not None:
        overrides["output_dir"] = output_dir
    if seed is not None:
        overrides["seed"] = str(seed)
    return overrides


def common_options(f):
    f = click.option("--config", "config_path", type=click.Path(), default=None,
                     help="YAML config file.")(f)
    f = click.option("--set", "sets", multiple=True, metavar="KEY=VALUE",
                     help="Override a config value by dotted key (wins over the file).")(f)
    f = click.option("--output-dir", default=None, help="Output directory override.")(f)
    f = click.option("--seed", default=None, type=int, help="Global seed override.")(f)
    return f


def _setup(config_path, sets, output_dir, seed):
    cfg = load_config(config_path, _collect_overrides(sets, output_dir, seed))
    out = Path(cfg["output_dir"])
    out.mkdir(parents=True, exist_ok=True)
    echo_config(cfg, out)
    return cfg, out


def _write_json(path: Path, doc: dict) -> None:
    path.write_text(json.dumps(doc, sort_keys=True, indent=2) + "\n", encoding="utf-8")


def _make_t2t_backend(cfg):
    if cfg["backends"]["t2t"] == "stub":
        return textgen.StubT2TBackend()
    command = cfg["backends"]["t2t_command"]
    if not command:
        raise ConfigError("backends.t2t_command is required for a subprocess backend")
    tag = hashlib.sha256(json.dumps(command).encode()).hexdigest()[:8]
    return wire.SubprocessT2TBackend(command, backend_id=f"t2t-subprocess-{tag}")


def _make_t2i_backend(cfg):
    if cfg["backends"]["t2i"] == "stub":
        return imagegen.StubT2IBackend()
    command = cfg["backends"]["t2i_command"]
    if not command:
        raise ConfigError("backends.t2i_command is required for a subprocess backend")
    tag = hashlib.sha256(json.dumps(command).encode()).hexdigest()[:8]
    return wire.SubprocessT2IBackend(command, backend_id=f"t2i-subprocess-{tag}")


def _load_labels(cfg) -> list[LabelSpec]:
    manifest = cfg["dataset"]["manifest"]
    if manifest:
        return datasets.load_manifest(manifest, check_files=False).labels()
    labels_file = cfg["labels"]["file"]
    if labels_file:
        p = Path(labels_file)
        if not p.exists():
            raise ConfigError(f"labels file not found: {p}")
        lines = [ln.strip() for ln in p.read_text(encoding="utf-8").splitlines() if ln.strip()]
        return [LabelSpec(class_id=i, label_text=text) for i, text in enumerate(lines)]
    raise ConfigError("no labels: set dataset.manifest or labels.file")


def _prepare_real_dataset(cfg) -> tuple[Dataset, Path]:
    """Load the real dataset and apply the configured subset transforms."""
    manifest = cfg["dataset"]["manifest"]
    image_dir = cfg["dataset"]["image_dir"]
    if manifest:
        ds = datasets.load_manifest(manifest)
        base = Path(manifest).parent
    elif image_dir:
        spec = ImageSpec(width=cfg["dataset"]["width"], height=cfg["dataset"]["height"])
        ds = datasets.dataset_from_directory(
            image_dir, cfg["dataset"]["name"], spec, domain=cfg["dataset"]["domain"]
        )
        base = Path(image_dir)
    else:
        raise ConfigError("set dataset.manifest or dataset.image_dir")
    if cfg["few_shot"] is not None:
        ds = datasets.make_few_shot(ds, int(cfg["few_shot"]), cfg["seed"])
    if cfg["long_tail"]:
        ds = datasets.make_long_tail(ds, cfg["seed"])
    return ds, base


def _rebase(ds: Dataset, from_base: Path, to_base: Path) -> Dataset:
    """Rewrite relative record paths from one base directory to another."""

    def rewrite(r: ImageRecord) -> ImageRecord:
        p = Path(r.path)
        if p.is_absolute():
            return r
        rel = os.path.relpath(from_base / p, to_base)
        return ImageRecord(
            path=rel, class_id=r.class_id, label_text=r.label_text,
            provenance=r.provenance, split=r.split, domain=r.domain,
        )

    cats = []
    for c in ds.categories:
        cats.append(
            datasets.Category(
                label=c.label,
                real_images=tuple(rewrite(r) for r in c.real_images),
                synthetic_images=tuple(rewrite(r) for r in c.synthetic_images),
                adversarial_images=tuple(rewrite(r) for r in c.adversarial_images),
            )
        )
    return datasets.Dataset(
        name=ds.name, categories=tuple(cats), image_spec=ds.image_spec, domain=ds.domain
    )


@click.group()
def cli():
    """Generative data augmentation pipeline."""


@cli.command("finetune-t2t")
@common_options
def cmd_finetune_t2t(config_path, sets, output_dir, seed):
    """Step 1: fine-tune the text-to-text backend on caption records."""
    cfg, out = _setup(config_path, sets, output_dir, seed)
    captions_path = cfg["captions"]["path"]
    if not captions_path:
        raise ConfigError("captions.path is required")
    captions = corpus.load_captions(
        captions_path, cfg["captions"]["format"], split=cfg["captions"]["split"]
    )
    train_captions = [c for c in captions if c.split == "train"]
    records = corpus.build_finetune_records(train_captions)
    if not records:
        raise ConfigError("no fine-tuning records (no captions with extractable keywords)")
    corpus.write_finetune_records(records, out / "finetune_records.jsonl")
    backend = _make_t2t_backend(cfg)
    summary = textgen.finetune(backend, records, cfg["finetune_epochs"])
    _write_json(
        out / "finetune_summary.json",
        {
            "backend_id": summary.backend_id,
            "records_seen": summary.records_seen,
            "epochs": summary.epochs,
            "epoch_nll": list(summary.epoch_nll),
            "final_nll": summary.final_nll,
            "config_digest": config_digest(cfg),
        },
    )
    click.echo(
        f"finetuned {summary.backend_id} on {len(records)} records x "
        f"{summary.epochs} epochs (records_seen={summary.records_seen})"
    )


@cli.command("gen-descriptions")
@common_options
def cmd_gen_descriptions(config_path, sets, output_dir, seed):
    """Step 2: generate caption-like descriptions from label text."""
    cfg, out = _setup(config_path, sets, output_dir, seed)
    labels = _load_labels(cfg)
    if not labels:
        raise ConfigError("label list is empty")
    backend = _make_t2t_backend(cfg)
    decode = DecodeConfig(
        max_length=cfg["decode"]["max_length"],
        beam_size=cfg["decode"]["beam_size"],
        seed=cfg["seed"],
    )
    descriptions = textgen.gen_description_batch(
        backend, labels, decode, cfg["variants_per_label"]
    )
    path = out / "descriptions.jsonl"
    with open(path, "w", encoding="utf-8") as f:
        for i, d in enumerate(descriptions):
            f.write(
                json.dumps(
                    {
                        "class_id": d.source_label.class_id,
                        "label_text": d.source_label.label_text,
                        "variant": i % cfg["variants_per_label"],
                        "text": d.text,
                    },
                    sort_keys=True,
                )
                + "\n"
            )
    click.echo(f"wrote {len(descriptions)} descriptions to {path}")


def _prompt_variants(cfg, ds: Dataset) -> dict[int, list[str]]:
    """Per-class prompt list: the label text, or its generated descriptions."""
    if cfg["plan"]["prompt_source"] == "label":
        return {c.label.class_id: [c.label.label_text] for c in ds.categories}
    desc_path = cfg["descriptions_file"] or str(Path(cfg["output_dir"]) / "descriptions.jsonl")
    p = Path(desc_path)
    if not p.exists():
        raise ConfigError(
            f"descriptions file not found: {p}; run gen-descriptions first or set "
            "descriptions_file"
        )
    table: dict[int, list[str]] = {}
    with open(p, encoding="utf-8") as f:
        for line in f:
            if line.strip():
                obj = json.loads(line)
                table.setdefault(int(obj["class_id"]), []).append(str(obj["text"]))
    missing = [c.label.label_text for c in ds.categories if c.label.class_id not in table]
    if missing:
        raise ConfigError(f"descriptions missing for labels: {', '.join(missing)}")
    return table


@cli.command("gen-images")
@common_options
def cmd_gen_images(config_path, sets, output_dir, seed):
    """Step 3: generate synthetic images into the cache, plus a manifest."""
    cfg, out = _setup(config_path, sets, output_dir, seed)
    ds, _ = _prepare_real_dataset(cfg)
    plan = AugmentationPlan(
        ratio=cfg["plan"]["ratio"], prompt_source=cfg["plan"]["prompt_source"], seed=cfg["seed"]
    )
    backend = _make_t2i_backend(cfg)
    cache = ImageCache(cache_root(cfg))
    prompts = _prompt_variants(cfg, ds)

    rows = []
    hits = 0
    for cat in ds.categories:
        want = datasets.synthetic_count(plan, len(cat.real_train()))
        variants = prompts[cat.label.class_id]
        nv = len(variants)
        for v, prompt in enumerate(variants):
            count_v = want // nv + (1 if v < want % nv else 0)
            if count_v == 0:
                continue
            req = GenerationRequest(
                label=cat.label,
                prompt=prompt,
                prompt_source=plan.prompt_source,
                count=count_v,
                target_spec=ds.image_spec,
                seed=cfg["seed"],
            )
            hits += sum(
                1
                for j in range(1, count_v + 1)
                if cache.image_path(
                    backend.backend_id,
                    cache.key(backend.backend_id, prompt, cfg["seed"] + j, ds.image_spec),
                ).exists()
            )
            for img in imagegen.gen_images(backend, req, cache):
                key = cache.key(backend.backend_id, img.prompt, img.seed, ds.image_spec)
                img_path = cache.image_path(backend.backend_id, key)
                rows.append(
                    {
                        "class_id": img.class_id,
                        "label_text": cat.label.label_text,
                        "prompt": img.prompt,
                        "prompt_source": img.prompt_source,
                        "variant": v,
                        "index": img.index,
                        "seed": img.seed,
                        "backend_id": img.backend_id,
                        "path": os.path.relpath(img_path, out),
                        "checksum": imagegen.pixel_checksum(img.pixels),
                    }
                )
    rows.sort(key=lambda r: (r["class_id"], r["variant"], r["index"]))
    manifest = out / "images.jsonl"
    with open(manifest, "w", encoding="utf-8") as f:
        for row in rows:
            f.write(json.dumps(row, sort_keys=True) + "\n")
    click.echo(f"generated {len(rows)} images ({hits} cache hits), manifest at {manifest}")


@cli.command("build-dataset")
@common_options
def cmd_build_dataset(config_path, sets, output_dir, seed):
    """Step 4: mix real and synthetic images into a train/val manifest."""
    cfg, out = _setup(config_path, sets, output_dir, seed)
    ds, base = _prepare_real_dataset(cfg)
    ds = _rebase(ds, base, out)
    plan = AugmentationPlan(
        ratio=cfg["plan"]["ratio"], prompt_source=cfg["plan"]["prompt_source"], seed=cfg["seed"]
    )

    if plan.ratio > 0:
        images_manifest = out / "images.jsonl"
        if not images_manifest.exists():
            raise ConfigError(f"images manifest not found: {images_manifest}; run gen-images")
        pools: dict[int, list[ImageRecord]] = {}
        with open(images_manifest, encoding="utf-8") as f:
            for line in f:
                if not line.strip():
                    continue
                obj = json.loads(line)
                pools.setdefault(int(obj["class_id"]), []).append(
                    ImageRecord(
                        path=obj["path"],
                        class_id=int(obj["class_id"]),
                        label_text=obj["label_text"],
                        provenance="synthetic",
                        split="train",
                        domain=cfg["dataset"]["domain"],
                    )
                )

        def provider(cat, count):
            return pools.get(cat.label.class_id, [])[:count]

        ds = datasets.build_augmented_dataset(ds, plan, provider)

    if cfg["adversarial_dir"]:
        adv_root = Path(cfg["adversarial_dir"])
        if not adv_root.exists():
            raise ConfigError(f"adversarial_dir not found: {adv_root}")
        by_label = {c.label.label_text: c.label.class_id for c in ds.categories}
        adv: dict[int, list[str]] = {}
        for sub in sorted(d for d in adv_root.iterdir() if d.is_dir()):
            if sub.name not in by_label:
                raise ConfigError(f"adversarial directory {sub.name!r} matches no label")
            files = sorted(p for p in sub.iterdir() if p.suffix.lower() == ".png")
            adv[by_label[sub.name]] = [os.path.relpath(p, out) for p in files]
        ds = datasets.inject_adversarial(ds, adv)

    train_ds, val_ds = datasets.split_holdout(ds, cfg["holdout_fraction"], cfg["seed"])
    full = datasets.merge(train_ds, val_ds)
    manifest_path = datasets.save_manifest(full, out / "dataset.jsonl")
    stats = datasets.dataset_stats(full)
    click.echo(
        f"dataset {stats['name']}: {stats['total']} images, {stats['classes']} classes "
        f"(train {stats['by_split']['train']}, val {stats['by_split']['val']}; "
        f"synthetic {stats['by_provenance']['synthetic']}, "
        f"adversarial {stats['by_provenance']['adversarial']}) -> {manifest_path}"
    )


def _train_config(cfg) -> trainer.TrainConfig:
    t = cfg["train"]
    return trainer.TrainConfig(
        epochs=int(t["epochs"]),
        batch_size=int(t["batch_size"]),
        base_lr=float(t["base_lr"]),
        momentum=float(t["momentum"]),
        weight_decay=float(t["weight_decay"]),
        milestones=tuple(int(m) for m in t["milestones"]),
        gamma=float(t["gamma"]),
        warmup_epochs=int(t["warmup_epochs"]),
        seeds=tuple(int(s) for s in t["seeds"]),
        loss=t["loss"],
    )


def _run_training(cfg, manifest_path: Path, checkpoint_dir: Path | None):
    full = datasets.load_manifest(manifest_path)
    base = manifest_path.parent
    train_data = datasets.load_arrays(full, "train", base)
    val_data = datasets.load_arrays(full, "val", base)
    if len(train_data[0]) == 0 or len(val_data[0]) == 0:
        raise ConfigError("manifest must contain train and val records")
    has_test = any(r.split == "test" for r in full.records())
    test_data = datasets.load_arrays(full, "test", base) if has_test else None
    manifest_digest = hashlib.sha256(manifest_path.read_bytes()).hexdigest()
    report = trainer.run_experiment(
        train_data,
        val_data,
        test_data,
        _train_config(cfg),
        num_classes=full.num_classes,
        image_spec=full.image_spec,
        manifest_digest=manifest_digest,
        checkpoint_dir=checkpoint_dir,
    )
    return report


@cli.command("train")
@common_options
@click.option("--manifest", "manifest_path", default=None, help="Dataset manifest path.")
def cmd_train(config_path, sets, output_dir, seed, manifest_path):
    """Train the classifier per the configured recipe, once per seed."""
    cfg, out = _setup(config_path, sets, output_dir, seed)
    manifest = Path(manifest_path) if manifest_path else out / "dataset.jsonl"
    t0 = time.monotonic()
    report = _run_training(cfg, manifest, out / "checkpoints")
    (out / "run_report.json").write_text(report.to_json(), encoding="utf-8")
    click.echo(
        f"trained {len(report.seed_results)} seed(s): mean accuracy "
        f"{report.mean_test_accuracy:.4f} +- {report.std_test_accuracy:.4f} "
        f"({time.monotonic() - t0:.1f}s)"
    )


@cli.command("evaluate")
@common_options
@click.option("--checkpoint", default=None, help="Classifier checkpoint (.npz).")
@click.option("--manifest", "manifest_path", default=None, help="Dataset manifest path.")
@click.option("--split", default=None, help="Split to evaluate (default: test, else val).")
@click.option("--hyp", default=None, help="Hypothesis captions file (JSONL records).")
@click.option("--ref", default=None, help="Reference captions file (JSONL records).")
def cmd_evaluate(config_path, sets, output_dir, seed, checkpoint, manifest_path, split, hyp, ref):
    """Evaluate a checkpoint (accuracy) or caption files (BLEU/ROUGE/CIDEr)."""
    cfg, out = _setup(config_path, sets, output_dir, seed)
    if (hyp is None) != (ref is None):
        raise ConfigError("--hyp and --ref must be given together")
    if hyp is not None:
        pairs = metrics.corpus_from_files(hyp, ref)
        report = metrics.score_corpus(pairs)
        (out / "metrics.json").write_text(report.to_json() + "\n", encoding="utf-8")
        (out / "metrics.csv").write_text(
            metrics.MetricReport.CSV_HEADER + "\n" + report.to_csv_row() + "\n", encoding="utf-8"
        )
        click.echo(
            f"n={report.n} bleu4={report.bleu4:.4f} rouge_l={report.rouge_l:.4f} "
            f"cider_d={report.cider_d:.4f}"
        )
        return
    if not checkpoint:
        raise ConfigError("provide --checkpoint (accuracy) or --hyp/--ref (captions)")
    manifest = Path(manifest_path) if manifest_path else out / "dataset.jsonl"
    full = datasets.load_manifest(manifest)
    params, num_classes, spec = trainer.load_checkpoint(checkpoint)
    if num_classes != full.num_classes:
        raise ConfigError(
            f"checkpoint has {num_classes} classes, manifest has {full.num_classes}"
        )
    if spec != full.image_spec:
        raise ConfigError("checkpoint image spec does not match manifest")
    use_split = split
    if use_split is None:
        use_split = "test" if any(r.split == "test" for r in full.records()) else "val"
    data = datasets.load_arrays(full, use_split, manifest.parent)
    classifier = SmallConvNet(num_classes, spec, seed=0)
    for key in classifier.params:
        if key not in params or classifier.params[key].shape != params[key].shape:
            raise ConfigError(f"checkpoint parameter {key!r} missing or mis-shaped")
    classifier.params = {k: np.array(v) for k, v in params.items()}
    accuracy = trainer.evaluate(classifier, data)
    _write_json(out / "evaluate.json", {"split": use_split, "accuracy": accuracy, "n": len(data[1])})
    click.echo(f"accuracy on {use_split}: {accuracy:.4f} (n={len(data[1])})")


def _sweep_point(cfg, ratio: str, sweep_dir: Path):
    """Run gen-images + build-dataset + train at one ratio; returns (mean, std)."""
    sub_cfg = json.loads(json.dumps(cfg))  # deep copy
    tag = str(ratio).replace("/", "_").replace(".", "_")
    sub_out = sweep_dir / f"ratio_{tag}"
    if not sub_cfg["descriptions_file"]:
        parent_descriptions = Path(cfg["output_dir"]) / "descriptions.jsonl"
        if parent_descriptions.exists():
            sub_cfg["descriptions_file"] = str(parent_descriptions)
    sub_cfg["output_dir"] = str(sub_out)
    sub_cfg["plan"]["ratio"] = str(ratio)
    sub_out.mkdir(parents=True, exist_ok=True)

    ds, base = _prepare_real_dataset(sub_cfg)
    plan = AugmentationPlan(ratio=str(ratio), prompt_source=sub_cfg["plan"]["prompt_source"],
                            seed=sub_cfg["seed"])
    if plan.ratio > 0:
        backend = _make_t2i_backend(sub_cfg)
        cache = ImageCache(cache_root(sub_cfg))
        prompts = _prompt_variants(sub_cfg, ds)
        pools: dict[int, list[ImageRecord]] = {}
        for cat in ds.categories:
            want = datasets.synthetic_count(plan, len(cat.real_train()))
            variants = prompts[cat.label.class_id]
            nv = len(variants)
            records = []
            for v, prompt in enumerate(variants):
                count_v = want // nv + (1 if v < want % nv else 0)
                if count_v == 0:
                    continue
                req = GenerationRequest(
                    label=cat.label, prompt=prompt, prompt_source=plan.prompt_source,
                    count=count_v, target_spec=ds.image_spec, seed=sub_cfg["seed"],
                )
                for img in imagegen.gen_images(backend, req, cache):
                    key = cache.key(backend.backend_id, img.prompt, img.seed, ds.image_spec)
                    records.append(
                        ImageRecord(
                            path=os.path.relpath(cache.image_path(backend.backend_id, key), sub_out),
                            class_id=img.class_id,
                            label_text=cat.label.label_text,
                            provenance="synthetic",
                            split="train",
                            domain=sub_cfg["dataset"]["domain"],
                        )
                    )
            pools[cat.label.class_id] = records
        ds = _rebase(ds, base, sub_out)
        ds = datasets.build_augmented_dataset(ds, plan, lambda cat, count: pools[cat.label.class_id][:count])
    else:
        ds = _rebase(ds, base, sub_out)

    train_ds, val_ds = datasets.split_holdout(ds, sub_cfg["holdout_fraction"], sub_cfg["seed"])
    full = datasets.merge(train_ds, val_ds)
    manifest_path = datasets.save_manifest(full, sub_out / "dataset.jsonl")
    report = _run_training(sub_cfg, manifest_path, None)
    (sub_out / "run_report.json").write_text(report.to_json(), encoding="utf-8")
    return report.mean_test_accuracy, report.std_test_accuracy


def pick_max_ratio(scored: list[tuple[str, float, float]]) -> tuple[str, float, float]:
    """Best (ratio, mean, std) by mean accuracy; ties go to the smaller ratio."""
    return max(scored, key=lambda row: (row[1], -Fraction(str(row[0]))))


@cli.command("sweep")
@common_options
def cmd_sweep(config_path, sets, output_dir, seed):
    """Ratio sweep: accuracy vs synthetic ratio, CSV + plot, with a max row."""
    cfg, out = _setup(config_path, sets, output_dir, seed)
    sweep_dir = out / "sweep"
    ratios = list(cfg["sweep"]["ratios"])
    max_ratios = list(cfg["sweep"]["max_ratios"])

    t0 = time.monotonic()
    baseline_mean, baseline_std = _sweep_point(cfg, "0", sweep_dir)
    rows = [("0", "0", baseline_mean, baseline_std, metrics.delta_percent(baseline_mean, baseline_mean))]
    curve = [(0.0, baseline_mean)]
    for ratio in ratios:
        mean, std = _sweep_point(cfg, ratio, sweep_dir)
        rows.append((str(ratio), str(ratio), mean, std, metrics.delta_percent(baseline_mean, mean)))
        curve.append((float(Fraction(str(ratio))), mean))

    if max_ratios:
        scored = [(ratio, *_sweep_point(cfg, ratio, sweep_dir)) for ratio in max_ratios]
        best_ratio, best_mean, best_std = pick_max_ratio(scored)
        rows.append(
            ("max", best_ratio, best_mean, best_std, metrics.delta_percent(baseline_mean, best_mean))
        )

    csv_path = out / "sweep.csv"
    with open(csv_path, "w", encoding="utf-8") as f:
        f.write("label,ratio,mean_accuracy,std_accuracy,delta\n")
        for label, ratio, mean, std, delta in rows:
            f.write(f"{label},{ratio},{mean:.6f},{std:.6f},{delta}\n")

    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    xs, ys = zip(*curve)
    fig, ax = plt.subplots(figsize=(5, 3.5))
    ax.plot(xs, ys, marker="o")
    ax.set_xlabel("synthetic ratio")
    ax.set_ylabel("val accuracy")
    ax.set_title("accuracy vs synthetic ratio")
    fig.tight_layout()
    fig.savefig(out / "sweep.png", metadata={"Software": "genaug"})
    plt.close(fig)

    click.echo(f"sweep complete ({time.monotonic() - t0:.1f}s): {csv_path}")


@cli.command("report")
@common_options
@click.option("--manifest", "manifests", multiple=True, help="Manifest(s) to summarize.")
@click.option("--baseline", default=None, help="Baseline run_report.json for deltas.")
@click.option("--variant", "variants", multiple=True, help="Variant run_report.json file(s).")
def cmd_report(config_path, sets, output_dir, seed, manifests, baseline, variants):
    """Dataset statistics tables and accuracy delta tables."""
    cfg, out = _setup(config_path, sets, output_dir, seed)
    wrote = []
    if manifests:
        path = out / "dataset_stats.csv"
        with open(path, "w", encoding="utf-8") as f:
            f.write("dataset,domain,total,classes,per_class,synthetic,adversarial\n")
            for m in manifests:
                ds = datasets.load_manifest(m, check_files=False)
                s = datasets.dataset_stats(ds)
                per_class = (
                    str(s["per_class_min"])
                    if s["per_class_min"] == s["per_class_max"]
                    else f"{s['per_class_min']}-{s['per_class_max']}"
                )
                f.write(
                    f"{s['name']},{s['domain'] or ''},{s['total']},{s['classes']},"
                    f"{per_class},{s['by_provenance']['synthetic']},"
                    f"{s['by_provenance']['adversarial']}\n"
                )
        wrote.append(str(path))
    if baseline:
        if not variants:
            raise ConfigError("--variant is required with --baseline")

        def read_report(p):
            doc = json.loads(Path(p).read_text(encoding="utf-8"))
            return metrics.MeasuredResult(
                name=Path(p).parent.name or Path(p).stem,
                dataset=cfg["dataset"]["name"],
                metric="accuracy",
                value=float(doc["mean_test_accuracy"]),
            )

        base_result = read_report(baseline)
        rows = metrics.delta_table(base_result, [read_report(v) for v in variants])
        path = out / "deltas.csv"
        with open(path, "w", encoding="utf-8") as f:
            f.write("name,accuracy,delta\n")
            for row in rows:
                f.write(f"{row['name']},{row['value']:.6f},{row['delta']}\n")
        wrote.append(str(path))
    if not wrote:
        raise ConfigError("nothing to report: pass --manifest or --baseline/--variant")
    click.echo("wrote " + ", ".join(wrote))


def main(argv=None) -> int:
    try:
        cli.main(args=argv, standalone_mode=False)
    except GenAugError as e:
        click.echo(f"error: {e}", err=True)
        return e.exit_code
    except click.UsageError as e:
        click.echo(f"usage error: {e.format_message()}", err=True)
        return 2
    except click.exceptions.Exit as e:
        return e.exit_code
    except click.Abort:
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
