import hashlib
import json
from pathlib import Path

import pytest

from genaug.cli import main
from conftest import write_config, write_stub_image_tree

TINY_TRAIN = {
    "epochs": 2,
    "batch_size": 8,
    "base_lr": 0.02,
    "milestones": [],
    "gamma": 0.2,
    "warmup_epochs": 1,
    "seeds": [7],
    "loss": "cross_entropy",
    "model": "smallconv",
}


def run(*argv):
    return main([str(a) for a in argv])


def digest(path: Path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


class TestFinetuneT2T:
    def test_toy_corpus_summary(self, tmp_path, coco_captions_file):
        out = tmp_path / "out"
        cfg = write_config(
            tmp_path / "cfg.yaml",
            output_dir=str(out),
            captions={"path": str(coco_captions_file), "format": "coco_json"},
            finetune_epochs=5,
        )
        assert run("finetune-t2t", "--config", cfg) == 0
        summary = json.loads((out / "finetune_summary.json").read_text())
        assert summary["records_seen"] == 45  # 9 usable captions x 5 epochs
        assert summary["epochs"] == 5

    def test_rerun_identical_summary(self, tmp_path, coco_captions_file):
        out = tmp_path / "out"
        cfg = write_config(
            tmp_path / "cfg.yaml",
            output_dir=str(out),
            captions={"path": str(coco_captions_file), "format": "coco_json"},
        )
        assert run("finetune-t2t", "--config", cfg) == 0
        first = digest(out / "finetune_summary.json")
        assert run("finetune-t2t", "--config", cfg) == 0
        assert digest(out / "finetune_summary.json") == first

    def test_missing_captions_exit_2(self, tmp_path, capsys):
        cfg = write_config(
            tmp_path / "cfg.yaml",
            output_dir=str(tmp_path / "out"),
            captions={"path": str(tmp_path / "missing.json"), "format": "coco_json"},
        )
        assert run("finetune-t2t", "--config", cfg) == 2
        assert "missing.json" in capsys.readouterr().err


class TestGenDescriptions:
    def test_three_labels_two_variants(self, tmp_path):
        labels = tmp_path / "labels.txt"
        labels.write_text("bike\nchair\nmug\n")
        out = tmp_path / "out"
        cfg = write_config(
            tmp_path / "cfg.yaml",
            output_dir=str(out),
            labels={"file": str(labels)},
            variants_per_label=2,
        )
        assert run("gen-descriptions", "--config", cfg) == 0
        lines = (out / "descriptions.jsonl").read_text().splitlines()
        assert len(lines) == 6
        first = json.loads(lines[0])
        assert first["label_text"] == "bike"
        assert "bike" in first["text"]

    def test_empty_labels_exit_2(self, tmp_path):
        labels = tmp_path / "labels.txt"
        labels.write_text("")
        cfg = write_config(
            tmp_path / "cfg.yaml", output_dir=str(tmp_path / "out"), labels={"file": str(labels)}
        )
        assert run("gen-descriptions", "--config", cfg) == 2

    def test_deterministic(self, tmp_path):
        labels = tmp_path / "labels.txt"
        labels.write_text("bike\n")
        out = tmp_path / "out"
        cfg = write_config(
            tmp_path / "cfg.yaml", output_dir=str(out), labels={"file": str(labels)}
        )
        assert run("gen-descriptions", "--config", cfg) == 0
        first = digest(out / "descriptions.jsonl")
        assert run("gen-descriptions", "--config", cfg) == 0
        assert digest(out / "descriptions.jsonl") == first


def toy_config(tmp_path, toy_manifest, out_name="out", **extra):
    out = tmp_path / out_name
    defaults = dict(
        output_dir=str(out),
        cache_dir=str(tmp_path / "cache"),
        dataset={"manifest": str(toy_manifest), "name": "toy"},
        plan={"ratio": "1.0", "prompt_source": "label"},
        holdout_fraction="0.2",
        train=dict(TINY_TRAIN),
        seed=3,
    )
    defaults.update(extra)
    return write_config(tmp_path / f"{out_name}.yaml", **defaults), out


class TestGenImages:
    def test_counts_and_manifest(self, tmp_path, toy_manifest):
        cfg, out = toy_config(tmp_path, toy_manifest)
        assert run("gen-images", "--config", cfg) == 0
        rows = [json.loads(l) for l in (out / "images.jsonl").read_text().splitlines()]
        assert len(rows) == 20  # ratio 1.0 over 2 classes x 10
        by_class = {}
        for r in rows:
            by_class.setdefault(r["class_id"], []).append(r)
            assert (out / r["path"]).resolve().exists()
        assert {k: len(v) for k, v in by_class.items()} == {0: 10, 1: 10}

    def test_resume_from_cache_is_identical(self, tmp_path, toy_manifest, capsys):
        cfg, out = toy_config(tmp_path, toy_manifest)
        assert run("gen-images", "--config", cfg) == 0
        first = digest(out / "images.jsonl")
        capsys.readouterr()
        assert run("gen-images", "--config", cfg) == 0
        assert "20 cache hits" in capsys.readouterr().out
        assert digest(out / "images.jsonl") == first

    def test_description_source_requires_file(self, tmp_path, toy_manifest, capsys):
        cfg, out = toy_config(
            tmp_path, toy_manifest, plan={"ratio": "1.0", "prompt_source": "description"}
        )
        assert run("gen-images", "--config", cfg) == 2
        assert "gen-descriptions" in capsys.readouterr().err

    def test_description_source_pipeline(self, tmp_path, toy_manifest):
        cfg, out = toy_config(
            tmp_path, toy_manifest, plan={"ratio": "0.5", "prompt_source": "description"}
        )
        assert run("gen-descriptions", "--config", cfg) == 0
        assert run("gen-images", "--config", cfg) == 0
        rows = [json.loads(l) for l in (out / "images.jsonl").read_text().splitlines()]
        assert len(rows) == 10
        assert all("a photo of a" in r["prompt"] for r in rows)


class TestBuildDataset:
    def test_ratio_half_counts(self, tmp_path, toy_manifest):
        cfg, out = toy_config(tmp_path, toy_manifest, plan={"ratio": "0.5", "prompt_source": "label"})
        assert run("gen-images", "--config", cfg) == 0
        assert run("build-dataset", "--config", cfg) == 0
        from genaug.datasets import dataset_stats, load_manifest

        ds = load_manifest(out / "dataset.jsonl")
        stats = dataset_stats(ds)
        assert stats["by_provenance"]["real"] == 20
        assert stats["by_provenance"]["synthetic"] == 10
        assert stats["by_split"]["val"] == 4  # 20% of 10 real per class

    def test_long_tail_flag(self, tmp_path):
        root = tmp_path / "data4"
        write_stub_image_tree(root, ["bike", "chair", "mug", "lamp"], per_class=10, size=16)
        from genaug.datasets import dataset_from_directory, load_manifest, save_manifest
        from genaug.imagegen import ImageSpec

        ds = dataset_from_directory(root, "toy4", ImageSpec(width=16, height=16))
        manifest = save_manifest(ds, root / "manifest.jsonl")
        cfg, out = toy_config(
            tmp_path,
            manifest,
            out_name="lt",
            plan={"ratio": "0", "prompt_source": "label"},
            long_tail=True,
            holdout_fraction="0.5",
        )
        assert run("build-dataset", "--config", cfg) == 0
        built = load_manifest(out / "dataset.jsonl")
        real_counts = [
            len(c.real_images) for c in built.categories
        ]  # train + val real per class
        assert real_counts == [2, 5, 7, 10]

    def test_adversarial_entries_train_only(self, tmp_path, toy_manifest):
        adv_root = tmp_path / "adv"
        write_stub_image_tree(adv_root, ["bike"], per_class=3, size=16, seed0=9000)
        cfg, out = toy_config(
            tmp_path,
            toy_manifest,
            plan={"ratio": "0", "prompt_source": "label"},
            adversarial_dir=str(adv_root),
        )
        assert run("build-dataset", "--config", cfg) == 0
        from genaug.datasets import load_manifest

        ds = load_manifest(out / "dataset.jsonl")
        adv = [r for r in ds.records() if r.provenance == "adversarial"]
        assert len(adv) == 3
        assert all(r.split == "train" for r in adv)

    def test_missing_images_manifest_exit_2(self, tmp_path, toy_manifest):
        cfg, out = toy_config(tmp_path, toy_manifest)
        assert run("build-dataset", "--config", cfg) == 2


class TestTrainEvaluate:
    def test_train_then_evaluate(self, tmp_path, toy_manifest):
        cfg, out = toy_config(tmp_path, toy_manifest, plan={"ratio": "0.5", "prompt_source": "label"})
        assert run("gen-images", "--config", cfg) == 0
        assert run("build-dataset", "--config", cfg) == 0
        assert run("train", "--config", cfg) == 0
        report = json.loads((out / "run_report.json").read_text())
        assert len(report["seed_results"]) == 1
        assert report["manifest_digest"]
        ckpt = report["seed_results"][0]["checkpoint_path"]
        assert run("evaluate", "--config", cfg, "--checkpoint", ckpt) == 0
        result = json.loads((out / "evaluate.json").read_text())
        assert result["split"] == "val"
        assert 0.0 <= result["accuracy"] <= 1.0

    def test_num_classes_mismatch_exit_2(self, tmp_path, toy_manifest):
        cfg, out = toy_config(tmp_path, toy_manifest, plan={"ratio": "0", "prompt_source": "label"})
        assert run("build-dataset", "--config", cfg) == 0
        assert run("train", "--config", cfg) == 0
        ckpt = json.loads((out / "run_report.json").read_text())["seed_results"][0][
            "checkpoint_path"
        ]
        # manifest with a different label space
        root = tmp_path / "data3"
        write_stub_image_tree(root, ["a", "b", "c"], per_class=4, size=16)
        from genaug.datasets import dataset_from_directory, save_manifest, split_holdout, merge
        from genaug.imagegen import ImageSpec

        ds = dataset_from_directory(root, "toy3", ImageSpec(width=16, height=16))
        train_ds, val_ds = split_holdout(ds, "0.25", 0)
        other = save_manifest(merge(train_ds, val_ds), root / "m.jsonl")
        assert run("evaluate", "--config", cfg, "--checkpoint", ckpt, "--manifest", other) == 2

    def test_caption_metrics_mode(self, tmp_path):
        hyp = tmp_path / "hyp.jsonl"
        ref = tmp_path / "ref.jsonl"
        hyp.write_text(
            '{"image_id": "1", "sentence": "a dog runs fast"}\n'
            '{"image_id": "2", "sentence": "blue cars stop here"}\n'
        )
        ref.write_text(
            '{"image_id": "1", "sentence": "a dog runs fast"}\n'
            '{"image_id": "2", "sentence": "blue cars stop here"}\n'
        )
        out = tmp_path / "out"
        cfg = write_config(tmp_path / "cfg.yaml", output_dir=str(out))
        assert run("evaluate", "--config", cfg, "--hyp", hyp, "--ref", ref) == 0
        doc = json.loads((out / "metrics.json").read_text())
        assert doc == {"bleu4": 1.0, "cider_d": 10.0, "n": 2, "rouge_l": 1.0}


class TestSweep:
    def test_max_row_tie_goes_to_smaller_ratio(self):
        from genaug.cli import pick_max_ratio

        scored = [("2.0", 0.91, 0.0), ("3.0", 0.91, 0.0), ("4.0", 0.90, 0.0)]
        assert pick_max_ratio(scored) == ("2.0", 0.91, 0.0)
        scored = [("2.0", 0.80, 0.0), ("5.0", 0.93, 0.01)]
        assert pick_max_ratio(scored) == ("5.0", 0.93, 0.01)

    def test_csv_structure_and_determinism(self, tmp_path, toy_manifest):
        cfg, out = toy_config(
            tmp_path,
            toy_manifest,
            sweep={"ratios": ["0.5", "1.0"], "max_ratios": ["2.0", "3.0"]},
        )
        assert run("sweep", "--config", cfg) == 0
        csv_path = out / "sweep.csv"
        lines = csv_path.read_text().splitlines()
        assert lines[0] == "label,ratio,mean_accuracy,std_accuracy,delta"
        labels = [l.split(",")[0] for l in lines[1:]]
        assert labels == ["0", "0.5", "1.0", "max"]
        max_row = lines[-1].split(",")
        assert max_row[1] in ("2.0", "3.0")
        assert (out / "sweep.png").exists()
        first = digest(csv_path)
        assert run("sweep", "--config", cfg) == 0
        assert digest(csv_path) == first


class TestReport:
    def test_stats_table(self, tmp_path, toy_manifest):
        out = tmp_path / "out"
        cfg = write_config(tmp_path / "cfg.yaml", output_dir=str(out))
        assert run("report", "--config", cfg, "--manifest", toy_manifest) == 0
        lines = (out / "dataset_stats.csv").read_text().splitlines()
        assert lines[0] == "dataset,domain,total,classes,per_class,synthetic,adversarial"
        assert lines[1].startswith("toy,,20,2,10,0,0")

    def test_delta_table(self, tmp_path, toy_manifest):
        out = tmp_path / "out"
        base = tmp_path / "base_report.json"
        var = tmp_path / "aug_report.json"
        base.write_text(json.dumps({"mean_test_accuracy": 0.700}))
        var.write_text(json.dumps({"mean_test_accuracy": 0.713}))
        cfg = write_config(tmp_path / "cfg.yaml", output_dir=str(out))
        assert run("report", "--config", cfg, "--baseline", base, "--variant", var) == 0
        lines = (out / "deltas.csv").read_text().splitlines()
        assert lines[1].endswith("+1.3%")

    def test_nothing_to_report_exit_2(self, tmp_path):
        cfg = write_config(tmp_path / "cfg.yaml", output_dir=str(tmp_path / "out"))
        assert run("report", "--config", cfg) == 2


class TestConfigHandling:
    def test_unknown_key_rejected(self, tmp_path):
        cfg = write_config(tmp_path / "cfg.yaml", output_dir=str(tmp_path / "o"), bogus=1)
        assert run("gen-descriptions", "--config", cfg) == 2

    def test_flag_overrides_file(self, tmp_path, toy_manifest):
        cfg, out = toy_config(tmp_path, toy_manifest)
        other = tmp_path / "other"
        assert (
            run("gen-images", "--config", cfg, "--set", f"output_dir={other}",
                "--set", "plan.ratio=0.2") == 0
        )
        rows = (other / "images.jsonl").read_text().splitlines()
        assert len(rows) == 4  # 0.2 x 10 per class x 2 classes

    def test_effective_config_echoed(self, tmp_path, toy_manifest):
        cfg, out = toy_config(tmp_path, toy_manifest)
        assert run("gen-images", "--config", cfg) == 0
        assert (out / "config.effective.yaml").exists()

    def test_config_digest_sensitive_to_every_field(self, tmp_path):
        from genaug.config import config_digest, load_config

        base = load_config(None)
        baseline_digest = config_digest(base)
        for dotted, value in [
            ("seed", "9"),
            ("plan.ratio", "0.7"),
            ("decode.max_length", "11"),
            ("train.base_lr", "0.03"),
            ("backends.t2i", "subprocess"),
        ]:
            changed = load_config(None, {dotted: value})
            assert config_digest(changed) != baseline_digest, dotted

    def test_cache_env_override(self, tmp_path, toy_manifest, monkeypatch):
        cfg, out = toy_config(tmp_path, toy_manifest)
        env_cache = tmp_path / "env_cache"
        monkeypatch.setenv("GENAUG_CACHE", str(env_cache))
        assert run("gen-images", "--config", cfg) == 0
        assert env_cache.exists()
        assert len(list(env_cache.rglob("*.png"))) == 20
        assert not (tmp_path / "cache").exists()

    def test_backend_transport_failure_exit_3(self, tmp_path):
        labels = tmp_path / "labels.txt"
        labels.write_text("bike\n")
        cfg = write_config(
            tmp_path / "cfg.yaml",
            output_dir=str(tmp_path / "out"),
            labels={"file": str(labels)},
            backends={"t2t": "subprocess", "t2t_command": ["/nonexistent-backend-bin"]},
        )
        assert run("gen-descriptions", "--config", cfg) == 3

    def test_train_writes_history_csv(self, tmp_path, toy_manifest):
        cfg, out = toy_config(tmp_path, toy_manifest, plan={"ratio": "0", "prompt_source": "label"})
        assert run("build-dataset", "--config", cfg) == 0
        assert run("train", "--config", cfg) == 0
        history = (out / "checkpoints" / "seed7_history.csv").read_text().splitlines()
        assert history[0] == "epoch,lr,train_loss,val_accuracy"
        assert len(history) == 1 + TINY_TRAIN["epochs"]


class TestAdversarialPromptHelper:
    def test_perturbed_prompt_differs_from_label_pattern(self):
        from genaug.imagegen import adversarial_prompt, stub_base_color
        import numpy as np

        prompt = adversarial_prompt("bike")
        assert "bike" in prompt and prompt != "bike"
        shift = np.linalg.norm(stub_base_color(prompt) - stub_base_color("bike"))
        assert shift > 10  # stub renders it visibly off-pattern
