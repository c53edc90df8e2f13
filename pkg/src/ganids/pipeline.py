"""End-to-end orchestration: filter -> pretrain -> per-class finetune ->
synthesize -> augment -> select -> train -> evaluate, from one JSON config.

Synthetic rows are provenance-tagged and never reach the test set. Every
stochastic stage takes its seed from the config, so identical configs
reproduce identical artifacts.
"""

from __future__ import annotations

import csv
import hashlib
import json
import math
import time
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import archive, boruta, gbdt, imbalance, metrics
from . import gan as gan_mod
from .data import (Dataset, DatasetSchema, builtin_schema, concat,
                   load_dataset, preprocess, split_stratified)


class ConfigInvalid(ValueError):
    def __init__(self, path, reason):
        super().__init__(f"{path}: {reason}")
        self.path = path
        self.reason = reason


class StageError(RuntimeError):
    def __init__(self, stage, cause):
        super().__init__(f"stage {stage}: {cause}")
        self.stage = stage
        self.cause = cause


@dataclass
class PipelineConfig:
    dataset_paths: list
    schema: str                    # file path or "builtin:<name>"
    out_dir: str
    gamma: float = imbalance.DEFAULT_GAMMA
    train_fraction: float = 0.8
    split_seed: int = 7
    seed: int = 0
    gan: gan_mod.GanConfig = field(default_factory=gan_mod.GanConfig)
    finetune_max_steps: int = 0    # 0 -> same as gan.max_steps
    boost: gbdt.BoostParams = field(default_factory=gbdt.BoostParams)
    boruta_enabled: bool = False
    boruta_rounds: int = 10
    boruta_alpha: float = 0.05
    boruta_include_tentative: bool = True
    boruta_boost: gbdt.BoostParams = None
    synth_counts: dict = field(default_factory=dict)  # class -> override count
    skip_pretrain: bool = False
    skip_augment: bool = False

    def to_dict(self):
        d = dict(vars(self))
        d["gan"] = self.gan.to_dict()
        d["boost"] = self.boost.to_dict()
        d["boruta_boost"] = self.boruta_boost.to_dict() if self.boruta_boost else None
        return d

    @staticmethod
    def from_dict(d):
        d = dict(d)
        if "gan" in d and isinstance(d["gan"], dict):
            d["gan"] = gan_mod.GanConfig.from_dict(d["gan"])
        if "boost" in d and isinstance(d["boost"], dict):
            d["boost"] = gbdt.BoostParams.from_dict(d["boost"])
        if d.get("boruta_boost"):
            d["boruta_boost"] = gbdt.BoostParams.from_dict(d["boruta_boost"])
        try:
            return PipelineConfig(**d)
        except TypeError as e:
            raise ConfigInvalid("<config>", str(e)) from e

    @staticmethod
    def from_json(path):
        with open(path) as f:
            return PipelineConfig.from_dict(json.load(f))

    def validate(self):
        if not self.dataset_paths:
            raise ConfigInvalid("dataset_paths", "no dataset files configured")
        for p in self.dataset_paths:
            if not Path(p).exists():
                raise ConfigInvalid("dataset_paths", f"missing file {p}")
        if not self.schema:
            raise ConfigInvalid("schema", "schema path missing")
        if not self.schema.startswith("builtin:") and not Path(self.schema).exists():
            raise ConfigInvalid("schema", f"missing file {self.schema}")
        if not self.out_dir:
            raise ConfigInvalid("out_dir", "output directory missing")
        if not 0 < self.train_fraction < 1:
            raise ConfigInvalid("train_fraction", "must be in (0, 1)")
        if self.gamma <= 0:
            raise ConfigInvalid("gamma", "must be positive")

    def load_schema(self) -> DatasetSchema:
        if self.schema.startswith("builtin:"):
            return builtin_schema(self.schema.split(":", 1)[1])
        return DatasetSchema.from_json(self.schema)

    def config_hash(self):
        return hashlib.sha256(
            json.dumps(self.to_dict(), sort_keys=True).encode()).hexdigest()


@dataclass
class RunArtifacts:
    out_dir: Path
    census: imbalance.ClassCensus
    eval_report: metrics.EvalReport
    gan_paths: dict
    ensemble_path: Path
    manifest_path: Path
    traces: dict
    synthesized: dict


def default_synth_count(n_normal, n_class, gamma):
    """Top the class up to the imbalance threshold: n_normal/gamma - n_class."""
    return max(0, int(math.ceil(n_normal / gamma)) - n_class)


def _write_json(path, obj):
    with open(path, "w") as f:
        json.dump(obj, f, indent=1, sort_keys=True)


def _write_csv(path, header, rows):
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(header)
        w.writerows(rows)


def _write_trace(path, trace):
    _write_csv(path, ["step", "loss_d", "loss_g", "wasserstein", "gp"],
               trace.rows())


def _write_eval(out_dir, name, report):
    _write_json(out_dir / f"{name}.json", report.to_dict())
    k = report.confusion.shape[0]
    _write_csv(out_dir / f"{name}_confusion.csv",
               [f"pred_{j}" for j in range(k)], report.confusion.tolist())
    rows = [(k, report.support[k], report.precision[k], report.recall[k],
             report.f1[k]) for k in range(len(report.f1))]
    _write_csv(out_dir / f"{name}.csv",
               ["class", "support", "precision", "recall", "f1"], rows)


def run_pipeline(config: PipelineConfig, ablate=False) -> RunArtifacts:
    config.validate()
    out_dir = Path(config.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "models").mkdir(exist_ok=True)
    manifest = {"config": config.to_dict(),
                "config_hash": config.config_hash(),
                "stages": {}}
    t_start = time.time()

    def stage(name):
        return _StageTimer(name, manifest)

    schema = config.load_schema()

    with stage("load"):
        raw = load_dataset(config.dataset_paths, schema)

    with stage("census"):
        census = imbalance.class_census(raw)
        _write_json(out_dir / "census.json", {
            "counts": census.counts,
            "ratios": census.display_ratios(),
        })
        _write_csv(out_dir / "census.csv",
                   ["class", "samples", "imbalance_ratio"], census.rows())

    with stage("split"):
        train_raw, test_raw = split_stratified(raw, config.train_fraction,
                                               config.split_seed)

    with stage("encode"):
        train, plan = preprocess(train_raw)
        test, _ = preprocess(test_raw, plan)
        _write_json(out_dir / "plan.json", plan.to_dict())

    with stage("filter"):
        filtered = imbalance.filter_minority(train, config.gamma)

    gan_paths, traces, synthesized = {}, {}, {}
    synth_sets = []
    if not config.skip_augment and filtered.minority:
        feature_dim = train.features.shape[1]
        gan_cfg = replace(config.gan, seed=config.seed * 1000 + config.gan.seed)
        with stage("pretrain"):
            model = gan_mod.build_gan(feature_dim, gan_cfg)
            pre_cfg = gan_cfg if not config.skip_pretrain \
                else replace(gan_cfg, max_steps=0)
            model, pre_trace = gan_mod.pretrain(model, filtered.normal, pre_cfg)
            traces["pretrain"] = pre_trace
            _write_trace(out_dir / "trace_pretrain.csv", pre_trace)
            pre_path = out_dir / "models" / "gan_pretrained.bin"
            archive.save_gan(pre_path, model)
            gan_paths["pretrained"] = pre_path

        ft_cfg = gan_cfg if not config.finetune_max_steps \
            else replace(gan_cfg, max_steps=config.finetune_max_steps)
        n_normal_train = len(filtered.normal)
        for class_name, subset in sorted(filtered.minority.items()):
            with stage(f"finetune:{class_name}"):
                tuned, trace = gan_mod.finetune(model, subset, ft_cfg,
                                                class_name=class_name)
                traces[class_name] = trace
                _write_trace(out_dir / f"trace_{class_name}.csv", trace)
                path = out_dir / "models" / f"gan_{class_name}.bin"
                archive.save_gan(path, tuned)
                gan_paths[class_name] = path
            with stage(f"synthesize:{class_name}"):
                n = config.synth_counts.get(
                    class_name,
                    default_synth_count(n_normal_train, len(subset), config.gamma))
                synth_raw = gan_mod.synthesize(
                    tuned, n, plan, seed=config.seed * 77 + 13,
                    schema=schema, class_name=class_name)
                synth_enc, _ = preprocess(synth_raw, plan)
                synthesized[class_name] = n
                synth_sets.append(synth_enc)

    with stage("augment"):
        train_aug = concat([train] + synth_sets, "train+synth") \
            if synth_sets else train

    feature_mask = None
    if config.boruta_enabled:
        with stage("select"):
            bp = config.boruta_boost or replace(
                config.boost, rounds=max(10, config.boost.rounds // 10))
            decision = boruta.boruta_select(
                train_aug, config.boruta_rounds, config.boruta_alpha, bp,
                seed=config.seed + 5)
            _write_json(out_dir / "feature_decision.json", decision.to_dict())
            _write_csv(out_dir / "feature_decision.csv",
                       ["feature", "status", "hits", "rounds"],
                       [(n, s, decision.hits[n], decision.rounds)
                        for n, s in decision.status.items()])
            keep_status = {"accepted"}
            if config.boruta_include_tentative:
                keep_status.add("tentative")
            feature_mask = np.array(
                [decision.status[n] in keep_status
                 for n in train_aug.feature_names], dtype=bool)
            if not feature_mask.any():
                feature_mask = None

    def project(ds):
        if feature_mask is None:
            return ds
        return Dataset(ds.features[:, feature_mask], ds.labels, ds.schema,
                       True, [n for n, m in zip(ds.feature_names, feature_mask)
                              if m], ds.provenance, ds.synthetic)

    with stage("train"):
        ensemble = gbdt.fit(project(train_aug),
                            replace(config.boost, seed=config.seed))
        ensemble_path = out_dir / "models" / "ensemble.bin"
        archive.save_ensemble(ensemble_path, ensemble)

    with stage("evaluate"):
        # test-set purity: evaluation rows are real by construction
        assert not test.synthetic.any()
        pred = ensemble.predict(project(test).features)
        report = metrics.evaluate(pred, test.labels, len(schema.classes))
        _write_eval(out_dir, "eval", report)

    manifest["wall_time_s"] = round(time.time() - t_start, 3)
    manifest["artifacts"] = {
        str(p.relative_to(out_dir)): archive.file_hash(p)
        for p in sorted(gan_paths.values()) + [ensemble_path]}
    manifest["eval_hash"] = hashlib.sha256(
        json.dumps(report.to_dict(), sort_keys=True).encode()).hexdigest()
    manifest["synthesized"] = synthesized
    manifest_path = out_dir / "manifest.json"
    _write_json(manifest_path, manifest)
    return RunArtifacts(out_dir, census, report, gan_paths, ensemble_path,
                        manifest_path, traces, synthesized)


def run_ablation(config: PipelineConfig) -> metrics.AblationReport:
    """Run the pipeline twice on identical data and seeds, with pretrained
    and with fresh fine-tune initialization, and compare."""
    base = Path(config.out_dir)
    cfg_with = replace(config, out_dir=str(base / "with_pretrain"),
                       skip_pretrain=False)
    cfg_without = replace(config, out_dir=str(base / "without_pretrain"),
                          skip_pretrain=True)
    art_with = run_pipeline(cfg_with)
    art_without = run_pipeline(cfg_without)
    tw = {k: v for k, v in art_with.traces.items() if k != "pretrain"}
    to = {k: v for k, v in art_without.traces.items() if k != "pretrain"}
    report = metrics.ablation_report(
        tw, to, {"with": art_with.eval_report, "without": art_without.eval_report})
    base.mkdir(parents=True, exist_ok=True)
    _write_json(base / "ablation.json", report.to_dict())
    rows = [(c, e["steps_with"], e["steps_without"], e.get("speedup", ""))
            for c, e in report.per_class.items()]
    _write_csv(base / "ablation.csv",
               ["class", "steps_with_pretrain", "steps_without", "speedup"], rows)
    return report


class _StageTimer:
    def __init__(self, name, manifest):
        self.name = name
        self.manifest = manifest

    def __enter__(self):
        self.t0 = time.time()
        return self

    def __exit__(self, exc_type, exc, tb):
        self.manifest["stages"][self.name] = round(time.time() - self.t0, 3)
        if exc is not None and not isinstance(exc, StageError):
            raise StageError(self.name, exc) from exc
        return False
