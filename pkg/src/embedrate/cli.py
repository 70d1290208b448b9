"""Command-line pipeline: prep, train-embed, pca-embed, glm-fit, grid, report.

A ``synth-data`` subcommand generates a complete synthetic dataset in the
documented file formats, so the whole pipeline can be exercised end to end
without external data.  All behaviour is driven by one plain-text config
file (see :mod:`embedrate.config`).
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import evalharness, glm, imageprep, pca, represent, synth
from .config import RunConfig, load_config
from .embeddings import read_embeddings, write_embeddings
from .errors import SchemaError
from .ingest import (
    CAGE_REFERENCE_LEVEL,
    derive_task_targets,
    load_assessment_table,
    load_feature_table,
    load_policy_table,
    split_train_test,
)


def _load_tasks(cfg: RunConfig):
    if cfg.assessment_path is None:
        raise SchemaError("config is missing [data] assessment")
    assessment = load_assessment_table(cfg.assessment_path)
    return derive_task_targets(assessment, cfg.evaluation_year)


def _load_features(cfg: RunConfig, backbone: str):
    if backbone not in cfg.feature_paths:
        raise SchemaError(f"config has no feature file for backbone {backbone!r}")
    return load_feature_table(cfg.feature_paths[backbone], backbone_name=backbone)


def _schedule(cfg: RunConfig) -> represent.TrainSchedule:
    return represent.TrainSchedule(
        epochs=cfg.epochs,
        initial_lr=cfg.initial_lr,
        decay_factor=cfg.decay_factor,
        decay_every=cfg.decay_every,
        batch_size=cfg.batch_size,
        seed=cfg.train_seed,
    )


def cmd_synth_data(cfg: RunConfig, args) -> int:
    spec = synth.default_spec(
        n_properties=cfg.synth_n_properties,
        d_feat=cfg.synth_d_feat,
        latent_dim=cfg.synth_latent_dim,
        seed=cfg.synth_seed,
        latent_strength=cfg.synth_latent_strength,
        observations_per_property=cfg.synth_observations_per_property,
    )
    world = synth.gen_world(spec)
    policy = synth.gen_claims(
        world, signal_source=cfg.synth_signal, seed=cfg.synth_claims_seed
    )
    backbones = cfg.backbones or ("synthnet",)
    if cfg.assessment_path is None or cfg.policy_path is None:
        raise SchemaError("config must name [data] assessment and policy paths")
    for path in (cfg.assessment_path, cfg.policy_path, *cfg.feature_paths.values()):
        path.parent.mkdir(parents=True, exist_ok=True)
    from .ingest import (
        write_assessment_table,
        write_feature_table,
        write_policy_table,
    )

    write_assessment_table(cfg.assessment_path, world.assessment)
    write_policy_table(cfg.policy_path, policy)
    for backbone in backbones:
        features = world.features
        path = cfg.feature_paths.get(backbone)
        if path is None:
            path = cfg.base_dir / f"features_{backbone}.csv"
        write_feature_table(
            path,
            type(features)(
                property_id=features.property_id,
                features=features.features,
                backbone_name=backbone,
            ),
        )
    print(f"wrote synthetic dataset for backbones: {', '.join(backbones)}")
    return 0


def cmd_prep(cfg: RunConfig, args) -> int:
    cfg.out_dir.mkdir(parents=True, exist_ok=True)
    lines = []
    tasks, report = _load_tasks(cfg)
    lines.append(f"assessment rows: {report.n_input}")
    lines.append(f"task rows: {tasks.n}")
    lines.append(f"dropped (missing fields): {report.n_dropped_missing}")
    lines.append(f"dropped (1$ sentinel value): {report.n_dropped_sentinel}")
    lines.append(
        "age clamped to 0 for ids: "
        + (", ".join(report.clamped_age_ids) if report.clamped_age_ids else "none")
    )
    for backbone in cfg.backbones:
        features = _load_features(cfg, backbone)
        lines.append(
            f"features[{backbone}]: {features.n} rows, d_feat={features.d_feat}"
        )
    if cfg.policy_path is not None:
        policy = load_policy_table(cfg.policy_path)
        train, test = split_train_test(
            policy, cfg.split_fraction, cfg.split_seed, cfg.group_key
        )
        lines.append(f"policy rows: {policy.n} (train {train.n} / test {test.n})")

    if cfg.masks_dir is not None:
        lines.extend(_prep_images(cfg))

    report_path = cfg.out_dir / "prep_report.txt"
    report_path.write_text("\n".join(lines) + "\n")
    print("\n".join(lines))
    print(f"wrote {report_path}")
    return 0


def _prep_images(cfg: RunConfig) -> list[str]:
    if cfg.vocabulary_path is None:
        raise SchemaError("[images] masks requires a vocabulary file")
    vocab = imageprep.load_category_vocabulary(cfg.vocabulary_path)
    policy = imageprep.policy_from_vocabulary(
        vocab,
        house_names=cfg.house_categories,
        censor_names=cfg.censor_categories,
        house_fraction_threshold=cfg.house_fraction_threshold,
    )
    mask_paths = sorted(Path(cfg.masks_dir).glob("*.png"))
    if not mask_paths:
        raise SchemaError(f"no mask PNGs found under {cfg.masks_dir}")
    masks = [imageprep.load_mask(p) for p in mask_paths]
    report = imageprep.batch_filter_report(masks, policy)
    imageprep.write_filter_report(
        cfg.out_dir / "filter_report.csv", [p.name for p in mask_paths], report
    )
    lines = [
        f"masks: {len(masks)}",
        f"discard rate: {report.discard_rate:.6f}",
    ]
    if cfg.censored_out is not None and cfg.images_dir is not None:
        out = Path(cfg.censored_out)
        out.mkdir(parents=True, exist_ok=True)
        kept = 0
        for mask_path, mask, decision in zip(mask_paths, masks, report.decisions):
            if not decision.keep:
                continue
            image_path = Path(cfg.images_dir) / mask_path.name
            if not image_path.exists():
                raise SchemaError(f"no image matching mask {mask_path.name}")
            image = imageprep.load_image(image_path)
            imageprep.save_image(
                out / mask_path.name, imageprep.censor_image(image, mask, policy)
            )
            kept += 1
        lines.append(f"censored images written: {kept}")
    return lines


def cmd_train_embed(cfg: RunConfig, args) -> int:
    cfg.out_dir.mkdir(parents=True, exist_ok=True)
    tasks, _ = _load_tasks(cfg)
    schedule = _schedule(cfg)
    diagnostics = []
    for backbone in cfg.backbones:
        features = _load_features(cfg, backbone)
        for size in cfg.embedding_sizes:
            spec = represent.MlpSpec(
                d_feat=features.d_feat,
                embedding_size=size,
                hidden1=cfg.hidden1,
            )
            model = represent.train(spec, schedule, features, tasks)
            represent.save_model(
                cfg.out_dir / f"frozen_{backbone}_{size}.npz", model
            )
            embeddings = represent.extract_embeddings(model, features)
            write_embeddings(
                cfg.embedding_file("frozen", backbone, size), embeddings
            )
            diag = evalharness.representation_diagnostics(model, features, tasks)
            diagnostics.append(diag)
            print(
                f"frozen {backbone} l={size}: "
                f"loss {model.loss_trace[0]:.4f} -> {model.loss_trace[-1]:.4f}"
            )
    payload = [
        {
            "backbone": d.backbone,
            "embedding_size": d.embedding_size,
            "final_loss": d.final_loss,
            "confusion": [list(row) for row in d.confusion],
            "rmse": d.rmse,
        }
        for d in sorted(diagnostics, key=lambda d: (d.backbone, d.embedding_size))
    ]
    (cfg.out_dir / "representation.json").write_text(
        json.dumps(payload, indent=2, sort_keys=True) + "\n"
    )
    return 0


def cmd_pca_embed(cfg: RunConfig, args) -> int:
    cfg.out_dir.mkdir(parents=True, exist_ok=True)
    variance_rows = [["backbone", "l", "cumulative_variance"]]
    for backbone in cfg.backbones:
        features = _load_features(cfg, backbone)
        for size in cfg.embedding_sizes:
            embedder = pca.PcaEmbedder(n_components=size).fit(features)
            pca.save_pca(
                cfg.out_dir / f"pca_{backbone}_{size}.npz", embedder.model_
            )
            write_embeddings(
                cfg.embedding_file("pca", backbone, size),
                embedder.embed(features),
            )
            captured = pca.cumulative_variance(embedder.model_, size)
            variance_rows.append([backbone, str(size), f"{captured:.6f}"])
            print(f"pca {backbone} l={size}: captured {captured:.4f} of variance")
    (cfg.out_dir / "pca_variance.csv").write_text(
        "\n".join(",".join(row) for row in variance_rows) + "\n"
    )
    return 0


def _resolve_embeddings(cfg: RunConfig):
    sets = {}
    for approach in cfg.approaches:
        for backbone in cfg.backbones:
            for size in cfg.embedding_sizes:
                path = cfg.embedding_file(approach, backbone, size)
                try:
                    sets[(approach, backbone, size)] = read_embeddings(path)
                except SchemaError:
                    sets[(approach, backbone, size)] = None
    return sets


def cmd_glm_fit(cfg: RunConfig, args) -> int:
    cfg.out_dir.mkdir(parents=True, exist_ok=True)
    if cfg.policy_path is None:
        raise SchemaError("config is missing [data] policy")
    policy = load_policy_table(cfg.policy_path)
    train, test = split_train_test(
        policy, cfg.split_fraction, cfg.split_seed, cfg.group_key
    )
    if args.approach == "baseline":
        embeddings = None
        label = "baseline"
    else:
        path = cfg.embedding_file(args.approach, args.backbone, args.size)
        embeddings = read_embeddings(path)
        if args.decorrelate:
            embeddings = pca.decorrelate_embeddings(embeddings)
        label = f"{args.approach}_{args.backbone}_{args.size}"

    if args.family == "frequency":
        spec = glm.GlmSpec(
            "poisson", max_iterations=cfg.max_iterations, tolerance=cfg.tolerance
        )
        design_train = evalharness.frequency_design(train, args.peril, embeddings)
        design_test = evalharness.frequency_design(test, args.peril, embeddings)
    else:
        spec = glm.GlmSpec(
            "gamma", max_iterations=cfg.max_iterations, tolerance=cfg.tolerance
        )
        design_train = evalharness.severity_design(
            train, args.peril, embeddings, cap=cfg.severity_cap
        )
        design_test = evalharness.severity_design(
            test, args.peril, embeddings, cap=cfg.severity_cap
        )

    fit = glm.fit_design(spec, design_train)
    test_dev = glm.deviance(
        design_test.response, glm.predict(fit, design_test), spec.family
    )
    diagnostics = glm.diagnose(fit, design_train, alpha=cfg.alpha)
    notes = [
        f"cage reference level: {CAGE_REFERENCE_LEVEL}",
        f"test deviance: {test_dev:.10g}",
    ]
    if embeddings is not None:
        count, expected = diagnostics.significant["embedding"]
        notes.append(
            f"embedding coefficients significant at {cfg.alpha:g}: "
            f"{count} (expected {expected:g} under independence)"
        )
    summary = glm.format_fit_summary(fit, diagnostics.gvif, notes=tuple(notes))
    out_path = cfg.out_dir / f"glmfit_{args.family}_{args.peril}_{label}.txt"
    out_path.write_text(summary)
    print(summary)
    print(f"wrote {out_path}")
    return 0


def cmd_grid(cfg: RunConfig, args) -> int:
    cfg.out_dir.mkdir(parents=True, exist_ok=True)
    if cfg.policy_path is None:
        raise SchemaError("config is missing [data] policy")
    policy = load_policy_table(cfg.policy_path)
    report = evalharness.run_grid(
        policy,
        _resolve_embeddings(cfg),
        approaches=cfg.approaches,
        backbones=cfg.backbones,
        embedding_sizes=cfg.embedding_sizes,
        perils=cfg.perils,
        families=cfg.families,
        split_fraction=cfg.split_fraction,
        split_seed=cfg.split_seed,
        group_key=cfg.group_key,
        alpha=cfg.alpha,
        severity_cap=cfg.severity_cap,
        decorrelate=cfg.decorrelate,
        max_iterations=cfg.max_iterations,
        tolerance=cfg.tolerance,
    )
    rep_path = cfg.out_dir / "representation.json"
    if rep_path.exists():
        payload = json.loads(rep_path.read_text())
        reps = tuple(
            evalharness.RepresentationDiagnostics(
                backbone=r["backbone"],
                embedding_size=r["embedding_size"],
                final_loss=r["final_loss"],
                confusion=tuple(tuple(row) for row in r["confusion"]),
                rmse=r["rmse"],
            )
            for r in payload
        )
        report = evalharness.ReportSet(
            cells=report.cells, representation=reps, vif=report.vif
        )
    evalharness.save_report(cfg.out_dir / "grid_results.json", report)
    failed = sum(1 for c in report.cells if c.error is not None)
    print(
        f"grid: {len(report.cells)} cells, {failed} failed; "
        f"wrote {cfg.out_dir / 'grid_results.json'}"
    )
    return 0


def cmd_report(cfg: RunConfig, args) -> int:
    results_path = cfg.out_dir / "grid_results.json"
    if not results_path.exists():
        raise SchemaError(f"no grid results at {results_path}; run grid first")
    report = evalharness.load_report(results_path)
    written = evalharness.emit_report(report, cfg.out_dir)
    for path in written:
        print(f"wrote {path}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="embedrate",
        description="image-embedding ratemaking pipeline",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, func, help_text):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("-c", "--config", required=True, help="run config file")
        p.set_defaults(func=func)
        return p

    add("synth-data", cmd_synth_data, "generate a synthetic dataset")
    add("prep", cmd_prep, "validate inputs, derive tasks, filter/censor images")
    add("train-embed", cmd_train_embed, "train frozen representation models")
    add("pca-embed", cmd_pca_embed, "fit PCA embeddings")
    fit = add("glm-fit", cmd_glm_fit, "fit one GLM and print its summary")
    fit.add_argument("--family", choices=("frequency", "severity"), required=True)
    fit.add_argument("--peril", required=True)
    fit.add_argument(
        "--approach",
        choices=("baseline", "pca", "frozen", "fine-tuned"),
        required=True,
    )
    fit.add_argument("--backbone")
    fit.add_argument("--size", type=int)
    fit.add_argument("--decorrelate", action="store_true")
    add("grid", cmd_grid, "run the full experiment grid")
    add("report", cmd_report, "emit tables from stored grid results")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "glm-fit" and args.approach != "baseline":
        if args.backbone is None or args.size is None:
            print("--backbone and --size are required unless --approach baseline",
                  file=sys.stderr)
            return 2
    cfg = load_config(args.config)
    try:
        return args.func(cfg, args)
    except SchemaError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
