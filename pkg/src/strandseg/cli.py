"""Command-line entry points.

Subcommands: synth | train | eval | infer | render | gradcheck. Exit codes:
0 success, 2 configuration error, 3 I/O error, 4 numeric failure.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import os
import sys

import numpy as np

from .config import ConfigError, RunConfig, load_run_config, run_config_to_dict
from .formats import (atomic_write_bytes, read_pgm, read_tensors, write_pgm,
                      write_ppm, write_tensors)
from .gradcheck import DEFAULT_TOL, run_suite
from .metrics import evaluate_dataset
from .network import PARAM_ORDER, validate_params
from .optim import DivergenceError
from .pipeline import infer, infer_cc_baseline
from .render import render_overlay
from .synth import (GenerationError, InstanceSet, Scene, annotations_to_document,
                    generate_scene, scene_seeds)
from .training import train


def _write_json(path, doc):
    payload = (json.dumps(doc, indent=2, sort_keys=True) + "\n").encode("utf-8")
    atomic_write_bytes(path, payload)


def _mask_entries(instances: InstanceSet) -> dict:
    return {f"mask_{k:03d}": m.astype(np.float32)
            for k, m in enumerate(instances.masks)}


def _instances_from_entries(entries: dict, height: int = None, width: int = None) -> InstanceSet:
    masks = [entries[name] >= 0.5 for name in sorted(entries)]
    if masks:
        height, width = masks[0].shape
    if height is None:
        raise ConfigError("mask container is empty and dimensions are unknown")
    return InstanceSet(height, width, masks)


def _load_config(args) -> RunConfig:
    cfg = load_run_config(args.config) if args.config else RunConfig()
    if getattr(args, "seed", None) is not None:
        cfg = dataclasses.replace(cfg, seed=args.seed)
    return cfg


def _apply_cluster_overrides(cfg: RunConfig, args) -> RunConfig:
    mean_shift, resolve = cfg.mean_shift, cfg.resolve
    if getattr(args, "bandwidth", None) is not None:
        mean_shift = dataclasses.replace(mean_shift, bandwidth=args.bandwidth)
    if getattr(args, "beta", None) is not None:
        resolve = dataclasses.replace(resolve, beta=args.beta)
    if getattr(args, "threshold_a", None) is not None:
        resolve = dataclasses.replace(resolve, threshold_a=args.threshold_a)
    try:
        return dataclasses.replace(cfg, mean_shift=mean_shift, resolve=resolve)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def _load_checkpoint(path) -> dict:
    entries = read_tensors(path)
    params = {name: np.asarray(arr, dtype=np.float64) for name, arr in entries.items()}
    try:
        validate_params(params)
    except ValueError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    return params


def _load_dataset(dataset_dir) -> list:
    manifest_path = os.path.join(dataset_dir, "manifest.json")
    with open(manifest_path, "r", encoding="utf-8") as fh:
        try:
            manifest = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{manifest_path}: invalid JSON ({exc})") from exc
    scenes = []
    for entry in manifest.get("scenes", []):
        image = read_pgm(os.path.join(dataset_dir, entry["image"]))
        masks = read_tensors(os.path.join(dataset_dir, entry["masks"]))
        h, w = image.shape
        scenes.append(Scene(image, _instances_from_entries(masks, h, w)))
    return scenes


# ---------------------------------------------------------------------------
# subcommands


def cmd_synth(args) -> int:
    cfg = _load_config(args)
    os.makedirs(args.out, exist_ok=True)
    seeds = scene_seeds(cfg.seed, args.count)
    entries = []
    for i in range(args.count):
        scene = generate_scene(cfg.scene, int(seeds[i]))
        image_name = f"scene_{i:04d}.pgm"
        ann_name = f"scene_{i:04d}.json"
        masks_name = f"scene_{i:04d}_masks.segt"
        write_pgm(os.path.join(args.out, image_name), scene.image)
        _write_json(os.path.join(args.out, ann_name),
                    annotations_to_document(cfg.scene.height, cfg.scene.width,
                                            scene.annotations))
        write_tensors(os.path.join(args.out, masks_name),
                      _mask_entries(scene.instances))
        entries.append({"image": image_name, "annotation": ann_name,
                        "masks": masks_name, "seed": int(seeds[i]),
                        "instances": len(scene.instances)})
    _write_json(os.path.join(args.out, "manifest.json"),
                {"count": args.count, "seed": cfg.seed, "scenes": entries})
    print(f"wrote {args.count} scene(s) to {args.out}")
    return 0


def cmd_train(args) -> int:
    cfg = _load_config(args)
    if args.epochs is not None:
        try:
            cfg = dataclasses.replace(cfg, optim=dataclasses.replace(
                cfg.optim, epochs=args.epochs))
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
    scenes = _load_dataset(args.dataset)
    if len(scenes) < 2:
        raise ConfigError(f"dataset {args.dataset!r} has {len(scenes)} scene(s); "
                          "need at least 2 for an 80/20 split")
    rng = np.random.default_rng(cfg.seed)
    perm = rng.permutation(len(scenes))
    n_val = max(1, round(0.2 * len(scenes)))
    val = [scenes[i] for i in perm[:n_val]]
    tr = [scenes[i] for i in perm[n_val:]]

    def progress(epoch, train_loss, val_loss):
        print(f"epoch {epoch:3d}  train {train_loss:.5f}  val {val_loss:.5f}")

    result = train(tr, val, cfg.loss, cfg.optim, cfg.augment, cfg.seed,
                   progress=progress)
    os.makedirs(args.out, exist_ok=True)
    write_tensors(os.path.join(args.out, "checkpoint.segt"),
                  {name: result.params[name].astype(np.float32)
                   for name in PARAM_ORDER})
    _write_json(os.path.join(args.out, "checkpoint.json"), {
        "architecture": {"channels": 16, "emb_dim": 3, "downsample": 2},
        "best_epoch": result.best_epoch,
        "epochs_run": cfg.optim.epochs,
        "config": run_config_to_dict(cfg),
    })
    lines = ["epoch,train_loss,val_loss"]
    lines += [f"{row['epoch']},{row['train_loss']!r},{row['val_loss']!r}"
              for row in result.log]
    atomic_write_bytes(os.path.join(args.out, "loss_log.csv"),
                       ("\n".join(lines) + "\n").encode("utf-8"))
    print(f"best epoch {result.best_epoch}; checkpoint written to {args.out}")
    return 0


def cmd_eval(args) -> int:
    cfg = _apply_cluster_overrides(_load_config(args), args)
    params = _load_checkpoint(args.checkpoint)
    scenes = _load_dataset(args.dataset)
    if not scenes:
        raise ConfigError(f"dataset {args.dataset!r} is empty")
    pred_sets, gt_sets, pred_fgs, gt_fgs, rows = [], [], [], [], []
    for i, scene in enumerate(scenes):
        if args.method == "cc":
            instances, fg = infer_cc_baseline(params, scene.image, cfg.seg_threshold)
            clusters = len(instances)
        else:
            instances, fg, diag = infer(params, scene.image, cfg.pipeline_config())
            clusters = diag.clusters
        pred_sets.append(instances)
        gt_sets.append(scene.instances)
        pred_fgs.append(fg)
        gt_fgs.append(scene.instances.union())
        rows.append({"index": i, "clusters": clusters,
                     "pred_instances": len(instances),
                     "gt_instances": len(scene.instances)})
    report = evaluate_dataset(pred_sets, gt_sets, pred_fgs, gt_fgs)
    os.makedirs(args.out, exist_ok=True)
    doc = {"method": args.method, "images": len(scenes)}
    doc.update(report.to_dict())
    _write_json(os.path.join(args.out, "report.json"), doc)
    _write_json(os.path.join(args.out, "per_image.json"), rows)
    print(f"method={args.method}  iou={report.iou:.4f}  dice={report.dice:.4f}  "
          f"ap={report.ap:.4f}  ar={report.ar:.4f}")
    return 0


def cmd_infer(args) -> int:
    cfg = _apply_cluster_overrides(_load_config(args), args)
    params = _load_checkpoint(args.checkpoint)
    image = read_pgm(args.image)
    instances, fg, diag = infer(params, image, cfg.pipeline_config())
    os.makedirs(args.out, exist_ok=True)
    write_tensors(os.path.join(args.out, "instances.segt"), _mask_entries(instances))
    write_tensors(os.path.join(args.out, "min_similarity.segt"),
                  {"min_similarity": diag.min_similarity.astype(np.float32)})
    _write_json(os.path.join(args.out, "diagnostics.json"), diag.to_dict())
    write_ppm(os.path.join(args.out, "overlay.ppm"), render_overlay(image, instances))
    print(f"{len(instances)} instance(s), {diag.multi_assigned_pixels} "
          f"multi-assigned pixel(s); outputs in {args.out}")
    return 0


def cmd_render(args) -> int:
    image = read_pgm(args.image)
    entries = read_tensors(args.masks)
    h, w = image.shape
    instances = _instances_from_entries(entries, h, w)
    write_ppm(args.out, render_overlay(image, instances))
    print(f"overlay written to {args.out}")
    return 0


def cmd_gradcheck(args) -> int:
    def progress(k, worst_disc, worst_total):
        print(f"fixture {k:2d}  disc {worst_disc:.3e}  total {worst_total:.3e}")

    report = run_suite(seed=args.seed if args.seed is not None else 0,
                       fixtures=args.fixtures, progress=progress)
    print(f"max relative error: discriminative {report['max_rel_err_disc']:.3e}, "
          f"total {report['max_rel_err_total']:.3e} (tol {report['tol']:.0e})")
    if not report["passed"]:
        print("gradient check FAILED", file=sys.stderr)
        return 4
    print("gradient check passed")
    return 0


# ---------------------------------------------------------------------------
# parser


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="strandseg",
        description="Instance segmentation of thin crossing strands via pixel embeddings.")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, out_required=True):
        p.add_argument("--config", help="JSON run config path")
        p.add_argument("--seed", type=int, help="override the config seed")
        if out_required:
            p.add_argument("--out", required=True, help="output directory")

    p = sub.add_parser("synth", help="generate a synthetic dataset")
    common(p)
    p.add_argument("--count", type=int, required=True, help="number of scenes")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("train", help="train the embedding network")
    common(p)
    p.add_argument("--dataset", required=True, help="dataset directory (from synth)")
    p.add_argument("--epochs", type=int, help="override epoch count")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint on a dataset")
    common(p)
    p.add_argument("--dataset", required=True)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--method", choices=("embedding", "cc"), default="embedding")
    p.add_argument("--threshold-a", type=float, dest="threshold_a")
    p.add_argument("--beta", type=float)
    p.add_argument("--bandwidth", type=float)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("infer", help="run the pipeline on one image")
    common(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--image", required=True, help="input PGM image")
    p.add_argument("--threshold-a", type=float, dest="threshold_a")
    p.add_argument("--beta", type=float)
    p.add_argument("--bandwidth", type=float)
    p.set_defaults(func=cmd_infer)

    p = sub.add_parser("render", help="render an instance overlay PPM")
    p.add_argument("--image", required=True, help="input PGM image")
    p.add_argument("--masks", required=True, help="instance mask container")
    p.add_argument("--out", required=True, help="output PPM path")
    p.set_defaults(func=cmd_render)

    p = sub.add_parser("gradcheck", help="finite-difference gradient verification")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--fixtures", type=int, default=10)
    p.set_defaults(func=cmd_gradcheck)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except GenerationError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except ValueError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return 3
    except DivergenceError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
