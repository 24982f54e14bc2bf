"""Batch command-line front end.

Subcommands: synth, preprocess, degrade, patches, augment,
balance-weights, split, forward, evaluate, curves.  Exit codes: 0
success, 1 input/data error, 2 configuration error.  Set SIPSEG_LOG to
DEBUG/INFO/WARNING to control verbosity.
"""

from __future__ import annotations

import argparse
import csv
import glob
import json
import logging
import os
import sys
import time
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from . import augment as aug
from . import degrade as deg
from . import metrics, netshape
from .errors import ConfigError, SipsegError
from .imgcore import (
    read_gray,
    read_labels,
    render_synthetic_eye,
    sample_eye_spec,
    write_gray,
    write_labels,
)
from .periocular import PipelineConfig, load_pipeline_config, preprocess_pipeline

log = logging.getLogger("sipseg")

EXIT_OK = 0
EXIT_INPUT = 1
EXIT_CONFIG = 2


def _setup_logging() -> None:
    level = os.environ.get("SIPSEG_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING), format="%(levelname)s %(message)s")


def _list_images(directory: str, pattern: str = "*.pgm") -> list[str]:
    files = sorted(glob.glob(os.path.join(directory, pattern)))
    if pattern == "*.pgm":
        files = [f for f in files if not f.endswith(".labels.pgm")]
        files += sorted(glob.glob(os.path.join(directory, "*.png")))
    return files


def _stem(path: str) -> str:
    name = os.path.basename(path)
    for suffix in (".labels.pgm", ".probs.npy", ".pgm", ".png"):
        if name.endswith(suffix):
            return name[: -len(suffix)]
    return os.path.splitext(name)[0]


def _run_parallel(jobs: int, work, items: list):
    if jobs <= 1:
        return [work(i, item) for i, item in enumerate(items)]
    with ThreadPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(work, range(len(items)), items))


# ---------------------------------------------------------------------------
# subcommands

def cmd_synth(args) -> int:
    if args.count < 1:
        raise ConfigError("count must be >= 1")
    height, width = args.size
    if min(height, width) < 96:
        raise ConfigError("synthetic eyes need at least 96x96 pixels")
    os.makedirs(args.out, exist_ok=True)
    rng = np.random.default_rng(args.seed)
    for i in range(args.count):
        spec = sample_eye_spec(rng, width=width, height=height)
        img, labels = render_synthetic_eye(spec, seed=int(rng.integers(0, 2**63 - 1)))
        write_gray(img, os.path.join(args.out, f"{i:04d}.pgm"))
        write_labels(labels, os.path.join(args.out, f"{i:04d}.labels.pgm"))
    log.info("wrote %d image/label pairs to %s", args.count, args.out)
    return EXIT_OK


def cmd_preprocess(args) -> int:
    cfg = load_pipeline_config(args.config) if args.config else PipelineConfig()
    files = _list_images(args.input)
    if not files:
        print(f"error: no readable inputs in {args.input} (0 files)", file=sys.stderr)
        return EXIT_INPUT
    os.makedirs(args.out, exist_ok=True)

    def work(i: int, path: str):
        t0 = time.perf_counter()
        img = read_gray(path)
        result = preprocess_pipeline(img, cfg)
        out_path = os.path.join(args.out, f"{_stem(path)}.pgm")
        write_gray(result.preprocessed, out_path)
        stage_paths = {}
        if args.emit_stages:
            for stage, arr in result.stages().items():
                sp = os.path.join(args.out, f"{_stem(path)}.{stage}.pgm")
                write_gray(arr, sp)
                stage_paths[stage] = os.path.basename(sp)
        entry = {
            "input": path,
            "output": os.path.basename(out_path),
            "seconds": round(time.perf_counter() - t0, 4),
            "pupil": None
            if result.pupil is None
            else {
                "row": result.pupil.row,
                "col": result.pupil.col,
                "radius": result.pupil.radius,
                "response": result.pupil.response,
            },
        }
        if stage_paths:
            entry["stages"] = stage_paths
        return entry

    def safe_work(i: int, path: str):
        try:
            return work(i, path)
        except (SipsegError, FileNotFoundError, ValueError) as exc:
            return {"input": path, "error": str(exc)}

    results = _run_parallel(args.jobs, safe_work, files)
    ok = [r for r in results if "error" not in r]
    failures = [r for r in results if "error" in r]
    manifest = {
        "config": cfg.to_json_dict(),
        "seed": args.seed,
        "files": ok,
        "errors": failures,
    }
    with open(os.path.join(args.out, "manifest.json"), "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2)
    for f in failures:
        print(f"error: {f['input']}: {f['error']}", file=sys.stderr)
    return EXIT_INPUT if failures else EXIT_OK


def cmd_degrade(args) -> int:
    files = _list_images(args.input)
    if not files:
        print(f"error: no readable inputs in {args.input}", file=sys.stderr)
        return EXIT_INPUT
    os.makedirs(args.out, exist_ok=True)
    spec = deg.DistortionSpec()
    entries = []
    for i, path in enumerate(files):
        rng = np.random.default_rng([args.seed, i])
        draw = deg.sample_distortion(spec, rng)
        img = read_gray(path)
        out = deg.apply_distortion(img, draw)
        name = f"{_stem(path)}.pgm"
        write_gray(out, os.path.join(args.out, name))
        entries.append({"input": path, "output": name, "draw": draw.to_json_dict()})
    with open(os.path.join(args.out, "manifest.json"), "w", encoding="utf-8") as fh:
        json.dump({"seed": args.seed, "files": entries}, fh, indent=2)
    return EXIT_OK


def cmd_patches(args) -> int:
    pristine = {_stem(p): p for p in _list_images(args.pristine)}
    degraded = {_stem(p): p for p in _list_images(args.degraded)}
    common = sorted(set(pristine) & set(degraded))
    if not common:
        print("error: no matching image stems between the two directories", file=sys.stderr)
        return EXIT_INPUT
    os.makedirs(args.out, exist_ok=True)
    idx = 0
    all_pairs, sources = [], []
    for stem in common:
        x = read_gray(pristine[stem])
        y = read_gray(degraded[stem])
        pairs = deg.extract_patch_pairs(x, y, args.count, seed=args.seed + idx)
        all_pairs.extend(pairs)
        sources.extend([pristine[stem]] * len(pairs))
        idx += 1
    deg.save_patch_store(args.out, all_pairs, source=";".join(common), seed=args.seed)
    log.info("stored %d patch pairs from %d images", len(all_pairs), len(common))
    return EXIT_OK


def cmd_augment(args) -> int:
    files = _list_images(args.input)
    if not files:
        print(f"error: no readable inputs in {args.input}", file=sys.stderr)
        return EXIT_INPUT
    os.makedirs(args.out, exist_ok=True)
    for i, path in enumerate(files):
        label_path = os.path.join(os.path.dirname(path), f"{_stem(path)}.labels.pgm")
        if not os.path.exists(label_path):
            print(f"error: missing label map for {path}", file=sys.stderr)
            return EXIT_INPUT
        img = read_gray(path)
        labels = read_labels(label_path)
        params = aug.sample_augmentation(seed=int(np.random.default_rng([args.seed, i]).integers(0, 2**62)))
        out_img, out_labels = aug.apply_augmentation(img, labels, params)
        write_gray(out_img, os.path.join(args.out, f"{_stem(path)}.pgm"))
        write_labels(out_labels, os.path.join(args.out, f"{_stem(path)}.labels.pgm"))
    return EXIT_OK


def cmd_balance_weights(args) -> int:
    files = sorted(glob.glob(os.path.join(args.labels, "*.labels.pgm")))
    if not files:
        print(f"error: no *.labels.pgm files in {args.labels}", file=sys.stderr)
        return EXIT_INPUT
    maps = [read_labels(f) for f in files]
    cw = netshape.class_weights(maps)
    payload = {
        "counts": cw.counts.tolist(),
        "frequencies": cw.frequencies.tolist(),
        "weights": cw.weights.tolist(),
    }
    with open(args.out, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2)
    return EXIT_OK


def cmd_split(args) -> int:
    ratios = args.ratios
    if abs(sum(ratios) - 1.0) > 1e-9:
        raise ConfigError(f"split ratios must sum to 1, got {ratios}")
    files = sorted(glob.glob(os.path.join(args.input, "**", "*.pgm"), recursive=True))
    files = [f for f in files if not f.endswith(".labels.pgm")]
    if not files:
        print(f"error: no inputs under {args.input}", file=sys.stderr)
        return EXIT_INPUT
    groups: dict[str, list[str]] = {}
    for f in files:
        group = os.path.relpath(os.path.dirname(f), args.input)
        groups.setdefault(group, []).append(f)
    rng = np.random.default_rng(args.seed)
    subsets: list[list[str]] = [[], [], []]
    for group in sorted(groups):
        items = sorted(groups[group])
        perm = rng.permutation(len(items))
        counts = _largest_remainder(len(items), ratios)
        start = 0
        for si, n in enumerate(counts):
            subsets[si].extend(items[p] for p in perm[start : start + n])
            start += n
    os.makedirs(args.out, exist_ok=True)
    for name, subset in zip(("train", "val", "test"), subsets):
        with open(os.path.join(args.out, f"{name}.json"), "w", encoding="utf-8") as fh:
            json.dump({"items": sorted(subset)}, fh, indent=2)
    return EXIT_OK


def _largest_remainder(n: int, ratios: list[float]) -> list[int]:
    raw = [n * r for r in ratios]
    counts = [int(v) for v in raw]
    rem = n - sum(counts)
    order = sorted(range(len(ratios)), key=lambda i: raw[i] - counts[i], reverse=True)
    for i in range(rem):
        counts[order[i % len(order)]] += 1
    return counts


def cmd_forward(args) -> int:
    net = netshape.build_sipsegnet()
    if args.weights:
        weights = netshape.load_weights(args.weights, net)
    elif args.random_weights is not None:
        weights = netshape.init_random_weights(net, args.random_weights)
    else:
        raise ConfigError("forward needs --weights FILE or --random-weights SEED")
    files = _list_images(args.input)
    if not files:
        print(f"error: no readable inputs in {args.input}", file=sys.stderr)
        return EXIT_INPUT
    os.makedirs(args.out, exist_ok=True)
    for path in files:
        img = read_gray(path)
        if img.shape != (net.input_size, net.input_size):
            print(
                f"error: {path}: forward pass expects {net.input_size}x{net.input_size} inputs, got {img.shape}",
                file=sys.stderr,
            )
            return EXIT_INPUT
        probs, _ = netshape.forward(net, weights, img[None, None, :, :])
        pred = probs[0].argmax(axis=0).astype(np.uint8)
        write_labels(pred, os.path.join(args.out, f"{_stem(path)}.labels.pgm"))
        if args.emit_probs:
            np.save(os.path.join(args.out, f"{_stem(path)}.probs.npy"), probs[0].astype(np.float32))
    return EXIT_OK


def _matched_label_pairs(gt_dir: str, pred_dir: str) -> list[tuple[str, str]] | None:
    gt = {_stem(p): p for p in sorted(glob.glob(os.path.join(gt_dir, "*.labels.pgm")))}
    pred = {_stem(p): p for p in sorted(glob.glob(os.path.join(pred_dir, "*.labels.pgm")))}
    only_gt = sorted(set(gt) - set(pred))
    only_pred = sorted(set(pred) - set(gt))
    if only_gt or only_pred:
        if only_gt:
            print(f"error: missing predictions for: {', '.join(only_gt)}", file=sys.stderr)
        if only_pred:
            print(f"error: predictions without ground truth: {', '.join(only_pred)}", file=sys.stderr)
        return None
    if not gt:
        print("error: no *.labels.pgm files to evaluate", file=sys.stderr)
        return None
    return [(gt[s], pred[s]) for s in sorted(gt)]


def cmd_evaluate(args) -> int:
    matched = _matched_label_pairs(args.gt, args.pred)
    if matched is None:
        return EXIT_INPUT
    pairs = [(read_labels(g), read_labels(p)) for g, p in matched]
    report = metrics.evaluation_report(pairs)
    with open(args.out, "w", encoding="utf-8") as fh:
        json.dump(report, fh, indent=2, sort_keys=True)
    return EXIT_OK


def cmd_curves(args) -> int:
    gt_files = {_stem(p): p for p in sorted(glob.glob(os.path.join(args.gt, "*.labels.pgm")))}
    prob_files = {_stem(p): p for p in sorted(glob.glob(os.path.join(args.probs, "*.probs.npy")))}
    common = sorted(set(gt_files) & set(prob_files))
    if not common:
        print("error: no matching label/probability stems", file=sys.stderr)
        return EXIT_INPUT
    os.makedirs(args.out, exist_ok=True)
    # pool pixels across images by concatenating along rows
    labs = [read_labels(gt_files[s]) for s in common]
    probs = [np.load(prob_files[s]).astype(np.float64) for s in common]
    gt_all = np.concatenate([l.reshape(-1, 1) for l in labs], axis=0)
    prob_all = np.concatenate([p.reshape(p.shape[0], -1, 1) for p in probs], axis=1)
    curves = metrics.curves_and_auc(gt_all, prob_all)
    aucs = {}
    for name, curve in curves.items():
        aucs[name] = None if not curve.defined else curve.auc
        with open(os.path.join(args.out, f"curve_{name}.csv"), "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["threshold", "FPR", "TPR", "precision", "recall"])
            for row in zip(curve.thresholds, curve.fpr, curve.tpr, curve.precision, curve.recall):
                writer.writerow([f"{v:.10g}" for v in row])
    with open(os.path.join(args.out, "auc.json"), "w", encoding="utf-8") as fh:
        json.dump({"roc_auc": aucs, "images": len(common)}, fh, indent=2, sort_keys=True)
    return EXIT_OK


# ---------------------------------------------------------------------------

def _size(text: str) -> tuple[int, int]:
    try:
        h, w = text.lower().split("x")
        return int(h), int(w)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected HxW, got {text!r}") from None


def _ratios(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",")]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated floats, got {text!r}") from None


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="sipseg", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic eye corpus")
    p.add_argument("--count", type=int, required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--size", type=_size, default=(128, 128), help="image size HxW")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("preprocess", help="run the preprocessing pipeline over a directory")
    p.add_argument("--input", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--config", help="pipeline config JSON")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--emit-stages", action="store_true")
    p.set_defaults(func=cmd_preprocess)

    p = sub.add_parser("degrade", help="apply random distortions to a directory")
    p.add_argument("--input", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_degrade)

    p = sub.add_parser("patches", help="extract degraded/residual patch pairs")
    p.add_argument("--pristine", required=True)
    p.add_argument("--degraded", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--count", type=int, default=64)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_patches)

    p = sub.add_parser("augment", help="apply seeded geometric augmentation to image/label pairs")
    p.add_argument("--input", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_augment)

    p = sub.add_parser("balance-weights", help="inverse-frequency class weights from label maps")
    p.add_argument("--labels", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_balance_weights)

    p = sub.add_parser("split", help="stratified train/val/test split")
    p.add_argument("--input", required=True)
    p.add_argument("--ratios", type=_ratios, default=[0.6, 0.2, 0.2])
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_split)

    p = sub.add_parser("forward", help="network forward pass over a directory")
    p.add_argument("--input", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--weights")
    p.add_argument("--random-weights", type=int, help="use seeded random weights instead of a file")
    p.add_argument("--emit-probs", action="store_true")
    p.set_defaults(func=cmd_forward)

    p = sub.add_parser("evaluate", help="segmentation metrics report for matched label maps")
    p.add_argument("--gt", required=True)
    p.add_argument("--pred", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("curves", help="ROC / precision-recall sweeps from probability dumps")
    p.add_argument("--gt", required=True)
    p.add_argument("--probs", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_curves)

    return parser


def main(argv: list[str] | None = None) -> int:
    _setup_logging()
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (SipsegError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
