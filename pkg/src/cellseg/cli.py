"""Command-line interface: every pipeline stage as a subcommand.

Exit codes: 0 success, 2 usage error (flag parsing), 1 data error
(unreadable input, malformed sidecar, shape mismatch). Diagnostics go to
stderr; machine-readable output only to the declared files.
"""

import json
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import click
import numpy as np

from . import encode as enc
from . import formats as io
from . import losses, metrics, sampling, stain, tiling
from .grid import mag_profile
from .postprocess import PostprocessConfig, postprocess as run_postprocess

THREADS_ENV = "CISCA_KIT_THREADS"


def _default_threads() -> int:
    env = os.environ.get(THREADS_ENV)
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            pass
    return os.cpu_count() or 1


def _fail(msg: str):
    click.echo(f"error: {msg}", err=True)
    sys.exit(1)


def _round6(obj):
    if isinstance(obj, float):
        return round(obj, 6)
    if isinstance(obj, dict):
        return {k: _round6(v) for k, v in obj.items()}
    if isinstance(obj, list):
        return [_round6(v) for v in obj]
    return obj


def _write_json(path, payload):
    with open(path, "w") as f:
        json.dump(_round6(payload), f, indent=2, sort_keys=True)
        f.write("\n")


@click.group()
def main():
    """Cell instance segmentation toolkit."""


@main.command("encode")
@click.option("--labels", "labels_path", required=True, type=click.Path(exists=True))
@click.option("--mag", default="20x", show_default=True)
@click.option("--cleanup-min-area", default=enc.CLEANUP_MIN_AREA, show_default=True)
@click.option("--out-dir", required=True, type=click.Path())
def encode_cmd(labels_path, mag, cleanup_min_area, out_dir):
    """Label map -> ternary.png, dist.f32(+json), mask.f32(+json)."""
    try:
        profile = mag_profile(mag)
        labels = io.load_label_png(labels_path)
        targets = enc.encode_all(labels, profile, cleanup_min_area)
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        io.save_ternary_png(targets.ternary, out / "ternary.png")
        io.save_f32(targets.distances, out / "dist.f32")
        io.save_f32(targets.mask, out / "mask.f32")
    except (ValueError, OSError) as e:
        _fail(str(e))


@main.command("postprocess")
@click.option("--prob", "prob_path", required=True, type=click.Path(exists=True))
@click.option("--dist", "dist_path", required=True, type=click.Path(exists=True))
@click.option("--types", "types_path", type=click.Path(exists=True))
@click.option("--mag", default="20x", show_default=True)
@click.option("--theta1", default=0.57, show_default=True)
@click.option("--theta2", type=int, default=None, help="min instance area [default: per magnification]")
@click.option("--out", "out_path", required=True, type=click.Path())
@click.option("--types-out", type=click.Path())
def postprocess_cmd(prob_path, dist_path, types_path, mag, theta1, theta2, out_path, types_out):
    """Head outputs -> instance label map (+ types JSON)."""
    try:
        cfg = PostprocessConfig(theta1=theta1, theta2=theta2, profile=mag_profile(mag))
        prob = io.load_f32(prob_path)
        dist = io.load_f32(dist_path)
        type_prob = io.load_f32(types_path) if types_path else None
        labels, types = run_postprocess(prob, dist, type_prob, cfg)
        io.save_label_png(labels, out_path)
        if types is not None and types_out:
            _write_json(types_out, {
                str(t.instance_id): {"type": t.type_id, "vote_fraction": t.vote_fraction}
                for t in types
            })
    except (ValueError, OSError) as e:
        _fail(str(e))


@main.command("tile")
@click.option("--in", "in_path", required=True, type=click.Path(exists=True))
@click.option("--out-dir", required=True, type=click.Path())
@click.option("--size", default=256, show_default=True)
@click.option("--overlap", default=0.5, show_default=True)
def tile_cmd(in_path, out_dir, size, overlap):
    """Split an image into overlapping tiles plus a manifest."""
    try:
        if abs(overlap - 0.5) > 1e-9:
            raise ValueError("only 50% overlap is supported")
        image = io.load_image(in_path)
        grid = tiling.plan_tiles(image.shape[0], image.shape[1], size)
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        entries = []
        for (r, c), patch in tiling.extract_tiles(image, grid):
            name = f"tile_{r:06d}_{c:06d}.png"
            io.save_image(patch, out / name)
            entries.append({"row": r, "col": c, "file": name})
        _write_json(out / "manifest.json", {
            "height": grid.height, "width": grid.width,
            "tile": grid.tile, "stride": grid.stride, "pad": grid.pad,
            "padded_height": grid.padded_h, "padded_width": grid.padded_w,
            "tiles": entries,
        })
    except (ValueError, OSError) as e:
        _fail(str(e))


@main.command("untile")
@click.option("--manifest", "manifest_path", required=True, type=click.Path(exists=True))
@click.option("--out", "out_path", required=True, type=click.Path())
def untile_cmd(manifest_path, out_path):
    """Blend tile predictions (PNG or f32, per manifest) into one raster."""
    try:
        with open(manifest_path) as f:
            man = json.load(f)
        grid = tiling.plan_tiles(man["height"], man["width"], man["tile"])
        base = Path(manifest_path).parent
        tiles = []
        for e in man["tiles"]:
            p = base / e["file"]
            patch = io.load_f32(p) if p.suffix == ".f32" else io.load_image(p).astype(np.float64)
            tiles.append(((e["row"], e["col"]), patch))
        blended = tiling.blend_untile(tiles, grid)
        io.save_f32(blended, out_path)
    except (ValueError, OSError, KeyError, json.JSONDecodeError) as e:
        _fail(str(e))


def _load_types_dir(dir_path, stem):
    p = Path(dir_path) / f"{stem}.json"
    if not p.exists():
        raise ValueError(f"missing types file: {p}")
    with open(p) as f:
        raw = json.load(f)
    return {int(k): int(v) for k, v in raw.items()}


@main.command("metrics")
@click.option("--gt-dir", required=True, type=click.Path(exists=True))
@click.option("--pred-dir", required=True, type=click.Path(exists=True))
@click.option("--mag", default="20x", show_default=True)
@click.option("--radius", type=float, default=None, help="centroid match radius [default: per magnification]")
@click.option("--gt-types", "gt_types_dir", type=click.Path(exists=True))
@click.option("--pred-types", "pred_types_dir", type=click.Path(exists=True))
@click.option("--tissue-map", "tissue_map_path", type=click.Path(exists=True))
@click.option("--threads", default=None, type=int, help=f"worker count [default: {THREADS_ENV} or cpu count]")
@click.option("--out", "out_path", required=True, type=click.Path())
def metrics_cmd(gt_dir, pred_dir, mag, radius, gt_types_dir, pred_types_dir,
                tissue_map_path, threads, out_path):
    """Evaluate predicted label maps against ground truth."""
    try:
        profile = mag_profile(mag)
        r = radius if radius is not None else profile.match_radius
        gt_files = sorted(Path(gt_dir).glob("*.png"))
        if not gt_files:
            raise ValueError(f"no PNG label maps in {gt_dir}")
        names = [p.stem for p in gt_files]
        pairs = []
        for name in names:
            pp = Path(pred_dir) / f"{name}.png"
            if not pp.exists():
                raise ValueError(f"missing prediction for {name}")
            pairs.append((io.load_label_png(Path(gt_dir) / f"{name}.png"), io.load_label_png(pp)))

        n_workers = threads or _default_threads()
        with ThreadPoolExecutor(max_workers=n_workers) as ex:
            per_image = list(ex.map(lambda gp: metrics.evaluate_pair(gp[0], gp[1], r), pairs))

        report = {
            "meta": {
                "magnification": mag,
                "match_radius": r,
                "n_images": len(names),
                "empty_image_convention": "empty-vs-empty scores 1.0 on ratio metrics",
            },
            "images": dict(zip(names, per_image)),
            "aggregate": {
                k: float(np.mean([m[k] for m in per_image]))
                for k in ("dice", "aji", "p", "r", "f1", "dq", "sq", "pq")
            },
        }
        report["aggregate"]["tp"] = int(sum(m["tp"] for m in per_image))
        report["aggregate"]["fp"] = int(sum(m["fp"] for m in per_image))
        report["aggregate"]["fn"] = int(sum(m["fn"] for m in per_image))

        if gt_types_dir and pred_types_dir:
            gt_types = [_load_types_dir(gt_types_dir, n) for n in names]
            pred_types = [_load_types_dir(pred_types_dir, n) for n in names]
            classes = sorted({t for d in gt_types for t in d.values()} |
                             {t for d in pred_types for t in d.values()})
            dataset = [(g, p, gt, pt) for (g, p), gt, pt in zip(pairs, gt_types, pred_types)]
            mpq_plus, per_class = metrics.mpq_plus(dataset, classes)
            report["per_class"] = {str(c): {"pq_plus": v} for c, v in per_class.items()}
            report["aggregate"]["mpq_plus"] = mpq_plus
            true_counts = np.array([[sum(1 for t in d.values() if t == c) for c in classes]
                                    for d in gt_types])
            pred_counts = np.array([[sum(1 for t in d.values() if t == c) for c in classes]
                                    for d in pred_types])
            report["aggregate"]["r2"] = metrics.r2_counts(true_counts, pred_counts)
            if tissue_map_path:
                with open(tissue_map_path) as f:
                    tmap = json.load(f)
                ds = [(g, p, gt, pt, tmap.get(n, "unknown"))
                      for (g, p), gt, pt, n in zip(pairs, gt_types, pred_types, names)]
                mpq, bpq = metrics.mpq_pannuke(ds, classes)
                report["aggregate"]["mpq"] = mpq
                report["aggregate"]["bpq"] = bpq

        _write_json(out_path, report)
    except (ValueError, OSError, json.JSONDecodeError) as e:
        _fail(str(e))


@main.command("loss")
@click.option("--gt-p", type=click.Path(exists=True))
@click.option("--pred-p", type=click.Path(exists=True))
@click.option("--gt-r", type=click.Path(exists=True))
@click.option("--pred-r", type=click.Path(exists=True))
@click.option("--mask", "mask_path", type=click.Path(exists=True))
@click.option("--gt-t", type=click.Path(exists=True))
@click.option("--pred-t", type=click.Path(exists=True))
@click.option("--tversky-alpha", default=0.7, show_default=True)
@click.option("--out", "out_path", required=True, type=click.Path())
def loss_cmd(gt_p, pred_p, gt_r, pred_r, mask_path, gt_t, pred_t, tversky_alpha, out_path):
    """Forward loss evaluation from raw-f32 tensors."""
    try:
        if not (gt_p and pred_p and gt_r and pred_r and mask_path):
            raise ValueError("--gt-p/--pred-p/--gt-r/--pred-r/--mask are all required")
        w = losses.LossWeights(tversky_alpha=tversky_alpha)
        parts = losses.total_loss(
            io.load_f32(gt_p), io.load_f32(pred_p),
            io.load_f32(gt_r), io.load_f32(pred_r),
            io.load_f32(mask_path),
            io.load_f32(gt_t) if gt_t else None,
            io.load_f32(pred_t) if pred_t else None,
            w,
        )
        _write_json(out_path, parts)
    except (ValueError, OSError) as e:
        _fail(str(e))


@main.command("sample-plan")
@click.option("--manifest", "manifest_path", required=True, type=click.Path(exists=True))
@click.option("--alphas", "alphas_path", required=True, type=click.Path(exists=True))
@click.option("--seed", default=0, show_default=True)
@click.option("--out", "out_path", required=True, type=click.Path())
def sample_plan_cmd(manifest_path, alphas_path, seed, out_path):
    """Oversampling plan + sampled extra-image multiset from a counts CSV."""
    try:
        manifest = sampling.load_manifest_csv(manifest_path)
        with open(alphas_path) as f:
            alphas = json.load(f)
        plan = sampling.oversample_counts(manifest, alphas)
        sampled = sampling.sample_extra_images(manifest, plan, seed)
        _write_json(out_path, {
            "majority_class": plan.majority_class,
            "n_train": plan.n_train,
            "total_extra": plan.total_extra,
            "total_images": plan.total_images,
            "seed": seed,
            "per_class": {
                c: {"alpha": p.alpha, "beta": p.beta, "n_extra": p.n_extra}
                for c, p in plan.per_class.items()
            },
            "sampled": {c: [str(i) for i in ids] for c, ids in sampled.items()},
        })
    except (ValueError, OSError, json.JSONDecodeError) as e:
        _fail(str(e))


@main.group("stain")
def stain_group():
    """Stain normalization and augmentation."""


@stain_group.command("normalize")
@click.option("--in", "in_path", required=True, type=click.Path(exists=True))
@click.option("--out", "out_path", required=True, type=click.Path())
@click.option("--method", type=click.Choice(["macenko", "reinhard", "ruifrok", "style"]),
              default="reinhard", show_default=True)
@click.option("--template", "template_path", required=True, type=click.Path(exists=True))
def stain_normalize_cmd(in_path, out_path, method, template_path):
    """Normalize an image toward a template."""
    try:
        image = io.load_image(in_path)
        template = io.load_image(template_path)
        if method in ("reinhard", "style"):
            out = stain.reinhard_normalize(image, stain.lab_stats(template))
        elif method == "ruifrok":
            conc = stain.ruifrok_deconvolve(image)
            out = stain.ruifrok_recompose(conc, stain.macenko_estimate(template))
        else:
            src = stain.macenko_estimate(image)
            tgt = stain.macenko_estimate(template)
            tgt_conc = stain.ruifrok_deconvolve(template, tgt)
            tgt_maxc = np.percentile(tgt_conc.reshape(-1, 2), 99.0, axis=0)
            out = stain.macenko_normalize(image, src, tgt, tgt_maxc)
        io.save_image(out, out_path)
    except (ValueError, OSError) as e:
        _fail(str(e))


@stain_group.command("augment")
@click.option("--in", "in_path", required=True, type=click.Path(exists=True))
@click.option("--out", "out_path", required=True, type=click.Path())
@click.option("--template", "template_paths", multiple=True, type=click.Path(exists=True))
@click.option("--seed", default=0, show_default=True)
def stain_augment_cmd(in_path, out_path, template_paths, seed):
    """Apply one random stain augmentation strategy, seed-determined."""
    try:
        image = io.load_image(in_path)
        templates = [io.load_image(p) for p in template_paths]
        strategies = ["jitter"]
        model = None
        if len(templates) >= 2:
            model = stain.StainStyleModel.fit([stain.lab_stats(t) for t in templates])
            strategies.append("style")
        if templates:
            strategies.append("normalize")
        policy = stain.AugmentPolicy(
            strategies=tuple(strategies), style_model=model, templates=templates
        )
        io.save_image(stain.augment(image, policy, seed), out_path)
    except (ValueError, OSError) as e:
        _fail(str(e))


if __name__ == "__main__":
    main()
