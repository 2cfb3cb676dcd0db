"""Command-line surface: dataset generation, evaluation reports, localization,
and thin wrappers around the pairing / fusion / loss / sweep primitives.

Every command prints machine-readable JSON on stdout. Exit codes: 0 success,
2 validation failure, 3 degenerate math, 4 IO failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys

import numpy as np

from .depthfusion import PCC_GATE, DepthGrid, fuse_and_filter
from .errors import ConfigurationError, CrossviewError, IOFailure, ValidationError
from .evaluate import evaluate_sample, localize_sample, tile_localization
from .frames import GROUND, UAV
from .losses import ConfMap, LossComponents, loss_cam, loss_conf, loss_geo, loss_norm, total_loss
from .metrics import aggregate, exact_median
from .ortho import altitude_sweep
from .pairing import DEFAULT_CELL_M, select_tuples
from .sampleio import (
    iter_sample_dirs,
    read_f32,
    read_sample,
    scene_from_dict,
    split_scenes,
    write_ply,
    write_sample,
)
from .synth import CaptureConfig, make_sample, random_scene

CSV_COLUMNS = (
    ["acc_mean", "delta@0.5m", "delta@1m", "delta@2m",
     "rra@5", "rra@15", "rra@25", "rta@5", "rta@15", "rta@25", "auc@30"]
    + [f"{mod}_{col}" for mod in ("ground", "uav")
       for col in ("meter_mean", "meter_med", "yaw_mean", "yaw_med", "pck@2m", "pck@5m")]
    + [f"lat_recall@{t}m" for t in (1, 3, 5)]
    + [f"lon_recall@{t}m" for t in (1, 3, 5)]
    + [f"ori_recall@{t}deg" for t in (1, 3)]
)


def _parse_range(text, name):
    try:
        lo, hi = (float(x) for x in text.split(":"))
    except ValueError as exc:
        raise ConfigurationError(f"{name} must look like LO:HI, got {text!r}") from exc
    return lo, hi


def _derived_seed(*parts):
    return int(np.random.SeedSequence(list(parts)).generate_state(1)[0])


def _emit(obj):
    json.dump(obj, sys.stdout, indent=1, sort_keys=True)
    sys.stdout.write("\n")


def cmd_generate(args):
    cfg = CaptureConfig(
        tile_extent=args.tile_extent,
        uav_alt_range=_parse_range(args.uav_alt, "--uav-alt"),
        uav_pitch_range=_parse_range(args.uav_pitch, "--uav-pitch"),
    )
    os.makedirs(args.out, exist_ok=True)
    scene_names = []
    sample_paths = []
    for si in range(args.scenes):
        scene_name = f"scene{si:04d}"
        scene_names.append(scene_name)
        scene = random_scene(seed=_derived_seed(args.seed, si))
        for mi in range(args.samples_per_scene):
            synth = make_sample(scene, cfg, seed=_derived_seed(args.seed, si, mi))
            rel = os.path.join(scene_name, f"sample{mi:04d}")
            write_sample(os.path.join(args.out, rel), synth)
            sample_paths.append(rel)
    manifest = {
        "seed": args.seed,
        "scenes": scene_names,
        "samples": sample_paths,
        "split": split_scenes(scene_names),
    }
    with open(os.path.join(args.out, "manifest.json"), "w") as fh:
        json.dump(manifest, fh, indent=1, sort_keys=True)
        fh.write("\n")
    _emit({"out": args.out, "scenes": args.scenes,
           "samples": len(sample_paths), "manifest": "manifest.json"})
    return 0


def _report_to_row(rep):
    return {
        "acc_mean": rep["acc_mean"],
        "delta@0.5m": rep["delta"]["0.5"],
        "delta@1m": rep["delta"]["1.0"],
        "delta@2m": rep["delta"]["2.0"],
        "rra@5": rep["rra"]["5.0"], "rra@15": rep["rra"]["15.0"], "rra@25": rep["rra"]["25.0"],
        "rta@5": rep["rta"]["5.0"], "rta@15": rep["rta"]["15.0"], "rta@25": rep["rta"]["25.0"],
        "auc@30": rep["auc30"],
        **{f"{mod}_{k}": rep[mod][k]
           for mod in ("ground", "uav")
           for k in ("meter_mean", "meter_med", "yaw_mean", "yaw_med", "pck@2m", "pck@5m")},
        **{f"lat_recall@{t}m": rep["lat_recall"].get(f"{t}.0") for t in (1, 3, 5)},
        **{f"lon_recall@{t}m": rep["lon_recall"].get(f"{t}.0") for t in (1, 3, 5)},
        **{f"ori_recall@{t}deg": rep["ori_recall"].get(f"{t}.0") for t in (1, 3)},
    }


def _fkeys(d):
    """JSON object keys must be strings; fix float-keyed metric dicts."""
    return {str(k): v for k, v in d.items()}


def cmd_eval(args):
    gt_dirs = iter_sample_dirs(args.gt)
    pred_dirs = iter_sample_dirs(args.pred)
    if not gt_dirs:
        raise ValidationError(f"no samples under {args.gt}")
    missing = sorted(set(gt_dirs) - set(pred_dirs))
    extra = sorted(set(pred_dirs) - set(gt_dirs))
    if missing or extra:
        raise ValidationError(
            "sample mismatch; missing predictions: %s; unmatched predictions: %s"
            % (missing, extra)
        )

    sample_metrics = []
    all_pose_evals = []
    mod_stats = {GROUND: {"meter": [], "yaw": [], "pck": []},
                 UAV: {"meter": [], "yaw": [], "pck": []}}
    for rel in gt_dirs:
        gt = read_sample(os.path.join(args.gt, rel))
        pred = read_sample(os.path.join(args.pred, rel))
        ev = evaluate_sample(gt, pred, per_view_accmean=args.per_view_accmean)
        sample_metrics.append(ev.metrics)
        all_pose_evals.extend(ev.pose_evals)
        for mod in (GROUND, UAV):
            mloc = ev.by_modality[mod]
            mod_stats[mod]["meter"].extend(mloc.meter_errs)
            mod_stats[mod]["yaw"].extend(mloc.yaw_errs)
            if mloc.pck:
                mod_stats[mod]["pck"].append(mloc.pck)

    rep = aggregate(sample_metrics)

    def _mod_block(mod):
        st = mod_stats[mod]
        pcks = st["pck"]
        return {
            "meter_mean": float(np.mean(st["meter"])),
            "meter_med": exact_median(st["meter"]),
            "yaw_mean": float(np.mean(st["yaw"])),
            "yaw_med": exact_median(st["yaw"]),
            "pck@2m": float(np.mean([p[2.0] for p in pcks])),
            "pck@5m": float(np.mean([p[5.0] for p in pcks])),
        }

    report = {
        "n_samples": len(sample_metrics),
        "acc_mean": rep.acc_mean,
        "delta": _fkeys(rep.delta),
        "rra": _fkeys(rep.rra),
        "rta": _fkeys(rep.rta),
        "auc30": rep.auc30,
        "pck": _fkeys(rep.pck),
        "meter_mean": rep.meter_mean,
        "meter_median": rep.meter_median,
        "yaw_mean": rep.yaw_mean,
        "yaw_median": rep.yaw_median,
        "lat_recall": _fkeys(rep.lat_recall),
        "lon_recall": _fkeys(rep.lon_recall),
        "ori_recall": _fkeys(rep.ori_recall),
        "ground": _mod_block(GROUND),
        "uav": _mod_block(UAV),
    }
    with open(args.out, "w") as fh:
        json.dump(report, fh, indent=1, sort_keys=True)
        fh.write("\n")

    base, _ = os.path.splitext(args.out)
    row = _report_to_row(report)
    with open(base + ".csv", "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=CSV_COLUMNS)
        writer.writeheader()
        writer.writerow(row)

    from .plots import save_accuracy_curve, save_error_histogram

    meters = [e for m in sample_metrics for e in m.meter_errs]
    yaws = [e for m in sample_metrics for e in m.yaw_errs]
    save_accuracy_curve(all_pose_evals, base + "_pose_accuracy.png")
    save_error_histogram(meters, yaws, base + "_loc_errors.png")

    _emit({"report": args.out, "csv": base + ".csv",
           "figures": [base + "_pose_accuracy.png", base + "_loc_errors.png"],
           "n_samples": len(sample_metrics)})
    return 0


def cmd_localize(args):
    loaded = read_sample(args.sample)
    result = localize_sample(loaded, drop_modality=args.drop_view)

    sat0 = result["reference"]
    width = loaded.meta["views"][sat0]["width"]
    height = loaded.meta["views"][sat0]["height"]
    out_dir = args.out or args.sample
    os.makedirs(out_dir, exist_ok=True)

    # Overlay PLY: the satellite ground plane sampled on the tile grid plus a
    # marker column above each estimated camera position.
    sat_pm = loaded.pointmaps[sat0]
    plane_pts = loaded.poses[sat0].inverse_apply(sat_pm.points[sat_pm.valid])
    ground_z = float(np.median(sat_pm.points[sat_pm.valid][:, 2]))
    markers = []
    rho = result["rho"]
    for cam in result["cameras"]:
        # Marker column rising from the ground toward the satellite camera.
        x = (cam["u"] - width / 2.0) * rho
        y = (cam["v"] - height / 2.0) * rho
        local = np.array([[x, y, ground_z - dz] for dz in (0.0, 2.0, 4.0)])
        markers.append(loaded.poses[sat0].inverse_apply(local))
    overlay = np.concatenate([plane_pts] + markers) if markers else plane_pts
    ply_path = os.path.join(out_dir, "localization_overlay.ply")
    write_ply(ply_path, overlay)

    from .plots import save_localization_overlay

    fig_path = os.path.join(out_dir, "localization_overlay.png")
    est = [(c["u"], c["v"]) for c in result["cameras"]]
    gt_pts = None
    if loaded.tiles.get(sat0) is not None:
        gt_pts = [
            tile_localization(loaded.poses[i], loaded.poses[sat0],
                              loaded.rhos[sat0], width, height)[:2]
            for i in result["kept"]
        ]
    save_localization_overlay((width, height), est, fig_path, gt_points=gt_pts)

    _emit({"rho": rho, "cameras": result["cameras"],
           "overlay_ply": ply_path, "overlay_png": fig_path})
    return 0


def cmd_pair(args):
    loaded = read_sample(args.scene)
    clouds = {}
    for i, view in enumerate(loaded.views):
        pm = loaded.pointmaps[i]
        if pm is None:
            raise ValidationError(f"view {view.name} has no point map")
        world = loaded.poses[i].inverse_apply(pm.points[pm.valid])
        clouds.setdefault(view.modality, []).append(world)
    tuples = select_tuples(clouds, k=args.top, cell=args.cell, use_iou=args.iou)
    _emit({"cell": args.cell,
           "tuples": [{"score": score, "indices": {m: list(pair) for m, pair in idx.items()}}
                      for score, idx in tuples]})
    return 0


def cmd_fuse(args):
    rel_vals = read_f32(args.rel, (args.height, args.width))
    anchor_vals = read_f32(args.anchor, (args.height, args.width))
    rel = DepthGrid(values=rel_vals, valid=np.isfinite(rel_vals))
    anchor = DepthGrid(values=anchor_vals, valid=np.isfinite(anchor_vals) & (anchor_vals > 0))
    result = fuse_and_filter(rel, anchor, pcc_min=args.pcc_min)
    if result.accepted and args.out:
        from .sampleio import write_f32

        write_f32(args.out, result.fused.values)
    _emit({"accepted": result.accepted, "pcc": result.pcc,
           "scale": result.scale, "shift": result.shift,
           "fused": args.out if (result.accepted and args.out) else None})
    return 0


def cmd_losses(args):
    gt = read_sample(args.gt)
    pred = read_sample(args.pred)
    if len(gt.views) != len(pred.views):
        raise ValidationError("pred and gt view counts differ")

    geo_vals, norm_vals, conf_vals = [], [], []
    for pm_p, pm_g in zip(pred.pointmaps, gt.pointmaps):
        if pm_p is None or pm_g is None:
            continue
        geo_vals.append(loss_geo(pm_p, pm_g)[0])
        norm_vals.append(loss_norm(pm_p, pm_g))
        conf = ConfMap(conf=np.ones(pm_p.points.shape[:2]))
        conf_vals.append(loss_conf(conf, pm_p, pm_g))
    if not geo_vals:
        raise ValidationError("no point maps to compare")
    cam_val = loss_cam(pred.poses, gt.poses)[0]
    comps = LossComponents(geo=float(np.mean(geo_vals)), norm=float(np.mean(norm_vals)),
                           conf=float(np.mean(conf_vals)), cam=cam_val)
    _emit({"geo": comps.geo, "norm": comps.norm, "conf": comps.conf, "cam": comps.cam,
           "total": total_loss(comps, warmup_active=args.warmup)})
    return 0


def cmd_sweep(args):
    target = read_f32(args.target, (args.height, args.width))
    scene_path = args.scene
    if os.path.isdir(scene_path):
        scene_path = os.path.join(scene_path, "scene.json")
    if not os.path.exists(scene_path):
        raise IOFailure(f"no scene description at {scene_path}")
    with open(scene_path) as fh:
        scene = scene_from_dict(json.load(fh))
    if args.max < args.min or args.step <= 0:
        raise ConfigurationError("need min <= max and step > 0")
    candidates = np.arange(args.min, args.max + 1e-9, args.step)
    alt = altitude_sweep(target, scene, candidates, fov_deg=args.fov)
    _emit({"altitude": alt, "candidates": len(candidates)})
    return 0


def build_parser():
    parser = argparse.ArgumentParser(
        prog="crossview",
        description="Cross-view reconstruction and localization toolkit.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="write synthetic tri-view sample directories")
    p.add_argument("--scenes", type=int, required=True)
    p.add_argument("--samples-per-scene", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.add_argument("--tile-extent", type=float, default=300.0)
    p.add_argument("--uav-alt", default="30:120")
    p.add_argument("--uav-pitch", default="0:90")
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("eval", help="score predictions against ground truth")
    p.add_argument("--pred", required=True)
    p.add_argument("--gt", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--per-view-accmean", action="store_true")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("localize", help="register views and place cameras on the tile")
    p.add_argument("--sample", required=True)
    p.add_argument("--drop-view", choices=[UAV, GROUND], default=None)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_localize)

    p = sub.add_parser("pair", help="select best view tuples by voxel overlap")
    p.add_argument("--scene", required=True)
    p.add_argument("--cell", type=float, default=DEFAULT_CELL_M)
    p.add_argument("--top", type=int, default=1)
    p.add_argument("--iou", action="store_true")
    p.set_defaults(func=cmd_pair)

    p = sub.add_parser("fuse", help="anchor relative depth to a metric depth grid")
    p.add_argument("--rel", required=True)
    p.add_argument("--anchor", required=True)
    p.add_argument("--width", type=int, required=True)
    p.add_argument("--height", type=int, required=True)
    p.add_argument("--pcc-min", type=float, default=PCC_GATE)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_fuse)

    p = sub.add_parser("losses", help="training-loss components between two samples")
    p.add_argument("--pred", required=True)
    p.add_argument("--gt", required=True)
    p.add_argument("--warmup", action="store_true")
    p.set_defaults(func=cmd_losses)

    p = sub.add_parser("sweep", help="recover satellite altitude by rendered correlation")
    p.add_argument("--target", required=True)
    p.add_argument("--scene", required=True)
    p.add_argument("--min", type=float, required=True)
    p.add_argument("--max", type=float, required=True)
    p.add_argument("--step", type=float, required=True)
    p.add_argument("--width", type=int, required=True)
    p.add_argument("--height", type=int, required=True)
    p.add_argument("--fov", type=float, default=3.0)
    p.set_defaults(func=cmd_sweep)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except CrossviewError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"io error: {exc}", file=sys.stderr)
        return IOFailure.exit_code


if __name__ == "__main__":
    sys.exit(main())
