"""Dataset directory format: meta.json + raw little-endian float32 arrays,
optional ASCII/binary PLY exports, and correspondence JSON."""

from __future__ import annotations

import json
import os
from dataclasses import dataclass
from typing import Dict, List, Optional

import numpy as np
import jsonschema

from .align import Correspondence, CorrespondenceSet
from .depthfusion import DepthGrid
from .errors import IOFailure, ValidationError
from .frames import (
    SATELLITE,
    GeoPoint,
    Intrinsics,
    Pose,
    TriViewSample,
    ViewRecord,
)
from .losses import PointMap
from .ortho import SatTile
from .synth import PerturbedBundle, SceneSpec, SynthSample

SPLIT_RATIOS = (75, 5, 5)  # train/val/test scene proportions

_INTRINSICS_SCHEMA = {
    "type": "object",
    "required": ["fx", "fy", "cu", "cv", "width", "height"],
    "properties": {k: {"type": "number"} for k in ("fx", "fy", "cu", "cv")}
    | {"width": {"type": "integer"}, "height": {"type": "integer"}},
}

_VIEW_SCHEMA = {
    "type": "object",
    "required": ["name", "modality", "R", "t", "width", "height"],
    "properties": {
        "name": {"type": "string"},
        "modality": {"enum": ["satellite", "uav", "ground"]},
        "R": {"type": "array", "minItems": 3, "maxItems": 3,
              "items": {"type": "array", "minItems": 3, "maxItems": 3,
                        "items": {"type": "number"}}},
        "t": {"type": "array", "minItems": 3, "maxItems": 3, "items": {"type": "number"}},
        "width": {"type": "integer", "minimum": 1},
        "height": {"type": "integer", "minimum": 1},
        "rho": {"type": "number", "exclusiveMinimum": 0},
        "intrinsics": _INTRINSICS_SCHEMA,
        "depth_file": {"type": "string"},
        "pointmap_file": {"type": "string"},
    },
    "allOf": [
        {"if": {"properties": {"modality": {"const": "satellite"}},
                "required": ["modality"]},
         "then": {"required": ["rho"]},
         "else": {"required": ["intrinsics"]}},
    ],
}

META_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "required": ["seed", "meters_per_pixel", "origin", "views"],
    "properties": {
        "seed": {"type": "integer"},
        "meters_per_pixel": {"type": "number", "exclusiveMinimum": 0},
        "origin": {
            "type": "object",
            "required": ["lat", "lon", "alt"],
            "properties": {k: {"type": "number"} for k in ("lat", "lon", "alt")},
        },
        "views": {
            "type": "array",
            "minItems": 6,
            "maxItems": 6,
            "items": _VIEW_SCHEMA,
            "allOf": [
                {"contains": {"properties": {"modality": {"const": m}},
                              "required": ["modality"]},
                 "minContains": 2, "maxContains": 2}
                for m in ("satellite", "uav", "ground")
            ],
        },
    },
}


def validate_meta(meta: dict):
    try:
        jsonschema.validate(meta, META_SCHEMA)
    except jsonschema.ValidationError as exc:
        raise ValidationError(f"meta.json schema violation: {exc.message}") from exc


def _dump_json(path, obj):
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=1, sort_keys=True)
        fh.write("\n")


def write_f32(path, array):
    """Row-major little-endian float32; NaN marks invalid entries."""
    np.asarray(array).astype("<f4").tofile(path)


def read_f32(path, shape):
    arr = np.fromfile(path, dtype="<f4")
    expected = int(np.prod(shape))
    if arr.size != expected:
        raise ValidationError(
            f"{path}: {arr.size * 4} bytes, expected {expected * 4} for shape {shape}"
        )
    return arr.reshape(shape).astype(float)


def write_ply(path, points, binary=False):
    """Point-cloud export; ASCII by default for viewer interop."""
    pts = np.asarray(points, dtype=float).reshape(-1, 3)
    fmt = "binary_little_endian" if binary else "ascii"
    header = (
        "ply\n"
        f"format {fmt} 1.0\n"
        f"element vertex {pts.shape[0]}\n"
        "property float x\nproperty float y\nproperty float z\n"
        "end_header\n"
    )
    if binary:
        with open(path, "wb") as fh:
            fh.write(header.encode("ascii"))
            fh.write(pts.astype("<f4").tobytes())
    else:
        with open(path, "w") as fh:
            fh.write(header)
            for x, y, z in pts:
                fh.write(f"{x:.9g} {y:.9g} {z:.9g}\n")


def read_ply(path):
    with open(path, "rb") as fh:
        header = []
        while True:
            line = fh.readline().decode("ascii").strip()
            header.append(line)
            if line == "end_header":
                break
        fmt = next(l.split()[1] for l in header if l.startswith("format"))
        count = int(next(l.split()[2] for l in header if l.startswith("element vertex")))
        if fmt == "ascii":
            data = np.loadtxt(fh, max_rows=count)
        else:
            data = np.frombuffer(fh.read(count * 12), dtype="<f4").reshape(count, 3)
    return np.asarray(data, dtype=float).reshape(count, 3)


def scene_to_dict(scene: SceneSpec) -> dict:
    return {
        "plane_point": scene.plane_point.tolist(),
        "plane_normal": scene.plane_normal.tolist(),
        "boxes": [[bmin.tolist(), bmax.tolist()] for bmin, bmax in scene.boxes],
        "texture_seed": scene.texture_seed,
    }


def scene_from_dict(d: dict) -> SceneSpec:
    return SceneSpec(
        plane_point=np.array(d["plane_point"]),
        plane_normal=np.array(d["plane_normal"]),
        boxes=tuple((np.array(a), np.array(b)) for a, b in d["boxes"]),
        texture_seed=int(d.get("texture_seed", 0)),
    )


def _view_meta(view: ViewRecord, name: str, width: int, height: int) -> dict:
    d = {
        "name": name,
        "modality": view.modality,
        "R": view.pose.R.tolist(),
        "t": view.pose.t.tolist(),
        "width": int(width),
        "height": int(height),
        "depth_file": f"depth_{name}.f32",
        "pointmap_file": f"pointmap_{name}.f32",
    }
    if view.modality == SATELLITE:
        d["rho"] = view.rho
    else:
        intr = view.intrinsics
        d["intrinsics"] = {"fx": intr.fx, "fy": intr.fy, "cu": intr.cu, "cv": intr.cv,
                           "width": intr.width, "height": intr.height}
    return d


def _corr_to_list(corr: CorrespondenceSet) -> list:
    return [
        {
            "view_a": c.view_a, "pixel_a": list(c.pixel_a),
            "view_b": c.view_b, "pixel_b": list(c.pixel_b),
            "point_a": np.asarray(c.point_a).tolist(),
            "point_b": np.asarray(c.point_b).tolist(),
        }
        for c in corr.pairs
    ]


def _corr_from_list(items, source="ground-truth") -> CorrespondenceSet:
    return CorrespondenceSet(
        pairs=[
            Correspondence(
                view_a=int(d["view_a"]), pixel_a=tuple(d["pixel_a"]),
                view_b=int(d["view_b"]), pixel_b=tuple(d["pixel_b"]),
                point_a=np.array(d["point_a"]), point_b=np.array(d["point_b"]),
            )
            for d in items
        ],
        source=source,
    )


def write_sample(path, synth: SynthSample, write_pointmaps=True, write_clouds=False,
                 binary_ply=False):
    """Write one SampleDir: meta.json, depth/pointmap arrays, correspondences."""
    os.makedirs(path, exist_ok=True)
    views_meta = []
    for i, view in enumerate(synth.sample.views):
        name = view.name or f"view{i}"
        h, w = synth.depths[i].shape
        views_meta.append(_view_meta(view, name, w, h))
        write_f32(os.path.join(path, f"depth_{name}.f32"), synth.depths[i].values)
        if write_pointmaps:
            write_f32(os.path.join(path, f"pointmap_{name}.f32"), synth.pointmaps[i].points)
        if write_clouds:
            pts = synth.pointmaps[i].points[synth.pointmaps[i].valid]
            write_ply(os.path.join(path, f"cloud_{name}.ply"), pts, binary=binary_ply)
    meta = {
        "seed": synth.seed,
        "meters_per_pixel": synth.sample.meters_per_pixel_gt,
        "origin": {"lat": synth.sample.origin.lat, "lon": synth.sample.origin.lon,
                   "alt": synth.sample.origin.alt},
        "views": views_meta,
    }
    validate_meta(meta)
    _dump_json(os.path.join(path, "meta.json"), meta)
    _dump_json(os.path.join(path, "corr.json"),
               {"source": synth.correspondences.source,
                "pairs": _corr_to_list(synth.correspondences)})
    _dump_json(os.path.join(path, "scene.json"), scene_to_dict(synth.scene))


def write_prediction(path, bundle: PerturbedBundle):
    """Write a prediction directory mirroring the ground-truth layout."""
    os.makedirs(path, exist_ok=True)
    src = bundle.source
    views_meta = []
    for i, view in enumerate(src.sample.views):
        name = view.name or f"view{i}"
        h, w = src.depths[i].shape
        meta_v = _view_meta(view, name, w, h)
        meta_v["R"] = bundle.poses[i].R.tolist()
        meta_v["t"] = bundle.poses[i].t.tolist()
        if i in bundle.rhos:
            meta_v["rho"] = bundle.rhos[i]
        views_meta.append(meta_v)
        write_f32(os.path.join(path, f"depth_{name}.f32"),
                  bundle.pointmaps[i].points[..., 2])
        write_f32(os.path.join(path, f"pointmap_{name}.f32"), bundle.pointmaps[i].points)
    meta = {
        "seed": src.seed,
        "meters_per_pixel": src.sample.meters_per_pixel_gt,
        "origin": {"lat": src.sample.origin.lat, "lon": src.sample.origin.lon,
                   "alt": src.sample.origin.alt},
        "views": views_meta,
    }
    validate_meta(meta)
    _dump_json(os.path.join(path, "meta.json"), meta)
    _dump_json(os.path.join(path, "corr.json"),
               {"source": bundle.correspondences.source,
                "pairs": _corr_to_list(bundle.correspondences)})


@dataclass
class LoadedSample:
    """A SampleDir read back into memory."""

    meta: dict
    views: List[ViewRecord]
    poses: List[Pose]
    pointmaps: List[Optional[PointMap]]
    depths: List[Optional[DepthGrid]]
    tiles: Dict[int, SatTile]
    rhos: Dict[int, float]
    correspondences: Optional[CorrespondenceSet]
    scene: Optional[SceneSpec]
    meters_per_pixel: float

    def satellite_indices(self):
        return [i for i, v in enumerate(self.views) if v.modality == SATELLITE]


def read_sample(path) -> LoadedSample:
    meta_path = os.path.join(path, "meta.json")
    if not os.path.exists(meta_path):
        raise IOFailure(f"no meta.json under {path}")
    with open(meta_path) as fh:
        meta = json.load(fh)
    validate_meta(meta)

    views, poses, pointmaps, depths = [], [], [], []
    tiles, rhos = {}, {}
    for i, vm in enumerate(meta["views"]):
        pose = Pose(np.array(vm["R"]), np.array(vm["t"]))
        if vm["modality"] == SATELLITE:
            if "rho" not in vm:
                raise ValidationError(f"satellite view {vm['name']} missing rho")
            record = ViewRecord(modality=vm["modality"], pose=pose, rho=vm["rho"],
                                name=vm["name"])
            rhos[i] = float(vm["rho"])
            try:
                tiles[i] = SatTile(width=vm["width"], height=vm["height"],
                                   rho=vm["rho"], pose=pose)
            except ValidationError:
                pass  # non-nadir predicted pose; localization handles it directly
        else:
            intr = Intrinsics(**vm["intrinsics"])
            record = ViewRecord(modality=vm["modality"], pose=pose, intrinsics=intr,
                                name=vm["name"])
        views.append(record)
        poses.append(pose)
        h, w = vm["height"], vm["width"]
        depth = pm = None
        dpath = os.path.join(path, vm.get("depth_file", ""))
        if vm.get("depth_file") and os.path.exists(dpath):
            vals = read_f32(dpath, (h, w))
            depth = DepthGrid(values=vals, valid=np.isfinite(vals) & (vals > 0))
        ppath = os.path.join(path, vm.get("pointmap_file", ""))
        if vm.get("pointmap_file") and os.path.exists(ppath):
            pts = read_f32(ppath, (h, w, 3))
            pm = PointMap(points=pts)
        depths.append(depth)
        pointmaps.append(pm)

    corr = None
    cpath = os.path.join(path, "corr.json")
    if os.path.exists(cpath):
        with open(cpath) as fh:
            cdata = json.load(fh)
        corr = _corr_from_list(cdata["pairs"], cdata.get("source", "ground-truth"))

    scene = None
    spath = os.path.join(path, "scene.json")
    if os.path.exists(spath):
        with open(spath) as fh:
            scene = scene_from_dict(json.load(fh))

    return LoadedSample(
        meta=meta, views=views, poses=poses, pointmaps=pointmaps, depths=depths,
        tiles=tiles, rhos=rhos, correspondences=corr, scene=scene,
        meters_per_pixel=float(meta["meters_per_pixel"]),
    )


def split_scenes(scene_names, ratios=SPLIT_RATIOS):
    """Disjoint scene-level train/val/test split with the given proportions."""
    names = list(scene_names)
    total = sum(ratios)
    n = len(names)
    n_val = round(n * ratios[1] / total)
    n_test = round(n * ratios[2] / total)
    n_train = n - n_val - n_test
    return {
        "train": names[:n_train],
        "val": names[n_train:n_train + n_val],
        "test": names[n_train + n_val:],
        "ratios": list(ratios),
    }


def iter_sample_dirs(root):
    """Sorted relative paths of every directory containing a meta.json."""
    out = []
    for dirpath, _, filenames in os.walk(root):
        if "meta.json" in filenames:
            out.append(os.path.relpath(dirpath, root))
    return sorted(out)
