"""Batch orchestration: corrupt a dataset, evaluate detections, render views.

Work units are (frame, corruption, severity); each unit derives its seed
from content identity, so outputs are byte-identical regardless of worker
count or scheduling. Files are staged under a temp name and renamed on
completion; the manifest only lists completed artifacts.
"""
from __future__ import annotations

import json
import os
import traceback
from pathlib import Path
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from . import camera, kitti, lidar, metrics, multimodal
from .errors import ConfigError, MissingCell
from .geometry import box_corners, derive_seed, make_rng, project_to_image
from .kitti import DatasetLayout, ManifestEntry
from .severities import (CALIB_CORRUPTIONS, CAMERA_CORRUPTIONS, DEFAULT_CONSTANTS,
                         KITTI_CORRUPTIONS, KITTI_EXCLUDED, LIDAR_CORRUPTIONS,
                         Corruption, PhysicsConstants)
from .types import FrameBundle, PointCloud

DIFFICULTY_ORDER = {"Easy": 0, "Moderate": 1, "Hard": 2}


@dataclass(frozen=True)
class RunConfig:
    input_root: str
    output_root: str
    corruptions: tuple = KITTI_CORRUPTIONS
    severities: tuple = (1, 2, 3, 4, 5)
    master_seed: int = 0
    jobs: int = 1
    dataset: str = "kitti"
    force: bool = False
    allow_incomplete: bool = False
    constants: PhysicsConstants = field(default_factory=PhysicsConstants)

    def validate(self) -> None:
        known = {c.value for c in Corruption}
        for c in self.corruptions:
            if c not in known:
                raise ConfigError(f"unknown corruption {c!r}")
            if self.dataset == "kitti" and Corruption(c) in KITTI_EXCLUDED:
                raise ConfigError(
                    f"corruption {c!r} is not applicable to a plain KITTI "
                    "layout (front-view clouds, no pose/timestamp data)")
        for s in self.severities:
            if s not in (1, 2, 3, 4, 5):
                raise ConfigError(f"severity must be in 1..5, got {s}")
        if self.jobs < 1:
            raise ConfigError("jobs must be >= 1")


# ---------------------------------------------------------------------------
# per-frame corruption dispatch
# ---------------------------------------------------------------------------

def _box_regions(frame: FrameBundle, cam_id: str):
    regions = []
    calib = frame.calib[cam_id]
    h, w = frame.images[cam_id].shape[:2]
    for box in frame.boxes:
        uv, ok = project_to_image(box_corners(box), calib)
        if not ok.all():
            continue
        u0, v0 = np.floor(uv.min(axis=0)).astype(int)
        u1, v1 = np.ceil(uv.max(axis=0)).astype(int) + 1
        region = camera.Region2D(u0, v0, u1, v1).clipped(w, h)
        if not region.empty:
            regions.append(region)
    return regions


def corrupt_frame(frame: FrameBundle, corruption: str, severity: int,
                  seed: int,
                  constants: PhysicsConstants = DEFAULT_CONSTANTS) -> FrameBundle:
    """Apply one corruption at one severity, fully determined by `seed`.

    The LiDAR payload is corrupted first, then each camera in sorted id
    order, all from one generator, so the draw sequence is well defined.
    """
    c = Corruption(corruption)
    rng = make_rng(seed)
    out = frame

    if c in (Corruption.SHEAR, Corruption.SCALE, Corruption.ROTATION):
        return multimodal.apply_object_transform(frame, c.value.lower(),
                                                 severity, rng, constants)
    if c == Corruption.SPATIAL_MISALIGNMENT:
        calib = {cid: multimodal.spatial_misalignment(frame.calib[cid],
                                                      severity, rng)
                 for cid in sorted(frame.calib)}
        return replace(frame, calib=calib)

    if c in LIDAR_CORRUPTIONS:
        cloud = frame.cloud
        if c == Corruption.SNOW:
            cloud = lidar.precip_scatter(cloud, "snow", severity, rng, constants)
        elif c == Corruption.RAIN:
            cloud = lidar.precip_scatter(cloud, "rain", severity, rng, constants)
        elif c == Corruption.FOG:
            cloud = lidar.fog_lidar(cloud, severity, rng, constants)
        elif c == Corruption.SUNLIGHT:
            cloud = lidar.sunlight_lidar(cloud, severity, rng, constants)
        elif c == Corruption.DENSITY_DECREASE:
            cloud = lidar.density_decrease(cloud, severity, rng)
        elif c == Corruption.CUTOUT:
            cloud = lidar.cutout(cloud, severity, rng)
        elif c == Corruption.CROSSTALK:
            cloud = lidar.lidar_crosstalk(cloud, severity, rng, constants)
        elif c == Corruption.FOV_LOST:
            cloud = lidar.fov_lost(cloud, severity)
        elif c == Corruption.GAUSSIAN_NOISE_LIDAR:
            cloud = lidar.coord_noise(cloud, lidar.NoiseKind.GAUSSIAN,
                                      severity, rng, constants)
        elif c == Corruption.UNIFORM_NOISE_LIDAR:
            cloud = lidar.coord_noise(cloud, lidar.NoiseKind.UNIFORM,
                                      severity, rng, constants)
        elif c == Corruption.IMPULSE_NOISE_LIDAR:
            cloud = lidar.coord_noise(cloud, lidar.NoiseKind.IMPULSE,
                                      severity, rng, constants)
        elif c == Corruption.MOTION_COMPENSATION:
            cloud = lidar.motion_compensation(cloud, frame.ego_pose,
                                              severity, rng)
        elif c == Corruption.MOVING_OBJECT:
            cloud = lidar.moving_object_lidar(cloud, frame.boxes, severity)
        elif c == Corruption.LOCAL_DENSITY_DECREASE:
            cloud = lidar.local_density_decrease(cloud, frame.boxes,
                                                 severity, rng)
        elif c == Corruption.LOCAL_CUTOUT:
            cloud = lidar.local_cutout(cloud, frame.boxes, severity, rng)
        elif c == Corruption.LOCAL_GAUSSIAN:
            cloud = lidar.local_noise(cloud, frame.boxes,
                                      lidar.NoiseKind.GAUSSIAN, severity,
                                      rng, constants)
        elif c == Corruption.LOCAL_UNIFORM:
            cloud = lidar.local_noise(cloud, frame.boxes,
                                      lidar.NoiseKind.UNIFORM, severity,
                                      rng, constants)
        elif c == Corruption.LOCAL_IMPULSE:
            cloud = lidar.local_noise(cloud, frame.boxes,
                                      lidar.NoiseKind.IMPULSE, severity,
                                      rng, constants)
        out = out.with_cloud(cloud)

    if c in CAMERA_CORRUPTIONS:
        images = dict(out.images)
        for cam_id in sorted(images):
            img = images[cam_id]
            if c in (Corruption.SNOW, Corruption.RAIN, Corruption.FOG,
                     Corruption.SUNLIGHT):
                img = camera.weather_image(img, c.value, severity, rng, constants)
            elif c == Corruption.GAUSSIAN_NOISE_CAMERA:
                img = camera.image_noise(img, lidar.NoiseKind.GAUSSIAN,
                                         severity, rng)
            elif c == Corruption.UNIFORM_NOISE_CAMERA:
                img = camera.image_noise(img, lidar.NoiseKind.UNIFORM,
                                         severity, rng)
            elif c == Corruption.IMPULSE_NOISE_CAMERA:
                img = camera.image_noise(img, lidar.NoiseKind.IMPULSE,
                                         severity, rng)
            elif c == Corruption.MOTION_BLUR:
                img = camera.motion_blur(img, severity, constants)
            elif c == Corruption.MOVING_OBJECT:
                img = camera.moving_object_image(
                    img, _box_regions(frame, cam_id), severity, constants)
            images[cam_id] = img
        out = out.with_images(images)
    return out


# ---------------------------------------------------------------------------
# corrupt run
# ---------------------------------------------------------------------------

def load_frame(layout: DatasetLayout, frame_id: str) -> FrameBundle:
    cloud = kitti.read_point_bin(layout.velodyne / f"{frame_id}.bin")
    calib = kitti.read_kitti_calib(layout.calib / f"{frame_id}.txt")
    img = kitti.read_image(layout.image_path(frame_id))
    label_path = layout.label_2 / f"{frame_id}.txt"
    boxes = kitti.read_kitti_label(label_path, calib) if label_path.exists() else []
    return FrameBundle(frame_id=frame_id, cloud=cloud,
                       images={"image_2": img}, calib={"image_2": calib},
                       boxes=boxes)


def _atomic_write(write_fn, payload, path) -> None:
    tmp = path.with_name(path.name + ".tmp")
    write_fn(payload, tmp)
    os.replace(tmp, path)


def _run_unit(args):
    """One (frame, corruption, severity) unit; returns manifest entries."""
    (input_root, output_root, frame_id, corruption, severity, master_seed,
     constants) = args
    layout = DatasetLayout(input_root)
    frame = load_frame(layout, frame_id)
    seed = derive_seed(master_seed, corruption, severity, frame_id)
    result = corrupt_frame(frame, corruption, severity, seed, constants)

    out_dir = Path(output_root) / corruption / str(severity)
    entries = []
    c = Corruption(corruption)
    if c in LIDAR_CORRUPTIONS:
        target = out_dir / "velodyne" / f"{frame_id}.bin"
        target.parent.mkdir(parents=True, exist_ok=True)
        _atomic_write(kitti.write_point_bin, result.cloud, target)
        entries.append((target, seed))
    if c in CAMERA_CORRUPTIONS:
        for cam_id in sorted(result.images):
            target = out_dir / cam_id / f"{frame_id}.png"
            target.parent.mkdir(parents=True, exist_ok=True)
            _atomic_write(kitti.write_image, result.images[cam_id], target)
            entries.append((target, seed))
    if c in CALIB_CORRUPTIONS:
        target = out_dir / "calib" / f"{frame_id}.txt"
        target.parent.mkdir(parents=True, exist_ok=True)
        _atomic_write(kitti.write_kitti_calib, result.calib["image_2"], target)
        entries.append((target, seed))

    root = Path(output_root)
    return [ManifestEntry(frame=frame_id, corruption=corruption,
                          severity=severity, seed=seed,
                          file=str(target.relative_to(root)),
                          sha256=kitti.sha256_file(target))
            for target, seed in entries]


def run_corrupt(config: RunConfig):
    """Expand the dataset by corruptions x severities; returns (entries, errors)."""
    config.validate()
    layout = DatasetLayout(config.input_root)
    if not layout.velodyne.is_dir():
        raise ConfigError(f"{layout.velodyne} is not a directory")
    out_root = Path(config.output_root)
    if out_root.exists() and any(out_root.iterdir()) and not config.force:
        raise ConfigError(f"output root {out_root} is not empty (use --force)")
    out_root.mkdir(parents=True, exist_ok=True)

    frames = kitti.enumerate_frames(layout,
                                    allow_incomplete=config.allow_incomplete)
    units = [(str(layout.root), str(out_root), f, c, s, config.master_seed,
              config.constants)
             for c in config.corruptions
             for s in config.severities
             for f in frames]

    entries, errors = [], []
    if config.jobs == 1:
        results = map(_safe_run_unit, units)
    else:
        with ProcessPoolExecutor(max_workers=config.jobs) as pool:
            results = list(pool.map(_safe_run_unit, units, chunksize=4))
    for unit, result in zip(units, results):
        if isinstance(result, str):
            errors.append((unit[2], unit[3], unit[4], result))
        else:
            entries.extend(result)

    entries.sort(key=lambda e: (e.corruption, e.severity, e.frame, e.file))
    kitti.write_manifest(entries, out_root / "manifest.jsonl")
    echo = {
        "input_root": str(config.input_root),
        "output_root": str(config.output_root),
        "corruptions": list(config.corruptions),
        "severities": list(config.severities),
        "master_seed": config.master_seed,
        "jobs": config.jobs,
        "dataset": config.dataset,
        "constants": vars(config.constants),
    }
    (out_root / "run_config.json").write_text(json.dumps(echo, indent=2) + "\n")
    return entries, errors


def _safe_run_unit(args):
    try:
        return _run_unit(args)
    except Exception:
        return traceback.format_exc()


# ---------------------------------------------------------------------------
# evaluation run
# ---------------------------------------------------------------------------

def _frame_gt(layout: DatasetLayout, frame_id: str, cls: str, difficulty: str):
    calib = kitti.read_kitti_calib(layout.calib / f"{frame_id}.txt")
    boxes = kitti.read_kitti_label(layout.label_2 / f"{frame_id}.txt", calib)
    max_level = DIFFICULTY_ORDER[difficulty]
    care, ignored = [], []
    for box in boxes:
        if box.cls != cls:
            continue
        lvl = DIFFICULTY_ORDER.get(box.difficulty)
        (care if lvl is not None and lvl <= max_level else ignored).append(box)
    return care, ignored, calib


def _cell_ap(gt_layout: DatasetLayout, det_dir, frames, cls: str,
             difficulty: str, iou_threshold: float) -> float:
    det_dir = Path(det_dir)
    dets, gts, ignored = [], {}, {}
    for frame_id in frames:
        care, ign, calib = _frame_gt(gt_layout, frame_id, cls, difficulty)
        gts[frame_id] = care
        ignored[frame_id] = ign
        det_path = det_dir / f"{frame_id}.txt"
        if not det_path.exists():
            raise MissingCell(f"missing detection file {det_path}")
        for box, score in kitti.read_kitti_detections(det_path, calib):
            if box.cls == cls:
                dets.append(metrics.Detection(frame_id, box, score))
    return metrics.ap_r40(dets, gts, iou_threshold, ignored=ignored)


def run_eval(gt_root, det_root, corruptions, cls: str = "Car",
             difficulty: str = "Moderate", iou_threshold: float = 0.7,
             severities=(1, 2, 3, 4, 5)) -> metrics.MetricsReport:
    """AP_clean plus the full AP/RCE table from per-cell detection files.

    Layout: det_root/clean/<frame>.txt and det_root/<corruption>/<severity>/.
    """
    if difficulty not in DIFFICULTY_ORDER:
        raise ConfigError(f"difficulty must be one of {list(DIFFICULTY_ORDER)}")
    layout = DatasetLayout(gt_root)
    frames = kitti.enumerate_frames(layout, allow_incomplete=True)
    det_root = Path(det_root)
    ap_clean = _cell_ap(layout, det_root / "clean", frames, cls, difficulty,
                        iou_threshold)
    table = {}
    missing = []
    for c in corruptions:
        for s in severities:
            cell_dir = det_root / c / str(s)
            if not cell_dir.is_dir():
                missing.append((c, s))
                continue
            table[(c, s)] = _cell_ap(layout, cell_dir, frames, cls,
                                     difficulty, iou_threshold)
    if missing:
        raise MissingCell(f"missing detection cells: {missing}")
    return metrics.aggregate(table, ap_clean, corruptions=list(corruptions),
                             severities=severities)


# ---------------------------------------------------------------------------
# inspection rendering
# ---------------------------------------------------------------------------

BEV_PANEL = (384, 384)                  # height, width in px
BEV_RANGE = ((0.0, 70.0), (-40.0, 40.0))  # x forward, y left, meters


def _render_bev(cloud: PointCloud) -> np.ndarray:
    h, w = BEV_PANEL
    (x0, x1), (y0, y1) = BEV_RANGE
    panel = np.full((h, w, 3), 16, dtype=np.uint8)
    if cloud.n:
        xs = cloud.xyz[:, 0]
        ys = cloud.xyz[:, 1]
        keep = (xs >= x0) & (xs < x1) & (ys >= y0) & (ys < y1)
        col = ((ys[keep] - y0) / (y1 - y0) * (w - 1)).astype(int)
        row = (h - 1 - (xs[keep] - x0) / (x1 - x0) * (h - 1)).astype(int)
        panel[row, col] = (80, 220, 80)
    return panel


def _hstack_pad(panels, pad: int = 8) -> np.ndarray:
    height = max(p.shape[0] for p in panels)
    padded = []
    for p in panels:
        canvas = np.zeros((height, p.shape[1], 3), dtype=np.uint8)
        canvas[:p.shape[0]] = p
        padded.append(canvas)
        padded.append(np.zeros((height, pad, 3), dtype=np.uint8))
    return np.hstack(padded[:-1])


def _vstack_pad(rows, pad: int = 8) -> np.ndarray:
    width = max(r.shape[1] for r in rows)
    padded = []
    for r in rows:
        canvas = np.zeros((r.shape[0], width, 3), dtype=np.uint8)
        canvas[:, :r.shape[1]] = r
        padded.append(canvas)
        padded.append(np.zeros((pad, width, 3), dtype=np.uint8))
    return np.vstack(padded[:-1])


def inspect_render(input_root, frame_id: str, corruption: str, severity: int,
                   out_png, master_seed: int = 0,
                   constants: PhysicsConstants = DEFAULT_CONSTANTS) -> None:
    """Side-by-side clean/corrupted BEV scatter and camera image PNG."""
    layout = DatasetLayout(input_root)
    frame = load_frame(layout, frame_id)
    seed = derive_seed(master_seed, corruption, severity, frame_id)
    result = corrupt_frame(frame, corruption, severity, seed, constants)
    bev_row = _hstack_pad([_render_bev(frame.cloud), _render_bev(result.cloud)])
    img_row = _hstack_pad([frame.images["image_2"], result.images["image_2"]])
    kitti.write_image(_vstack_pad([bev_row, img_row]), out_png)
