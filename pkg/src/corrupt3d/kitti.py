"""KITTI-layout dataset readers/writers and the reproducibility manifest.

Labels are converted once at ingestion from the camera frame to the
internal LiDAR frame (x forward, y left, z up); all corruption math then
runs in the LiDAR frame. Internally the box center is the volumetric
center; KITTI stores the bottom-face center.
"""
from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np
from PIL import Image, UnidentifiedImageError

from .errors import (IncompleteFrame, MalformedCalib, MalformedImage,
                     MalformedLabel, MalformedPointFile)
from .types import (Box3D, Calibration, Difficulty, PointCloud, Pose,
                    normalize_yaw, validate_image)

POINT_RECORD_BYTES = 16     # four little-endian float32 per point

# KITTI difficulty rule: (min 2D box height px, max occlusion, max truncation)
_DIFFICULTY_RULES = (
    (Difficulty.EASY, 40.0, 0, 0.15),
    (Difficulty.MODERATE, 25.0, 1, 0.30),
    (Difficulty.HARD, 25.0, 2, 0.50),
)


# ---------------------------------------------------------------------------
# point clouds
# ---------------------------------------------------------------------------

def read_point_bin(path) -> PointCloud:
    raw = Path(path).read_bytes()
    if len(raw) % POINT_RECORD_BYTES != 0:
        raise MalformedPointFile(
            f"{path}: length {len(raw)} not divisible by {POINT_RECORD_BYTES}")
    data = np.frombuffer(raw, dtype="<f4").reshape(-1, 4)
    bad = ~np.isfinite(data)
    if bad.any():
        offset = int(np.argwhere(bad)[0, 0]) * POINT_RECORD_BYTES
        raise MalformedPointFile(f"{path}: non-finite value near byte {offset}")
    return PointCloud(data)


def write_point_bin(cloud: PointCloud, path) -> None:
    Path(path).write_bytes(cloud.data.astype("<f4").tobytes())


# ---------------------------------------------------------------------------
# calib
# ---------------------------------------------------------------------------

def _orthonormalize(r: np.ndarray) -> np.ndarray:
    """Nearest rotation matrix (text-file rotations are slightly off)."""
    u, _, vt = np.linalg.svd(r)
    out = u @ vt
    if np.linalg.det(out) < 0:
        out = u @ np.diag([1.0, 1.0, -1.0]) @ vt
    return out


def read_kitti_calib(path) -> Calibration:
    entries = {}
    for lineno, line in enumerate(Path(path).read_text().splitlines(), start=1):
        line = line.strip()
        if not line:
            continue
        key, _, rest = line.partition(":")
        try:
            entries[key.strip()] = np.array([float(v) for v in rest.split()])
        except ValueError as exc:
            raise MalformedCalib(f"{path}:{lineno}: {exc}") from exc
    if "P2" not in entries or "Tr_velo_to_cam" not in entries:
        raise MalformedCalib(f"{path}: missing P2 or Tr_velo_to_cam")
    try:
        p2 = entries["P2"].reshape(3, 4)
        tr = entries["Tr_velo_to_cam"].reshape(3, 4)
        r0 = entries["R0_rect"].reshape(3, 3) if "R0_rect" in entries else np.eye(3)
    except ValueError as exc:
        raise MalformedCalib(f"{path}: {exc}") from exc
    rot = _orthonormalize(r0 @ tr[:, :3])
    trans = r0 @ tr[:, 3]
    return Calibration(lidar_to_cam=Pose(rot, trans), cam_intrinsics=p2)


def write_kitti_calib(calib: Calibration, path) -> None:
    """Write P2 and the (rectified-folded) Tr_velo_to_cam; R0_rect identity."""
    def row(vals):
        return " ".join(f"{v:.12e}" for v in vals)

    tr = np.hstack([calib.lidar_to_cam.rotation,
                    calib.lidar_to_cam.translation[:, None]])
    lines = [
        f"P2: {row(calib.cam_intrinsics.ravel())}",
        f"R0_rect: {row(np.eye(3).ravel())}",
        f"Tr_velo_to_cam: {row(tr.ravel())}",
    ]
    Path(path).write_text("\n".join(lines) + "\n")


# ---------------------------------------------------------------------------
# labels
# ---------------------------------------------------------------------------

def _difficulty(box_height: float, occlusion: int, truncation: float) -> str:
    for diff, min_h, max_occ, max_trunc in _DIFFICULTY_RULES:
        if box_height >= min_h and occlusion <= max_occ and truncation <= max_trunc:
            return diff.value
    return Difficulty.UNKNOWN.value


def _label_to_box(fields, calib: Calibration):
    """One KITTI label record -> (Box3D in LiDAR frame, score or None)."""
    cls = fields[0]
    truncation = float(fields[1])
    occlusion = int(float(fields[2]))
    bbox = [float(v) for v in fields[4:8]]
    h, w, l = (float(v) for v in fields[8:11])
    loc_cam = np.array([float(v) for v in fields[11:14]])
    ry = float(fields[14])
    score = float(fields[15]) if len(fields) > 15 else None

    center_cam = loc_cam + np.array([0.0, -h / 2.0, 0.0])   # bottom -> center
    center = calib.lidar_to_cam.inverse().apply(center_cam)[0]
    yaw = normalize_yaw(-ry - np.pi / 2.0)
    box = Box3D(center=tuple(center), dims=(l, w, h), yaw=yaw, cls=cls,
                difficulty=_difficulty(bbox[3] - bbox[1], occlusion, truncation))
    return box, score


def read_kitti_label(path, calib: Calibration) -> list[Box3D]:
    """Ground-truth boxes in the LiDAR frame; DontCare records skipped."""
    boxes = []
    for lineno, line in enumerate(Path(path).read_text().splitlines(), start=1):
        fields = line.split()
        if not fields:
            continue
        if fields[0] == "DontCare":
            continue
        if len(fields) < 15:
            raise MalformedLabel(f"{path}:{lineno}: expected >= 15 fields")
        try:
            box, _ = _label_to_box(fields, calib)
        except (ValueError, IndexError) as exc:
            raise MalformedLabel(f"{path}:{lineno}: {exc}") from exc
        boxes.append(box)
    return boxes


def read_kitti_detections(path, calib: Calibration):
    """Detections: label format plus a trailing score column.

    Returns a list of (Box3D, score).
    """
    dets = []
    for lineno, line in enumerate(Path(path).read_text().splitlines(), start=1):
        fields = line.split()
        if not fields:
            continue
        if fields[0] == "DontCare":
            continue
        if len(fields) < 16:
            raise MalformedLabel(f"{path}:{lineno}: expected 16 fields with score")
        try:
            box, score = _label_to_box(fields, calib)
        except (ValueError, IndexError) as exc:
            raise MalformedLabel(f"{path}:{lineno}: {exc}") from exc
        dets.append((box, score))
    return dets


# ---------------------------------------------------------------------------
# images
# ---------------------------------------------------------------------------

def read_image(path) -> np.ndarray:
    try:
        with Image.open(path) as im:
            return validate_image(np.asarray(im.convert("RGB")))
    except (UnidentifiedImageError, OSError) as exc:
        raise MalformedImage(f"{path}: {exc}") from exc


def write_image(img: np.ndarray, path) -> None:
    """Lossless PNG with fixed encoder settings (bit-exact across platforms)."""
    img = validate_image(img)
    Image.fromarray(img).save(path, format="PNG", optimize=False,
                              compress_level=6)


# ---------------------------------------------------------------------------
# layout + manifest
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class DatasetLayout:
    """Root of a KITTI-style dataset with the standard subdirectories."""

    root: Path

    def __post_init__(self):
        object.__setattr__(self, "root", Path(self.root))

    @property
    def velodyne(self) -> Path:
        return self.root / "velodyne"

    @property
    def image_2(self) -> Path:
        return self.root / "image_2"

    @property
    def calib(self) -> Path:
        return self.root / "calib"

    @property
    def label_2(self) -> Path:
        return self.root / "label_2"

    def image_path(self, frame_id: str) -> Path:
        png = self.image_2 / f"{frame_id}.png"
        if png.exists():
            return png
        return self.image_2 / f"{frame_id}.jpg"


def enumerate_frames(layout: DatasetLayout, require_calib: bool = True,
                     allow_incomplete: bool = False) -> list[str]:
    """Frame ids in lexicographic order, checked for modality completeness."""
    ids = sorted(p.stem for p in layout.velodyne.glob("*.bin"))
    complete = []
    for frame_id in ids:
        missing = []
        if not layout.image_path(frame_id).exists():
            missing.append("image")
        if require_calib and not (layout.calib / f"{frame_id}.txt").exists():
            missing.append("calib")
        if missing:
            if allow_incomplete:
                continue
            raise IncompleteFrame(f"frame {frame_id}: missing {', '.join(missing)}")
        complete.append(frame_id)
    return complete


@dataclass(frozen=True)
class ManifestEntry:
    frame: str
    corruption: str
    severity: int
    seed: int
    file: str
    sha256: str


def sha256_file(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def write_manifest(entries, path) -> None:
    """JSON Lines, one entry per output artifact, stable field order."""
    with open(path, "w") as fh:
        for entry in entries:
            fh.write(json.dumps(asdict(entry)) + "\n")


def read_manifest(path) -> list[ManifestEntry]:
    entries = []
    for line in Path(path).read_text().splitlines():
        if line.strip():
            entries.append(ManifestEntry(**json.loads(line)))
    return entries
