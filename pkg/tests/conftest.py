import numpy as np
import pytest

from corrupt3d.kitti import write_image, write_point_bin
from corrupt3d.types import Box3D, Calibration, PointCloud, Pose

# KITTI-style LiDAR -> camera axis permutation: cam x = -y, cam y = -z, cam z = x
LIDAR_TO_CAM_R = np.array([[0.0, -1.0, 0.0],
                           [0.0, 0.0, -1.0],
                           [1.0, 0.0, 0.0]])


def make_calib(f: float = 60.0, cx: float = 48.0, cy: float = 32.0) -> Calibration:
    p = np.array([[f, 0.0, cx, 0.0],
                  [0.0, f, cy, 0.0],
                  [0.0, 0.0, 1.0, 0.0]])
    return Calibration(lidar_to_cam=Pose(LIDAR_TO_CAM_R, np.zeros(3)),
                       cam_intrinsics=p)


def random_cloud(rng: np.random.Generator, n: int = 2000,
                 span: float = 40.0) -> PointCloud:
    xyz = rng.uniform(-span, span, size=(n, 3))
    xyz[:, 0] = np.abs(xyz[:, 0]) + 1.0          # keep points in front
    intensity = rng.uniform(0.0, 1.0, size=(n, 1))
    return PointCloud(np.hstack([xyz, intensity]).astype(np.float32))


def random_box(rng: np.random.Generator, span: float = 30.0) -> Box3D:
    return Box3D(center=(rng.uniform(2, span), rng.uniform(-10, 10),
                         rng.uniform(-1, 1)),
                 dims=(rng.uniform(1.0, 5.0), rng.uniform(1.0, 3.0),
                       rng.uniform(1.0, 2.5)),
                 yaw=rng.uniform(-np.pi, np.pi))


def box_with_points(rng: np.random.Generator, n_inside: int,
                    box: Box3D) -> np.ndarray:
    """World points sampled uniformly inside `box`."""
    from corrupt3d.geometry import from_box_local

    half = np.array([box.l, box.w, box.h]) / 2.0
    local = rng.uniform(-1.0, 1.0, size=(n_inside, 3)) * half * 0.99
    return from_box_local(local, box)


def _label_line(box: Box3D, calib: Calibration, bbox_height: float = 45.0,
                score: float | None = None) -> str:
    center_cam = calib.lidar_to_cam.apply(np.asarray(box.center))[0]
    loc = center_cam + np.array([0.0, box.h / 2.0, 0.0])   # center -> bottom
    ry = -box.yaw - np.pi / 2.0
    fields = [box.cls, "0.00", "0", "0.00",
              "100.00", "100.00", "150.00", f"{100.0 + bbox_height:.2f}",
              f"{box.h:.6f}", f"{box.w:.6f}", f"{box.l:.6f}",
              f"{loc[0]:.6f}", f"{loc[1]:.6f}", f"{loc[2]:.6f}", f"{ry:.6f}"]
    if score is not None:
        fields.append(f"{score:.6f}")
    return " ".join(fields)


def write_calib_file(path, calib: Calibration) -> None:
    def row(vals):
        return " ".join(f"{v:.12e}" for v in vals)

    tr = np.hstack([calib.lidar_to_cam.rotation,
                    calib.lidar_to_cam.translation[:, None]])
    path.write_text(
        f"P2: {row(calib.cam_intrinsics.ravel())}\n"
        f"R0_rect: {row(np.eye(3).ravel())}\n"
        f"Tr_velo_to_cam: {row(tr.ravel())}\n")


def write_label_file(path, boxes, calib, scores=None) -> None:
    lines = []
    for i, box in enumerate(boxes):
        score = scores[i] if scores is not None else None
        lines.append(_label_line(box, calib, score=score))
    path.write_text("\n".join(lines) + ("\n" if lines else ""))


def make_kitti_dataset(root, n_frames: int = 3, seed: int = 7,
                       n_points: int = 2000, image_hw=(64, 96),
                       boxes_per_frame: int = 2):
    """Synthetic KITTI-layout dataset; returns the frame id list."""
    rng = np.random.default_rng(seed)
    for sub in ("velodyne", "image_2", "calib", "label_2"):
        (root / sub).mkdir(parents=True, exist_ok=True)
    calib = make_calib()
    frame_ids = []
    for i in range(n_frames):
        frame_id = f"{i:06d}"
        frame_ids.append(frame_id)
        boxes = []
        extra = []
        for _ in range(boxes_per_frame):
            box = Box3D(center=(rng.uniform(8, 25), rng.uniform(-4, 4),
                                rng.uniform(-0.5, 0.5)),
                        dims=(4.0, 1.8, 1.6), yaw=rng.uniform(-0.5, 0.5))
            boxes.append(box)
            extra.append(box_with_points(rng, 120, box))
        cloud = random_cloud(rng, n_points)
        xyz = np.vstack([cloud.xyz] + extra)
        intensity = np.concatenate(
            [cloud.intensity, rng.uniform(0, 1, 120 * boxes_per_frame)])
        full = PointCloud(np.column_stack([xyz, intensity]).astype(np.float32))
        write_point_bin(full, root / "velodyne" / f"{frame_id}.bin")
        img = rng.integers(0, 256, size=(*image_hw, 3), dtype=np.uint8)
        write_image(img, root / "image_2" / f"{frame_id}.png")
        write_calib_file(root / "calib" / f"{frame_id}.txt", calib)
        write_label_file(root / "label_2" / f"{frame_id}.txt", boxes, calib)
    return frame_ids


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
