"""Thin-plate-spline warping: interpolating 2D warp from paired control points.

Kernel U(r) = r^2 log(r^2) with an affine part and the usual side
conditions. Images are warped by inverse mapping (fit the dst -> src
spline, sample the source bilinearly, edge-clamp out of bounds), so the
output has no holes.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateControlPoints
from .types import validate_image

SINGULARITY_TOL = 1e-8


def _kernel(r2: np.ndarray) -> np.ndarray:
    """U(r) = r^2 log(r^2), with U(0) = 0."""
    out = np.zeros_like(r2)
    nz = r2 > 0
    out[nz] = r2[nz] * np.log(r2[nz])
    return out


@dataclass(frozen=True)
class TpsWarp:
    """Solved spline mapping src control points exactly onto dst."""

    src: np.ndarray          # (n, 2)
    dst: np.ndarray          # (n, 2)
    weights: np.ndarray      # (n, 2) radial coefficients
    affine: np.ndarray       # (3, 2) rows: constant, x, y

    def __call__(self, pts: np.ndarray) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(pts, dtype=np.float64))
        d = pts[:, None, :] - self.src[None, :, :]
        u = _kernel(np.sum(d * d, axis=2))
        p = np.hstack([np.ones((pts.shape[0], 1)), pts])
        return u @ self.weights + p @ self.affine


def tps_fit(src: np.ndarray, dst: np.ndarray) -> TpsWarp:
    """Solve the TPS linear system for the src -> dst warp.

    Raises DegenerateControlPoints when fewer than 3 points are given or
    the system is singular beyond tolerance (collinear/duplicated points).
    """
    src = np.atleast_2d(np.asarray(src, dtype=np.float64))
    dst = np.atleast_2d(np.asarray(dst, dtype=np.float64))
    if src.shape != dst.shape or src.ndim != 2 or src.shape[1] != 2:
        raise ValueError("src and dst must both be (n, 2)")
    n = src.shape[0]
    if n < 3:
        raise DegenerateControlPoints(f"need >= 3 control points, got {n}")

    d = src[:, None, :] - src[None, :, :]
    k = _kernel(np.sum(d * d, axis=2))
    p = np.hstack([np.ones((n, 1)), src])
    lhs = np.zeros((n + 3, n + 3))
    lhs[:n, :n] = k
    lhs[:n, n:] = p
    lhs[n:, :n] = p.T
    rhs = np.zeros((n + 3, 2))
    rhs[:n] = dst

    # Degeneracy checks: duplicated points make K singular, collinear points
    # make the affine block rank-deficient.
    diff = src[:, None, :] - src[None, :, :]
    pair_d2 = np.sum(diff * diff, axis=2)
    np.fill_diagonal(pair_d2, np.inf)
    scale2 = max(pair_d2[np.isfinite(pair_d2)].max(), 1.0)
    if pair_d2.min() <= SINGULARITY_TOL * scale2:
        raise DegenerateControlPoints("duplicated control points")
    centered = src - src.mean(axis=0)
    sing = np.linalg.svd(centered, compute_uv=False)
    if sing[-1] <= SINGULARITY_TOL * sing[0]:
        raise DegenerateControlPoints("collinear control points")
    try:
        sol = np.linalg.solve(lhs, rhs)
    except np.linalg.LinAlgError as exc:
        raise DegenerateControlPoints(str(exc)) from exc
    warp = TpsWarp(src=src, dst=dst, weights=sol[:n], affine=sol[n:])
    if np.abs(warp(src) - dst).max() > 1e-6 * max(1.0, np.abs(dst).max()):
        raise DegenerateControlPoints("TPS system is numerically singular")
    return warp


def bilinear_sample(img: np.ndarray, x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Sample an (H, W[, C]) array at fractional (x, y) with edge clamping."""
    h, w = img.shape[:2]
    x = np.clip(x, 0.0, w - 1.0)
    y = np.clip(y, 0.0, h - 1.0)
    x0 = np.floor(x).astype(np.int64)
    y0 = np.floor(y).astype(np.int64)
    x1 = np.minimum(x0 + 1, w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    fx = x - x0
    fy = y - y0
    if img.ndim == 3:
        fx = fx[..., None]
        fy = fy[..., None]
    imgf = img.astype(np.float64)
    top = imgf[y0, x0] * (1 - fx) + imgf[y0, x1] * fx
    bot = imgf[y1, x0] * (1 - fx) + imgf[y1, x1] * fx
    return top * (1 - fy) + bot * fy


def tps_apply(img: np.ndarray, warp: TpsWarp, region=None) -> np.ndarray:
    """Warp an image so each src control point's color lands on its dst point.

    region: optional (u0, v0, u1, v1) half-open pixel rectangle; only those
    pixels are rewritten. Inverse mapping uses the dst -> src spline.
    """
    img = validate_image(img)
    h, w = img.shape[:2]
    if region is None:
        u0, v0, u1, v1 = 0, 0, w, h
    else:
        u0, v0, u1, v1 = region
        u0 = max(0, int(u0)); v0 = max(0, int(v0))
        u1 = min(w, int(u1)); v1 = min(h, int(v1))
        if u0 >= u1 or v0 >= v1:
            return img
    inverse = tps_fit(warp.dst, warp.src)
    uu, vv = np.meshgrid(np.arange(u0, u1, dtype=np.float64),
                         np.arange(v0, v1, dtype=np.float64))
    src_pts = inverse(np.column_stack([uu.ravel(), vv.ravel()]))
    patch = bilinear_sample(img, src_pts[:, 0], src_pts[:, 1])
    patch = patch.reshape(v1 - v0, u1 - u0, 3)
    out = img.copy()
    out[v0:v1, u0:u1] = np.clip(np.rint(patch), 0, 255).astype(np.uint8)
    return out
