"""Geometry primitives, voxel occupancy world, and signed-distance machinery.

World frame is right-handed with z up. Angles are radians. Spherical
coordinates are always expressed relative to a center point (the actor):
``rho`` is range, ``theta`` azimuth measured from +x toward +y, ``phi``
elevation above the horizontal plane.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

TWO_PI = 2.0 * math.pi

OCCGRID_MAGIC = "OCCGRID v1"


def vec3(x, y, z):
    """Build a finite float 3-vector."""
    v = np.array([float(x), float(y), float(z)])
    if not np.all(np.isfinite(v)):
        raise ValueError(f"non-finite vector: {v}")
    return v


def wrap_angle(theta):
    """Wrap angle(s) to [-pi, pi). Accepts scalars or arrays."""
    wrapped = (np.asarray(theta, dtype=float) + math.pi) % TWO_PI - math.pi
    if np.ndim(theta) == 0:
        return float(wrapped)
    return wrapped


@dataclass(frozen=True)
class SphericalCoord:
    """Offset from a center point: range rho >= 0, azimuth theta in [-pi, pi),
    elevation phi clamped to [-pi/2, pi/2]."""

    rho: float
    theta: float
    phi: float

    def __post_init__(self):
        if not (math.isfinite(self.rho) and self.rho >= 0.0):
            raise ValueError(f"rho must be finite and >= 0, got {self.rho}")
        object.__setattr__(self, "theta", wrap_angle(self.theta))
        object.__setattr__(self, "phi", float(np.clip(self.phi, -math.pi / 2, math.pi / 2)))


def spherical_offsets(rho, theta, phi):
    """Cartesian offsets for spherical coordinates. Broadcasts; returns (..., 3)."""
    rho = np.asarray(rho, dtype=float)
    theta = np.asarray(theta, dtype=float)
    phi = np.asarray(phi, dtype=float)
    cp = np.cos(phi)
    return np.stack(
        np.broadcast_arrays(
            rho * np.cos(theta) * cp,
            rho * np.sin(theta) * cp,
            rho * np.sin(phi),
        ),
        axis=-1,
    )


def spherical_to_world(center, coord: SphericalCoord):
    """Map a spherical offset around ``center`` to a world-frame point."""
    center = np.asarray(center, dtype=float)
    return center + spherical_offsets(coord.rho, coord.theta, coord.phi)


def world_to_spherical(center, point, eps: float = 1e-12) -> SphericalCoord:
    """Inverse of spherical_to_world. Raises on a degenerate (zero-range) offset."""
    d = np.asarray(point, dtype=float) - np.asarray(center, dtype=float)
    rho = float(np.linalg.norm(d))
    if rho < eps:
        raise ValueError("point coincides with center; spherical angles undefined")
    phi = math.asin(max(-1.0, min(1.0, d[2] / rho)))
    theta = math.atan2(d[1], d[0])
    return SphericalCoord(rho=rho, theta=theta, phi=phi)


@dataclass(frozen=True)
class Pose:
    """Drone/camera pose: world position, heading (yaw about +z, 0 = +x),
    and gimbal tilt below the horizon (positive = pitched down)."""

    position: np.ndarray
    heading: float
    camera_tilt: float = 0.0

    def __post_init__(self):
        p = np.array(self.position, dtype=float)
        if p.shape != (3,) or not np.all(np.isfinite(p)):
            raise ValueError(f"position must be a finite 3-vector, got {self.position}")
        p.setflags(write=False)
        object.__setattr__(self, "position", p)
        object.__setattr__(self, "heading", wrap_angle(self.heading))
        object.__setattr__(self, "camera_tilt", float(self.camera_tilt))


def _sample_lattice(values, origin, voxel_size, oob_value, points, with_grad=False):
    """Trilinear interpolation on a cell-centered lattice.

    value(p) is interpolated between the 8 voxel centers surrounding p;
    corners outside the lattice contribute ``oob_value``. The gradient is the
    analytic derivative of the interpolant (piecewise trilinear, exact).
    """
    pts = np.asarray(points, dtype=float)
    single = pts.ndim == 1
    pts = np.atleast_2d(pts)
    if pts.shape[-1] != 3:
        raise ValueError(f"points must have trailing dimension 3, got shape {pts.shape}")
    lead = pts.shape[:-1]
    pts = pts.reshape(-1, 3)

    u = (pts - origin) / voxel_size - 0.5
    i0 = np.floor(u).astype(np.int64)
    f = u - i0

    nx, ny, nz = values.shape
    out = np.zeros(len(pts))
    grad = np.zeros((len(pts), 3)) if with_grad else None

    for dx, dy, dz in itertools.product((0, 1), repeat=3):
        ix = i0[:, 0] + dx
        iy = i0[:, 1] + dy
        iz = i0[:, 2] + dz
        inb = (
            (ix >= 0) & (ix < nx)
            & (iy >= 0) & (iy < ny)
            & (iz >= 0) & (iz < nz)
        )
        corner = np.full(len(pts), oob_value)
        if np.any(inb):
            corner[inb] = values[ix[inb], iy[inb], iz[inb]]
        wx = f[:, 0] if dx else 1.0 - f[:, 0]
        wy = f[:, 1] if dy else 1.0 - f[:, 1]
        wz = f[:, 2] if dz else 1.0 - f[:, 2]
        out += wx * wy * wz * corner
        if with_grad:
            sx = 1.0 if dx else -1.0
            sy = 1.0 if dy else -1.0
            sz = 1.0 if dz else -1.0
            grad[:, 0] += sx * wy * wz * corner / voxel_size
            grad[:, 1] += wx * sy * wz * corner / voxel_size
            grad[:, 2] += wx * wy * sz * corner / voxel_size

    out = out.reshape(lead)
    if single:
        out = float(out[0])
    if not with_grad:
        return out
    grad = grad.reshape(lead + (3,))
    if single:
        grad = grad[0] if grad.ndim == 2 else grad
    return out, grad


@dataclass(frozen=True)
class OccupancyGrid:
    """Dense voxel occupancy over an axis-aligned box.

    values[i, j, k] is the occupancy probability of the voxel whose center is
    origin + (i + 0.5, j + 0.5, k + 0.5) * voxel_size. Queries outside the
    box return ``oob_value``.
    """

    origin: np.ndarray
    voxel_size: float
    values: np.ndarray
    oob_value: float = 0.0

    def __post_init__(self):
        origin = np.array(self.origin, dtype=float)
        if origin.shape != (3,) or not np.all(np.isfinite(origin)):
            raise ValueError("origin must be a finite 3-vector")
        if not (self.voxel_size > 0):
            raise ValueError(f"voxel_size must be > 0, got {self.voxel_size}")
        vals = np.asarray(self.values, dtype=float)
        if vals.ndim != 3:
            raise ValueError(f"values must be a 3-d array, got shape {vals.shape}")
        if vals.size and (vals.min() < 0.0 or vals.max() > 1.0):
            raise ValueError("occupancy values must lie in [0, 1]")
        if not (0.0 <= self.oob_value <= 1.0):
            raise ValueError(f"oob_value must lie in [0, 1], got {self.oob_value}")
        origin.setflags(write=False)
        vals = np.ascontiguousarray(vals)
        vals.setflags(write=False)
        object.__setattr__(self, "origin", origin)
        object.__setattr__(self, "values", vals)
        object.__setattr__(self, "voxel_size", float(self.voxel_size))
        object.__setattr__(self, "oob_value", float(self.oob_value))

    @property
    def dims(self):
        return self.values.shape

    @property
    def is_empty(self) -> bool:
        """True when every query anywhere returns exactly zero."""
        return self.oob_value == 0.0 and (self.values.size == 0 or self.values.max() == 0.0)

    def voxel_center(self, i, j, k):
        return self.origin + (np.array([i, j, k], dtype=float) + 0.5) * self.voxel_size

    def occupancy_at(self, points):
        """Trilinearly interpolated occupancy at world points (..., 3)."""
        return _sample_lattice(self.values, self.origin, self.voxel_size, self.oob_value, points)

    def occupancy_and_gradient_at(self, points):
        return _sample_lattice(
            self.values, self.origin, self.voxel_size, self.oob_value, points, with_grad=True
        )


@dataclass(frozen=True)
class SignedDistanceField:
    """Trilinearly sampled signed distance lattice: negative inside obstacles,
    positive in free space, ``oob_value`` (a large free-space sentinel) outside."""

    origin: np.ndarray
    voxel_size: float
    values: np.ndarray
    oob_value: float

    def __post_init__(self):
        origin = np.array(self.origin, dtype=float)
        origin.setflags(write=False)
        vals = np.ascontiguousarray(np.asarray(self.values, dtype=float))
        vals.setflags(write=False)
        object.__setattr__(self, "origin", origin)
        object.__setattr__(self, "values", vals)
        object.__setattr__(self, "voxel_size", float(self.voxel_size))
        object.__setattr__(self, "oob_value", float(self.oob_value))

    def distance_at(self, points):
        return _sample_lattice(self.values, self.origin, self.voxel_size, self.oob_value, points)

    def distance_and_gradient_at(self, points):
        return _sample_lattice(
            self.values, self.origin, self.voxel_size, self.oob_value, points, with_grad=True
        )


def sdf_from_grid(grid: OccupancyGrid, occupancy_threshold: float = 0.5,
                  max_distance: float = 1e6) -> SignedDistanceField:
    """Exact Euclidean signed distance between voxel centers.

    A voxel is an obstacle when its occupancy >= occupancy_threshold. For a
    free voxel the value is the distance to the nearest obstacle center; for
    an obstacle voxel it is minus the distance to the nearest free center.
    Distances are voxel_size * sqrt of an integer, computed from the nearest
    feature index so they are bit-reproducible.
    """
    if not (0.0 < occupancy_threshold <= 1.0):
        raise ValueError(f"occupancy_threshold must lie in (0, 1], got {occupancy_threshold}")
    occ = grid.values >= occupancy_threshold
    if not occ.any():
        values = np.full(grid.dims, max_distance)
    elif occ.all():
        values = np.full(grid.dims, -max_distance)
    else:
        d_out = _exact_center_distance(~occ)
        d_in = _exact_center_distance(occ)
        values = np.where(occ, -d_in, d_out) * grid.voxel_size
    return SignedDistanceField(
        origin=grid.origin,
        voxel_size=grid.voxel_size,
        values=values,
        oob_value=max_distance,
    )


def _exact_center_distance(free_mask):
    """Per-voxel Euclidean distance (in voxels) to the nearest voxel where
    free_mask is False. Recomputed from feature indices in integer arithmetic."""
    idx = ndimage.distance_transform_edt(free_mask, return_distances=False, return_indices=True)
    own = np.indices(free_mask.shape)
    delta = own.astype(np.int64) - idx.astype(np.int64)
    return np.sqrt((delta * delta).sum(axis=0).astype(float))


@dataclass(frozen=True)
class WorldModel:
    """Occupancy grid paired with its signed distance field."""

    grid: OccupancyGrid
    sdf: SignedDistanceField
    occupancy_threshold: float = 0.5

    @classmethod
    def from_grid(cls, grid: OccupancyGrid, occupancy_threshold: float = 0.5,
                  max_distance: float = 1e6) -> "WorldModel":
        return cls(
            grid=grid,
            sdf=sdf_from_grid(grid, occupancy_threshold, max_distance),
            occupancy_threshold=occupancy_threshold,
        )

    @property
    def is_empty(self) -> bool:
        return self.grid.is_empty

    def occupancy_at(self, points):
        return self.grid.occupancy_at(points)

    def sdf_at(self, points):
        return self.sdf.distance_at(points)


def empty_world(origin=(0.0, 0.0, 0.0), dims=(2, 2, 2), voxel_size: float = 1.0) -> WorldModel:
    grid = OccupancyGrid(origin=np.asarray(origin, float), voxel_size=voxel_size,
                         values=np.zeros(dims))
    return WorldModel.from_grid(grid)


def save_occgrid(grid: OccupancyGrid, path):
    """Write a grid as an ASCII header line plus a little-endian float64
    payload in x-major (C) order. Round-trips bit-exactly."""
    nx, ny, nz = grid.dims
    ox, oy, oz = (float(x) for x in grid.origin)
    header = (
        f"{OCCGRID_MAGIC} {nx} {ny} {nz} {grid.voxel_size!r} "
        f"{ox!r} {oy!r} {oz!r}\n"
    )
    with open(path, "wb") as fh:
        fh.write(header.encode("ascii"))
        fh.write(np.ascontiguousarray(grid.values, dtype="<f8").tobytes())


def load_occgrid(path, oob_value: float = 0.0) -> OccupancyGrid:
    with open(path, "rb") as fh:
        header = fh.readline().decode("ascii").strip()
        payload = fh.read()
    parts = header.split()
    if len(parts) != 9 or " ".join(parts[:2]) != OCCGRID_MAGIC:
        raise ValueError(f"not an {OCCGRID_MAGIC} file: header {header!r}")
    nx, ny, nz = (int(p) for p in parts[2:5])
    voxel_size = float(parts[5])
    origin = np.array([float(p) for p in parts[6:9]])
    expected = nx * ny * nz * 8
    if len(payload) != expected:
        raise ValueError(f"payload is {len(payload)} bytes, expected {expected}")
    values = np.frombuffer(payload, dtype="<f8").reshape(nx, ny, nz)
    return OccupancyGrid(origin=origin, voxel_size=voxel_size, values=values,
                         oob_value=oob_value)
