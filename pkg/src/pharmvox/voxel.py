"""Gaussian occupancy voxelization of pharmacophore profiles and training-time augmentation."""

from __future__ import annotations

import os
import struct
from dataclasses import dataclass

import numpy as np
from scipy.spatial.transform import Rotation

from .pharmacophore import N_CHANNELS, SHAPE, PharmacophoreProfile

VOXG_MAGIC = b"VOXG"
VOXG_VERSION = 1
_HEADER = struct.Struct("<4sHHHf")

SIGMA_SCALE = 0.93  # Gaussian width is 0.93 * r
CUTOFF_SIGMAS = 4.0  # contributions beyond 4 widths are dropped (< e^-16)


class CoverageError(ValueError):
    """A profile point falls outside the grid extent."""

    def __init__(self, channel, point, message=None):
        self.channel = channel
        self.point = point
        super().__init__(message or f"channel {channel}: point {np.round(point, 3).tolist()} outside grid extent")


@dataclass(frozen=True)
class GridSpec:
    d: int = 32
    resolution: float = 0.5
    radius: float = 1.0

    def __post_init__(self):
        if self.d < 8:
            raise ValueError("grid needs d >= 8")
        if self.resolution <= 0 or self.radius <= 0:
            raise ValueError("resolution and radius must be positive")

    @property
    def extent(self):
        return self.d * self.resolution

    @property
    def sigma(self):
        return SIGMA_SCALE * self.radius

    def axis(self, center_coord):
        """Voxel-centre coordinates along one axis."""
        return center_coord + (np.arange(self.d) - (self.d - 1) / 2.0) * self.resolution

    def to_dict(self):
        return {"d": self.d, "resolution": self.resolution, "radius": self.radius}


PRESETS = {
    "desk": GridSpec(32, 0.5),
    "paper48": GridSpec(48, 0.35),
    "paper64": GridSpec(64, 0.35),
}


@dataclass(frozen=True)
class VoxelGrid:
    values: np.ndarray  # (C, d, d, d) indexed [c, x, y, z]
    spec: GridSpec
    center: tuple = (0.0, 0.0, 0.0)

    def __post_init__(self):
        v = np.asarray(self.values)
        d = self.spec.d
        if v.ndim != 4 or v.shape[1:] != (d, d, d):
            raise ValueError(f"grid values must be (C, {d}, {d}, {d}), got {v.shape}")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def channels(self):
        return self.values.shape[0]


def check_coverage(profile: PharmacophoreProfile, spec: GridSpec, center):
    half = spec.extent / 2.0
    for c, pts in enumerate(profile.points):
        if len(pts) == 0:
            continue
        off = np.abs(pts - center)
        bad = np.where(np.any(off > half, axis=1))[0]
        if len(bad):
            raise CoverageError(c, pts[bad[0]])


def _channel_occupancy(points, spec, center, out_complement):
    s2 = spec.sigma ** 2
    cutoff = CUTOFF_SIGMAS * spec.sigma
    axes = [spec.axis(center[k]) for k in range(3)]
    start = [axes[k][0] for k in range(3)]
    res = spec.resolution
    d = spec.d
    for p in points:
        lo = [max(0, int(np.ceil((p[k] - cutoff - start[k]) / res))) for k in range(3)]
        hi = [min(d - 1, int(np.floor((p[k] + cutoff - start[k]) / res))) for k in range(3)]
        if any(lo[k] > hi[k] for k in range(3)):
            continue
        dx2 = (axes[0][lo[0]:hi[0] + 1] - p[0]) ** 2
        dy2 = (axes[1][lo[1]:hi[1] + 1] - p[1]) ** 2
        dz2 = (axes[2][lo[2]:hi[2] + 1] - p[2]) ** 2
        r2 = dx2[:, None, None] + dy2[None, :, None] + dz2[None, None, :]
        val = np.exp(-r2 / s2)
        val[r2 > cutoff * cutoff] = 0.0
        out_complement[lo[0]:hi[0] + 1, lo[1]:hi[1] + 1, lo[2]:hi[2] + 1] *= 1.0 - val


def voxelize(profile: PharmacophoreProfile, spec: GridSpec = GridSpec(), center=None, dtype=np.float64,
             check=True) -> VoxelGrid:
    """Occupancy 1 - prod(1 - exp(-d^2 / (0.93 r)^2)) per channel.

    The grid is centred on the shape centroid unless ``center`` is given.
    Raises ``CoverageError`` when a point lies outside the grid.
    """
    center = profile.shape_centroid() if center is None else np.asarray(center, float)
    if check:
        check_coverage(profile, spec, center)
    d = spec.d
    out = np.empty((N_CHANNELS, d, d, d), dtype=np.float64)
    for c, pts in enumerate(profile.points):
        comp = np.ones((d, d, d))
        _channel_occupancy(pts, spec, center, comp)
        out[c] = 1.0 - comp
    return VoxelGrid(out.astype(dtype, copy=False), spec, tuple(float(x) for x in center))


def random_rigid(rng, max_translation=1.0):
    """Rotation from three Euler angles ~ U[0, 2pi) and a translation ~ U[-t, t]^3."""
    angles = rng.uniform(0.0, 2 * np.pi, size=3)
    translation = rng.uniform(-max_translation, max_translation, size=3)
    return Rotation.from_euler("zyz", angles).as_matrix(), translation


def augment(profile: PharmacophoreProfile, rng, max_translation=1.0) -> PharmacophoreProfile:
    """Random rotation about the shape centroid followed by a random translation."""
    rot, t = random_rigid(rng, max_translation)
    return profile.transformed(rot, t, center=profile.shape_centroid())


def augmented_grid(profile, spec, rng, max_translation=1.0, dtype=np.float32):
    """Voxelize an augmented copy, keeping the grid on the un-augmented centroid.

    Re-centring on the moved profile would cancel the translation.
    """
    center = profile.shape_centroid()
    moved = augment(profile, rng, max_translation)
    return voxelize(moved, spec, center=center, dtype=dtype)


# --------------------------------------------------------------------------- .voxg files


def grid_bytes(grid: VoxelGrid) -> bytes:
    c, d = grid.values.shape[0], grid.spec.d
    header = _HEADER.pack(VOXG_MAGIC, VOXG_VERSION, c, d, grid.spec.resolution)
    # channel-major, x fastest: memory order [c, z, y, x]
    payload = np.ascontiguousarray(grid.values.transpose(0, 3, 2, 1), dtype="<f4").tobytes()
    return header + payload


def grid_from_bytes(data: bytes, radius=1.0) -> VoxelGrid:
    if len(data) < _HEADER.size:
        raise ValueError("truncated .voxg header")
    magic, version, c, d, res = _HEADER.unpack_from(data)
    if magic != VOXG_MAGIC:
        raise ValueError("not a .voxg file (bad magic)")
    if version != VOXG_VERSION:
        raise ValueError(f"unsupported .voxg version {version}")
    n = c * d ** 3
    payload = np.frombuffer(data, dtype="<f4", count=n, offset=_HEADER.size) if len(data) >= _HEADER.size + 4 * n else None
    if payload is None:
        raise ValueError("truncated .voxg payload")
    values = payload.reshape(c, d, d, d).transpose(0, 3, 2, 1).astype(np.float32)
    return VoxelGrid(values, GridSpec(d, float(res), radius))


def save_grid(grid: VoxelGrid, path):
    from .io_utils import atomic_write_bytes

    atomic_write_bytes(path, grid_bytes(grid))


def load_grid(path) -> VoxelGrid:
    with open(os.fspath(path), "rb") as fh:
        return grid_from_bytes(fh.read())
