"""SE(2) pose algebra and the differentiable warp-and-sample operator.

Grid convention, used everywhere: cell (row, col) of an H x W raster
with cell size m has its center at ((col + 0.5) * m - W * m / 2,
(row + 0.5) * m - H * m / 2) in the owning agent's frame, x right /
y down in raster order.  A pose (x, y, theta) maps agent-frame points
into the world: p_world = R(theta) @ p + (x, y).
"""

import math
from dataclasses import dataclass, field

import numpy as np

from coopbev import tensor as T

TWO_PI = 2.0 * math.pi


def wrap_angle(theta):
    """Normalize an angle to (-pi, pi]."""
    t = math.fmod(theta, TWO_PI)
    if t <= -math.pi:
        t += TWO_PI
    elif t > math.pi:
        t -= TWO_PI
    return t


@dataclass(frozen=True)
class Pose2D:
    x: float
    y: float
    theta: float

    def __post_init__(self):
        object.__setattr__(self, "theta", wrap_angle(self.theta))


IDENTITY_POSE = Pose2D(0.0, 0.0, 0.0)


def compose(p, q):
    """Pose applying q first, then p."""
    c, s = math.cos(p.theta), math.sin(p.theta)
    return Pose2D(
        c * q.x - s * q.y + p.x,
        s * q.x + c * q.y + p.y,
        wrap_angle(p.theta + q.theta),
    )


def inverse(p):
    c, s = math.cos(p.theta), math.sin(p.theta)
    # R(-theta) @ t, negated
    return Pose2D(-(c * p.x + s * p.y), -(-s * p.x + c * p.y), wrap_angle(-p.theta))


def relative_pose(sender, receiver):
    """Pose mapping receiver-frame coordinates into the sender frame."""
    return compose(inverse(sender), receiver)


def transform_points(pose, points):
    """Apply a pose to an [n, 2] point array."""
    c, s = math.cos(pose.theta), math.sin(pose.theta)
    x, y = points[:, 0], points[:, 1]
    return np.stack([c * x - s * y + pose.x, s * x + c * y + pose.y], axis=1)


@dataclass
class PointCloud:
    """Planar points in a named frame, with per-point hit class labels."""

    points: np.ndarray  # [n, 2] float64
    frame: str
    classes: np.ndarray = field(default=None)  # [n] uint8, 0 = obstacle, 1 = vehicle

    def __post_init__(self):
        self.points = np.asarray(self.points, dtype=np.float64).reshape(-1, 2)
        if self.classes is None:
            self.classes = np.zeros(len(self.points), dtype=np.uint8)
        else:
            self.classes = np.asarray(self.classes, dtype=np.uint8)
        if len(self.classes) != len(self.points):
            raise ValueError("classes length must match points")
        if not np.isfinite(self.points).all():
            raise ValueError("point coordinates must be finite")

    def __len__(self):
        return len(self.points)


def warp_points(pc, frm, to, out_frame):
    """Rigidly transform a cloud from the `frm` pose's frame into `to`'s."""
    rel = relative_pose(to, frm)  # frm-frame coords -> to-frame coords
    return PointCloud(transform_points(rel, pc.points), out_frame, pc.classes.copy())


def stack_clouds(clouds, frame):
    """Concatenate clouds already expressed in a common frame."""
    if not clouds:
        return PointCloud(np.empty((0, 2)), frame)
    pts = np.concatenate([c.points for c in clouds], axis=0)
    cls = np.concatenate([c.classes for c in clouds], axis=0)
    return PointCloud(pts, frame, cls)


def warp_grid(sender, receiver, h, w, meters_per_cell):
    """Source (row, col) sample coordinates in the sender grid for every
    receiver cell.  Computed in cell units so an identity relative pose
    yields exact integer coordinates.
    """
    rel = relative_pose(sender, receiver)
    cols = np.arange(w, dtype=np.float64) + 0.5 - w / 2.0
    rows = np.arange(h, dtype=np.float64) + 0.5 - h / 2.0
    u, v = np.meshgrid(cols, rows)  # receiver cell-unit coordinates
    c, s = math.cos(rel.theta), math.sin(rel.theta)
    us = c * u - s * v + rel.x / meters_per_cell
    vs = s * u + c * v + rel.y / meters_per_cell
    src_cols = us + (w / 2.0 - 0.5)
    src_rows = vs + (h / 2.0 - 0.5)
    return src_rows, src_cols


def warp_feature_map(f, sender, receiver, meters_per_cell):
    """Resample a sender-frame [H, W, C] map onto the receiver grid.

    Bilinear, zero outside the sender's map, differentiable in f.
    """
    if meters_per_cell <= 0:
        raise ValueError("meters_per_cell must be positive")
    h, w = f.shape[0], f.shape[1]
    rows, cols = warp_grid(sender, receiver, h, w, meters_per_cell)
    return T.bilinear_warp(f, rows, cols)
