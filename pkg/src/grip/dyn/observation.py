"""Terrain height map and the flat controller observation."""
from __future__ import annotations

import numpy as np

from ..exceptions import LayoutMismatch
from ..insole import SensorObservation
from ..rotmath import heading_rotation, rot6d_from_matrix
from ..statediff import BLOCK_SHAPES, FULL_MASK, STATE_DIFF_WIDTH, StateDifference

GRID_SIZE = 25
GRID_EXTENT = 1.5
GRID_SPACING = GRID_EXTENT / (GRID_SIZE - 1)  # 0.0625 m
HEIGHT_MAP_WIDTH = GRID_SIZE * GRID_SIZE
SELF_WIDTH = 24 * (3 + 6 + 3 + 3)


def grid_offsets():
    """Heading-frame (x, y) offsets of the 625 cells; rows step in y, +x fastest."""
    k = (np.arange(GRID_SIZE) - (GRID_SIZE - 1) / 2) * GRID_SPACING
    yy, xx = np.meshgrid(k, k, indexing="ij")
    return np.stack([xx.ravel(), yy.ravel()], axis=-1)


def sample_height_map(terrain, root_pos, root_rot=None, heading=None):
    """Heights around the root's ground projection, relative to the centre cell.

    The grid axes follow the heading frame (from ``heading`` or ``root_rot``).
    Returns shape (25, 25), row-major with +x fastest.
    """
    if heading is None:
        heading = np.eye(3) if root_rot is None else heading_rotation(root_rot)
    root_pos = np.asarray(root_pos, dtype=np.float64)
    xy = root_pos[:2] + grid_offsets() @ heading[:2, :2].T
    h = terrain.height(xy[:, 0], xy[:, 1]) - terrain.height(root_pos[0], root_pos[1])
    return h.reshape(GRID_SIZE, GRID_SIZE)


def self_observation(sim, heading=None):
    """Joint positions, 6D rotations, linear and angular velocities in the heading frame.

    Positions are relative to the root's ground projection, so the root row
    keeps its height. Shape (24, 15).
    """
    h = heading_rotation(sim.root_rot) if heading is None else heading
    origin = np.array([sim.root_pos[0], sim.root_pos[1], 0.0])
    pos = (sim.joint_pos - origin) @ h
    rot = rot6d_from_matrix(h.T @ sim.joint_rot)
    return np.concatenate([pos, rot, sim.joint_linvel @ h, sim.joint_angvel @ h], axis=1)


def observation_layout(n_devices=4):
    """Block name to slice map; depends only on the sensor configuration."""
    sen = 12 * n_devices + 10
    widths = [("sen", sen), ("kin", STATE_DIFF_WIDTH), ("self", SELF_WIDTH), ("env", HEIGHT_MAP_WIDTH)]
    out, start = {}, 0
    for name, w in widths:
        out[name] = slice(start, start + w)
        start += w
    return out


def build_observation(sen, kin_diff, sim, hmap, mask=FULL_MASK, heading=None):
    """Flat controller input: sensors, state difference, self state, height map.

    Blocks of ``kin_diff`` disabled by ``mask`` are zeroed; the width only
    depends on the sensor configuration.
    """
    if not isinstance(sen, SensorObservation):
        raise LayoutMismatch("sensor block must be a SensorObservation")
    diff = kin_diff.flatten() if isinstance(kin_diff, StateDifference) else np.asarray(kin_diff, dtype=np.float64)
    if diff.shape != (STATE_DIFF_WIDTH,):
        raise LayoutMismatch(f"state difference must have {STATE_DIFF_WIDTH} values, got {diff.shape}")
    hmap = np.asarray(hmap, dtype=np.float64)
    if hmap.size != HEIGHT_MAP_WIDTH:
        raise LayoutMismatch(f"height map must have {HEIGHT_MAP_WIDTH} cells, got {hmap.size}")
    diff = diff.copy()
    start = 0
    for name, shape in BLOCK_SHAPES.items():
        stop = start + int(np.prod(shape))
        if not mask.block_enabled(name):
            diff[start:stop] = 0.0
        start = stop
    return np.concatenate([sen.flatten(), diff, self_observation(sim, heading).ravel(), hmap.ravel()])
