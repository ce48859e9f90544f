import numpy as np
import numpy.testing as npt
import pytest

from ticalib import rotmath
from ticalib.diversity import (
    CELL_DEG,
    DEFAULT_THRESHOLDS,
    GRID_CELLS,
    GRID_SHAPE,
    EulerGrid,
    TriggerConfig,
    cell_center_rotations,
    euler_cell,
    rotation_diversity,
    should_update,
)


def test_grid_constants():
    assert GRID_SHAPE == (24, 12, 24)
    assert CELL_DEG == 15
    assert GRID_CELLS == 6912
    assert DEFAULT_THRESHOLDS == (30, 50, 30, 30, 25, 15)


def test_euler_cell_identity():
    assert euler_cell(np.eye(3)) == (12, 6, 12)


def test_euler_cell_boundary_clamps():
    # theta_y = +90 would index bin 12; the upper clamp keeps it at 11.
    assert euler_cell(rotmath.rot_y(90)) == (12, 11, 12)
    assert euler_cell(rotmath.rot_y(-90)) == (12, 0, 12)
    # theta_x/theta_z at exactly +180 report as -180 after canonicalization;
    # both boundaries land in the same (wrapped) outer bin.
    assert euler_cell(rotmath.mat_from_euler([179.99, 89.99, 179.99])) == (23, 11, 23)
    assert euler_cell(rotmath.mat_from_euler([-180, -89.99, -180])) == (0, 0, 0)


def test_euler_cell_direct_angles():
    # hand-computed bins for representative angles
    assert euler_cell(rotmath.mat_from_euler([-180, -89.9, -180])) == (0, 0, 0)
    assert euler_cell(rotmath.mat_from_euler([7, 7, 7])) == (12, 6, 12)
    assert euler_cell(rotmath.mat_from_euler([16, 16, 16])) == (13, 7, 13)
    assert euler_cell(rotmath.mat_from_euler([-16, -16, -16])) == (10, 4, 10)


def test_rotation_diversity_constant():
    seq = np.broadcast_to(np.eye(3), (256, 3, 3))
    assert rotation_diversity(seq) == 1


def test_rotation_diversity_two_cells():
    seq = np.stack([rotmath.rot_x(0), rotmath.rot_x(20)] * 10)
    assert rotation_diversity(seq) == 2


def test_rotation_diversity_empty():
    with pytest.raises(ValueError):
        rotation_diversity(np.zeros((0, 3, 3)))


def test_rotation_diversity_uniform_coverage():
    rng = np.random.default_rng(0)
    mats = rotmath.random_rotations(rng, 100_000)
    rd = rotation_diversity(mats)
    assert 6500 <= rd <= 6912


def test_rotation_diversity_monotone():
    rng = np.random.default_rng(1)
    mats = rotmath.random_rotations(rng, 300)
    prev = 0
    for k in range(1, 301, 25):
        rd = rotation_diversity(mats[:k])
        assert rd >= prev
        prev = rd


def test_rotation_diversity_permutation_invariant():
    rng = np.random.default_rng(2)
    mats = rotmath.random_rotations(rng, 200)
    perm = rng.permutation(200)
    assert rotation_diversity(mats) == rotation_diversity(mats[perm])


def test_cell_center_enumeration_covers_grid():
    centers = cell_center_rotations()
    assert rotation_diversity(centers) == GRID_CELLS


def test_euler_grid_accumulation():
    g = EulerGrid()
    assert g.rd == 0 and g.total == 0
    g.add(np.eye(3))
    g.add(np.eye(3))
    g.add(rotmath.rot_x(20))
    assert g.total == 3
    assert g.rd == 2
    rng = np.random.default_rng(3)
    g.add_many(rotmath.random_rotations(rng, 100))
    assert g.total == 103
    assert g.rd >= 2


def test_should_update_strict():
    cfg = TriggerConfig()
    for s, t in enumerate(DEFAULT_THRESHOLDS):
        assert not should_update(t, s, cfg)
        assert should_update(t + 1, s, cfg)
    # hip with rd = 16 against its threshold of 15
    assert should_update(16, 5, cfg)


def test_trigger_config_variants():
    assert TriggerConfig.disabled(6).thresholds == (np.inf,) * 6
    assert TriggerConfig.uniform(5, 6).thresholds == (5,) * 6
    with pytest.raises(ValueError):
        TriggerConfig(thresholds=(0, 30, 30, 30, 25, 15))
