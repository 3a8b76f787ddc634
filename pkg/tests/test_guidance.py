import unittest

import numpy as np

from core.guidance import GuidanceCache, build_guidance, inflate_grid, inflation_voxels
from core.mapping import FREE, OCCUPIED, UNKNOWN, OccupancyGrid, VoxelMap

GOAL = np.array([3.5, 2.0, 1.0])


def grid_from(fill: int = FREE, wall_rows: slice = None) -> OccupancyGrid:
    dims = VoxelMap().dims
    values = np.full(dims, fill, dtype=np.int8)
    if wall_rows is not None:
        values[20, wall_rows, :] = OCCUPIED
    return OccupancyGrid(np.zeros(3), dims, 0.1, values)


class InflationTests(unittest.TestCase):
    def test_voxel_count(self):
        self.assertEqual(inflation_voxels(0.15, 0.1), 2)
        self.assertEqual(inflation_voxels(0.1, 0.1), 1)
        self.assertEqual(inflation_voxels(0.0, 0.1), 0)
        with self.assertRaises(ValueError):
            inflation_voxels(-0.1, 0.1)

    def test_single_voxel_grows_into_a_cube(self):
        values = np.zeros(VoxelMap().dims, dtype=np.int8)
        values[20, 20, 10] = OCCUPIED
        inflated = inflate_grid(OccupancyGrid(np.zeros(3), VoxelMap().dims, 0.1, values), 0.15)
        self.assertEqual(int(inflated.values[22, 22, 12]), OCCUPIED)
        self.assertEqual(int(inflated.values[18, 20, 8]), OCCUPIED)
        self.assertEqual(int(inflated.values[23, 20, 10]), FREE)
        self.assertEqual(int(inflated.values[20, 17, 10]), FREE)

    def test_boundary_shell_and_unknown(self):
        inflated = inflate_grid(grid_from(UNKNOWN), 0.15)
        self.assertEqual(int(inflated.values[0, 20, 10]), OCCUPIED)
        self.assertEqual(int(inflated.values[20, 39, 10]), OCCUPIED)
        self.assertEqual(int(inflated.values[20, 20, 1]), OCCUPIED)
        self.assertEqual(int(inflated.values[2, 20, 10]), UNKNOWN)
        self.assertEqual(int(inflated.values[20, 20, 10]), UNKNOWN)

    def test_input_grid_is_untouched(self):
        grid = grid_from(wall_rows=slice(None))
        before = grid.values.copy()
        inflate_grid(grid, 0.15)
        np.testing.assert_array_equal(grid.values, before)


class DistanceFieldTests(unittest.TestCase):
    def test_open_space_is_close_to_straight_line(self):
        field = build_guidance(grid_from(), GOAL, 0.15)
        previous = np.inf
        for x in (0.5, 1.0, 1.5, 2.0, 2.5, 3.0):
            p = np.array([x, 2.0, 1.0])
            straight = float(np.linalg.norm(p - GOAL))
            cost = float(field.cost_to_go(p))
            self.assertGreaterEqual(cost, straight - 1e-9)
            self.assertLess(cost, 1.1 * straight + 0.1)
            self.assertLess(cost, previous)
            previous = cost

    def test_wall_forces_a_detour_through_the_gap(self):
        field = build_guidance(grid_from(wall_rows=slice(0, 30)), GOAL, 0.15)
        start = np.array([1.0, 2.0, 1.0])
        self.assertGreater(float(field.cost_to_go(start)), float(np.linalg.norm(start - GOAL)) + 0.8)
        gap_side = np.array([1.5, 3.5, 1.0])
        dead_side = np.array([1.5, 0.5, 1.0])
        self.assertLess(float(field.cost_to_go(gap_side)), float(field.cost_to_go(dead_side)))
        self.assertTrue(field.is_reachable(start))

    def test_unknown_space_is_traversable(self):
        field = build_guidance(grid_from(UNKNOWN), GOAL, 0.15)
        self.assertTrue(field.is_reachable(np.array([0.5, 2.0, 1.0])))

    def test_sealed_goal_keeps_a_finite_gradient(self):
        field = build_guidance(grid_from(wall_rows=slice(None)), GOAL, 0.15)
        start = np.array([0.5, 2.0, 1.0])
        self.assertFalse(field.is_reachable(start))
        self.assertTrue(np.all(np.isfinite(field.offset)))
        self.assertLess(float(field.cost_to_go(np.array([1.5, 2.0, 1.0]))), float(field.cost_to_go(start)))

    def test_blocked_points(self):
        field = build_guidance(grid_from(wall_rows=slice(None)), GOAL, 0.15)
        points = np.array([[1.85, 2.0, 1.0], [0.5, 2.0, 1.0], [-0.5, 2.0, 1.0], [0.5, 2.0, 0.05]])
        np.testing.assert_array_equal(field.blocked(points), [True, False, True, True])

    def test_batched_lookup_matches_single(self):
        field = build_guidance(grid_from(wall_rows=slice(0, 30)), GOAL, 0.15)
        p = np.random.default_rng(2).uniform([0.2, 0.2, 0.2], [3.8, 3.8, 1.8], size=(50, 3))
        batch = field.cost_to_go(p)
        for i in range(50):
            self.assertAlmostEqual(float(batch[i]), float(field.cost_to_go(p[i])), places=12)


class CacheTests(unittest.TestCase):
    def test_rebuilds_only_when_obstacles_change(self):
        cache = GuidanceCache(0.15)
        first = cache.field_for(grid_from(UNKNOWN), GOAL)
        self.assertEqual(cache.builds, 1)

        carved = grid_from(UNKNOWN).values.copy()
        carved[5:10, 15:25, 8:12] = FREE
        second = cache.field_for(OccupancyGrid(np.zeros(3), VoxelMap().dims, 0.1, carved), GOAL)
        self.assertEqual(cache.builds, 1)
        np.testing.assert_array_equal(second.offset, first.offset)
        self.assertEqual(int(second.grid.values[7, 20, 10]), FREE)

        cache.field_for(grid_from(UNKNOWN, wall_rows=slice(0, 30)), GOAL)
        self.assertEqual(cache.builds, 2)
        cache.field_for(grid_from(UNKNOWN, wall_rows=slice(0, 30)), GOAL + 0.1)
        self.assertEqual(cache.builds, 3)


if __name__ == "__main__":
    unittest.main()
