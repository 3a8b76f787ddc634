import math
import unittest

import numpy as np

from core.costs import (
    CostBreakdown,
    CostParams,
    GoalPose,
    PerceptionAwareCost,
    TrackingCost,
    action_cost,
    collision_cost,
    does_raytrace,
    goal_cost,
    perception_cost,
    poi_cost,
    ray_cost,
    stage_breakdown,
    stage_cost,
    terminal_cost,
)
from core.dynamics import ControlCommand, QuadParams, QuadState, hover_command
from core.guidance import build_guidance
from core.mapping import FREE, OCCUPIED, UNKNOWN, OccupancyGrid, VoxelMap
from core.reference import min_jerk_trajectory, straight_line_waypoints

GOAL = GoalPose((3.5, 2.0, 1.0), 0.0)


def grid_with_wall(x_index: int = 20) -> OccupancyGrid:
    dims = VoxelMap().dims
    values = np.zeros(dims, dtype=np.int8)
    values[x_index, :, :] = OCCUPIED
    return OccupancyGrid(np.zeros(3), dims, 0.1, values)


class GoalTermTests(unittest.TestCase):
    def setUp(self):
        self.prm = CostParams()

    def test_at_goal_aligned(self):
        s = QuadState.hover(GOAL.p_goal)
        self.assertAlmostEqual(float(goal_cost(s, GOAL, self.prm)), -2.5, places=12)

    def test_at_goal_facing_backwards(self):
        s = QuadState.hover(GOAL.p_goal, yaw=math.pi)
        self.assertAlmostEqual(float(goal_cost(s, GOAL, self.prm)), -2.5 + math.pi, places=9)
        self.assertAlmostEqual(float(goal_cost(s, GOAL, self.prm)), 0.6416, places=4)

    def test_far_from_goal_the_term_fades(self):
        s = QuadState.hover((0.5, 2.0, 1.0))
        self.assertAlmostEqual(float(goal_cost(s, GOAL, self.prm)), -2.5 * math.exp(-9.0), places=12)

    def test_yaw_error_wraps(self):
        s = QuadState.hover(GOAL.p_goal, yaw=2 * math.pi - 0.1)
        self.assertAlmostEqual(float(goal_cost(s, GOAL, self.prm)), -2.5 + 0.1, places=9)


class ActionTermTests(unittest.TestCase):
    def setUp(self):
        self.prm = CostParams()

    def test_zero_input(self):
        self.assertEqual(float(action_cost(np.zeros(4), np.zeros(4), self.prm)), 0.0)

    def test_thrust_only(self):
        u = np.array([1.0, 0.0, 0.0, 0.0])
        self.assertAlmostEqual(float(action_cost(u, u, self.prm)), 0.01, places=12)

    def test_rate_change_adds_smoothness_penalty(self):
        u = np.array([0.0, 1.0, 0.0, 0.0])
        self.assertAlmostEqual(float(action_cost(u, np.zeros(4), self.prm)), 0.12, places=12)

    def test_accepts_command_objects(self):
        u = ControlCommand(c=1.0, omega_cmd=np.zeros(3))
        self.assertAlmostEqual(float(action_cost(u, u, self.prm)), 0.01, places=12)


class CollisionTermTests(unittest.TestCase):
    def test_states(self):
        prm = CostParams()
        values = np.full(VoxelMap().dims, UNKNOWN, dtype=np.int8)
        values[5, 5, 5] = FREE
        values[6, 5, 5] = OCCUPIED
        grid = OccupancyGrid(np.zeros(3), VoxelMap().dims, 0.1, values)
        points = np.array([[0.55, 0.55, 0.55], [0.65, 0.55, 0.55], [1.0, 1.0, 1.0], [-1.0, 0.0, 0.0]])
        np.testing.assert_array_equal(collision_cost(points, grid, prm), [0.0, 15.0, 15.0, 15.0])


class PerceptionTermTests(unittest.TestCase):
    def setUp(self):
        self.prm = CostParams()
        self.free = OccupancyGrid.filled(FREE)

    def test_facing_goal_with_clear_ray(self):
        s = QuadState.hover((0.5, 2.0, 1.0))
        self.assertAlmostEqual(float(poi_cost(s, GOAL, self.prm)), 0.0, places=12)
        self.assertAlmostEqual(float(perception_cost(s, self.free, GOAL, self.prm, True)), -5.0, places=12)

    def test_facing_away_from_goal(self):
        s = QuadState.hover((0.5, 2.0, 1.0), yaw=math.pi)
        self.assertAlmostEqual(float(poi_cost(s, GOAL, self.prm)), 20.0, places=9)
        self.assertAlmostEqual(float(perception_cost(s, self.free, GOAL, self.prm, True)), 15.0, places=9)

    def test_pointing_term_inactive_near_goal(self):
        s = QuadState.hover((3.2, 2.0, 1.0), yaw=math.pi)
        self.assertEqual(float(poi_cost(s, GOAL, self.prm)), 0.0)

    def test_ray_outcomes(self):
        s = QuadState.hover((0.5, 2.0, 1.0))
        self.assertEqual(float(ray_cost(s, self.free, GOAL, self.prm)), -5.0)
        self.assertEqual(float(ray_cost(s, grid_with_wall(), GOAL, self.prm)), 2.0)
        self.assertEqual(float(ray_cost(s, OccupancyGrid.filled(UNKNOWN), GOAL, self.prm)), -1.0)
        outside = GoalPose((4.5, 2.0, 1.0))
        self.assertEqual(float(ray_cost(s, self.free, outside, self.prm)), -1.0)

    def test_batched_ray_cost_matches_single(self):
        rng = np.random.default_rng(4)
        p = rng.uniform([0.2, 0.2, 0.2], [3.8, 3.8, 1.8], size=(64, 3))
        batch = QuadState(p, np.tile([1.0, 0.0, 0.0, 0.0], (64, 1)), np.zeros((64, 3)), np.zeros((64, 3)))
        grid = grid_with_wall()
        costs = ray_cost(batch, grid, GOAL, self.prm)
        for i in range(64):
            self.assertEqual(costs[i], ray_cost(QuadState.hover(p[i]), grid, GOAL, self.prm))

    def test_ray_term_is_constant_within_a_voxel(self):
        values = np.zeros(VoxelMap().dims, dtype=np.int8)
        values[20, :30, :] = OCCUPIED
        grid = OccupancyGrid(np.zeros(3), VoxelMap().dims, 0.1, values)
        rng = np.random.default_rng(11)
        corner = np.array([1.0, 2.9, 1.0])
        points = corner + rng.uniform(0.01, 0.09, size=(20, 3))
        costs = {float(ray_cost(QuadState.hover(p), grid, GOAL, self.prm)) for p in points}
        self.assertEqual(len(costs), 1)

    def test_raytrace_stride(self):
        self.assertTrue(does_raytrace(0, self.prm))
        self.assertFalse(does_raytrace(1, self.prm))
        self.assertTrue(does_raytrace(10, self.prm))
        s = QuadState.hover((0.5, 2.0, 1.0))
        self.assertEqual(float(perception_cost(s, self.free, GOAL, self.prm, False)), 0.0)


class TerminalTermTests(unittest.TestCase):
    def test_safe_set_indicator(self):
        s = QuadState.hover((1.0, 1.0, 1.0))
        self.assertEqual(float(terminal_cost(s, CostParams())), 0.0)
        s.v_WB[:] = (2.0, 0.0, 0.0)
        self.assertEqual(float(terminal_cost(s, CostParams())), 0.0)
        self.assertEqual(float(terminal_cost(s, CostParams(c_safe=100.0))), 100.0)


class StageCostTests(unittest.TestCase):
    def setUp(self):
        self.prm = CostParams()
        self.qp = QuadParams()
        self.free = OccupancyGrid.filled(FREE)

    def test_hover_at_goal_without_raytrace(self):
        s = QuadState.hover(GOAL.p_goal)
        u = hover_command(self.qp)
        expected = -2.5 + 0.01 * self.qp.hover_thrust ** 2
        self.assertAlmostEqual(float(stage_cost(s, u, u, self.free, GOAL, self.prm, 1)), expected, places=12)

    def test_terms_add_up(self):
        rng = np.random.default_rng(8)
        n = 32
        q = rng.normal(size=(n, 4))
        q /= np.linalg.norm(q, axis=-1, keepdims=True)
        s = QuadState(rng.uniform(0.2, 1.8, size=(n, 3)), q, np.zeros((n, 3)), np.zeros((n, 3)))
        u = rng.normal(size=(n, 4))
        u_prev = rng.normal(size=(n, 4))
        grid = grid_with_wall(12)
        parts = stage_breakdown(s, u, u_prev, grid, GOAL, self.prm, 0)
        total = stage_cost(s, u, u_prev, grid, GOAL, self.prm, 0)
        summed = goal_cost(s, GOAL, self.prm) + action_cost(u, u_prev, self.prm)
        summed = summed + collision_cost(s.p_WB, grid, self.prm) + perception_cost(s, grid, GOAL, self.prm, True)
        np.testing.assert_array_equal(total, summed)
        np.testing.assert_array_equal(parts.total, total)

    def test_breakdown_as_dict(self):
        parts = CostBreakdown(np.array([1.0, 2.0]), np.array([0.5, 0.5]), np.array([0.0, 15.0]), np.array([-5.0, 0.0]))
        self.assertEqual(
            parts.as_dict(row=1),
            {"goal": 2.0, "action": 0.5, "collision": 15.0, "perception": 0.0, "progress": 0.0, "total": 17.5},
        )

    def test_perception_aware_stack(self):
        cost = PerceptionAwareCost(self.free, GOAL, self.prm)
        s = QuadState.hover((0.5, 2.0, 1.0))
        u = hover_command(self.qp)
        terms = cost.stage_terms(s, u, u, 0)
        self.assertAlmostEqual(float(terms.perception), -5.0, places=12)
        self.assertEqual(float(cost.terminal(s)), 0.0)

    def test_tracking_stack_replaces_goal_and_perception(self):
        ref = min_jerk_trajectory(straight_line_waypoints((0.5, 2.0, 1.0), GOAL.p_goal, 10), 4.0, 0.0)
        cost = TrackingCost(self.free, GOAL, self.prm, ref, t0=0.0, dt_pred=0.1)
        s = QuadState.hover((0.5, 2.0, 1.0))
        u = hover_command(self.qp)
        terms = cost.stage_terms(s, u, u, 0)
        self.assertAlmostEqual(float(terms.goal), 0.0, places=12)
        self.assertEqual(float(terms.perception), 0.0)
        later = cost.stage_terms(s, u, u, 20)
        self.assertGreater(float(later.goal), 0.0)

    def test_guided_stack_bills_the_inflated_grid(self):
        grid = grid_with_wall()
        field = build_guidance(grid, GOAL.position, 0.15)
        cost = PerceptionAwareCost(grid, GOAL, self.prm, guidance=field)
        u = hover_command(self.qp)
        near = QuadState.hover((1.85, 2.05, 1.05))
        self.assertEqual(float(collision_cost(near.p_WB, grid, self.prm)), 0.0)
        terms = cost.stage_terms(near, u, u, 1)
        self.assertEqual(float(terms.collision), 15.0)
        self.assertAlmostEqual(float(terms.progress), float(field.cost_to_go(near.p_WB)), places=12)
        self.assertTrue(bool(cost.contact(near.p_WB)))

        clear = QuadState.hover((0.55, 2.05, 1.05))
        terms = cost.stage_terms(clear, u, u, 1)
        self.assertEqual(float(terms.collision), 0.0)
        self.assertGreater(float(terms.progress), 0.0)
        self.assertFalse(bool(cost.contact(clear.p_WB)))

    def test_unguided_stacks_never_report_contact(self):
        cost = PerceptionAwareCost(grid_with_wall(), GOAL, self.prm)
        p = np.array([[2.05, 2.05, 1.05], [0.5, 2.0, 1.0]])
        np.testing.assert_array_equal(cost.contact(p), [False, False])
        self.assertEqual(float(cost.stage_terms(QuadState.hover(p[0]), np.zeros(4), np.zeros(4), 1).progress), 0.0)

    def test_guided_tracking_stack_has_no_progress_term(self):
        grid = grid_with_wall()
        ref = min_jerk_trajectory(straight_line_waypoints((0.5, 2.0, 1.0), GOAL.p_goal, 10), 4.0, 0.0)
        field = build_guidance(grid, GOAL.position, 0.15)
        cost = TrackingCost(grid, GOAL, self.prm, ref, t0=0.0, dt_pred=0.1, guidance=field)
        s = QuadState.hover((1.85, 2.05, 1.05))
        u = hover_command(self.qp)
        terms = cost.stage_terms(s, u, u, 0)
        self.assertEqual(float(terms.collision), 15.0)
        self.assertEqual(float(np.asarray(terms.progress)), 0.0)
        self.assertTrue(bool(cost.contact(s.p_WB)))

    def test_params_validation(self):
        with self.assertRaises(ValueError):
            CostParams(c_free=1.0)
        with self.assertRaises(ValueError):
            CostParams(raytrace_stride=0)
        with self.assertRaises(ValueError):
            CostParams(R=(0.1, 0.1, 0.1))
        with self.assertRaises(ValueError):
            CostParams(c_progress=-1.0)


if __name__ == "__main__":
    unittest.main()
