"""Pose algebra and warp-and-sample behavior."""

import math

import numpy as np

from coopbev import geometry as G
from coopbev import tensor as T
from helpers import assert_grad_close, finite_diff_grad


def random_pose(rng, trans=5.0, rot=math.pi):
    return G.Pose2D(rng.uniform(-trans, trans), rng.uniform(-trans, trans),
                    rng.uniform(-rot, rot))


class TestPose:
    def test_theta_normalized(self):
        assert G.Pose2D(0, 0, 3 * math.pi).theta == math.pi
        assert abs(G.Pose2D(0, 0, -math.pi / 2 + 6 * math.pi).theta + math.pi / 2) < 1e-12
        assert -math.pi < G.Pose2D(0, 0, -math.pi).theta <= math.pi

    def test_compose_inverse_is_identity(self):
        rng = np.random.default_rng(0)
        for _ in range(50):
            p = random_pose(rng)
            q = G.compose(p, G.inverse(p))
            assert abs(q.x) < 1e-12 and abs(q.y) < 1e-12 and abs(q.theta) < 1e-12

    def test_compose_matches_matrix_product(self):
        rng = np.random.default_rng(1)
        p, q = random_pose(rng), random_pose(rng)
        pt = rng.standard_normal((1, 2))
        via_compose = G.transform_points(G.compose(p, q), pt)
        via_two = G.transform_points(p, G.transform_points(q, pt))
        assert np.abs(via_compose - via_two).max() < 1e-12


class TestWarpPoints:
    def test_identity(self):
        pc = G.PointCloud(np.array([[1.0, 2.0], [-0.5, 0.25]]), "a0")
        p = G.Pose2D(3.0, -1.0, 0.7)
        out = G.warp_points(pc, p, p, "a0")
        assert np.array_equal(out.points, pc.points)

    def test_pure_translation(self):
        pc = G.PointCloud(np.array([[1.0, 0.0]]), "a0")
        out = G.warp_points(pc, G.Pose2D(0, 0, 0), G.Pose2D(1.0, 0.0, 0.0), "a1")
        assert np.abs(out.points - [[0.0, 0.0]]).max() < 1e-12
        assert out.frame == "a1"

    def test_round_trip(self):
        rng = np.random.default_rng(2)
        for _ in range(25):
            a, b = random_pose(rng), random_pose(rng)
            pts = rng.standard_normal((17, 2)) * 4
            pc = G.PointCloud(pts, "a")
            back = G.warp_points(G.warp_points(pc, a, b, "b"), b, a, "a")
            assert np.abs(back.points - pts).max() < 1e-10

    def test_classes_preserved(self):
        pc = G.PointCloud(np.zeros((3, 2)), "a", np.array([1, 0, 1], dtype=np.uint8))
        out = G.warp_points(pc, G.Pose2D(0, 0, 0), G.Pose2D(1, 1, 1), "b")
        assert np.array_equal(out.classes, pc.classes)


class TestWarpFeatureMap:
    def test_identity_pose_is_exact(self):
        rng = np.random.default_rng(3)
        f = T.DiffTensor(rng.standard_normal((8, 8, 3)))
        pose = G.Pose2D(2.0, -3.0, 1.2)
        out = G.warp_feature_map(f, pose, pose, 0.4)
        assert np.array_equal(out.data, f.data)

    def test_one_cell_translation_shifts(self):
        rng = np.random.default_rng(4)
        m = 0.4
        f = T.DiffTensor(rng.standard_normal((6, 6, 1)))
        sender = G.Pose2D(0.0, 0.0, 0.0)
        receiver = G.Pose2D(m, 0.0, 0.0)  # one cell along +x
        out = G.warp_feature_map(f, sender, receiver, m).data
        # receiver cell (r, c) lands on sender cell (r, c + 1)
        assert np.array_equal(out[:, :-1], f.data[:, 1:])
        assert np.array_equal(out[:, -1], np.zeros((6, 1)))

    def test_round_trip_on_smooth_field(self):
        rng = np.random.default_rng(5)
        h = w = 32
        m = 0.4
        yy, xx = np.meshgrid(np.arange(h), np.arange(w), indexing="ij")
        field = (np.sin(2 * np.pi * xx / 16.0) * np.cos(2 * np.pi * yy / 16.0)
                 + 0.5 * np.sin(2 * np.pi * (xx + yy) / 24.0))[:, :, None]
        for _ in range(5):
            a = G.Pose2D(rng.uniform(-2, 2) * m, rng.uniform(-2, 2) * m, rng.uniform(-0.3, 0.3))
            b = G.Pose2D(0.0, 0.0, 0.0)
            once = G.warp_feature_map(T.DiffTensor(field), a, b, m)
            back = G.warp_feature_map(once, b, a, m).data
            interior = (slice(8, -8), slice(8, -8))
            err = np.abs(back - field)[interior]
            assert err.max() < 5e-2

    def test_out_of_view_is_zero(self):
        f = T.DiffTensor(np.ones((4, 4, 1)))
        out = G.warp_feature_map(f, G.Pose2D(0, 0, 0), G.Pose2D(100.0, 0, 0), 0.4)
        assert not out.data.any()

    def test_gradient_matches_finite_differences(self):
        rng = np.random.default_rng(6)
        f = T.parameter(rng.standard_normal((5, 5, 2)))
        # fractional offsets keep samples away from cell-boundary kinks
        sender = G.Pose2D(0.13, -0.27, 0.4)
        receiver = G.Pose2D(0.71, 0.33, -0.2)
        wgt = rng.standard_normal((5, 5, 2))

        def build():
            return T.sum_all(T.mul(G.warp_feature_map(f, sender, receiver, 1.0),
                                   T.DiffTensor(wgt)))

        loss = build()
        loss.backward()
        numeric = finite_diff_grad(lambda: float(build().data), f.data)
        assert_grad_close(f.grad, numeric)
