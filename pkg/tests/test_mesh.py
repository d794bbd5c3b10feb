import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import permutations_parity, regular_tet
from segaeval.errors import CorruptFile, DomainError, EmptyMask
from segaeval.mesh import (
    SurfaceMesh,
    TetMesh,
    count_self_intersections,
    marching_cubes,
    read_stl,
    read_tetmesh,
    scaled_jacobian,
    scaled_jacobians,
    smooth,
    tet_quality_report,
    watertight_check,
    write_stl,
    write_tetmesh,
)
from segaeval.synthetic import ball_mask
from segaeval.volume import LabelMask


def cube_mesh(offset=(0.0, 0.0, 0.0), size=1.0):
    v = np.array([[x, y, z] for x in (0, 1) for y in (0, 1) for z in (0, 1)], float) * size
    v += offset
    # outward-oriented quads split into triangles
    quads = [(0, 1, 3, 2), (4, 6, 7, 5), (0, 4, 5, 1), (2, 3, 7, 6), (0, 2, 6, 4), (1, 5, 7, 3)]
    tris = []
    for a, b, c, d in quads:
        tris += [(a, b, c), (a, c, d)]
    return SurfaceMesh(v, tris)


def edge_multiset(mesh):
    e = mesh.edges()
    return sorted(map(tuple, e.tolist()))


class TestWatertight:
    def test_cube(self):
        m = cube_mesh()
        assert m.volume() == pytest.approx(1.0)
        r = watertight_check(m, check_self_intersections=True)
        assert r.is_watertight and r.component_count == 1
        assert r.self_intersections_checked and r.self_intersections == 0

    def test_hole(self):
        m = cube_mesh()
        r = watertight_check(SurfaceMesh(m.vertices, m.triangles[2:]))
        assert not r.is_watertight
        assert r.boundary_edges == 4

    def test_two_components(self):
        a, b = cube_mesh(), cube_mesh(offset=(3, 0, 0))
        m = SurfaceMesh(np.vstack([a.vertices, b.vertices]),
                        np.vstack([a.triangles, b.triangles + 8]))
        r = watertight_check(m)
        assert r.is_watertight and r.component_count == 2

    def test_flipped_triangle(self):
        m = cube_mesh()
        t = m.triangles.copy()
        t[0] = t[0][::-1]
        r = watertight_check(SurfaceMesh(m.vertices, t))
        assert not r.is_watertight and r.misoriented_edges == 3

    def test_nonmanifold_edge(self):
        m = cube_mesh()
        extra = np.vstack([m.vertices, [[0.5, -1.0, 0.5]]])
        t = np.vstack([m.triangles, [[0, 1, 8]]])
        r = watertight_check(SurfaceMesh(extra, t))
        assert r.nonmanifold_edges == 1 and not r.is_watertight

    def test_self_intersection_detected(self):
        a, b = cube_mesh(), cube_mesh(offset=(0.5, 0.5, 0.5))
        m = SurfaceMesh(np.vstack([a.vertices, b.vertices]),
                        np.vstack([a.triangles, b.triangles + 8]))
        assert count_self_intersections(m) > 0
        assert watertight_check(m).self_intersections_checked is False


class TestMarchingCubes:
    def test_single_voxel(self):
        a = np.zeros((3, 3, 3), bool)
        a[1, 1, 1] = True
        m = marching_cubes(LabelMask(a))
        assert m.euler_characteristic() == 2
        assert watertight_check(m).is_watertight
        assert m.volume() > 0

    def test_block(self):
        m = marching_cubes(LabelMask(np.ones((2, 2, 2), bool)))  # touches border
        r = watertight_check(m)
        assert r.is_watertight and r.boundary_edges == 0 and r.nonmanifold_edges == 0

    def test_empty(self):
        with pytest.raises(EmptyMask):
            marching_cubes(LabelMask(np.zeros((2, 2, 2))))

    def test_sphere_volume(self):
        m = marching_cubes(ball_mask(10))
        assert watertight_check(m).is_watertight
        assert abs(m.volume() / (4 / 3 * np.pi * 1000) - 1) < 0.05

    def test_world_coordinates(self):
        a = np.zeros((5, 5, 5), bool)
        a[2, 2, 2] = True
        m = marching_cubes(LabelMask(a, spacing=(2, 1, 1), origin=(10, 0, 0)))
        centre = m.vertices.mean(axis=0)
        np.testing.assert_allclose(centre, [14, 2, 2], atol=1e-9)
        assert np.ptp(m.vertices[:, 0]) == pytest.approx(2.0)

    def test_volume_converges(self):
        errs = [abs(marching_cubes(ball_mask(r)).volume() / (4 / 3 * np.pi * r**3) - 1)
                for r in (5, 10, 20)]
        assert errs[0] > errs[1] > errs[2]

    def test_random_blobs_watertight(self):
        rng = np.random.default_rng(4)
        for _ in range(10):
            a = rng.random((8, 8, 8)) < 0.4
            if a.any():
                r = watertight_check(marching_cubes(LabelMask(a)))
                assert r.is_watertight, r


class TestSmooth:
    def test_zero_iterations(self):
        m = marching_cubes(ball_mask(4))
        s = smooth(m, iterations=0)
        np.testing.assert_array_equal(s.vertices, m.vertices)

    def test_volume_preserved(self):
        m = marching_cubes(ball_mask(10))
        s = smooth(m)
        assert abs(s.volume() / m.volume() - 1) < 0.02

    def test_plain_laplacian_shrinks_more(self):
        m = marching_cubes(ball_mask(10))
        plain = smooth(m, iterations=25, lamb=0.5, mu=0.0)
        assert abs(plain.volume() / m.volume() - 1) > abs(smooth(m).volume() / m.volume() - 1)

    def test_connectivity_and_watertightness_kept(self):
        m = marching_cubes(ball_mask(6))
        s = smooth(m, iterations=10)
        assert len(s.vertices) == len(m.vertices)
        np.testing.assert_array_equal(s.triangles, m.triangles)
        assert edge_multiset(s) == edge_multiset(m)
        assert watertight_check(s).is_watertight

    def test_negative_iterations(self):
        with pytest.raises(DomainError):
            smooth(cube_mesh(), iterations=-1)


class TestScaledJacobian:
    def test_regular(self):
        for s in (1e-3, 1.0, 250.0):
            assert abs(scaled_jacobian(regular_tet(s))) == pytest.approx(1.0, abs=1e-9)

    def test_orientation(self):
        t = regular_tet()
        assert scaled_jacobian(t) == pytest.approx(1.0, abs=1e-9)

    def test_coplanar(self):
        assert scaled_jacobian([[0, 0, 0], [1, 0, 0], [0, 1, 0], [1, 1, 0]]) == 0.0

    def test_collapsed_edge(self):
        assert scaled_jacobian([[0, 0, 0], [0, 0, 0], [0, 1, 0], [0, 0, 1]]) == 0.0

    def test_right_corner(self):
        # corner tet: J = 1, largest corner product 1*sqrt2*sqrt2 at vertices 1..3
        t = [[0, 0, 0], [1, 0, 0], [0, 1, 0], [0, 0, 1]]
        assert scaled_jacobian(t) == pytest.approx(np.sqrt(2) / 2, abs=1e-12)

    @settings(max_examples=100, deadline=None)
    @given(st.integers(0, 2**32 - 1), st.floats(1e-3, 1e3))
    def test_scale_invariant_and_antisymmetric(self, seed, scale):
        t = np.random.default_rng(seed).normal(size=(4, 3))
        sj = scaled_jacobian(t)
        assert scaled_jacobian(scale * t) == pytest.approx(sj, abs=1e-9)
        assert -1.0 <= sj <= 1.0
        for perm, odd in permutations_parity():
            expected = -sj if odd else sj
            assert scaled_jacobian(t[list(perm)]) == pytest.approx(expected, abs=1e-9)


def regular_mesh():
    # two regular tets sharing a face, positively oriented
    a, b, c, d = regular_tet()
    e = 2 * (a + b + c) / 3 - d  # mirror d through face abc
    nodes = np.array([a, b, c, d, e])
    tets = np.array([[0, 1, 2, 3], [0, 2, 1, 4]])
    return TetMesh(nodes, tets)


class TestQualityReport:
    def test_regular(self):
        r = tet_quality_report(regular_mesh())
        assert r.median == pytest.approx(1.0, abs=1e-9)
        assert r.invalid_count == 0 and r.element_count == 2

    def test_inverted_element(self):
        m = regular_mesh()
        tets = np.vstack([m.tets, [[1, 0, 2, 3]]])
        r = tet_quality_report(TetMesh(m.nodes, tets))
        assert r.invalid_count == 1

    def test_scaling(self):
        m = regular_mesh()
        a = tet_quality_report(m).as_dict()
        b = tet_quality_report(TetMesh(m.nodes * 2, m.tets)).as_dict()
        assert a.keys() == b.keys()
        for k in a:
            assert a[k] == pytest.approx(b[k], abs=1e-12)

    def test_empty(self):
        with pytest.raises(DomainError):
            tet_quality_report(TetMesh(np.zeros((4, 3)), np.zeros((0, 4), int)))


NODE0 = "4 3 0 0\n0 0 0 0\n1 1 0 0\n2 0 1 0\n3 0 0 1\n"
ELE0 = "1 4 0\n0 0 1 2 3\n"
NODE1 = "# one-based\n4 3 0 1\n1 0 0 0 5\n2 1 0 0 5\n3 0 1 0 5\n4 0 0 1 5\n"
ELE1 = "1 4 1\n1 1 2 3 4 7\n"


class TestTetIO:
    def test_zero_and_one_based_identical(self, tmp_path):
        (tmp_path / "a.node").write_text(NODE0)
        (tmp_path / "a.ele").write_text(ELE0)
        (tmp_path / "b.node").write_text(NODE1)
        (tmp_path / "b.ele").write_text(ELE1)
        a = read_tetmesh(tmp_path / "a.node", tmp_path / "a.ele")
        b = read_tetmesh(tmp_path / "b.node", tmp_path / "b.ele")
        np.testing.assert_array_equal(a.nodes, b.nodes)
        np.testing.assert_array_equal(a.tets, b.tets)
        assert a.tets.tolist() == [[0, 1, 2, 3]]

    @pytest.mark.parametrize("base", [0, 1])
    def test_round_trip(self, tmp_path, base):
        m = regular_mesh()
        write_tetmesh(m, tmp_path / "m.node", tmp_path / "m.ele", base=base)
        back = read_tetmesh(tmp_path / "m.node", tmp_path / "m.ele")
        np.testing.assert_array_equal(back.nodes, m.nodes)
        np.testing.assert_array_equal(back.tets, m.tets)

    @pytest.mark.parametrize("node, ele", [
        ("5 3 0 0\n0 0 0 0\n1 1 0 0\n2 0 1 0\n3 0 0 1\n", ELE0),  # count mismatch
        (NODE0, "1 4 0\n0 0 1 2 4\n"),                          # index out of range
        (NODE0, "1 10 0\n0 0 1 2 3 4 5 6 7 8 9\n"),              # not tets
        ("4 2 0 0\n0 0 0\n1 1 0\n2 0 1\n3 1 1\n", ELE0),        # 2D nodes
        ("4 3 0 0\n0 0 0 0\n1 1 0 0\n2 0 1 0\n3 0 0\n", ELE0),   # short row
        ("4 3 0 0\n2 0 0 0\n3 1 0 0\n4 0 1 0\n5 0 0 1\n", ELE0), # bad base
    ])
    def test_corrupt(self, tmp_path, node, ele):
        (tmp_path / "c.node").write_text(node)
        (tmp_path / "c.ele").write_text(ele)
        with pytest.raises(CorruptFile):
            read_tetmesh(tmp_path / "c.node", tmp_path / "c.ele")


class TestSTL:
    def test_single_triangle_size(self, tmp_path):
        write_stl(SurfaceMesh([[0, 0, 0], [1, 0, 0], [0, 1, 0]], [[0, 1, 2]]), tmp_path / "t.stl")
        assert (tmp_path / "t.stl").stat().st_size == 134

    def test_round_trip(self, tmp_path):
        m = cube_mesh()
        write_stl(m, tmp_path / "c.stl")
        back = read_stl(tmp_path / "c.stl")
        assert len(back.triangles) == 12
        assert back.volume() == pytest.approx(1.0)
        assert watertight_check(back).is_watertight

    def test_truncated(self, tmp_path):
        write_stl(cube_mesh(), tmp_path / "c.stl")
        blob = (tmp_path / "c.stl").read_bytes()
        (tmp_path / "d.stl").write_bytes(blob[:-10])
        with pytest.raises(CorruptFile):
            read_stl(tmp_path / "d.stl")
