import io

import numpy as np
import pytest

from polyharm.mesh import (
    MeshError,
    Triangulation,
    ancestor_map,
    check_conforming,
    check_initial_condition,
    initial_mesh,
    overlay,
    read_mesh,
    refine_nvb,
    uniform_red,
    write_mesh,
)


def two_triangle_square():
    v = np.array([(0, 0), (1, 0), (1, 1), (0, 1)], dtype=float)
    # both refinement edges are the diagonal (0,0)-(1,1)
    return Triangulation(v, np.array([(0, 2, 3), (2, 0, 1)]))


def keys(mesh):
    return set(zip(mesh.roots.tolist(), mesh.codes.tolist()))


def random_refinement(mesh, rng, steps):
    for _ in range(steps):
        n = max(1, mesh.nelem // 6)
        mesh = refine_nvb(mesh, rng.choice(mesh.nelem, size=n, replace=False))
    return mesh


def tree_union_leaves(*meshes):
    """Leaves of the union of the genealogy trees of the given meshes."""
    nodes = set()
    for mesh in meshes:
        for r, c in keys(mesh):
            while c >= 1:
                nodes.add((r, c))
                c >>= 1
    return {(r, c) for r, c in nodes if (r, 2 * c) not in nodes and (r, 2 * c + 1) not in nodes}


def test_compatible_pair_bisects_both():
    mesh = refine_nvb(two_triangle_square(), [0])
    assert mesh.nelem == 4
    assert check_conforming(mesh)


def test_closure_terminates_and_conforms():
    mesh = uniform_red(initial_mesh("square"))
    rng = np.random.default_rng(1)
    for _ in range(20):
        mesh = refine_nvb(mesh, [int(rng.integers(mesh.nelem))])
        assert check_conforming(mesh)
    assert mesh.total_area() == pytest.approx(1.0, abs=1e-14)


def test_marked_triangles_are_bisected():
    rng = np.random.default_rng(2)
    mesh = random_refinement(initial_mesh("lshape"), rng, 3)
    marks = rng.choice(mesh.nelem, size=5, replace=False)
    fine = refine_nvb(mesh, marks)
    anc = ancestor_map(fine, mesh)
    for t in marks:
        assert np.count_nonzero(anc == t) >= 2


def test_empty_marks_return_same_mesh():
    mesh = initial_mesh("square")
    assert refine_nvb(mesh, []) is mesh


def test_invalid_marks_rejected():
    mesh = initial_mesh("square")
    with pytest.raises(MeshError):
        refine_nvb(mesh, [mesh.nelem])
    with pytest.raises(MeshError):
        refine_nvb(mesh, [-1])


def test_uniform_red_examples():
    mesh = two_triangle_square()
    fine = uniform_red(mesh)
    assert fine.nelem == 8
    assert fine.nvert == mesh.nvert + mesh.nedge
    np.testing.assert_allclose(fine.areas, 0.125)
    for _ in range(3):
        finer = uniform_red(fine)
        assert finer.nvert == fine.nvert + fine.nedge
        assert finer.h.max() == pytest.approx(fine.h.max() / 2)
        assert check_conforming(finer)
        fine = finer


def test_initial_meshes():
    sq = initial_mesh("square")
    ls = initial_mesh("lshape")
    assert sq.nelem == 4 and ls.nelem == 6
    assert check_initial_condition(sq) and check_initial_condition(ls)
    assert check_conforming(sq) and check_conforming(ls)
    assert ls.total_area() == 3.0
    assert np.all(sq.areas > 0) and np.all(ls.areas > 0)
    with pytest.raises(MeshError):
        initial_mesh("disk")


def test_edge_orientation_conventions():
    mesh = uniform_red(initial_mesh("lshape"))
    a, b, length, normal, tangent = mesh.edge_geometry
    tp = mesh.edge_elems[:, 0]
    mid = 0.5 * (a + b)
    # outer normal of T+ points away from its centroid
    assert np.all(np.einsum("ij,ij->i", normal, mid - mesh.centroids[tp]) > 0)
    rot = np.column_stack([-normal[:, 1], normal[:, 0]])
    np.testing.assert_allclose(tangent, rot, atol=1e-15)
    assert np.all(mesh.edge_elems[:, 0] < np.where(mesh.edge_elems[:, 1] < 0, np.inf, mesh.edge_elems[:, 1]))


def test_h_is_sqrt_area_and_halves_area_squared():
    rng = np.random.default_rng(4)
    mesh = random_refinement(initial_mesh("square"), rng, 5)
    np.testing.assert_allclose(mesh.h, np.sqrt(mesh.areas))
    root_area = mesh.coarse.areas[mesh.roots]
    np.testing.assert_allclose(mesh.areas, root_area / 2.0**mesh.depth, rtol=1e-12)


def test_finitely_many_shapes():
    rng = np.random.default_rng(5)
    mesh = random_refinement(initial_mesh("square"), rng, 10)

    def angles(c):
        out = []
        for i in range(3):
            u = c[(i + 1) % 3] - c[i]
            v = c[(i + 2) % 3] - c[i]
            out.append(np.arccos(np.dot(u, v) / np.linalg.norm(u) / np.linalg.norm(v)))
        return tuple(np.round(sorted(out), 8))

    shapes = {angles(c) for c in mesh.corners}
    # all initial triangles are similar; NVB generates at most four classes
    assert len(shapes) <= 4
    assert min(min(s) for s in shapes) >= np.pi / 4 - 1e-7


def test_overlay_examples():
    rng = np.random.default_rng(6)
    ta = random_refinement(initial_mesh("square"), rng, 3)
    tb = uniform_red(ta)
    assert keys(overlay(ta, tb)) == keys(tb)
    t0 = ta.coarse
    assert keys(overlay(ta, t0)) == keys(ta)
    assert keys(overlay(ta, ta)) == keys(ta)


def test_overlay_disjoint_corners():
    t0 = initial_mesh("square")
    ta, tb = t0, t0
    for _ in range(4):
        ta = refine_nvb(ta, [int(np.argmin(np.linalg.norm(ta.centroids, axis=1)))])
        tb = refine_nvb(tb, [int(np.argmin(np.linalg.norm(tb.centroids - 1.0, axis=1)))])
    ov = overlay(ta, tb)
    assert keys(ov) == tree_union_leaves(ta, tb)
    assert ov.nelem <= ta.nelem + tb.nelem - t0.nelem
    assert check_conforming(ov)


def test_overlay_against_tree_union_random():
    rng = np.random.default_rng(7)
    for domain in ("square", "lshape"):
        t0 = initial_mesh(domain)
        for _ in range(5):
            ta = random_refinement(t0, rng, int(rng.integers(1, 5)))
            tb = random_refinement(t0, rng, int(rng.integers(1, 5)))
            tc = random_refinement(t0, rng, int(rng.integers(1, 5)))
            ab = overlay(ta, tb)
            assert keys(ab) == tree_union_leaves(ta, tb)
            assert keys(ab) == keys(overlay(tb, ta))
            assert keys(overlay(ab, tc)) == keys(overlay(ta, overlay(tb, tc)))
            assert check_conforming(ab)
            assert ab.total_area() == pytest.approx(t0.total_area(), abs=1e-13)
            assert ab.nelem <= ta.nelem + tb.nelem - t0.nelem


def test_overlay_rejects_other_forest():
    with pytest.raises(MeshError):
        overlay(initial_mesh("square"), initial_mesh("lshape"))


def test_ancestor_map():
    rng = np.random.default_rng(8)
    coarse = random_refinement(initial_mesh("square"), rng, 2)
    fine = random_refinement(coarse, rng, 2)
    anc = ancestor_map(fine, coarse)
    inside = np.einsum("tij,tj->ti", np.linalg.inv(
        np.stack([coarse.corners[anc][:, 1] - coarse.corners[anc][:, 0],
                  coarse.corners[anc][:, 2] - coarse.corners[anc][:, 0]], axis=2)),
        fine.centroids - coarse.corners[anc][:, 0])
    assert np.all(inside > -1e-12) and np.all(inside.sum(axis=1) < 1 + 1e-12)
    with pytest.raises(MeshError):
        ancestor_map(coarse, fine)


def test_mesh_io_round_trip(tmp_path):
    rng = np.random.default_rng(9)
    mesh = random_refinement(initial_mesh("lshape"), rng, 3)
    path = tmp_path / "m.txt"
    write_mesh(mesh, path)
    back = read_mesh(path)
    np.testing.assert_array_equal(back.vertices, mesh.vertices)
    np.testing.assert_array_equal(back.triangles, mesh.triangles)
    text = path.read_text().splitlines()
    assert text[0] == f"vertices {mesh.nvert}"
    assert text[mesh.nvert + 1] == f"triangles {mesh.nelem}"
    buf = io.StringIO()
    write_mesh(back, buf)
    assert buf.getvalue() == path.read_text()
