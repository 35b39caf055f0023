import numpy as np
import pytest

from mrcfie.mesh import MeshError, build_connectivity, icosphere, structured_cube
from mrcfie.mesh_io import load_mesh, save_mesh

CUBE_OFF = """OFF
# unit cube
8 12 0
0 0 0
1 0 0
1 1 0
0 1 0
0 0 1
1 0 1
1 1 1
0 1 1
3 0 2 1
3 0 3 2
3 4 5 6
3 4 6 7
3 0 1 5
3 0 5 4
3 1 2 6
3 1 6 5
3 2 3 7
3 2 7 6
3 3 0 4
3 3 4 7
"""


def test_minimal_cube_file(tmp_path):
    p = tmp_path / "cube.off"
    p.write_text(CUBE_OFF)
    m = load_mesh(p)
    assert (m.n_vertices, m.n_triangles) == (8, 12)
    assert build_connectivity(m).n_interior == 18


def test_non_manifold_file(tmp_path):
    p = tmp_path / "bad.off"
    p.write_text("OFF\n5 3 0\n0 0 0\n1 0 0\n0 1 0\n0 -1 0\n0 0 1\n3 0 1 2\n3 1 0 3\n3 0 1 4\n")
    with pytest.raises(MeshError, match="non-manifold"):
        load_mesh(p)


def test_flipped_face_repaired(tmp_path):
    m = icosphere(0.5, 2)
    tri = m.triangles.copy()
    tri[7] = tri[7][::-1]
    tri[:] = tri[:, ::-1]          # everything inward, one face outward
    from mrcfie.mesh import TriMesh
    p = tmp_path / "s.off"
    save_mesh(TriMesh(m.vertices, tri), p)
    fixed = load_mesh(p)
    # outward orientation: signed flux of the position vector is 3V > 0
    c = fixed.corners
    n = np.cross(c[:, 1] - c[:, 0], c[:, 2] - c[:, 0]) / 2
    assert np.all(np.einsum("ij,ij->i", n, c.mean(axis=1)) > 0)
    assert fixed.signed_flux_of_position() > 0


def test_non_orientable_rejected(tmp_path):
    # Moebius strip
    n = 6
    pts, tris = [], []
    for i in range(n):
        a = 2 * np.pi * i / n
        for s in (-0.2, 0.2):
            w = s * np.cos(a / 2)
            pts.append([(1 + w) * np.cos(a), (1 + w) * np.sin(a), s * np.sin(a / 2)])
    for i in range(n):
        a0, a1 = 2 * i, 2 * i + 1
        if i < n - 1:
            b0, b1 = 2 * i + 2, 2 * i + 3
        else:
            b0, b1 = 1, 0
        tris += [[a0, b0, a1], [a1, b0, b1]]
    body = "\n".join(" ".join(repr(float(x)) for x in p) for p in pts)
    faces = "\n".join("3 " + " ".join(map(str, t)) for t in tris)
    p = tmp_path / "m.off"
    p.write_text(f"OFF\n{len(pts)} {len(tris)} 0\n{body}\n{faces}\n")
    with pytest.raises(MeshError, match="non-orientable"):
        load_mesh(p)


@pytest.mark.parametrize("fmt", ["msh", "off"])
def test_round_trip(tmp_path, fmt):
    m = structured_cube(1.0, 2)
    p = tmp_path / f"c.{fmt}"
    save_mesh(m, p)
    back = load_mesh(p)
    assert np.array_equal(back.vertices, m.vertices)
    assert np.array_equal(back.triangles, m.triangles)
    save_mesh(back, tmp_path / f"d.{fmt}")
    assert (tmp_path / f"d.{fmt}").read_text() == p.read_text()


def test_msh_physical_tags(tmp_path):
    text = """$MeshFormat
2.2 0 8
$EndMeshFormat
$Nodes
4
1 0 0 0
2 1 0 0
3 1 1 0
4 0 1 0
$EndNodes
$Elements
3
1 15 2 0 1 1
2 2 2 7 1 1 2 3
3 2 2 9 1 1 3 4
$EndElements
"""
    p = tmp_path / "sq.msh"
    p.write_text(text)
    m = load_mesh(p)
    assert m.n_triangles == 2
    assert list(m.labels) == [7, 9]


@pytest.mark.parametrize("text", ["", "OFF\n3 1 0\n0 0 0\n1 0 0\n", "solid x\n"])
def test_parse_failures(tmp_path, text):
    p = tmp_path / "x.off"
    p.write_text(text)
    with pytest.raises(MeshError):
        load_mesh(p)


def test_unknown_format(tmp_path):
    p = tmp_path / "x.stl"
    p.write_text("solid")
    with pytest.raises(MeshError, match="format"):
        load_mesh(p)
