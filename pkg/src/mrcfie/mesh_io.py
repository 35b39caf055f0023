"""Gmsh ASCII 2.2 and OFF readers/writers for triangle surfaces."""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .mesh import MeshError, TriMesh, build_connectivity, orient

_GMSH_TRIANGLE = 2


def _read_msh(text: str) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    lines = text.splitlines()
    pos = 0

    def section(name: str) -> int:
        for i in range(pos, len(lines)):
            if lines[i].strip() == name:
                return i
        raise MeshError(f"missing {name} section")

    pos = section("$MeshFormat")
    version = lines[pos + 1].split()
    if not version or not version[0].startswith("2"):
        raise MeshError(f"unsupported msh version {version[:1]}")
    if len(version) > 1 and version[1] != "0":
        raise MeshError("binary msh files are not supported")

    pos = section("$Nodes")
    n_nodes = int(lines[pos + 1])
    tags = {}
    pts = np.empty((n_nodes, 3))
    for i in range(n_nodes):
        parts = lines[pos + 2 + i].split()
        tags[int(parts[0])] = i
        pts[i] = [float(x) for x in parts[1:4]]

    pos = section("$Elements")
    n_elem = int(lines[pos + 1])
    tris, phys = [], []
    for i in range(n_elem):
        parts = [int(x) for x in lines[pos + 2 + i].split()]
        if parts[1] != _GMSH_TRIANGLE:
            continue
        n_tags = parts[2]
        nodes = parts[3 + n_tags: 6 + n_tags]
        try:
            tris.append([tags[n] for n in nodes])
        except KeyError as exc:
            raise MeshError(f"element references unknown node {exc.args[0]}") from None
        phys.append(parts[3] if n_tags else 0)
    if not tris:
        raise MeshError("no triangle elements")
    return pts, np.array(tris, dtype=np.int64), np.array(phys, dtype=np.int64)


def _read_off(text: str) -> tuple[np.ndarray, np.ndarray, None]:
    tokens = []
    for line in text.splitlines():
        line = line.split("#", 1)[0].strip()
        if line:
            tokens.append(line)
    if not tokens or not tokens[0].startswith("OFF"):
        raise MeshError("missing OFF header")
    head = tokens[0][3:].split() or tokens.pop(1).split()
    nv, nf = int(head[0]), int(head[1])
    body = tokens[1:]
    pts = np.array([[float(x) for x in body[i].split()[:3]] for i in range(nv)])
    tris = []
    for line in body[nv: nv + nf]:
        parts = [int(x) for x in line.split()]
        if parts[0] != 3:
            raise MeshError("only triangular OFF faces are supported")
        tris.append(parts[1:4])
    return pts, np.array(tris, dtype=np.int64), None


def load_mesh(path: str | Path, format: str | None = None) -> TriMesh:
    """Read a triangle surface, repairing orientation by flood fill.

    Raises
    ------
    MeshError
        On parse failures, edges shared by more than two triangles and
        non-orientable surfaces.
    """
    path = Path(path)
    fmt = (format or path.suffix.lstrip(".")).lower()
    text = path.read_text()
    try:
        if fmt == "msh":
            pts, tris, labels = _read_msh(text)
        elif fmt == "off":
            pts, tris, labels = _read_off(text)
        else:
            raise MeshError(f"unknown mesh format {fmt!r}")
    except (IndexError, ValueError) as exc:
        if isinstance(exc, MeshError):
            raise
        raise MeshError(f"cannot parse {path.name}: {exc}") from exc
    tris = orient(pts, tris)
    mesh = TriMesh(pts, tris, labels=labels)
    build_connectivity(mesh)
    return mesh


def save_mesh(mesh: TriMesh, path: str | Path, format: str | None = None) -> None:
    path = Path(path)
    fmt = (format or path.suffix.lstrip(".")).lower()
    pts, tris = mesh.vertices, mesh.triangles
    out = []
    if fmt == "msh":
        labels = mesh.labels if mesh.labels is not None else np.zeros(len(tris), dtype=np.int64)
        out += ["$MeshFormat", "2.2 0 8", "$EndMeshFormat", "$Nodes", str(len(pts))]
        out += [f"{i + 1} {p[0]!r} {p[1]!r} {p[2]!r}" for i, p in enumerate(pts.tolist())]
        out += ["$EndNodes", "$Elements", str(len(tris))]
        out += [f"{i + 1} 2 2 {lab} {lab} {t[0] + 1} {t[1] + 1} {t[2] + 1}"
                for i, (t, lab) in enumerate(zip(tris.tolist(), labels.tolist()))]
        out += ["$EndElements"]
    elif fmt == "off":
        out += ["OFF", f"{len(pts)} {len(tris)} 0"]
        out += [f"{p[0]!r} {p[1]!r} {p[2]!r}" for p in pts.tolist()]
        out += [f"3 {t[0]} {t[1]} {t[2]}" for t in tris.tolist()]
    else:
        raise MeshError(f"unknown mesh format {fmt!r}")
    path.write_text("\n".join(out) + "\n")
