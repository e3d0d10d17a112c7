"""Uniform rectangle/triangle refinement hierarchies on the unit square.

Level n is a 2**(n-1) x 2**(n-1) grid of congruent squares; the triangular
kind splits every square along its top-left to bottom-right diagonal.  All
entity orderings are deterministic (row-major cells, first-encounter edges),
so rebuilding a mesh is bit-identical.

Conventions baked in here and relied on everywhere else:

* element vertices are listed counterclockwise,
* each edge is directed from its lower to its higher vertex index,
* the stored unit normal is the +90 degree rotation of that direction,
* adjacency records the sign that turns the stored normal into the
  outward normal of each neighbouring element.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

RECTANGULAR = "rectangular"
TRIANGULAR = "triangular"
KINDS = (RECTANGULAR, TRIANGULAR)

#: levels past this are outside the desk-scale envelope of the study harness
MAX_LEVEL = 8


class MeshError(ValueError):
    """Invalid mesh request (unknown kind or level < 1)."""


@dataclass(frozen=True)
class Element:
    """Per-element geometry plus the oriented trace of its edges.

    ``edge_starts[i]``, ``edge_dirs[i]`` and ``edge_lengths[i]`` describe
    local edge ``i = (v_i, v_{i+1})`` in its *global* orientation, so edge
    bases parameterized here are single-valued across neighbours.
    ``edge_signs[i]`` flips the global normal to the outward one.
    """

    index: int
    kind: str
    vertices: np.ndarray
    centroid: np.ndarray
    area: float
    diameter: float
    edge_ids: np.ndarray
    edge_signs: np.ndarray
    edge_starts: np.ndarray
    edge_dirs: np.ndarray
    edge_lengths: np.ndarray

    @property
    def n_edges(self) -> int:
        return len(self.edge_ids)

    def outward_normal(self, local_edge: int) -> np.ndarray:
        d = self.edge_dirs[local_edge]
        return self.edge_signs[local_edge] * np.array([-d[1], d[0]])


@dataclass(frozen=True)
class EdgeGeometry:
    """Length, midpoint, unit normal and arclength chart of one edge."""

    length: float
    midpoint: np.ndarray
    normal: np.ndarray
    start: np.ndarray
    direction: np.ndarray

    def point_at(self, t):
        """Physical point(s) at arclength ``t`` from the start vertex."""
        t = np.asarray(t, dtype=float)
        return self.start + np.multiply.outer(t, self.direction)


class Mesh:
    """Immutable uniform mesh of the unit square.

    Attributes are plain numpy arrays; they are frozen after construction
    and safe to share across threads.  ``edge_elems`` holds the one or two
    adjacent element indices per edge (-1 padding), ``edge_out_signs`` the
    matching outward-normal signs.
    """

    def __init__(self, kind: str, level: int):
        if kind not in KINDS:
            raise MeshError(f"unknown mesh kind {kind!r}; expected one of {KINDS}")
        if not isinstance(level, (int, np.integer)) or level < 1:
            raise MeshError(f"mesh level must be a positive integer, got {level!r}")
        self.kind = kind
        self.level = int(level)
        self.cells_per_side = 2 ** (self.level - 1)
        self._build()
        for name in (
            "vertices", "elements", "edges", "edge_elems", "edge_out_signs",
            "edge_local_index", "boundary", "element_edges",
            "element_edge_signs", "areas", "centroids", "diameters",
            "edge_lengths", "edge_midpoints", "edge_normals",
        ):
            getattr(self, name).setflags(write=False)

    # -- construction -----------------------------------------------------

    def _build(self) -> None:
        n = self.cells_per_side
        coords = np.arange(n + 1) / n
        xx, yy = np.meshgrid(coords, coords, indexing="xy")
        self.vertices = np.column_stack([xx.ravel(), yy.ravel()])

        cells = []
        for iy in range(n):
            for ix in range(n):
                bl = iy * (n + 1) + ix
                br = bl + 1
                tl = bl + (n + 1)
                tr = tl + 1
                if self.kind == RECTANGULAR:
                    cells.append((bl, br, tr, tl))
                else:
                    cells.append((bl, br, tl))
                    cells.append((br, tr, tl))
        self.elements = np.array(cells, dtype=np.int64)

        self._build_edges()
        self._build_geometry()

    def _build_edges(self) -> None:
        nv_el = self.elements.shape[1]
        edge_index: dict[tuple[int, int], int] = {}
        edges = []
        edge_elems = []
        edge_signs = []
        edge_local = []
        el_edges = np.empty_like(self.elements)
        for e, verts in enumerate(self.elements):
            for i in range(nv_el):
                a, b = int(verts[i]), int(verts[(i + 1) % nv_el])
                key = (a, b) if a < b else (b, a)
                eid = edge_index.get(key)
                if eid is None:
                    eid = len(edges)
                    edge_index[key] = eid
                    edges.append(key)
                    edge_elems.append([-1, -1])
                    edge_signs.append([0, 0])
                    edge_local.append([-1, -1])
                slot = 0 if edge_elems[eid][0] == -1 else 1
                edge_elems[eid][slot] = e
                edge_local[eid][slot] = i
                el_edges[e, i] = eid
        self.edges = np.array(edges, dtype=np.int64)
        self.edge_elems = np.array(edge_elems, dtype=np.int64)
        self.edge_local_index = np.array(edge_local, dtype=np.int64)
        self.element_edges = el_edges
        self.boundary = self.edge_elems[:, 1] == -1

        lo = self.vertices[self.edges[:, 0]]
        hi = self.vertices[self.edges[:, 1]]
        vec = hi - lo
        self.edge_lengths = np.linalg.norm(vec, axis=1)
        self.edge_midpoints = 0.5 * (lo + hi)
        dirs = vec / self.edge_lengths[:, None]
        self.edge_normals = np.column_stack([-dirs[:, 1], dirs[:, 0]])
        self._edge_dirs = dirs
        self._edge_starts = lo

        centroids = self.vertices[self.elements].mean(axis=1)
        signs = np.array(edge_signs, dtype=np.int64)
        for eid in range(len(self.edges)):
            for slot in (0, 1):
                el = self.edge_elems[eid, slot]
                if el == -1:
                    continue
                outward = self.edge_midpoints[eid] - centroids[el]
                signs[eid, slot] = 1 if self.edge_normals[eid] @ outward > 0 else -1
        self.edge_out_signs = signs
        self.element_edge_signs = np.empty_like(self.element_edges)
        for eid in range(len(self.edges)):
            for slot in (0, 1):
                el = self.edge_elems[eid, slot]
                if el != -1:
                    self.element_edge_signs[el, self.edge_local_index[eid, slot]] = signs[eid, slot]
        self.centroids = centroids

    def _build_geometry(self) -> None:
        pts = self.vertices[self.elements]
        if self.kind == RECTANGULAR:
            side_x = pts[:, 1] - pts[:, 0]
            side_y = pts[:, 3] - pts[:, 0]
            self.areas = np.abs(side_x[:, 0] * side_y[:, 1] - side_x[:, 1] * side_y[:, 0])
            self.diameters = np.linalg.norm(pts[:, 2] - pts[:, 0], axis=1)
        else:
            v1 = pts[:, 1] - pts[:, 0]
            v2 = pts[:, 2] - pts[:, 0]
            self.areas = 0.5 * np.abs(v1[:, 0] * v2[:, 1] - v1[:, 1] * v2[:, 0])
            sides = np.stack([
                np.linalg.norm(pts[:, 1] - pts[:, 0], axis=1),
                np.linalg.norm(pts[:, 2] - pts[:, 1], axis=1),
                np.linalg.norm(pts[:, 0] - pts[:, 2], axis=1),
            ])
            self.diameters = sides.max(axis=0)
        self.h = float(self.diameters.max())

    # -- accessors ---------------------------------------------------------

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_elements(self) -> int:
        return len(self.elements)

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    @property
    def interior_edges(self) -> np.ndarray:
        return np.nonzero(~self.boundary)[0]

    def element(self, index: int) -> Element:
        """Element view with oriented edge traces, as used by the operators."""
        verts = self.vertices[self.elements[index]]
        eids = self.element_edges[index]
        return Element(
            index=int(index),
            kind=self.kind,
            vertices=verts,
            centroid=self.centroids[index],
            area=float(self.areas[index]),
            diameter=float(self.diameters[index]),
            edge_ids=eids,
            edge_signs=self.element_edge_signs[index],
            edge_starts=self._edge_starts[eids],
            edge_dirs=self._edge_dirs[eids],
            edge_lengths=self.edge_lengths[eids],
        )

    def edge_geometry(self, edge_id: int) -> EdgeGeometry:
        if not 0 <= edge_id < self.n_edges:
            raise MeshError(f"edge id {edge_id} out of range [0, {self.n_edges})")
        return EdgeGeometry(
            length=float(self.edge_lengths[edge_id]),
            midpoint=self.edge_midpoints[edge_id],
            normal=self.edge_normals[edge_id],
            start=self._edge_starts[edge_id],
            direction=self._edge_dirs[edge_id],
        )


def build_mesh(kind: str, level: int) -> Mesh:
    """Build the level-``level`` uniform mesh of the given kind.

    Level 1 is a single square (or its two triangles); each level halves h.
    """
    return Mesh(kind, level)


def element_from_vertices(vertices) -> Element:
    """Standalone element for tests and demos.

    Edges are directed by ascending local vertex index, mirroring the global
    convention of a one-element mesh.  Quadrilaterals must be axis-aligned
    rectangles (the only supported four-sided shape).
    """
    verts = np.asarray(vertices, dtype=float)
    nv = len(verts)
    if nv == 3:
        kind = TRIANGULAR
        v1, v2 = verts[1] - verts[0], verts[2] - verts[0]
        area = 0.5 * abs(v1[0] * v2[1] - v1[1] * v2[0])
        diameter = max(np.linalg.norm(verts[i] - verts[j]) for i in range(3) for j in range(i))
    elif nv == 4:
        kind = RECTANGULAR
        sx, sy = verts[1] - verts[0], verts[3] - verts[0]
        if abs(sx @ sy) > 1e-14 or abs(sx[1]) > 1e-14 or abs(sy[0]) > 1e-14:
            raise MeshError("four-sided elements must be axis-aligned rectangles")
        area = abs(sx[0] * sy[1])
        diameter = float(np.linalg.norm(verts[2] - verts[0]))
    else:
        raise MeshError(f"elements have 3 or 4 vertices, got {nv}")
    centroid = verts.mean(axis=0)
    starts, dirs, lengths, signs = [], [], [], []
    for i in range(nv):
        a, b = i, (i + 1) % nv
        lo, hi = (a, b) if a < b else (b, a)
        vec = verts[hi] - verts[lo]
        length = float(np.linalg.norm(vec))
        d = vec / length
        normal = np.array([-d[1], d[0]])
        mid = 0.5 * (verts[lo] + verts[hi])
        starts.append(verts[lo])
        dirs.append(d)
        lengths.append(length)
        signs.append(1 if normal @ (mid - centroid) > 0 else -1)
    return Element(
        index=-1,
        kind=kind,
        vertices=verts,
        centroid=centroid,
        area=float(area),
        diameter=float(diameter),
        edge_ids=np.arange(nv),
        edge_signs=np.array(signs, dtype=np.int64),
        edge_starts=np.array(starts),
        edge_dirs=np.array(dirs),
        edge_lengths=np.array(lengths),
    )


def dump_mesh(mesh: Mesh) -> str:
    """Plain-text mesh dump: ``v x y``, ``e i j k [l]``, ``g v1 v2 flag`` lines."""
    out = []
    for x, y in mesh.vertices:
        out.append(f"v {x:.17g} {y:.17g}")
    for verts in mesh.elements:
        out.append("e " + " ".join(str(int(v)) for v in verts))
    for eid, (a, b) in enumerate(mesh.edges):
        out.append(f"g {int(a)} {int(b)} {int(mesh.boundary[eid])}")
    return "\n".join(out) + "\n"
