"""Structured triangular meshes on the unit square.

Meshes are uniform criss triangulations: the square is divided into
n x n cells and every cell is split along the same lower-left to
upper-right diagonal.  Vertices are numbered row-major, x fastest, so
vertex (i, j) has index j*(n+1) + i and coordinates (i/n, j/n).  The
two triangles of cell (i, j) get element indices 2*(j*n+i) (lower) and
2*(j*n+i) + 1 (upper), both oriented counterclockwise.

Refinement is dyadic, so coarse vertices are a subset of fine vertices
and the coarse-to-fine prolongation is exact on piecewise linears.
"""

from __future__ import annotations

import numpy as np
import scipy.sparse as sp


class Mesh:
    """Immutable uniform triangulation of [0,1]^2 with n subdivisions per side.

    Attributes
    ----------
    n : int
        Subdivisions per side; mesh size h = 1/n.
    vertices : (nv, 2) float array
        Vertex coordinates, row-major numbering (x fastest).
    triangles : (nt, 3) int array
        Vertex indices per triangle, counterclockwise.
    """

    def __init__(self, n, vertices, triangles, vertex_tri_indptr, vertex_tri_indices):
        self.n = int(n)
        self.h = 1.0 / n
        self.vertices = vertices
        self.triangles = triangles
        # CSR-style vertex -> incident triangle adjacency
        self._vt_indptr = vertex_tri_indptr
        self._vt_indices = vertex_tri_indices
        for arr in (vertices, triangles, vertex_tri_indptr, vertex_tri_indices):
            arr.setflags(write=False)

    @property
    def num_vertices(self):
        return self.vertices.shape[0]

    @property
    def num_triangles(self):
        return self.triangles.shape[0]

    @property
    def triangle_area(self):
        """Common signed area of every triangle, h^2/2."""
        return 0.5 * self.h * self.h

    def incident_triangles(self, vertex):
        """Indices of triangles incident to a vertex."""
        return self._vt_indices[self._vt_indptr[vertex]:self._vt_indptr[vertex + 1]]

    def incident_counts(self):
        """Number of incident triangles per vertex, as an array."""
        return np.diff(self._vt_indptr)

    def vertex_triangle_adjacency(self):
        """Sparse boolean (num_vertices, num_triangles) incidence matrix."""
        data = np.ones(self._vt_indices.shape[0], dtype=np.int8)
        return sp.csr_matrix(
            (data, self._vt_indices, self._vt_indptr),
            shape=(self.num_vertices, self.num_triangles),
        )

    def boundary_vertex_mask(self):
        """Boolean mask of vertices on the boundary of the unit square."""
        i = np.arange(self.num_vertices) % (self.n + 1)
        j = np.arange(self.num_vertices) // (self.n + 1)
        return (i == 0) | (i == self.n) | (j == 0) | (j == self.n)

    def __repr__(self):
        return f"Mesh(n={self.n}, vertices={self.num_vertices}, triangles={self.num_triangles})"


class Patch:
    """An l-layer element neighborhood on the coarse mesh.

    ``seed`` is the element index for :func:`element_patch` and the
    vertex index for :func:`vertex_patch`.  ``fine_elements`` and
    ``boundary_flags`` describe the patch on the fine mesh of a
    hierarchy and are only populated when the patch was produced
    through the :class:`Hierarchy` methods.
    """

    def __init__(self, seed, layers, elements, fine_elements=None, boundary_flags=None):
        self.seed = int(seed)
        self.layers = int(layers)
        self.elements = elements
        self.fine_elements = fine_elements
        self.boundary_flags = boundary_flags

    def __repr__(self):
        return f"Patch(seed={self.seed}, layers={self.layers}, elements={len(self.elements)})"


class Hierarchy:
    """A coarse mesh, its dyadic refinement, and the nodal prolongation map.

    Attributes
    ----------
    coarse, fine : Mesh
    prolongation : (fine_nv, coarse_nv) sparse CSR matrix
        Takes coarse nodal values to fine nodal values of the same
        piecewise-linear function.
    """

    def __init__(self, coarse, fine, prolongation, fine_owner):
        self.coarse = coarse
        self.fine = fine
        self.prolongation = prolongation
        # coarse element owning each fine element
        self.fine_owner = fine_owner
        self.fine_owner.setflags(write=False)
        self._fine_incident_total = fine.incident_counts()

    @property
    def ratio(self):
        return self.fine.n // self.coarse.n

    def element_patch(self, seed, layers):
        """Patch around a coarse element with induced fine-mesh data."""
        return self._induce_fine(element_patch(self.coarse, seed, layers))

    def vertex_patch(self, vertex, layers):
        """Patch around a coarse vertex's hat support with fine-mesh data."""
        return self._induce_fine(vertex_patch(self.coarse, vertex, layers))

    def _induce_fine(self, patch):
        inside = np.isin(self.fine_owner, patch.elements)
        patch.fine_elements = np.flatnonzero(inside)
        # a fine vertex sits on the patch boundary when it touches
        # elements on both sides of the patch interface
        adj = self.fine.vertex_triangle_adjacency()
        inside_count = adj @ inside.astype(np.int64)
        touched = inside_count > 0
        patch.boundary_flags = touched & (inside_count < self._fine_incident_total)
        return patch

    def __repr__(self):
        return f"Hierarchy(coarse_n={self.coarse.n}, fine_n={self.fine.n})"


def build_uniform(n):
    """Build the uniform criss triangulation with n subdivisions per side.

    Parameters
    ----------
    n : int
        Number of subdivisions per side, n >= 1.

    Returns
    -------
    Mesh
    """
    n = int(n)
    if n < 1:
        raise ValueError(f"mesh subdivisions must be >= 1, got {n}")
    side = n + 1
    ii, jj = np.meshgrid(np.arange(side), np.arange(side), indexing="xy")
    vertices = np.column_stack([(ii / n).ravel(), (jj / n).ravel()])

    ci, cj = np.meshgrid(np.arange(n), np.arange(n), indexing="xy")
    ci = ci.ravel()
    cj = cj.ravel()
    v00 = cj * side + ci
    v10 = v00 + 1
    v01 = v00 + side
    v11 = v01 + 1
    lower = np.column_stack([v00, v10, v11])
    upper = np.column_stack([v00, v11, v01])
    triangles = np.empty((2 * n * n, 3), dtype=np.int64)
    triangles[0::2] = lower
    triangles[1::2] = upper

    nt = triangles.shape[0]
    tri_ids = np.repeat(np.arange(nt), 3)
    order = np.argsort(triangles.ravel(), kind="stable")
    vt_indices = tri_ids[order]
    counts = np.bincount(triangles.ravel(), minlength=side * side)
    vt_indptr = np.concatenate([[0], np.cumsum(counts)])
    return Mesh(n, vertices, triangles, vt_indptr, vt_indices)


def refine(mesh, levels):
    """Refine a mesh dyadically and return the two-level hierarchy.

    Parameters
    ----------
    mesh : Mesh
        Coarse mesh.
    levels : int
        Number of dyadic refinements, >= 0.  levels=0 yields an
        identity hierarchy (fine = coarse).

    Returns
    -------
    Hierarchy
    """
    levels = int(levels)
    if levels < 0:
        raise ValueError(f"refinement levels must be >= 0, got {levels}")
    fine = build_uniform(mesh.n * 2**levels)
    prolongation = _prolongation_matrix(mesh, fine)
    fine_owner = _fine_owner_map(mesh, fine)
    return Hierarchy(mesh, fine, prolongation, fine_owner)


def _grow_layers(mesh, inside, layers):
    # one layer: all elements sharing at least one vertex with the set
    adj = mesh.vertex_triangle_adjacency()
    for _ in range(layers):
        verts = (adj @ inside) > 0
        grown = (adj.T @ verts) > 0
        if np.array_equal(grown, inside):
            break
        inside = grown
    return inside


def element_patch(mesh, seed, layers):
    """l-fold vertex-neighborhood closure of a seed element.

    One layer adds all elements sharing at least one vertex with the
    current element set.
    """
    if not 0 <= seed < mesh.num_triangles:
        raise ValueError(f"seed element {seed} out of range for {mesh!r}")
    if layers < 0:
        raise ValueError(f"layers must be >= 0, got {layers}")
    inside = np.zeros(mesh.num_triangles, dtype=bool)
    inside[seed] = True
    return Patch(seed, layers, np.flatnonzero(_grow_layers(mesh, inside, layers)))


def vertex_patch(mesh, vertex, layers):
    """l-fold closure of all elements incident to a vertex.

    The layer-0 patch is the support of the vertex hat function, so the
    grown patch is centered on the vertex rather than on any one of its
    elements; ``seed`` records the vertex index.
    """
    if not 0 <= vertex < mesh.num_vertices:
        raise ValueError(f"vertex {vertex} out of range for {mesh!r}")
    if layers < 0:
        raise ValueError(f"layers must be >= 0, got {layers}")
    inside = np.zeros(mesh.num_triangles, dtype=bool)
    inside[mesh.incident_triangles(vertex)] = True
    return Patch(vertex, layers, np.flatnonzero(_grow_layers(mesh, inside, layers)))


def _prolongation_matrix(coarse, fine):
    """Nodal interpolation of coarse P1 functions at fine vertices.

    Local coordinates are derived from integer vertex indices so the
    interpolation weights are exact for any refinement ratio.
    """
    nc = coarse.n
    side_c = nc + 1
    r = fine.n // nc
    idx = np.arange(fine.num_vertices)
    fi = idx % (fine.n + 1)
    fj = idx // (fine.n + 1)
    ci = np.minimum(fi // r, nc - 1)
    cj = np.minimum(fj // r, nc - 1)
    s = (fi - ci * r) / r
    t = (fj - cj * r) / r
    v00 = cj * side_c + ci
    v10 = v00 + 1
    v01 = v00 + side_c
    v11 = v01 + 1

    lower = s >= t
    cols = np.where(lower[:, None], np.column_stack([v00, v10, v11]),
                    np.column_stack([v00, v01, v11]))
    w_low = np.column_stack([1.0 - s, s - t, t])
    w_up = np.column_stack([1.0 - t, t - s, s])
    weights = np.where(lower[:, None], w_low, w_up)

    rows = np.repeat(idx, 3)
    mat = sp.csr_matrix(
        (weights.ravel(), (rows, cols.ravel())),
        shape=(fine.num_vertices, coarse.num_vertices),
    )
    mat.eliminate_zeros()
    mat.sort_indices()
    return mat


def _fine_owner_map(coarse, fine):
    """Coarse element containing each fine element.

    With aligned diagonals no fine element straddles a coarse element,
    so integer cell positions decide ownership exactly.
    """
    nc = coarse.n
    r = fine.n // nc
    cell = np.arange(fine.num_triangles) // 2
    upper = np.arange(fine.num_triangles) % 2 == 1
    fi = cell % fine.n
    fj = cell // fine.n
    ci = fi // r
    cj = fj // r
    li = fi - ci * r
    lj = fj - cj * r
    coarse_upper = (li < lj) | ((li == lj) & upper)
    return 2 * (cj * nc + ci) + coarse_upper
