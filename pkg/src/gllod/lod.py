"""Multiscale space construction by localized orthogonal decomposition.

The coarse L2 projection P_h maps fine fields to coarse coefficients.
Its kernel W (the detail space) carries one corrector problem per
coarse vertex j: find q_j in W, supported on an ell-layer element
patch around the vertex, with

    a(q_j, w) = a(hat_j, w)   for all w in W supported on the patch,

enforced through a saddle-point system with one Lagrange multiplier
per participating coarse dof.  The multiscale basis column is
hat_j - q_j; collecting columns gives a sparse map B from coarse
coefficients to fine ones with P_h B = Id.

Patches with identical free fine dofs share one factorization; with a
saturated ell every corrector reuses a single factorized system.  All
corrector problems are independent and may run on worker threads; the
assembly joins results in dof order, so the basis is reproducible
regardless of schedule.
"""

from __future__ import annotations

import weakref
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
import scipy.linalg
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from gllod import forms

_CACHE_MAGIC = "GLLOD"
# v2: corrector patches centered on the vertex hat support
_CACHE_VERSION = "v2"
_COL_DTYPE = np.dtype([("row", "<i8"), ("re", "<f8"), ("im", "<f8")])

# columns per multi-RHS corrector solve; bounds peak memory on big patches
_RHS_CHUNK = 64


@dataclass(frozen=True)
class LodBasis:
    """Map from coarse dofs to fine coefficients, columns (Id-C)hat_j.

    The matrix is csc for localized patches and a dense ndarray when the
    correctors have global support (saturated ell), where sparse storage
    would only add overhead.
    """

    hierarchy: object
    params: object
    layers: int
    basis: object  # csc_matrix or complex ndarray, shape (Nf, NH)

    def __post_init__(self):
        nf = self.hierarchy.fine.num_vertices
        nh = self.hierarchy.coarse.num_vertices
        if self.basis.shape != (nf, nh):
            raise ValueError(
                f"basis shape {self.basis.shape} does not match hierarchy ({nf}, {nh})"
            )

    @property
    def kappa(self):
        return self.params.kappa

    def column(self, j):
        """Basis column j as a fine Field."""
        col = self.basis[:, j]
        if sp.issparse(col):
            col = np.asarray(col.todense()).ravel()
        return forms.Field(self.hierarchy.fine, np.array(col, dtype=complex))


class _HierarchyOps:
    """Cached projection data for one hierarchy."""

    def __init__(self, hier):
        self.prolongation = hier.prolongation.tocsr()
        m_fine = forms.scalar_mass(hier.fine)
        m_coarse = forms.scalar_mass(hier.coarse)
        self.mixed = (self.prolongation.T @ m_fine).tocsr()  # (NH, Nf)
        self.coarse_mass = m_coarse
        self._coarse_lu = spla.splu(m_coarse.tocsc())

    def project(self, values):
        rhs = self.mixed @ values
        if np.iscomplexobj(rhs):
            return self._coarse_lu.solve(rhs.real) + 1j * self._coarse_lu.solve(rhs.imag)
        return self._coarse_lu.solve(rhs)


_HIER_OPS = weakref.WeakKeyDictionary()


def _hier_ops(hier) -> _HierarchyOps:
    ops = _HIER_OPS.get(hier)
    if ops is None:
        ops = _HierarchyOps(hier)
        _HIER_OPS[hier] = ops
    return ops


def l2_project(hier, values):
    """Coarse coefficients of the L2 projection of a fine field."""
    return _hier_ops(hier).project(np.asarray(values))


def prolong(hier, coarse_values):
    """Fine coefficients of a coarse field (nodal embedding)."""
    return _hier_ops(hier).prolongation @ np.asarray(coarse_values)


def detail_component(hier, values):
    """Projection of a fine field onto the detail space W = ker(P_h)."""
    values = np.asarray(values)
    return values - prolong(hier, l2_project(hier, values))


def lod_decompose(basis: LodBasis, values):
    """P_h^LOD v: the multiscale interpolant (Id-C) P_h v, a projection."""
    return basis.basis @ l2_project(basis.hierarchy, values)


def _free_fine_dofs(hier, patch):
    # a fine vertex is free iff every incident fine element lies in the patch
    fine = hier.fine
    inside = np.zeros(fine.num_triangles, dtype=np.int8)
    inside[patch.fine_elements] = 1
    counts_in = fine.vertex_triangle_adjacency() @ inside
    return counts_in == fine.incident_counts()


def _independent_rows(r_c):
    """Row subset of equal span; drops dependent constraint rows exactly.

    Dropping is exact because the constraint right-hand side is zero, so
    dependent rows are automatically satisfied.  Dense QR is affordable:
    rank deficiency only arises on tiny patches.
    """
    if r_c.shape[0] * r_c.shape[1] > 4_000_000:
        return r_c
    _, rdiag, piv = scipy.linalg.qr(r_c.T.toarray(), mode="economic", pivoting=True)
    d = np.abs(np.diag(rdiag))
    rank = int((d > 1e-12 * max(d[0], 1e-300)).sum()) if d.size else 0
    return r_c[np.sort(piv[:rank])]


def _build_saddle(h_ff, r_c):
    return sp.bmat(
        [[h_ff, r_c.T.astype(complex)], [r_c.astype(complex), None]], format="csc"
    )


def _solve_group(saddle_parts, hp, cols, nv, dense_out=None):
    """Correctors for all coarse dofs sharing one free-dof pattern.

    With dense_out, corrector columns are written straight into the
    shared (Nf, NH) array (groups own disjoint columns, so threads never
    race) and nothing is returned; otherwise sparse column triplets come
    back for csc assembly.
    """
    free, h_ff, r_c, seed = saddle_parts
    nf = free.size
    out = []
    if nf == 0:
        if dense_out is not None:
            return None
        return [(j, np.empty(0, np.int64), np.empty(0, complex)) for j in cols]
    if r_c.shape[0] > nf:
        r_c = _independent_rows(r_c)
    saddle = _build_saddle(h_ff, r_c)
    try:
        lu = spla.splu(saddle)
    except RuntimeError:
        reduced = _independent_rows(r_c)
        saddle = _build_saddle(h_ff, reduced)
        try:
            lu = spla.splu(saddle)
        except RuntimeError as exc:
            raise RuntimeError(
                f"singular corrector saddle system on patch at coarse vertex {seed}"
            ) from exc
        r_c = reduced
    nc = r_c.shape[0]
    for start in range(0, len(cols), _RHS_CHUNK):
        chunk = cols[start : start + _RHS_CHUNK]
        b = np.zeros((nf + nc, len(chunk)), dtype=complex)
        b[:nf] = hp[:, chunk].toarray()[free]
        x = lu.solve(b)
        resid = np.abs(saddle @ x - b).max()
        scale = max(1.0, np.abs(b).max())
        if not np.isfinite(resid) or resid > 1e-8 * scale:
            raise RuntimeError(
                f"corrector solve on patch at coarse vertex {seed} "
                f"has residual {resid:.2e}"
            )
        for k, j in enumerate(chunk):
            q = x[:nf, k]
            if dense_out is not None:
                dense_out[free, j] = q
            else:
                keep = q != 0
                out.append((j, free[keep].astype(np.int64), q[keep]))
    if dense_out is not None:
        return None
    return out


def build_lod_basis(hier, params, layers, jobs=1, dense=False) -> LodBasis:
    """Solve all correctors and assemble the multiscale basis.

    Parameters
    ----------
    hier : Hierarchy
    params : forms.Params
        The magnetic form the correctors orthogonalize against depends
        on kappa and the potential; a basis is only valid for its params.
    layers : int
        Patch radius ell; large enough values saturate to the full mesh.
    jobs : int
        Worker threads for independent corrector groups.
    dense : bool
        Assemble the basis as a dense ndarray.  With saturated layers the
        columns have global support, and writing them in place avoids the
        triplet buffers that dominate memory at fine resolutions.
    """
    layers = int(layers)
    if layers < 0:
        raise ValueError("layers must be nonnegative")
    coarse, fine = hier.coarse, hier.fine
    ops = _hier_ops(hier)
    h = forms.assemble_magnetic(fine, params).hermitian.tocsr()
    hp = (h @ ops.prolongation).tocsc()

    # group coarse dofs by their free-dof pattern: identical patterns share
    # a factorization (all of them, when ell saturates the mesh)
    groups = {}
    for j in range(coarse.num_vertices):
        # patch centered on the hat support; element-seeded patches lose
        # up to a layer of radius on one side and localize measurably worse
        patch = hier.vertex_patch(j, layers)
        mask = _free_fine_dofs(hier, patch)
        key = np.packbits(mask).tobytes()
        if key not in groups:
            free = np.flatnonzero(mask)
            if free.size:
                h_ff = h[free][:, free].tocsc()
                r_g = ops.mixed[:, free].tocsr()
                # coarse rows with no overlap are trivially satisfied; keeping
                # them would make the multiplier block rank deficient
                rowsel = np.flatnonzero(r_g.getnnz(axis=1) > 0)
                r_c = r_g[rowsel]
            else:
                h_ff, r_c = None, None
            groups[key] = ((free if free.size else np.empty(0, np.int64),
                            h_ff, r_c, j), [])
        groups[key][1].append(j)

    group_items = list(groups.values())
    q_dense = (
        np.zeros((fine.num_vertices, coarse.num_vertices), dtype=complex)
        if dense else None
    )
    if jobs > 1 and len(group_items) > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            results = list(
                pool.map(
                    lambda g: _solve_group(g[0], hp, g[1], fine.num_vertices, q_dense),
                    group_items,
                )
            )
    else:
        results = [_solve_group(parts, hp, cols, fine.num_vertices, q_dense)
                   for parts, cols in group_items]

    if dense:
        # B = P - Q formed in place; P has one entry per (fine vertex,
        # coarse hat) pair, already duplicate-free in csr form
        q_dense *= -1.0
        p_coo = ops.prolongation.tocoo()
        np.add.at(q_dense, (p_coo.row, p_coo.col), p_coo.data)
        return LodBasis(hierarchy=hier, params=params, layers=layers, basis=q_dense)

    columns = {}
    for res in results:
        for j, rows, vals in res:
            columns[j] = (rows, vals)

    indptr = np.zeros(coarse.num_vertices + 1, dtype=np.int64)
    for j in range(coarse.num_vertices):
        indptr[j + 1] = indptr[j] + columns[j][0].size
    indices = np.concatenate([columns[j][0] for j in range(coarse.num_vertices)]) \
        if indptr[-1] else np.empty(0, np.int64)
    data = np.concatenate([columns[j][1] for j in range(coarse.num_vertices)]) \
        if indptr[-1] else np.empty(0, complex)
    q_mat = sp.csc_matrix((data, indices, indptr),
                          shape=(fine.num_vertices, coarse.num_vertices))
    b_mat = (ops.prolongation.astype(complex) - q_mat).tocsc()
    b_mat.sort_indices()
    return LodBasis(hierarchy=hier, params=params, layers=layers, basis=b_mat)


def real_expansion(b_mat):
    """Complex-linear map as a real matrix over interleaved (Re, Im) dofs."""
    i2 = sp.identity(2, format="csr")
    j2 = sp.csr_matrix(np.array([[0.0, -1.0], [1.0, 0.0]]))
    return (sp.kron(b_mat.real, i2) + sp.kron(b_mat.imag, j2)).tocsr()


def compress(op: forms.SymmetricOperator, basis) -> forms.SymmetricOperator:
    """Galerkin restriction of a fine-space form to the span of the basis.

    Accepts a LodBasis or a raw (sparse or dense) complex basis matrix.
    """
    b_mat = basis.basis if isinstance(basis, LodBasis) else basis
    if op.dimension != 2 * b_mat.shape[0]:
        raise ValueError(
            f"operator dimension {op.dimension} does not match basis rows {b_mat.shape[0]}"
        )
    if op.hermitian is not None:
        h = op.hermitian
        if sp.issparse(b_mat):
            small = (b_mat.conj().T @ (h @ b_mat)).tocsr()
            small = (small + small.conj().T) * 0.5
        else:
            small = b_mat.conj().T @ (h @ b_mat)
            small = (small + small.conj().T) * 0.5
        return forms.SymmetricOperator(hermitian=small)
    r = op.real_matrix
    if sp.issparse(b_mat):
        b2 = real_expansion(b_mat)
        small = (b2.T @ (r @ b2)).tocsr()
        small = (small + small.T) * 0.5
        return forms.SymmetricOperator(real_matrix=small)
    b2 = _dense_real_expansion(b_mat)
    small = b2.T @ (r @ b2)
    small = (small + small.T) * 0.5
    return forms.SymmetricOperator(real_matrix=sp.csr_matrix(small))


def _dense_real_expansion(b_mat):
    nf, nh = b_mat.shape
    out = np.empty((2 * nf, 2 * nh))
    out[0::2, 0::2] = b_mat.real
    out[1::2, 1::2] = b_mat.real
    out[0::2, 1::2] = -b_mat.imag
    out[1::2, 0::2] = b_mat.imag
    return out


# ----------------------------------------------------------------------
# on-disk basis cache
# ----------------------------------------------------------------------

def save_basis(path, basis: LodBasis):
    """Write the basis with a self-describing header and per-column triplets."""
    hier = basis.hierarchy
    header = (
        f"{_CACHE_MAGIC} {_CACHE_VERSION} {hier.coarse.n} {hier.fine.n} "
        f"{basis.layers} {basis.params.kappa!r}\n"
    )
    b_mat = basis.basis
    if sp.issparse(b_mat):
        b_mat = b_mat.tocsc()
        b_mat.sort_indices()

        def column(j):
            lo, hi = b_mat.indptr[j], b_mat.indptr[j + 1]
            return b_mat.indices[lo:hi], b_mat.data[lo:hi]
    else:

        def column(j):
            rows = np.flatnonzero(b_mat[:, j])
            return rows, b_mat[rows, j]

    with open(path, "wb") as fh:
        fh.write(header.encode("ascii"))
        for j in range(b_mat.shape[1]):
            rows, vals = column(j)
            col = np.empty(rows.size, dtype=_COL_DTYPE)
            col["row"] = rows
            col["re"] = vals.real
            col["im"] = vals.imag
            fh.write(np.int64(rows.size).tobytes())
            fh.write(col.tobytes())


def load_basis(path, hier, params, layers) -> LodBasis:
    """Read a cached basis; every header field must match the request."""
    with open(path, "rb") as fh:
        header = fh.readline().decode("ascii", errors="replace").split()
        if len(header) != 6 or header[0] != _CACHE_MAGIC or header[1] != _CACHE_VERSION:
            raise ValueError(f"{path}: not a basis cache file")
        want = {
            "coarse n": (int(header[2]), hier.coarse.n),
            "fine n": (int(header[3]), hier.fine.n),
            "layers": (int(header[4]), int(layers)),
            "kappa": (float(header[5]), float(params.kappa)),
        }
        for name, (got, expect) in want.items():
            if got != expect:
                raise ValueError(f"{path}: cached {name}={got} does not match {expect}")
        buf = fh.read()

    nh = hier.coarse.num_vertices
    nf = hier.fine.num_vertices
    indptr = np.zeros(nh + 1, dtype=np.int64)
    rows, vals = [], []
    offset = 0
    for j in range(nh):
        if offset + 8 > len(buf):
            raise ValueError(f"{path}: truncated at column {j}")
        nnz = int(np.frombuffer(buf, "<i8", 1, offset)[0])
        offset += 8
        if nnz < 0 or nnz > nf or offset + nnz * _COL_DTYPE.itemsize > len(buf):
            raise ValueError(f"{path}: truncated or corrupt at column {j}")
        col = np.frombuffer(buf, _COL_DTYPE, nnz, offset)
        offset += nnz * _COL_DTYPE.itemsize
        if nnz and (col["row"].min() < 0 or col["row"].max() >= nf):
            raise ValueError(f"{path}: row index out of range in column {j}")
        rows.append(col["row"].astype(np.int64))
        vals.append(col["re"] + 1j * col["im"])
        indptr[j + 1] = indptr[j] + nnz
    if offset != len(buf):
        raise ValueError(f"{path}: trailing bytes after last column")
    b_mat = sp.csc_matrix(
        (np.concatenate(vals) if indptr[-1] else np.empty(0, complex),
         np.concatenate(rows) if indptr[-1] else np.empty(0, np.int64),
         indptr),
        shape=(nf, nh),
    )
    return LodBasis(hierarchy=hier, params=params, layers=layers, basis=b_mat)
