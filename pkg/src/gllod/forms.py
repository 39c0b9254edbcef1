"""P1 assembly and evaluation of the Ginzburg-Landau quantities.

Complex nodal fields are encoded as two interleaved real degrees of
freedom per vertex (Re, Im); every bilinear form is real symmetric in
that encoding.  Phase-equivariant forms (magnetic form, mass forms)
additionally carry a complex Hermitian representation H with

    form(v, w) = Re( conj(z_v)^T H z_w ),

whose interleaved real expansion has 2x2 blocks [[Re H, Im H],
[-Im H, Re H]].  The Hessian of the energy is only real-linear, so it
exists in the real encoding alone.

Quadrature: stiffness and mass are assembled in closed form; terms
containing the vector potential use a 3-point degree-2 rule (edge
midpoints), the quartic density term a 6-point degree-4 rule, which is
exact for P1 fields.  The potential is always evaluated analytically at
quadrature points, keeping div A = 0 and A.n = 0 exact.
"""

from __future__ import annotations

import weakref
from dataclasses import dataclass
from typing import Callable

import numpy as np
import scipy.sparse as sp

from gllod import kernels

# quadrature tables: barycentric points (q, 3) and weights summing to 1
_MID3_BARY = np.array([[0.5, 0.5, 0.0], [0.0, 0.5, 0.5], [0.5, 0.0, 0.5]])
_MID3_W = np.full(3, 1.0 / 3.0)

_D4_A = 0.816847572980459
_D4_B = 0.091576213509771
_D4_C = 0.108103018168070
_D4_D = 0.445948490915965
_DUNAVANT4_BARY = np.array(
    [
        [_D4_A, _D4_B, _D4_B],
        [_D4_B, _D4_A, _D4_B],
        [_D4_B, _D4_B, _D4_A],
        [_D4_C, _D4_D, _D4_D],
        [_D4_D, _D4_C, _D4_D],
        [_D4_D, _D4_D, _D4_C],
    ]
)
_DUNAVANT4_W = np.array(
    [
        0.109951743655322,
        0.109951743655322,
        0.109951743655322,
        0.223381589678011,
        0.223381589678011,
        0.223381589678011,
    ]
)

QUAD_RULES = {
    "midpoint3": (_MID3_BARY, _MID3_W),
    "dunavant4": (_DUNAVANT4_BARY, _DUNAVANT4_W),
}


@dataclass(frozen=True)
class MagneticPotential:
    """Closed-form vector potential A(x, y) -> (A1, A2)."""

    name: str
    fn: Callable
    is_zero: bool = False

    def __call__(self, x, y):
        return self.fn(x, y)


def _sincos_potential(x, y):
    r = np.sqrt(2.0)
    return (
        r * np.sin(np.pi * x) * np.cos(np.pi * y),
        -r * np.cos(np.pi * x) * np.sin(np.pi * y),
    )


def _zero_potential(x, y):
    z = np.zeros_like(np.asarray(x, dtype=float))
    return z, z.copy()


def default_potential():
    """The divergence-free experiment potential sqrt(2)(sin pi x cos pi y, -cos pi x sin pi y)."""
    return MagneticPotential("sincos", _sincos_potential)


def zero_potential():
    return MagneticPotential("zero", _zero_potential, is_zero=True)


@dataclass(frozen=True)
class Params:
    """Model parameters: kappa, potential and quadrature rule ids."""

    kappa: float
    potential: MagneticPotential
    quad_linear: str = "midpoint3"
    quad_quartic: str = "dunavant4"

    def __post_init__(self):
        if not self.kappa > 0:
            raise ValueError(f"kappa must be positive, got {self.kappa}")
        for rule in (self.quad_linear, self.quad_quartic):
            if rule not in QUAD_RULES:
                raise ValueError(f"unknown quadrature rule {rule!r}")


def experiment_params(kappa):
    """Params with the shipped experiment potential."""
    return Params(kappa=float(kappa), potential=default_potential())


@dataclass(frozen=True)
class Field:
    """Complex nodal coefficients on a mesh."""

    mesh: object
    values: np.ndarray

    def __post_init__(self):
        vals = np.ascontiguousarray(self.values, dtype=np.complex128)
        if vals.shape != (self.mesh.num_vertices,):
            raise ValueError(
                f"field length {vals.shape} does not match mesh with "
                f"{self.mesh.num_vertices} vertices"
            )
        if not np.all(np.isfinite(vals)):
            raise ValueError("field contains non-finite entries")
        object.__setattr__(self, "values", vals)


def interleave(z):
    """Complex vector -> interleaved (Re, Im) real vector of twice the length."""
    z = np.asarray(z)
    x = np.empty(2 * z.shape[0])
    x[0::2] = z.real
    x[1::2] = z.imag
    return x


def deinterleave(x):
    """Inverse of :func:`interleave`."""
    return x[0::2] + 1j * x[1::2]


_J_BLOCK = sp.csr_matrix(np.array([[0.0, -1.0], [1.0, 0.0]]))
_I_BLOCK = sp.identity(2, format="csr")


class SymmetricOperator:
    """Sparse real symmetric bilinear form over interleaved (Re, Im) dofs.

    Parameters
    ----------
    hermitian : sparse matrix, optional
        Complex Hermitian (or real symmetric) representation, vertex
        indexed.  Present for phase-equivariant forms.
    real_matrix : sparse matrix, optional
        Explicit real symmetric matrix over interleaved dofs.  Required
        when no Hermitian representation exists (e.g. the Hessian).
    """

    def __init__(self, hermitian=None, real_matrix=None):
        if hermitian is None and real_matrix is None:
            raise ValueError("need hermitian or real_matrix")
        self._hermitian = hermitian
        self._real = real_matrix
        if hermitian is not None:
            self._n = hermitian.shape[0]
        else:
            self._n = real_matrix.shape[0] // 2

    @property
    def dimension(self):
        """Number of real degrees of freedom (2 per vertex)."""
        return 2 * self._n

    @property
    def hermitian(self):
        return self._hermitian

    @property
    def real_matrix(self):
        if self._real is None:
            h = self._hermitian.tocsr()
            if np.iscomplexobj(h):
                mat = sp.kron(h.real, _I_BLOCK) + sp.kron(h.imag, _J_BLOCK)
            else:
                mat = sp.kron(h, _I_BLOCK)
            self._real = mat.tocsr()
        return self._real

    def apply(self, z):
        """Covector (complex representation) of the form applied to z."""
        if self._hermitian is not None:
            return self._hermitian @ z
        return deinterleave(self._real @ interleave(z))

    def bilinear(self, zv, zw):
        """Real bilinear form value between two complex coefficient vectors."""
        return float(np.vdot(zv, self.apply(zw)).real)

    def quad_form(self, z):
        return self.bilinear(z, z)

    def __add__(self, other):
        if self._hermitian is not None and other._hermitian is not None:
            return SymmetricOperator(hermitian=self._hermitian + other._hermitian)
        return SymmetricOperator(real_matrix=self.real_matrix + other.real_matrix)


# ----------------------------------------------------------------------
# cached per-mesh geometry and assembled matrices
# ----------------------------------------------------------------------

class _MeshData:
    def __init__(self, mesh):
        self.mesh = mesh
        self.tri = mesh.triangles
        self.area = mesh.triangle_area
        coords = mesh.vertices[self.tri]  # (ne, 3, 2)
        # constant P1 hat gradients per element
        e1 = coords[:, 1] - coords[:, 0]
        e2 = coords[:, 2] - coords[:, 0]
        det = e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0]
        g1 = np.column_stack([e2[:, 1], -e2[:, 0]]) / det[:, None]
        g2 = np.column_stack([-e1[:, 1], e1[:, 0]]) / det[:, None]
        self.grads = np.stack([-(g1 + g2), g1, g2], axis=1)  # (ne, 3, 2)
        self._coords = coords
        self._quad_pts = {}
        # scatter index pattern for 3x3 local blocks
        self.rows3 = np.repeat(self.tri, 3, axis=1).ravel()
        self.cols3 = np.tile(self.tri, (1, 3)).ravel()
        self._stiffness = None
        self._mass = None
        self.potential_data = {}

    def quad_points(self, rule):
        if rule not in self._quad_pts:
            bary, _ = QUAD_RULES[rule]
            self._quad_pts[rule] = np.einsum("qa,ead->eqd", bary, self._coords)
        return self._quad_pts[rule]

    def scatter_scalar(self, local):
        """Assemble (ne, 3, 3) local blocks into a symmetrized N x N CSR."""
        n = self.mesh.num_vertices
        mat = sp.coo_matrix(
            (local.ravel(), (self.rows3, self.cols3)), shape=(n, n)
        ).tocsr()
        return (mat + mat.T) * 0.5

    @property
    def stiffness(self):
        if self._stiffness is None:
            local = self.area * np.einsum("epd,eqd->epq", self.grads, self.grads)
            self._stiffness = self.scatter_scalar(local)
        return self._stiffness

    @property
    def mass(self):
        if self._mass is None:
            base = (np.ones((3, 3)) + np.eye(3)) * (self.area / 12.0)
            local = np.broadcast_to(base, (self.tri.shape[0], 3, 3))
            self._mass = self.scatter_scalar(local)
        return self._mass


class _PotentialData:
    """Potential-dependent matrices for one (mesh, params) pair."""

    def __init__(self, mdata, params):
        bary, w = QUAD_RULES[params.quad_linear]
        pts = mdata.quad_points(params.quad_linear)
        ax, ay = params.potential(pts[..., 0], pts[..., 1])
        self.pot_sq = ax * ax + ay * ay  # |A|^2 at linear-rule points, (ne, q)

        local_aa = kernels.weighted_mass_local(self.pot_sq, bary, w, mdata.area)
        m_aa = mdata.scatter_scalar(local_aa)

        # convection term C_pq = int (A . grad phi_q) phi_p; the Hermitian
        # representation of the magnetic form carries (i/kappa)(C - C^T)
        dot = np.einsum("eqd,epd->eqp", np.stack([ax, ay], axis=-1), mdata.grads)
        local_c = mdata.area * np.einsum("q,eqp,qa->eap", w, dot, bary)
        n = mdata.mesh.num_vertices
        cmat = sp.coo_matrix(
            (local_c.ravel(), (mdata.rows3, mdata.cols3)), shape=(n, n)
        ).tocsr()
        skew = (cmat - cmat.T) * 0.5

        kappa = params.kappa
        self.pot_mass = SymmetricOperator(hermitian=m_aa)
        herm = (mdata.stiffness * (1.0 / kappa**2) + m_aa) + 1j * (skew * (2.0 / kappa))
        self.magnetic = SymmetricOperator(hermitian=herm.tocsr())


_MESH_CACHE = weakref.WeakKeyDictionary()


def _mesh_data(mesh) -> _MeshData:
    data = _MESH_CACHE.get(mesh)
    if data is None:
        data = _MeshData(mesh)
        _MESH_CACHE[mesh] = data
    return data


def _potential_data(mesh, params) -> _PotentialData:
    mdata = _mesh_data(mesh)
    pdata = mdata.potential_data.get(params)
    if pdata is None:
        pdata = _PotentialData(mdata, params)
        mdata.potential_data[params] = pdata
    return pdata


def scalar_mass(mesh):
    """Exact P1 mass matrix (vertex indexed, real)."""
    return _mesh_data(mesh).mass


def scalar_stiffness(mesh):
    """Exact P1 stiffness matrix (vertex indexed, real)."""
    return _mesh_data(mesh).stiffness


# ----------------------------------------------------------------------
# operators
# ----------------------------------------------------------------------

def assemble_magnetic(mesh, params):
    """The magnetic form a(v,w) = (i/kappa grad v + Av, i/kappa grad w + Aw).

    Returns
    -------
    SymmetricOperator
        Positive semidefinite; all potential terms share the degree-2
        rule with the exactly integrated stiffness, so the quadratic
        form is a plain quadrature sum of |i/kappa grad v + Av|^2.
    """
    return _potential_data(mesh, params).magnetic


def assemble_mass(mesh):
    """Exact L2 mass form over complex fields (real inner product)."""
    return SymmetricOperator(hermitian=_mesh_data(mesh).mass)


def potential_sq_mass(mesh, params):
    """Weighted mass with weight |A|^2, assembled with the linear rule."""
    return _potential_data(mesh, params).pot_mass


def assemble_weighted_mass(mesh, weight, rule="midpoint3"):
    """Weighted mass form int weight |v|^2 with the given quadrature rule.

    Parameters
    ----------
    weight : callable or (ne, q) array
        Nonnegative weight, either a function of (x, y) evaluated at the
        quadrature points or precomputed per-element point values.
    """
    mdata = _mesh_data(mesh)
    bary, w = QUAD_RULES[rule]
    if callable(weight):
        pts = mdata.quad_points(rule)
        wvals = np.asarray(weight(pts[..., 0], pts[..., 1]), dtype=float)
    else:
        wvals = np.asarray(weight, dtype=float)
    expected = (mesh.num_triangles, bary.shape[0])
    if wvals.shape != expected:
        raise ValueError(f"weight samples have shape {wvals.shape}, expected {expected}")
    if wvals.min() < 0:
        raise ValueError("negative weight at a quadrature point")
    local = kernels.weighted_mass_local(wvals, bary, w, mdata.area)
    return SymmetricOperator(hermitian=mdata.scatter_scalar(local))


def _signed_weighted_mass(mdata, wvals, rule):
    bary, w = QUAD_RULES[rule]
    local = kernels.weighted_mass_local(np.ascontiguousarray(wvals), bary, w, mdata.area)
    return mdata.scatter_scalar(local)


def density_quad_values(mesh, values, rule="dunavant4"):
    """|v|^2 sampled at the quadrature points, shape (ne, q)."""
    mdata = _mesh_data(mesh)
    bary, _ = QUAD_RULES[rule]
    vre = np.ascontiguousarray(values.real)
    vim = np.ascontiguousarray(values.imag)
    return kernels.density_quad_values(mdata.tri, vre, vim, bary)


def energy(v: Field, params: Params):
    """Reduced Ginzburg-Landau energy 1/2 a(v,v) + 1/4 int (1-|v|^2)^2."""
    pdata = _potential_data(v.mesh, params)
    mdata = _mesh_data(v.mesh)
    bary, w = QUAD_RULES[params.quad_quartic]
    vre = np.ascontiguousarray(v.values.real)
    vim = np.ascontiguousarray(v.values.imag)
    quartic = kernels.quartic_integral(mdata.tri, vre, vim, bary, w, mdata.area)
    return 0.5 * pdata.magnetic.quad_form(v.values) + 0.25 * quartic


def gradient(v: Field, params: Params):
    """Covector of E'(v): pairs with w as a(v,w) + ((|v|^2-1)v, w)_L2.

    The complex covector c pairs through Re(sum conj(w) c); use
    :func:`pair`.
    """
    pdata = _potential_data(v.mesh, params)
    mdata = _mesh_data(v.mesh)
    bary, w = QUAD_RULES[params.quad_quartic]
    vre = np.ascontiguousarray(v.values.real)
    vim = np.ascontiguousarray(v.values.imag)
    lre, lim = kernels.cubic_load(
        mdata.tri, vre, vim, bary, w, mdata.area, v.mesh.num_vertices
    )
    return pdata.magnetic.apply(v.values) + (lre + 1j * lim)


def pair(w, covector):
    """Real duality pairing of a test field with a covector."""
    wv = w.values if isinstance(w, Field) else w
    return float(np.vdot(wv, covector).real)


def hessian_operator(u: Field, params: Params):
    """E''(u) as a real symmetric operator over interleaved dofs.

    The form is a(v,w) + ((|u|^2-1)v, w) + 2(Re(u conj(v)) u, w); the
    last term couples Re and Im non-equivariantly, so only the real
    encoding exists.
    """
    pdata = _potential_data(u.mesh, params)
    mdata = _mesh_data(u.mesh)
    rule = params.quad_quartic
    bary, w = QUAD_RULES[rule]
    dens = density_quad_values(u.mesh, u.values, rule)
    signed = _signed_weighted_mass(mdata, dens - 1.0, rule)

    uq_re = kernels.quad_values_numpy(mdata.tri, np.ascontiguousarray(u.values.real), bary)
    uq_im = kernels.quad_values_numpy(mdata.tri, np.ascontiguousarray(u.values.imag), bary)
    u2 = np.stack([uq_re, uq_im], axis=-1)  # (ne, q, 2)
    t_local = 2.0 * mdata.area * np.einsum("q,qa,qb,eqc,eqd->eacbd", w, bary, bary, u2, u2)

    dofs = 2 * mdata.tri[:, [0, 0, 1, 1, 2, 2]] + np.array([0, 1, 0, 1, 0, 1])
    rows = np.repeat(dofs, 6, axis=1).ravel()
    cols = np.tile(dofs, (1, 6)).ravel()
    n2 = 2 * u.mesh.num_vertices
    t_mat = sp.coo_matrix((t_local.ravel(), (rows, cols)), shape=(n2, n2)).tocsr()
    t_mat = (t_mat + t_mat.T) * 0.5

    real = (
        pdata.magnetic.real_matrix
        + sp.kron(signed, _I_BLOCK).tocsr()
        + t_mat
    )
    return SymmetricOperator(real_matrix=real)


def hessian_apply(u: Field, v: Field, params: Params):
    """Covector of E''(u) applied to v."""
    return hessian_operator(u, params).apply(v.values)


def h1kappa_norm(v: Field, kappa):
    """Kappa-weighted Sobolev norm (kappa^-2 |grad v|^2 + |v|^2)^(1/2)."""
    mdata = _mesh_data(v.mesh)
    z = v.values
    stiff = float(np.vdot(z, mdata.stiffness @ z).real)
    mass = float(np.vdot(z, mdata.mass @ z).real)
    return float(np.sqrt(stiff / kappa**2 + mass))


def l2_norm(v: Field):
    mdata = _mesh_data(v.mesh)
    z = v.values
    return float(np.sqrt(np.vdot(z, mdata.mass @ z).real))
