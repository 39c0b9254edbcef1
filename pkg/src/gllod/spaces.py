"""Discrete solution spaces for the minimization.

A DiscreteSpace is a set of complex coefficients x together with a map
into the fine P1 space (identity, nodal embedding of a coarser P1
space, or a multiscale basis).  Energies, gradients and metrics are
always *evaluated* on the fine mesh and then pulled back, so all
spaces minimize the same discrete functional over different subspaces.

Metric solves come in two flavors picked by the basis representation:
a direct sparse factorization (flags semidefinite metrics via its
pivots), and a preconditioned conjugate-gradient path for dense bases
whose compressed weighted mass would be too expensive to assemble each
iteration.  The preconditioner reuses one Cholesky factor of the
iterate-independent part a + (|A|^2 + 1, .,.) for the whole run.
"""

from __future__ import annotations

import numpy as np
import scipy.linalg
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from gllod import forms, lod

_DENSE_CHUNK = 256


def _hermitize(mat):
    if sp.issparse(mat):
        return ((mat + mat.conj().T) * 0.5).tocsr()
    return (mat + mat.conj().T) * 0.5


class DiscreteSpace:
    """Complex coefficient space with a basis map into the fine mesh."""

    def __init__(self, kind, fine_mesh, params, basis=None, hierarchy=None):
        self.kind = kind
        self.mesh = fine_mesh
        self.params = params
        self.basis = basis  # None (identity), sparse or dense complex matrix
        self.hierarchy = hierarchy
        if basis is None:
            self.dim = fine_mesh.num_vertices
        else:
            if basis.shape[0] != fine_mesh.num_vertices:
                raise ValueError("basis rows do not match the fine mesh")
            self.dim = basis.shape[1]
        self._dense = basis is not None and not sp.issparse(basis)
        self._ops = {}
        self._precond = None

    # -- basis maps ----------------------------------------------------

    def to_fine(self, x):
        x = np.asarray(x)
        return x if self.basis is None else self.basis @ x

    def fine_field(self, x) -> forms.Field:
        return forms.Field(self.mesh, self.to_fine(x))

    def pullback(self, fine_covector):
        """Covector on X induced by a fine covector (conjugate transpose)."""
        if self.basis is None:
            return fine_covector
        return self.basis.conj().T @ fine_covector

    def project_initial(self, fine_values):
        """Coefficients of the L2 projection of a fine field onto this space.

        Identity for the fine space; otherwise solves the compressed mass
        system (B^H M B) z = B^H M v, the orthogonal projection onto span(B).
        """
        vals = fine_values.values if isinstance(fine_values, forms.Field) else fine_values
        vals = np.asarray(vals, dtype=complex)
        if vals.shape != (self.mesh.num_vertices,):
            raise ValueError("initial data does not live on the fine mesh")
        if self.basis is None:
            return vals.copy()
        rhs = self.pullback(forms.assemble_mass(self.mesh).hermitian @ vals)
        gram = self.mass_op.hermitian
        if sp.issparse(gram):
            return spla.splu(gram.tocsc()).solve(rhs)
        return scipy.linalg.solve(gram, rhs, assume_a="pos")

    # -- compressed operators ------------------------------------------

    def compress(self, op: forms.SymmetricOperator) -> forms.SymmetricOperator:
        if self.basis is None:
            return op
        if self._dense:
            if op.hermitian is None:
                return lod.compress(op, self.basis)
            return forms.SymmetricOperator(
                hermitian=_hermitize(_dense_compress(op.hermitian, self.basis))
            )
        return lod.compress(op, self.basis)

    def _cached(self, name, build):
        if name not in self._ops:
            self._ops[name] = build()
        return self._ops[name]

    @property
    def magnetic_op(self):
        return self._cached(
            "a", lambda: self.compress(forms.assemble_magnetic(self.mesh, self.params))
        )

    @property
    def potential_mass_op(self):
        return self._cached(
            "maa", lambda: self.compress(forms.potential_sq_mass(self.mesh, self.params))
        )

    @property
    def mass_op(self):
        return self._cached("mass", lambda: self.compress(forms.assemble_mass(self.mesh)))

    @property
    def mplus(self):
        """Hermitian matrix of ((1+|A|^2) . , .) on X, the descent right-hand side."""

        def build():
            return _hermitize(self.mass_op.hermitian + self.potential_mass_op.hermitian)

        return self._cached("mplus", build)

    # -- energy and gradient in X coordinates ---------------------------

    def energy(self, x):
        return forms.energy(self.fine_field(x), self.params)

    def gradient(self, x):
        """Covector of the energy derivative restricted to X."""
        return self.pullback(forms.gradient(self.fine_field(x), self.params))

    def h1kappa_norm(self, x):
        return forms.h1kappa_norm(self.fine_field(x), self.params.kappa)

    def l2_norm(self, x):
        return forms.l2_norm(self.fine_field(x))

    # -- iterate-adapted metric -----------------------------------------

    def _weighted_mass_fine(self, x):
        vals = self.to_fine(x)
        dens = forms.density_quad_values(self.mesh, vals, self.params.quad_quartic)
        return forms.assemble_weighted_mass(
            self.mesh, dens, rule=self.params.quad_quartic
        ).hermitian

    def metric_operator(self, x) -> forms.SymmetricOperator:
        """Assembled metric a + ((|z|^2 + |A|^2) . , .) at the iterate x."""
        mw = forms.SymmetricOperator(hermitian=self._weighted_mass_fine(x))
        small = (
            self.magnetic_op.hermitian
            + self.potential_mass_op.hermitian
            + self.compress(mw).hermitian
        )
        return forms.SymmetricOperator(hermitian=_hermitize(small))

    def metric_context(self, x):
        if self._dense:
            return _IterativeMetric(self, x)
        return _DirectMetric(self, x)


class _DirectMetric:
    """Metric with an assembled matrix and a sparse LU solve."""

    def __init__(self, space, x):
        self.mat = space.metric_operator(x).hermitian.tocsc()
        self._lu = None

    def _factor(self):
        if self._lu is None:
            try:
                self._lu = spla.splu(self.mat)
            except RuntimeError as exc:
                raise ValueError(f"metric is not positive definite: {exc}") from exc
            d = np.abs(self._lu.U.diagonal())
            if d.min() <= 1e-12 * max(d.max(), 1e-300):
                raise ValueError(
                    "metric is semidefinite (vanishing pivot in its factorization)"
                )
        return self._lu

    def solve(self, rhs, x0=None):
        return self._factor().solve(np.asarray(rhs, dtype=complex))

    def apply(self, x):
        return self.mat @ x

    def bilinear(self, x, y):
        return float(np.vdot(x, self.mat @ y).real)

    def quad_form(self, x):
        return self.bilinear(x, x)


class _IterativeMetric:
    """Matrix-free metric for dense bases: PCG with a frozen preconditioner."""

    def __init__(self, space, x):
        self.space = space
        self.mw = space._weighted_mass_fine(x)
        self.a_plus = space._cached(
            "a_plus_dense",
            lambda: _hermitize(
                space.magnetic_op.hermitian + space.potential_mass_op.hermitian
            ),
        )
        if space._precond is None:
            base = _hermitize(self.a_plus + space.mass_op.hermitian)
            space._precond = scipy.linalg.cho_factor(base, lower=False)
        self._cho = space._precond

    def apply(self, x):
        b = self.space.basis
        return self.a_plus @ x + b.conj().T @ (self.mw @ (b @ x))

    def bilinear(self, x, y):
        return float(np.vdot(x, self.apply(y)).real)

    def quad_form(self, x):
        return self.bilinear(x, x)

    def solve(self, rhs, x0=None, rtol=1e-12, maxiter=500):
        rhs = np.asarray(rhs, dtype=complex)
        x = np.zeros_like(rhs) if x0 is None else np.asarray(x0, dtype=complex).copy()
        r = rhs - self.apply(x)
        bnorm = max(np.linalg.norm(rhs), 1e-300)
        z = scipy.linalg.cho_solve(self._cho, r)
        p = z.copy()
        rz = float(np.vdot(r, z).real)
        for _ in range(maxiter):
            if np.linalg.norm(r) <= rtol * bnorm:
                return x
            ap = self.apply(p)
            pap = float(np.vdot(p, ap).real)
            if pap <= 0.0:
                raise ValueError("metric is not positive definite (CG breakdown)")
            alpha = rz / pap
            x += alpha * p
            r -= alpha * ap
            z = scipy.linalg.cho_solve(self._cho, r)
            rz_new = float(np.vdot(r, z).real)
            p = z + (rz_new / rz) * p
            rz = rz_new
        raise RuntimeError(
            f"metric solve did not reach rtol={rtol:g} in {maxiter} iterations"
        )


def _dense_compress(h_sparse, b_dense, chunk=_DENSE_CHUNK):
    nh = b_dense.shape[1]
    out = np.empty((nh, nh), dtype=complex)
    bh = b_dense.conj().T
    for lo in range(0, nh, chunk):
        hi = min(lo + chunk, nh)
        out[:, lo:hi] = bh @ (h_sparse @ b_dense[:, lo:hi])
    return out


# ----------------------------------------------------------------------
# constructors
# ----------------------------------------------------------------------

def fine_space(mesh, params) -> DiscreteSpace:
    """The full fine P1 space (identity basis)."""
    return DiscreteSpace("fine", mesh, params)


def standard_p1_space(hier, params) -> DiscreteSpace:
    """Coarse P1 space embedded nodally into the fine mesh."""
    return DiscreteSpace(
        "standard_p1",
        hier.fine,
        params,
        basis=hier.prolongation.astype(complex).tocsc(),
        hierarchy=hier,
    )


def lod_space(basis: lod.LodBasis, dense=False) -> DiscreteSpace:
    """Multiscale space spanned by LOD basis columns.

    With dense=True the basis is materialized as a dense array and the
    metric switches to the matrix-free CG path; intended for saturated
    patches whose columns have global support.  A basis already stored
    densely stays dense regardless of the flag.
    """
    mat = basis.basis
    if sp.issparse(mat) and dense:
        mat = mat.toarray()
    return DiscreteSpace(
        "lod", basis.hierarchy.fine, basis.params, basis=mat, hierarchy=basis.hierarchy
    )
