"""Taylor-Hood (P2 velocity / P1 pressure) and P1 assembly on ``WallMesh``.

All element loops are vectorized over triangles.  The Stokes block ordering is
``[u1 (N2), u2 (N2), p (Nv)]``.
"""

from __future__ import annotations

import numpy as np
import scipy.sparse as sp

# Dunavant degree-4 rule on the reference triangle (weights sum to 1/2)
_A, _B = 0.445948490915965, 0.091576213509771
_WA, _WB = 0.223381589678011 / 2, 0.109951743655322 / 2
QUAD_BARY = np.array([
    [_A, _A, 1 - 2 * _A], [_A, 1 - 2 * _A, _A], [1 - 2 * _A, _A, _A],
    [_B, _B, 1 - 2 * _B], [_B, 1 - 2 * _B, _B], [1 - 2 * _B, _B, _B],
])
QUAD_W = np.array([_WA] * 3 + [_WB] * 3)


def p2_values(lam):
    """P2 basis at barycentric points ``lam`` (..., 3) -> (..., 6)."""
    l0, l1, l2 = lam[..., 0], lam[..., 1], lam[..., 2]
    return np.stack([l0 * (2 * l0 - 1), l1 * (2 * l1 - 1), l2 * (2 * l2 - 1),
                     4 * l0 * l1, 4 * l1 * l2, 4 * l2 * l0], axis=-1)


def bary_gradients(C):
    """Constant gradients of the barycentric coordinates, (T, 3, 2), and 2*area."""
    x0, y0 = C[:, 0, 0], C[:, 0, 1]
    x1, y1 = C[:, 1, 0], C[:, 1, 1]
    x2, y2 = C[:, 2, 0], C[:, 2, 1]
    det = (x1 - x0) * (y2 - y0) - (x2 - x0) * (y1 - y0)
    g1 = np.column_stack([(y2 - y0), -(x2 - x0)]) / det[:, None]
    g2 = np.column_stack([-(y1 - y0), (x1 - x0)]) / det[:, None]
    g0 = -g1 - g2
    return np.stack([g0, g1, g2], axis=1), det


def p2_gradients(lam, G):
    """P2 basis gradients at barycentric points.

    lam: (Q, 3) reference points, G: (T, 3, 2) -> (T, Q, 6, 2)."""
    l = lam[None, :, :, None]          # (1, Q, 3, 1)
    g = G[:, None, :, :]               # (T, 1, 3, 2)
    vert = (4 * l - 1) * g             # (T, Q, 3, 2)
    m01 = 4 * (l[:, :, 0] * g[:, :, 1] + l[:, :, 1] * g[:, :, 0])
    m12 = 4 * (l[:, :, 1] * g[:, :, 2] + l[:, :, 2] * g[:, :, 1])
    m20 = 4 * (l[:, :, 2] * g[:, :, 0] + l[:, :, 0] * g[:, :, 2])
    return np.concatenate([vert, np.stack([m01, m12, m20], axis=2)], axis=2)


def _scatter(rows, cols, vals, shape):
    return sp.coo_matrix((vals.ravel(), (rows.ravel(), cols.ravel())), shape=shape).tocsr()


class StokesAssembly:
    """Element matrices of the Taylor-Hood pair on a mesh, cached for reuse."""

    def __init__(self, mesh):
        self.mesh = mesh
        self.N2 = mesh.n_dofs2
        self.Nv = mesh.n_vertices
        G, det = bary_gradients(mesh.tri_coords)
        self.G = G
        self.absdet = np.abs(det)
        self.dofs = mesh.tri_dofs2
        self.dphi = p2_gradients(QUAD_BARY, G)                     # (T, Q, 6, 2)
        self.wq = QUAD_W[None, :] * self.absdet[:, None]           # (T, Q)
        self.phi = p2_values(QUAD_BARY)                            # (Q, 6)
        self.psi = QUAD_BARY                                       # P1 values (Q, 3)

        # scalar P2 stiffness
        Ke = np.einsum("tq,tqad,tqbd->tab", self.wq, self.dphi, self.dphi)
        r = np.repeat(self.dofs[:, :, None], 6, axis=2)
        c = np.repeat(self.dofs[:, None, :], 6, axis=1)
        self.K = _scatter(r, c, Ke, (self.N2, self.N2))
        # divergence: B[p, (comp, u)] = -int psi_p d_comp phi_u
        Be = -np.einsum("tq,qa,tqbd->tdab", self.wq, self.psi, self.dphi)   # (T, 2, 3, 6)
        rp = np.repeat(mesh.triangles[:, :, None], 6, axis=2)
        cu = np.repeat(self.dofs[:, None, :], 3, axis=1)
        self.B1 = _scatter(rp, cu, Be[:, 0], (self.Nv, self.N2))
        self.B2 = _scatter(rp, cu, Be[:, 1], (self.Nv, self.N2))
        # P1 mass vector (pressure mean)
        self.pmass = np.bincount(mesh.triangles.ravel(),
                                 weights=np.repeat(self.absdet / 6.0, 3), minlength=self.Nv)
        # P2 load of a constant unit body force
        Fe = np.einsum("tq,qa->ta", self.wq, self.phi)
        self.load_unit = np.bincount(self.dofs.ravel(), weights=Fe.ravel(), minlength=self.N2)
        self._mass2 = None

    @property
    def M2(self):
        if self._mass2 is None:
            Me = np.einsum("tq,qa,qb->tab", self.wq, self.phi, self.phi)
            r = np.repeat(self.dofs[:, :, None], 6, axis=2)
            c = np.repeat(self.dofs[:, None, :], 6, axis=1)
            self._mass2 = _scatter(r, c, Me, (self.N2, self.N2))
        return self._mass2

    def convection(self, w1, w2):
        """Oseen matrix ``int (w . grad u) . v`` for a frozen P2 field (per component)."""
        wl1 = w1[self.dofs] @ self.phi.T        # (T, Q)
        wl2 = w2[self.dofs] @ self.phi.T
        Ce = np.einsum("tq,qa,tq,tqb->tab", self.wq, self.phi, wl1, self.dphi[..., 0]) \
            + np.einsum("tq,qa,tq,tqb->tab", self.wq, self.phi, wl2, self.dphi[..., 1])
        r = np.repeat(self.dofs[:, :, None], 6, axis=2)
        c = np.repeat(self.dofs[:, None, :], 6, axis=1)
        return _scatter(r, c, Ce, (self.N2, self.N2))

    def saddle(self, K=None):
        """Full block operator ``[[A, B^T], [B, 0]]`` with A = diag(K, K)."""
        K = self.K if K is None else K
        A = sp.block_diag([K, K], format="csr")
        B = sp.hstack([self.B1, self.B2], format="csr")
        return A, B


class ScalarAssembly:
    """P1 stiffness on the mesh vertices."""

    def __init__(self, mesh):
        self.mesh = mesh
        G, det = bary_gradients(mesh.tri_coords)
        area = 0.5 * np.abs(det)
        Ke = area[:, None, None] * np.einsum("tad,tbd->tab", G, G)
        tr = mesh.triangles
        r = np.repeat(tr[:, :, None], 3, axis=2)
        c = np.repeat(tr[:, None, :], 3, axis=1)
        self.K = _scatter(r, c, Ke, (mesh.n_vertices, mesh.n_vertices))


def evaluate_p2(mesh, values, pts):
    """Evaluate a P2 field (or stack of fields along the last axis) at points."""
    tri, lam = mesh.locate(pts)
    basis = p2_values(lam)                                   # (n, 6)
    loc = values[mesh.tri_dofs2[tri]]                        # (n, 6, ...)
    return np.einsum("na,na...->n...", basis, loc)


def evaluate_p1(mesh, values, pts):
    tri, lam = mesh.locate(pts)
    loc = values[mesh.triangles[tri]]
    return np.einsum("na,na...->n...", lam, loc)


def p2_point_load(mesh, pts, weights):
    """Load vector of weighted Dirac masses: sum_k w_k phi_i(p_k)."""
    tri, lam = mesh.locate(pts)
    basis = p2_values(lam) * np.asarray(weights)[:, None]
    return np.bincount(mesh.tri_dofs2[tri].ravel(), weights=basis.ravel(), minlength=mesh.n_dofs2)


def integrate_sq_error(mesh, values, reference, y_min=None):
    """``int |u_h - u_ref|^2`` over triangles lying above ``y_min``.

    ``values``: (N2, 2) P2 velocity; ``reference``: callable (x, y) -> (n, 2)."""
    sel = np.ones(len(mesh.triangles), dtype=bool)
    C = mesh.tri_coords
    if y_min is not None:
        sel = C[:, :, 1].min(axis=1) >= y_min - 1e-12
    C = C[sel]
    dofs = mesh.tri_dofs2[sel]
    G, det = bary_gradients(C)
    wq = QUAD_W[None, :] * np.abs(det)[:, None]
    phi = p2_values(QUAD_BARY)
    qp = np.einsum("qa,tad->tqd", QUAD_BARY, C)
    uh = np.einsum("qa,tac->tqc", phi, values[dofs])
    ur = reference(qp[..., 0].ravel(), qp[..., 1].ravel()).reshape(uh.shape)
    return float(np.sum(wq[..., None] * (uh - ur) ** 2))
