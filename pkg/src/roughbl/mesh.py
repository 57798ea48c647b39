"""Structured boundary-fitted triangle meshes over a rough wall.

Vertex ``(i, j)`` sits at ``x[i]`` and height ``w[j] * wall[i] + z[j]``.  Rows
with ``w = 1 - j/J, z = 0`` fill the rough layer between the wall and the line
``y2 = 0`` (row ``J``); rows above have ``w = 0`` and are flat.  This is the
shear map ``y2 -> y2 - omega(y1)`` restricted to the rough layer, so that
``y2 = 0`` is always a mesh line and traces there need no interpolation.

Quads are split along their shorter diagonal.  Degrees of freedom for P2 live
on vertices and edge midpoints; lateral periodicity identifies column ``n``
with column ``0``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


def graded_levels(h0: float, top: float, growth: float = 1.15, hmax: float | None = None,
                  uniform_to: float = 0.0) -> np.ndarray:
    """Levels ``0 = z_0 < ... < z_m = top``: spacing ``h0`` up to ``uniform_to``,
    then geometric growth capped at ``hmax``.  The last step is stretched or
    merged so that ``top`` is hit exactly."""
    if top <= 0 or h0 <= 0:
        raise ValueError("top and h0 must be positive")
    hmax = np.inf if hmax is None else hmax
    z = [0.0]
    h = h0
    while z[-1] < top - 1e-12:
        if z[-1] >= uniform_to - 1e-12:
            h = min(h * growth, hmax) if len(z) > 1 and z[-1] > uniform_to + 1e-12 else h
        z.append(z[-1] + h)
    z = np.asarray(z)
    if len(z) > 2 and (top - z[-2]) < 0.5 * (z[-2] - z[-3]):
        z = np.delete(z, -2)
    z[-1] = top
    return z


def graded_axis(center_points, lo: float, hi: float, h_fine: float, h_coarse: float,
                growth: float = 1.2, fine_radius: float = 0.0, cap: float | None = None,
                cap_radius: float = 0.0) -> np.ndarray:
    """Non-uniform 1D nodes on ``[lo, hi]``, spacing ``h_fine`` within
    ``fine_radius`` of each center point and growing geometrically away.

    ``cap`` bounds the spacing within ``cap_radius`` of the centers."""
    centers = np.atleast_1d(np.asarray(center_points, dtype=float))

    def spacing(x):
        d0 = float(np.min(np.abs(x - centers)))
        d = max(d0 - fine_radius, 0.0)
        # h(d) solving h' = (growth - 1) in the continuous limit
        h = min(h_fine + (growth - 1.0) * d, h_coarse)
        if cap is not None and d0 <= cap_radius:
            h = min(h, cap)
        return h

    nodes = [lo]
    while nodes[-1] < hi:
        nodes.append(nodes[-1] + spacing(nodes[-1]))
    nodes = np.asarray(nodes)
    nodes = lo + (nodes - lo) * (hi - lo) / (nodes[-1] - lo)
    return nodes


@dataclass
class WallMesh:
    x: np.ndarray            # column abscissas; periodic meshes exclude x0 + period
    wall: np.ndarray         # wall height at each column
    z: np.ndarray            # flat levels above y2 = 0, z[0] = 0
    rough_rows: int          # number of cell rows inside the rough layer
    period: float | None = None
    # filled by __post_init__
    points: np.ndarray = field(init=False, repr=False)
    triangles: np.ndarray = field(init=False, repr=False)
    tri_edges: np.ndarray = field(init=False, repr=False)
    tri_coords: np.ndarray = field(init=False, repr=False)
    edge_mid: np.ndarray = field(init=False, repr=False)
    edges: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        self.x = np.asarray(self.x, dtype=float)
        self.wall = np.asarray(self.wall, dtype=float)
        self.z = np.asarray(self.z, dtype=float)
        if self.wall.shape != self.x.shape:
            raise ValueError("wall must have one height per column")
        if np.any(self.wall >= 0.0) and self.rough_rows > 0:
            raise ValueError("wall must lie strictly below y2 = 0")
        J = self.rough_rows
        w = np.concatenate([1.0 - np.arange(J) / J, np.zeros(len(self.z))]) if J else np.zeros(len(self.z))
        zz = np.concatenate([np.zeros(J), self.z])
        if J == 0:
            w[0] = 1.0  # the wall itself is row 0
            zz = self.z + 0.0
        self.w_rows = w
        self.z_rows = zz
        self.nc = len(self.x)
        self.nr = len(w)
        self.nqx = self.nc if self.periodic else self.nc - 1
        self.nqy = self.nr - 1
        Yv = w[:, None] * self.wall[None, :] + zz[:, None]
        self.Yv = Yv
        X = np.broadcast_to(self.x[None, :], Yv.shape)
        self.points = np.column_stack([X.ravel(), Yv.ravel()])
        self._build()

    @property
    def periodic(self) -> bool:
        return self.period is not None

    @property
    def n_vertices(self) -> int:
        return self.nc * self.nr

    @property
    def n_dofs2(self) -> int:
        return self.n_vertices + len(self.edges)

    @property
    def trace_row(self) -> int:
        """Row index of the line y2 = 0."""
        return self.rough_rows

    def vid(self, i, j):
        return j * self.nc + np.mod(i, self.nc)

    def _xu(self, i):
        """Unwrapped abscissa of column index ``i`` (may equal nc)."""
        i = np.asarray(i)
        if self.periodic:
            return self.x[np.mod(i, self.nc)] + self.period * (i // self.nc)
        return self.x[i]

    def _build(self):
        nc, nr, nqx, nqy = self.nc, self.nr, self.nqx, self.nqy
        # edges: horizontal (nqx per row), vertical (nc per row gap), diagonal (per quad)
        n_h = nqx * nr
        n_v = nc * nqy
        n_d = nqx * nqy
        ih, jh = np.meshgrid(np.arange(nqx), np.arange(nr))
        iv, jv = np.meshgrid(np.arange(nc), np.arange(nqy))
        iq, jq = np.meshgrid(np.arange(nqx), np.arange(nqy))
        ih, jh, iv, jv, iq, jq = (a.ravel() for a in (ih, jh, iv, jv, iq, jq))

        def hid(i, j):
            return j * nqx + i

        def vidg(i, j):
            return n_h + j * nc + np.mod(i, nc)

        def did(i, j):
            return n_h + n_v + j * nqx + i

        a = self.vid(iq, jq)
        b = self.vid(iq + 1, jq)
        c = self.vid(iq + 1, jq + 1)
        d = self.vid(iq, jq + 1)
        # unwrapped coordinates of the quad corners
        xa = self._xu(iq)
        xb = self._xu(iq + 1)
        ya = self.Yv[jq, iq]
        yb = self.Yv[jq, np.mod(iq + 1, nc)]
        yc = self.Yv[jq + 1, np.mod(iq + 1, nc)]
        yd = self.Yv[jq + 1, iq]
        pa = np.column_stack([xa, ya])
        pb = np.column_stack([xb, yb])
        pc = np.column_stack([xb, yc])
        pd = np.column_stack([xa, yd])
        diag_ac = np.sum((pc - pa) ** 2, axis=1) <= np.sum((pd - pb) ** 2, axis=1)

        e_ab = hid(iq, jq)
        e_dc = hid(iq, jq + 1)
        e_ad = vidg(iq, jq)
        e_bc = vidg(iq + 1, jq)
        e_dg = did(iq, jq)

        # local vertex order (v0, v1, v2) counter-clockwise; edges ordered (01, 12, 20)
        T1 = np.where(diag_ac[:, None], np.column_stack([a, b, c]), np.column_stack([a, b, d]))
        T2 = np.where(diag_ac[:, None], np.column_stack([a, c, d]), np.column_stack([b, c, d]))
        E1 = np.where(diag_ac[:, None], np.column_stack([e_ab, e_bc, e_dg]),
                      np.column_stack([e_ab, e_dg, e_ad]))
        E2 = np.where(diag_ac[:, None], np.column_stack([e_dg, e_dc, e_ad]),
                      np.column_stack([e_bc, e_dc, e_dg]))
        dac = diag_ac[:, None, None]
        C1 = np.where(dac, np.stack([pa, pb, pc], 1), np.stack([pa, pb, pd], 1))
        C2 = np.where(dac, np.stack([pa, pc, pd], 1), np.stack([pb, pc, pd], 1))
        self.triangles = np.concatenate([T1, T2])
        self.tri_edges = np.concatenate([E1, E2])
        self.tri_coords = np.concatenate([C1, C2])
        self.tri_quad = np.concatenate([np.arange(n_d), np.arange(n_d)])
        self.tri_row = np.concatenate([jq, jq])

        # edge endpoints and midpoints (unwrapped)
        edges = np.empty((n_h + n_v + n_d, 2), dtype=np.int64)
        mid = np.empty((n_h + n_v + n_d, 2))
        edges[:n_h] = np.column_stack([self.vid(ih, jh), self.vid(ih + 1, jh)])
        mid[:n_h, 0] = 0.5 * (self._xu(ih) + self._xu(ih + 1))
        mid[:n_h, 1] = 0.5 * (self.Yv[jh, ih] + self.Yv[jh, np.mod(ih + 1, nc)])
        edges[n_h:n_h + n_v] = np.column_stack([self.vid(iv, jv), self.vid(iv, jv + 1)])
        mid[n_h:n_h + n_v, 0] = self.x[iv]
        mid[n_h:n_h + n_v, 1] = 0.5 * (self.Yv[jv, iv] + self.Yv[jv + 1, iv])
        dpts = np.where(diag_ac[:, None], 0.5 * (pa + pc), 0.5 * (pb + pd))
        edges[n_h + n_v:] = np.where(diag_ac[:, None], np.column_stack([a, c]), np.column_stack([b, d]))
        mid[n_h + n_v:] = dpts
        self.edges = edges
        self.edge_mid = mid
        self._n_h, self._n_v = n_h, n_v

        area = 0.5 * ((self.tri_coords[:, 1, 0] - self.tri_coords[:, 0, 0]) * (self.tri_coords[:, 2, 1] - self.tri_coords[:, 0, 1])
                      - (self.tri_coords[:, 2, 0] - self.tri_coords[:, 0, 0]) * (self.tri_coords[:, 1, 1] - self.tri_coords[:, 0, 1]))
        if np.any(area <= 0):
            raise ValueError("degenerate or inverted triangles; refine the rough layer")
        self.area = area

    # P2 dof helpers ---------------------------------------------------------
    @property
    def tri_dofs2(self) -> np.ndarray:
        """(T, 6) P2 dof indices: vertices then midpoints of edges 01, 12, 20."""
        return np.concatenate([self.triangles, self.n_vertices + self.tri_edges], axis=1)

    @property
    def dof_coords2(self) -> np.ndarray:
        return np.concatenate([self.points, self.edge_mid])

    def row_dofs2(self, j: int) -> np.ndarray:
        """P2 dofs lying on vertex row ``j`` (vertices and horizontal edge midpoints)."""
        verts = self.vid(np.arange(self.nc), j)
        hedges = self.n_vertices + j * self.nqx + np.arange(self.nqx)
        return np.concatenate([verts, hedges])

    def column_dofs2(self, i: int) -> np.ndarray:
        """P2 dofs on vertex column ``i`` (vertices and vertical edge midpoints)."""
        verts = self.vid(i, np.arange(self.nr))
        vedges = self.n_vertices + self._n_h + np.arange(self.nqy) * self.nc + i
        return np.concatenate([verts, vedges])

    def row_trace2(self, j: int):
        """Ordered abscissas and dof indices along row ``j`` at half-cell resolution."""
        verts = self.vid(np.arange(self.nc), j)
        hedges = self.n_vertices + j * self.nqx + np.arange(self.nqx)
        xm = self.edge_mid[hedges - self.n_vertices, 0]
        if self.periodic:
            xs = np.empty(2 * self.nc)
            ds = np.empty(2 * self.nc, dtype=np.int64)
            xs[0::2], xs[1::2] = self.x, xm
            ds[0::2], ds[1::2] = verts, hedges
        else:
            xs = np.empty(2 * self.nc - 1)
            ds = np.empty(2 * self.nc - 1, dtype=np.int64)
            xs[0::2], xs[1::2] = self.x, xm
            ds[0::2], ds[1::2] = verts, hedges
        return xs, ds

    def locate(self, pts):
        """Triangle index and barycentric coordinates for each point.

        Points are wrapped into the periodic window.  Points outside the mesh
        raise ``ValueError``."""
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        px = pts[:, 0].copy()
        py = pts[:, 1]
        if self.periodic:
            px = self.x[0] + np.mod(px - self.x[0], self.period)
            xe = np.append(self.x, self.x[0] + self.period)
        else:
            xe = self.x
            if np.any(px < xe[0] - 1e-12) or np.any(px > xe[-1] + 1e-12):
                raise ValueError("point outside the lateral extent of the mesh")
        i = np.clip(np.searchsorted(xe, px, side="right") - 1, 0, self.nqx - 1)
        t = (px - xe[i]) / (xe[i + 1] - xe[i])
        yl = self.Yv[:, i]
        yr = self.Yv[:, np.mod(i + 1, self.nc)]
        yline = (1 - t)[None, :] * yl + t[None, :] * yr   # (nr, npts)
        if np.any(py < yline[0] - 1e-9) or np.any(py > yline[-1] + 1e-9):
            raise ValueError("point outside the vertical extent of the mesh")
        j = np.clip(np.sum(yline <= py[None, :], axis=0) - 1, 0, self.nqy - 1)
        q = j * self.nqx + i
        nq = self.nqx * self.nqy
        cand = np.stack([q, q + nq], axis=1)
        best_tri = np.empty(len(px), dtype=np.int64)
        best_lam = np.empty((len(px), 3))
        best_min = np.full(len(px), -np.inf)
        for k in range(2):
            tri = cand[:, k]
            C = self.tri_coords[tri].copy()
            # shift unwrapped coordinates to the point's period copy
            lam = _barycentric(C, np.column_stack([px, py]))
            m = lam.min(axis=1)
            better = m > best_min
            best_min = np.where(better, m, best_min)
            best_tri = np.where(better, tri, best_tri)
            best_lam = np.where(better[:, None], lam, best_lam)
        return best_tri, best_lam


def _barycentric(C, p):
    x0, y0 = C[:, 0, 0], C[:, 0, 1]
    x1, y1 = C[:, 1, 0], C[:, 1, 1]
    x2, y2 = C[:, 2, 0], C[:, 2, 1]
    det = (x1 - x0) * (y2 - y0) - (x2 - x0) * (y1 - y0)
    l1 = ((p[:, 0] - x0) * (y2 - y0) - (x2 - x0) * (p[:, 1] - y0)) / det
    l2 = ((x1 - x0) * (p[:, 1] - y0) - (p[:, 0] - x0) * (y1 - y0)) / det
    return np.column_stack([1 - l1 - l2, l1, l2])
