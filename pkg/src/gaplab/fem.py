"""Structured meshes and Galerkin assembly of metric-weighted forms.

Bilinear elements on the structured grid (linear segments in 1d), 2x2
Gauss quadrature per rectangle and 2-point Gauss per segment, with the
metric evaluated per quadrature point.  Tensor-product elements are
essential here: waveguide domains are thin (h_s far above h_u), and
triangle splits of such cells carry an O((h_s/eps)^2) relative error on
longitudinal eigenvalues through the mixed-derivative interpolation
term, while bilinear elements factor direction by direction.  Dirichlet
conditions are eliminated by row/column deletion and quasi-periodic
conditions by dof folding with a phase, which keeps the nested-space
inequalities between Neumann, quasi-periodic and Dirichlet problems
exact at the discrete level.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Optional, Sequence, Tuple, Union

import numpy as np

from .errors import CutOffMeshLine, HoleTooCoarse
from .geometry import MetricField, Rectangle
from .linalg import HermitianMatrix

DIRICHLET = "dirichlet"
NEUMANN = "neumann"
QUASI_PERIODIC = "quasi-periodic"

# 2-point Gauss on [0, 1], exact on cubics; the segment mass matrix must be
# integrated exactly or it loses positive definiteness
_SEG_X = np.array([0.5 - 0.5 / np.sqrt(3.0), 0.5 + 0.5 / np.sqrt(3.0)])
_SEG_W = np.array([0.5, 0.5])

# tensor 2x2 Gauss on the reference square; exact for bilinear mass products
_QUAD_XI = np.array(
    [(x, y) for x in _SEG_X for y in _SEG_X]
)
_QUAD_W = np.array([wx * wy for wx in _SEG_W for wy in _SEG_W])


def _q1_shapes():
    """Bilinear shape values and reference gradients at the Gauss points.

    Node order per element: (i,j), (i+1,j), (i,j+1), (i+1,j+1).
    """
    xi = _QUAD_XI[:, 0][:, None]
    eta = _QUAD_XI[:, 1][:, None]
    n = np.hstack(
        [(1 - xi) * (1 - eta), xi * (1 - eta), (1 - xi) * eta, xi * eta]
    )  # (q, 4)
    dxi = np.hstack([-(1 - eta), (1 - eta), -eta, eta])
    deta = np.hstack([-(1 - xi), -xi, (1 - xi), xi])
    return n, dxi, deta


_Q1_N, _Q1_DXI, _Q1_DETA = _q1_shapes()


@dataclass
class Mesh:
    """Structured grid mesh with optional hole mask.

    2d node ids are i_s * nodes_u + i_u; inactive nodes (swallowed by a
    hole) keep their id but never appear in an element.  Nodes exposed by
    removing hole elements are tagged for an unconditional Dirichlet
    condition.
    """

    dimension: int
    coords: np.ndarray  # (N,) in 1d, (N, 2) in 2d
    elements: np.ndarray  # (M, 2) segments or (M, 4) grid rectangles
    nodes_s: int
    nodes_u: Optional[int]
    h_s: float
    h_u: Optional[float]
    active: np.ndarray  # (N,) bool
    hole_dirichlet: np.ndarray  # (N,) bool
    interval: Tuple[float, float]
    u_interval: Optional[Tuple[float, float]]

    @property
    def node_count(self) -> int:
        return len(self.coords)

    def node_s(self) -> np.ndarray:
        return self.coords if self.dimension == 1 else self.coords[:, 0]

    def grid_index(self, i_s: int, i_u: int = 0) -> int:
        return i_s * (self.nodes_u or 1) + i_u

    def side_masks(self):
        """Boolean masks for the four boundary sides (s_lo, s_hi, u_lo, u_hi)."""
        n = self.node_count
        s_lo = np.zeros(n, dtype=bool)
        s_hi = np.zeros(n, dtype=bool)
        nu = self.nodes_u or 1
        s_lo[:nu] = True
        s_hi[-nu:] = True
        if self.dimension == 1:
            return s_lo, s_hi, np.zeros(n, bool), np.zeros(n, bool)
        u_lo = np.zeros(n, dtype=bool)
        u_hi = np.zeros(n, dtype=bool)
        u_lo[0::nu] = True
        u_hi[nu - 1 :: nu] = True
        return s_lo, s_hi, u_lo, u_hi


def build_mesh(
    domain: Union[Tuple[float, float], Rectangle, Sequence[float]],
    nodes_s: int,
    nodes_u: Optional[int] = None,
    hole: Optional[Tuple[float, float, float]] = None,
) -> Mesh:
    """Mesh an interval (1d) or a rectangle into a structured grid of cells.

    `hole`, when given, is (center_s, center_u, radius): every cell whose
    centroid falls inside the disk is removed and the exposed nodes are
    tagged Dirichlet (a staircase hole boundary).
    """
    if nodes_u is None:
        if nodes_s < 4:
            raise ValueError("need at least 4 nodes along s")
        s0, s1 = float(domain[0]), float(domain[1])
        coords = np.linspace(s0, s1, nodes_s)
        elements = np.column_stack([np.arange(nodes_s - 1), np.arange(1, nodes_s)])
        n = nodes_s
        return Mesh(
            dimension=1,
            coords=coords,
            elements=elements,
            nodes_s=nodes_s,
            nodes_u=None,
            h_s=(s1 - s0) / (nodes_s - 1),
            h_u=None,
            active=np.ones(n, dtype=bool),
            hole_dirichlet=np.zeros(n, dtype=bool),
            interval=(s0, s1),
            u_interval=None,
        )

    if nodes_s < 4 or nodes_u < 2:
        raise ValueError("need nodes_s >= 4 and nodes_u >= 2")
    rect = Rectangle(*domain)
    s = np.linspace(rect.s0, rect.s1, nodes_s)
    u = np.linspace(rect.u0, rect.u1, nodes_u)
    ss, uu = np.meshgrid(s, u, indexing="ij")
    coords = np.column_stack([ss.ravel(), uu.ravel()])

    i = np.repeat(np.arange(nodes_s - 1), nodes_u - 1)
    j = np.tile(np.arange(nodes_u - 1), nodes_s - 1)
    a = i * nodes_u + j
    b = (i + 1) * nodes_u + j
    c = i * nodes_u + (j + 1)
    d = (i + 1) * nodes_u + (j + 1)
    elements = np.column_stack([a, b, c, d])

    n = coords.shape[0]
    active = np.ones(n, dtype=bool)
    hole_dirichlet = np.zeros(n, dtype=bool)
    h_s = rect.width_s / (nodes_s - 1)
    h_u = rect.width_u / (nodes_u - 1)

    if hole is not None and hole[2] > 0.0:
        cs, cu, r = float(hole[0]), float(hole[1]), float(hole[2])
        centroids = coords[elements].mean(axis=1)
        inside = (centroids[:, 0] - cs) ** 2 + (centroids[:, 1] - cu) ** 2 < r * r
        if not np.any(inside):
            if r > 2.0 * max(h_s, h_u):
                raise HoleTooCoarse(
                    f"hole of radius {r} removed no element at spacing "
                    f"({h_s:.3g}, {h_u:.3g})"
                )
        else:
            removed = elements[inside]
            elements = elements[~inside]
            used = np.zeros(n, dtype=bool)
            used[elements.ravel()] = True
            active = used
            touched = np.zeros(n, dtype=bool)
            touched[removed.ravel()] = True
            hole_dirichlet = touched & used

    return Mesh(
        dimension=2,
        coords=coords,
        elements=elements,
        nodes_s=nodes_s,
        nodes_u=nodes_u,
        h_s=h_s,
        h_u=h_u,
        active=active,
        hole_dirichlet=hole_dirichlet,
        interval=(rect.s0, rect.s1),
        u_interval=(rect.u0, rect.u1),
    )


@dataclass(frozen=True)
class BoundarySpec:
    """Boundary conditions on the parameter rectangle.

    `u_edges` applies to u = const sides (ignored in 1d); `s_edges` is
    'dirichlet', 'neumann' or 'quasi-periodic', the latter tying the
    s = s1 trace to the s = s0 trace with phase conj(theta), |theta| = 1.
    """

    s_edges: str = DIRICHLET
    u_edges: str = DIRICHLET
    theta: complex = 1.0 + 0.0j

    def __post_init__(self):
        if self.s_edges not in (DIRICHLET, NEUMANN, QUASI_PERIODIC):
            raise ValueError(f"bad s_edges {self.s_edges!r}")
        if self.u_edges not in (DIRICHLET, NEUMANN):
            raise ValueError(f"bad u_edges {self.u_edges!r}")
        if self.s_edges == QUASI_PERIODIC:
            if abs(abs(complex(self.theta)) - 1.0) > 1e-12:
                raise ValueError("theta must have unit modulus")

    @classmethod
    def quasi_periodic(cls, theta: complex, u_edges: str = DIRICHLET) -> "BoundarySpec":
        return cls(QUASI_PERIODIC, u_edges, complex(theta))


@dataclass
class AssembledForms:
    """Stiffness/mass pair with the node-to-dof map that produced it.

    node_dof[i] is the matrix index of node i (for a slave node, its
    master's index), -1 if the node was eliminated; node_phase[i] is the
    factor relating the nodal value to the dof value.
    """

    stiffness: HermitianMatrix
    mass: HermitianMatrix
    node_dof: np.ndarray
    node_phase: np.ndarray
    mesh: Mesh
    bc: BoundarySpec

    @property
    def order(self) -> int:
        return self.stiffness.order


def _free_forms_1d(mesh: Mesh, potential) -> Tuple[np.ndarray, np.ndarray]:
    n = mesh.node_count
    h = np.diff(mesh.coords)
    m = len(h)
    k_loc = np.array([[1.0, -1.0], [-1.0, 1.0]])
    a_el = k_loc[np.newaxis, :, :] / h[:, np.newaxis, np.newaxis]

    shape = np.column_stack([1.0 - _SEG_X, _SEG_X])  # (q, 2)
    m_ref = np.einsum("q,qi,qj->ij", _SEG_W, shape, shape)
    b_el = m_ref[np.newaxis, :, :] * h[:, np.newaxis, np.newaxis]

    if potential is not None:
        xq = mesh.coords[mesh.elements[:, 0], np.newaxis] + np.outer(h, _SEG_X)
        vq = np.asarray(potential(xq), dtype=float)
        a_el = a_el + np.einsum(
            "q,eq,qi,qj->eij", _SEG_W, vq, shape, shape
        ) * h[:, np.newaxis, np.newaxis]

    a0 = np.zeros((n, n))
    b0 = np.zeros((n, n))
    for i in range(2):
        for j in range(2):
            np.add.at(a0, (mesh.elements[:, i], mesh.elements[:, j]), a_el[:, i, j])
            np.add.at(b0, (mesh.elements[:, i], mesh.elements[:, j]), b_el[:, i, j])
    return a0, b0


def _free_forms_2d(mesh: Mesh, metric: Optional[MetricField]) -> Tuple[np.ndarray, np.ndarray]:
    els = mesh.elements
    p0 = mesh.coords[els[:, 0]]  # (M, 2), lower-left corners
    hs = mesh.coords[els[:, 1], 0] - p0[:, 0]
    hu = mesh.coords[els[:, 2], 1] - p0[:, 1]
    if np.any(hs <= 0.0) or np.any(hu <= 0.0):
        raise ValueError("mesh has non-positive element areas")
    area = hs * hu

    # physical quadrature points, (M, q)
    sq = p0[:, 0:1] + np.outer(hs, _QUAD_XI[:, 0])
    uq = p0[:, 1:2] + np.outer(hu, _QUAD_XI[:, 1])
    if metric is None:
        t11 = np.ones_like(sq)
        t12 = np.zeros_like(sq)
        t22 = np.ones_like(sq)
        rho = np.ones_like(sq)
    else:
        t11, t12, t22 = (
            np.broadcast_to(np.asarray(t, dtype=float), sq.shape)
            for t in metric.stiffness_density(sq, uq)
        )
        rho = np.broadcast_to(np.asarray(metric.mass_density(sq, uq), dtype=float), sq.shape)

    # physical gradients: d/ds = d/dxi / hs, d/du = d/deta / hu, per element
    gs = _Q1_DXI[None, :, :] / hs[:, None, None]  # (M, q, 4)
    gu = _Q1_DETA[None, :, :] / hu[:, None, None]
    w = _QUAD_W[None, :] * area[:, None]  # (M, q)
    a_el = (
        np.einsum("eq,eqi,eqj->eij", w * t11, gs, gs)
        + np.einsum("eq,eqi,eqj->eij", w * t22, gu, gu)
        + np.einsum("eq,eqi,eqj->eij", w * t12, gs, gu)
        + np.einsum("eq,eqi,eqj->eij", w * t12, gu, gs)
    )
    b_el = np.einsum("eq,qi,qj->eij", w * rho, _Q1_N, _Q1_N)

    n = mesh.node_count
    a0 = np.zeros((n, n))
    b0 = np.zeros((n, n))
    for i in range(4):
        for j in range(4):
            np.add.at(a0, (els[:, i], els[:, j]), a_el[:, i, j])
            np.add.at(b0, (els[:, i], els[:, j]), b_el[:, i, j])
    return a0, b0


def free_forms(
    mesh: Mesh,
    metric: Optional[MetricField],
    potential=None,
) -> Tuple[np.ndarray, np.ndarray]:
    """The unconstrained (natural boundary) forms over all grid nodes.

    Assemble these once per mesh and metric; boundary conditions are a
    transformation applied afterwards, so Dirichlet, Neumann and every
    quasi-periodic problem share identical element integrals.
    """
    if mesh.dimension == 1:
        a0, b0 = _free_forms_1d(mesh, potential)
    else:
        if potential is not None:
            raise ValueError("potential terms are only supported on 1d meshes")
        a0, b0 = _free_forms_2d(mesh, metric)
    a0 = 0.5 * (a0 + a0.T)
    b0 = 0.5 * (b0 + b0.T)
    return a0, b0


def assemble(
    mesh: Mesh,
    metric: Optional[MetricField],
    bc: BoundarySpec,
    potential=None,
) -> AssembledForms:
    """Assemble the stiffness and mass forms for a mesh, metric and bc.

    A_pq = int sum g^{ij} d_i phi_p d_j phi_q sqrt(det g),
    B_pq = int phi_p phi_q sqrt(det g); an optional 1d potential V adds
    int V phi_p phi_q to the stiffness form (the Hill path).
    """
    a0, b0 = free_forms(mesh, metric, potential)
    return apply_bc(mesh, a0, b0, bc)


def apply_bc(mesh: Mesh, a0: np.ndarray, b0: np.ndarray, bc: BoundarySpec) -> AssembledForms:
    """Impose boundary conditions on pre-assembled free forms.

    Dirichlet dofs are eliminated by row/column deletion; quasi-periodic
    slaves fold onto their masters with phase conj(theta).
    """
    s_lo, s_hi, u_lo, u_hi = mesh.side_masks()
    drop = ~mesh.active
    dirichlet = mesh.hole_dirichlet.copy()
    if mesh.dimension == 2 and bc.u_edges == DIRICHLET:
        dirichlet |= u_lo | u_hi
    if bc.s_edges == DIRICHLET:
        dirichlet |= s_lo | s_hi

    n = mesh.node_count
    node_dof = np.full(n, -1, dtype=int)
    node_phase = np.ones(n, dtype=complex)

    if bc.s_edges == QUASI_PERIODIC:
        theta = complex(bc.theta)
        nu = mesh.nodes_u or 1
        slaves = np.arange(n - nu, n)
        masters = np.arange(nu)
        ok = mesh.active[slaves] & mesh.active[masters]
        slaves, masters = slaves[ok], masters[ok]
        keep = np.ones(n, dtype=bool)
        keep[slaves] = False
        keep &= ~drop
        keep_ids = np.flatnonzero(keep)
        pos = np.full(n, -1, dtype=int)
        pos[keep_ids] = np.arange(len(keep_ids))

        real_phase = theta.imag == 0.0 and abs(theta.real) == 1.0
        dtype = float if real_phase else complex
        contiguous = len(keep_ids) and np.all(np.diff(keep_ids) == 1)
        if contiguous:
            lo, hi = keep_ids[0], keep_ids[-1] + 1
            a1 = np.array(a0[lo:hi, lo:hi], dtype=dtype)
            b1 = np.array(b0[lo:hi, lo:hi], dtype=dtype)
        else:
            a1 = a0[np.ix_(keep_ids, keep_ids)].astype(dtype)
            b1 = b0[np.ix_(keep_ids, keep_ids)].astype(dtype)
        mpos = pos[masters]
        th = theta.real if real_phase else theta
        for m0, m1 in ((a0, a1), (b0, b1)):
            sk = m0[np.ix_(slaves, keep_ids)]
            m1[mpos, :] += th * sk
            m1[:, mpos] += np.conj(th) * sk.T
            m1[np.ix_(mpos, mpos)] += m0[np.ix_(slaves, slaves)]

        retained = ~dirichlet[keep_ids]
        sel = np.flatnonzero(retained)
        a1 = a1[np.ix_(sel, sel)]
        b1 = b1[np.ix_(sel, sel)]
        final = np.full(len(keep_ids), -1, dtype=int)
        final[sel] = np.arange(len(sel))
        node_dof[keep_ids] = final
        sl_dof = final[pos[masters]]
        node_dof[slaves] = sl_dof
        node_phase[slaves] = np.where(sl_dof >= 0, np.conj(theta), 1.0)
        node_dof[dirichlet] = -1
    else:
        keep = ~(dirichlet | drop)
        keep_ids = np.flatnonzero(keep)
        a1 = a0[np.ix_(keep_ids, keep_ids)]
        b1 = b0[np.ix_(keep_ids, keep_ids)]
        node_dof[keep_ids] = np.arange(len(keep_ids))

    return AssembledForms(
        stiffness=HermitianMatrix.from_presymmetrized(a1),
        mass=HermitianMatrix.from_presymmetrized(b1),
        node_dof=node_dof,
        node_phase=node_phase,
        mesh=mesh,
        bc=bc,
    )


def dirichlet_restrict(forms: AssembledForms, cut_s: Sequence[float]) -> AssembledForms:
    """Constrain every dof on the given s = const mesh lines to zero.

    Each cut must coincide with a mesh line; the restricted forms split
    into independent blocks, one per piece between cuts.
    """
    if not cut_s:
        return forms
    mesh = forms.mesh
    s = mesh.node_s()
    tol = 1e-9 * max(1.0, abs(mesh.interval[1]))
    kill = np.zeros(mesh.node_count, dtype=bool)
    for cut in cut_s:
        on_line = np.abs(s - cut) <= tol
        if not np.any(on_line):
            raise CutOffMeshLine(f"cut at s = {cut} does not hit a mesh line")
        kill |= on_line

    doomed_dofs = np.unique(forms.node_dof[kill & (forms.node_dof >= 0)])
    order = forms.order
    sel = np.setdiff1d(np.arange(order), doomed_dofs)
    a = forms.stiffness.array[np.ix_(sel, sel)]
    b = forms.mass.array[np.ix_(sel, sel)]
    remap = np.full(order, -1, dtype=int)
    remap[sel] = np.arange(len(sel))
    node_dof = np.where(forms.node_dof >= 0, remap[forms.node_dof], -1)
    return AssembledForms(
        stiffness=HermitianMatrix.from_presymmetrized(a),
        mass=HermitianMatrix.from_presymmetrized(b),
        node_dof=node_dof,
        node_phase=forms.node_phase.copy(),
        mesh=mesh,
        bc=forms.bc,
    )


def export_triplets(matrix, path) -> None:
    """Write a dense matrix as `row col re im` lines for inspection."""
    a = matrix.array if isinstance(matrix, HermitianMatrix) else np.asarray(matrix)
    with open(path, "w") as fh:
        for i in range(a.shape[0]):
            for j in range(a.shape[1]):
                v = complex(a[i, j])
                if v != 0:
                    fh.write(f"{i} {j} {v.real:.17g} {v.imag:.17g}\n")


def read_triplets(path, order: int, dtype=complex) -> np.ndarray:
    a = np.zeros((order, order), dtype=dtype)
    with open(path) as fh:
        for line in fh:
            i, j, re, im = line.split()
            v = float(re) + 1j * float(im)
            a[int(i), int(j)] = v if dtype is complex else v.real
    return a
