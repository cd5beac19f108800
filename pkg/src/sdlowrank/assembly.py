"""Block finite-element assembly of the coupled flow system.

The discrete unknown is ordered x = [head; u1; u2; pressure].  With P2
head/velocity and P1 pressure spaces, the system matrix has the block
layout

    [ P      -I1         -I2         0  ]
    [ I3+I9  2F1+F2+I5   F3+I7       F5 ]
    [ I4+I10 F4+I8       F1+2F2+I6   F6 ]
    [ 0      F5^T        F6^T        0  ]

where P is the conductivity-weighted head stiffness, F1..F6 the viscous
and divergence blocks of the free-flow rectangle, I1..I4 the mass-flux
and normal-stress interface couplings, I5..I8 the slip-penalty blocks of
the tangential interface condition, and I9..I12 its conductivity-carrying
counterparts (I11/I12 share I9/I10's integrand with the mixed tangent
factor tau1*tau2; for a flat horizontal interface that factor vanishes).
The load vector is b = (b1, b2, b3, 0).

The random conductivity enters linearly, only through P and I9..I12, so
the matrix splits additively into a deterministic part (assembled once
from the mean field) and a per-sample perturbation supported on the first
N1 columns of the first N1+2*N2 rows.  The slip coefficient delta is
evaluated at the mean field everywhere, which keeps that splitting exact.

All volume integrals use the seven-point degree-5 triangle rule and all
interface integrals the three-point Gauss rule.
"""

from dataclasses import dataclass, field, replace

import numpy as np
import scipy.sparse as sp

from .mesh import TAG_GAMMA_F_BOTTOM, TAG_GAMMA_F_WALL, TAG_GAMMA_P
from .mesh import interface_frame
from .quadrature import edge_rule_3pt, triangle_rule_7pt

__all__ = [
    "PhysicalParams",
    "SplitSystem",
    "bj_delta",
    "assemble_mean",
    "assemble_perturbation",
    "PerturbationAssembler",
    "dirichlet_constraints",
    "apply_dirichlet",
    "write_coo",
    "p2_stiffness",
    "p2_mass",
    "p1_pressure_mass",
]


@dataclass(frozen=True)
class PhysicalParams:
    """Physical constants of the coupled model."""

    nu: float = 1.0      # kinematic viscosity
    g: float = 1.0       # gravitational acceleration
    alpha: float = 1.0   # slip (Beavers-Joseph) coefficient
    z: float = 0.0       # elevation head
    d: int = 2           # spatial dimension

    def __post_init__(self):
        if not (self.nu > 0.0 and self.g > 0.0 and self.alpha > 0.0):
            raise ValueError("nu, g and alpha must be positive")


@dataclass
class SplitSystem:
    """Assembled system split into mean and per-sample perturbation parts.

    ``A_bar + A_tildes[m]`` is the full matrix of sample m.  After
    :func:`apply_dirichlet` the constrained rows/columns of ``A_bar`` are
    identity and the same rows/columns of every perturbation are zero.
    """

    A_bar: sp.csr_matrix
    b: np.ndarray
    A_tildes: list = field(default_factory=list)
    constraints: list = field(default_factory=list)  # (dof, value) pairs
    N1: int = 0
    N2: int = 0
    N3: int = 0

    @property
    def N(self):
        return self.N1 + 2 * self.N2 + self.N3


def bj_delta(params, kbar_values):
    """Slip coefficient delta = alpha*nu*sqrt(d)/sqrt(tr(Pi)).

    ``Pi = K*nu/g * Identity(d)`` is the intrinsic permeability evaluated
    at the mean conductivity, so ``tr(Pi) = d*K*nu/g``.
    """
    kbar_values = np.asarray(kbar_values, dtype=float)
    if np.any(kbar_values <= 0.0):
        raise ValueError("mean conductivity must be positive on the interface")
    tr_pi = params.d * kbar_values * params.nu / params.g
    return params.alpha * params.nu * np.sqrt(params.d) / np.sqrt(tr_pi)


# ---------------------------------------------------------------------------
# reference bases
# ---------------------------------------------------------------------------

def p2_values(xi, eta):
    """Quadratic basis values; node order (v0, v1, v2, m12, m20, m01)."""
    xi = np.asarray(xi, dtype=float)
    eta = np.asarray(eta, dtype=float)
    l0 = 1.0 - xi - eta
    return np.stack(
        [
            l0 * (2.0 * l0 - 1.0),
            xi * (2.0 * xi - 1.0),
            eta * (2.0 * eta - 1.0),
            4.0 * xi * eta,
            4.0 * eta * l0,
            4.0 * l0 * xi,
        ],
        axis=-1,
    )


def p2_grads(xi, eta):
    """Reference gradients of the quadratic basis, shape (..., 6, 2)."""
    xi = np.asarray(xi, dtype=float)
    eta = np.asarray(eta, dtype=float)
    l0 = 1.0 - xi - eta
    zero = np.zeros_like(xi)
    gx = np.stack(
        [
            1.0 - 4.0 * l0,
            4.0 * xi - 1.0,
            zero,
            4.0 * eta,
            -4.0 * eta,
            4.0 * (l0 - xi),
        ],
        axis=-1,
    )
    gy = np.stack(
        [
            1.0 - 4.0 * l0,
            zero,
            4.0 * eta - 1.0,
            4.0 * xi,
            4.0 * (l0 - eta),
            -4.0 * xi,
        ],
        axis=-1,
    )
    return np.stack([gx, gy], axis=-1)


# ---------------------------------------------------------------------------
# per-subdomain geometry tables
# ---------------------------------------------------------------------------

class _Space:
    """Affine maps and quadrature tables for one triangulated subdomain."""

    def __init__(self, coords, tri6, rule):
        self.coords = coords
        self.tri6 = tri6
        verts = coords[tri6[:, :3]]              # (nt, 3, 2)
        self.v0 = verts[:, 0, :]
        jac = np.stack(
            [verts[:, 1, :] - verts[:, 0, :], verts[:, 2, :] - verts[:, 0, :]],
            axis=-1,
        )                                        # (nt, 2, 2), columns = edges
        det = jac[:, 0, 0] * jac[:, 1, 1] - jac[:, 0, 1] * jac[:, 1, 0]
        if np.any(np.abs(det) < 1e-300):
            raise RuntimeError("degenerate triangle in mesh")
        inv = np.empty_like(jac)
        inv[:, 0, 0] = jac[:, 1, 1]
        inv[:, 0, 1] = -jac[:, 0, 1]
        inv[:, 1, 0] = -jac[:, 1, 0]
        inv[:, 1, 1] = jac[:, 0, 0]
        inv /= det[:, None, None]
        self.jac = jac
        self.inv = inv
        self.area = 0.5 * np.abs(det)

        bary = rule.points                        # (nq, 3)
        xi, eta = bary[:, 1], bary[:, 2]
        self.val = p2_values(xi, eta)             # (nq, 6)
        gref = p2_grads(xi, eta)                  # (nq, 6, 2)
        self.grad = np.einsum("qid,tdc->tqic", gref, inv)
        self.scale = self.area[:, None] * rule.weights[None, :]   # (nt, nq)
        self.qpts = self.v0[:, None, :] + np.einsum(
            "tcd,qd->tqc", jac, bary[:, 1:]
        )
        used = np.bincount(tri6.ravel(), minlength=coords.shape[0])
        if np.any(used == 0):
            raise RuntimeError("unassembled DOF: node never referenced")

    def ref_coords(self, tri_ids, points):
        """Reference coordinates of physical ``points`` inside given triangles."""
        rel = points - self.v0[tri_ids][:, None, :]
        return np.einsum("ecd,eqd->eqc", self.inv[tri_ids], rel)


class _Coo:
    """Triplet accumulator for one global sparse matrix."""

    def __init__(self, shape):
        self.shape = shape
        self.rows = []
        self.cols = []
        self.vals = []

    def add_block(self, row_dofs, col_dofs, entries):
        """row_dofs (t, i), col_dofs (t, j), entries (t, i, j)."""
        ti, tj = entries.shape[1], entries.shape[2]
        r = np.repeat(row_dofs[:, :, None], tj, axis=2)
        c = np.repeat(col_dofs[:, None, :], ti, axis=1)
        self.rows.append(r.ravel())
        self.cols.append(c.ravel())
        self.vals.append(entries.ravel())

    def tocsr(self):
        if self.rows:
            rows = np.concatenate(self.rows)
            cols = np.concatenate(self.cols)
            vals = np.concatenate(self.vals)
        else:
            rows = cols = vals = np.empty(0)
        mat = sp.coo_matrix((vals, (rows, cols)), shape=self.shape)
        return mat.tocsr()


def _nodal_field(mesh, value):
    """Normalise a scalar / callable / array into porous-vertex nodal values."""
    nodes = mesh.darcy_vertices
    if callable(value):
        return np.asarray([value(x, y) for x, y in nodes], dtype=float)
    arr = np.asarray(value, dtype=float)
    if arr.ndim == 0:
        return np.full(nodes.shape[0], float(arr))
    if arr.shape != (nodes.shape[0],):
        raise ValueError(
            f"nodal field has {arr.shape}, expected ({nodes.shape[0]},)"
        )
    return arr


class _EdgeTables:
    """Interface-edge quadrature data shared by all interface blocks."""

    def __init__(self, mesh, space_p, space_f):
        rule = edge_rule_3pt()
        self.s = rule.points[:, 0]                # (nq,)
        pair = mesh.iface_vertex_pairs
        va = mesh.vertices[pair[:, 0]]
        vb = mesh.vertices[pair[:, 1]]
        lengths = np.hypot(*(vb - va).T)
        self.wl = lengths[:, None] * rule.weights[None, :]   # (ne, nq)
        pts = va[:, None, :] * (1.0 - self.s)[None, :, None] + \
            vb[:, None, :] * self.s[None, :, None]

        tp = mesh.iface_darcy_tri
        tf = mesh.iface_stokes_tri
        ref_p = space_p.ref_coords(tp, pts)
        ref_f = space_f.ref_coords(tf, pts)
        self.aval = p2_values(ref_p[..., 0], ref_p[..., 1])  # (ne, nq, 6)
        agref = p2_grads(ref_p[..., 0], ref_p[..., 1])
        agphys = np.einsum("eqid,edc->eqic", agref, space_p.inv[tp])
        self.dax = agphys[..., 0]                             # d(head)/dx
        self.bval = p2_values(ref_f[..., 0], ref_f[..., 1])
        self.head_dofs = space_p.tri6[tp]                     # (ne, 6)
        self.vel_dofs = space_f.tri6[tf]

        frame = interface_frame(mesh)
        self.n1 = frame.normals[:, 0]
        self.n2 = frame.normals[:, 1]
        self.t1 = frame.tangents[:, 0]
        self.t2 = frame.tangents[:, 1]
        self.vpair = mesh.iface_darcy_vpair

    def edge_field(self, nodal):
        """Linear interpolation of a porous nodal field along the edges."""
        return (
            nodal[self.vpair[:, 0]][:, None] * (1.0 - self.s)[None, :]
            + nodal[self.vpair[:, 1]][:, None] * self.s[None, :]
        )


class _Workspace:
    """Everything that depends on the mesh but not on the sampled field."""

    def __init__(self, mesh, params, kbar_nodal):
        rule = triangle_rule_7pt()
        self.mesh = mesh
        self.params = params
        self.kbar_nodal = kbar_nodal
        self.space_p = _Space(mesh.head_coords, mesh.tri6_p, rule)
        self.space_f = _Space(mesh.vel_coords, mesh.tri6_f, rule)
        self.p1val = rule.points                   # barycentric = P1 basis
        self.edges = _EdgeTables(mesh, self.space_p, self.space_f)
        self.delta = bj_delta(params, self.edges.edge_field(kbar_nodal))
        # offsets of the four blocks
        self.o_head = 0
        self.o_u1 = mesh.N1
        self.o_u2 = mesh.N1 + mesh.N2
        self.o_p = mesh.N1 + 2 * mesh.N2


_WORKSPACES = {}


def _workspace(mesh, params, kbar_nodal):
    key = (id(mesh), params, kbar_nodal.tobytes())
    ws = _WORKSPACES.get(key)
    if ws is None or ws.mesh is not mesh:
        ws = _Workspace(mesh, params, kbar_nodal)
        _WORKSPACES.clear()          # one coupled problem at a time is typical
        _WORKSPACES[key] = ws
    return ws


def _k_dependent_triplets(ws, coo, field_nodal):
    """Blocks linear in the conductivity field: P and I9..I12."""
    mesh = ws.mesh
    sp_p = ws.space_p
    # volume head stiffness weighted by the interpolated field
    kq = np.einsum("qc,tc->tq", ws.p1val, field_nodal[mesh.tri3_darcy])
    w = ws.space_p.scale * kq
    ent = np.einsum("tq,tqic,tqjc->tij", w, sp_p.grad, sp_p.grad)
    coo.add_block(sp_p.tri6 + ws.o_head, sp_p.tri6 + ws.o_head, ent)

    # interface slip blocks carrying the conductivity
    ed = ws.edges
    kq_e = ed.edge_field(field_nodal)
    base = ed.wl * ws.delta * kq_e                       # (ne, nq)
    for coeff, row_off in (
        (ed.t1 * ed.t1, ws.o_u1),   # tangential-squared, u1 rows
        (ed.t1 * ed.t2, ws.o_u1),   # mixed tangent, u1 rows
        (ed.t2 * ed.t2, ws.o_u2),   # tangential-squared, u2 rows
        (ed.t1 * ed.t2, ws.o_u2),   # mixed tangent, u2 rows
    ):
        ent = np.einsum(
            "eq,eqi,eqj->eij", base * coeff[:, None], ed.bval, ed.dax
        )
        coo.add_block(ed.vel_dofs + row_off, ed.head_dofs + ws.o_head, ent)


def _deterministic_triplets(ws, coo):
    """All blocks independent of the sampled conductivity."""
    mesh = ws.mesh
    nu = ws.params.nu
    g = ws.params.g
    sp_f = ws.space_f
    gx = sp_f.grad[..., 0]
    gy = sp_f.grad[..., 1]
    w = sp_f.scale

    f1 = nu * np.einsum("tq,tqi,tqj->tij", w, gx, gx)
    f2 = nu * np.einsum("tq,tqi,tqj->tij", w, gy, gy)
    f3 = nu * np.einsum("tq,tqi,tqj->tij", w, gy, gx)   # rows d/dy, cols d/dx
    u1 = sp_f.tri6 + ws.o_u1
    u2 = sp_f.tri6 + ws.o_u2
    coo.add_block(u1, u1, 2.0 * f1 + f2)
    coo.add_block(u2, u2, f1 + 2.0 * f2)
    coo.add_block(u1, u2, f3)
    coo.add_block(u2, u1, np.swapaxes(f3, 1, 2))        # F4 = F3^T

    p1v = ws.p1val
    f5 = -np.einsum("tq,tqi,qj->tij", w, gx, p1v)
    f6 = -np.einsum("tq,tqi,qj->tij", w, gy, p1v)
    pres = mesh.tri3_pres + ws.o_p
    coo.add_block(u1, pres, f5)
    coo.add_block(u2, pres, f6)
    coo.add_block(pres, u1, np.swapaxes(f5, 1, 2))      # F5^T
    coo.add_block(pres, u2, np.swapaxes(f6, 1, 2))      # F6^T

    # interface couplings
    ed = ws.edges
    heads = ed.head_dofs + ws.o_head
    mass_ab = np.einsum("eq,eqi,eqj->eij", ed.wl, ed.aval, ed.bval)
    # head row: -I1 (u1 columns), -I2 (u2 columns)
    coo.add_block(heads, ed.vel_dofs + ws.o_u1, -ed.n1[:, None, None] * mass_ab)
    coo.add_block(heads, ed.vel_dofs + ws.o_u2, -ed.n2[:, None, None] * mass_ab)
    # velocity rows: +g*I3, +g*I4 (head columns)
    mass_ba = np.swapaxes(mass_ab, 1, 2)
    coo.add_block(ed.vel_dofs + ws.o_u1, heads,
                  g * ed.n1[:, None, None] * mass_ba)
    coo.add_block(ed.vel_dofs + ws.o_u2, heads,
                  g * ed.n2[:, None, None] * mass_ba)
    # slip penalty I5..I8
    mass_bb = np.einsum("eq,eqi,eqj->eij", ed.wl * ws.delta, ed.bval, ed.bval)
    coo.add_block(ed.vel_dofs + ws.o_u1, ed.vel_dofs + ws.o_u1,
                  (ed.t1 * ed.t1)[:, None, None] * mass_bb)
    coo.add_block(ed.vel_dofs + ws.o_u2, ed.vel_dofs + ws.o_u2,
                  (ed.t2 * ed.t2)[:, None, None] * mass_bb)
    coo.add_block(ed.vel_dofs + ws.o_u1, ed.vel_dofs + ws.o_u2,
                  (ed.t1 * ed.t2)[:, None, None] * mass_bb)
    coo.add_block(ed.vel_dofs + ws.o_u2, ed.vel_dofs + ws.o_u1,
                  (ed.t1 * ed.t2)[:, None, None] * mass_bb)


def _load_vector(ws, f_p=None, f_f1=None, f_f2=None):
    mesh = ws.mesh
    b = np.zeros(mesh.N)
    if f_p is not None:
        vals = _eval_callable(f_p, ws.space_p.qpts)
        ent = np.einsum("tq,qi->ti", ws.space_p.scale * vals, ws.space_p.val)
        np.add.at(b, ws.space_p.tri6 + ws.o_head, ent)
    for fun, off in ((f_f1, ws.o_u1), (f_f2, ws.o_u2)):
        if fun is not None:
            vals = _eval_callable(fun, ws.space_f.qpts)
            ent = np.einsum("tq,qi->ti", ws.space_f.scale * vals, ws.space_f.val)
            np.add.at(b, ws.space_f.tri6 + off, ent)
    gz = ws.params.g * ws.params.z
    if gz != 0.0:
        ed = ws.edges
        for nc, off in ((ed.n1, ws.o_u1), (ed.n2, ws.o_u2)):
            ent = np.einsum("eq,eqi->ei", ed.wl * (gz * nc)[:, None], ed.bval)
            np.add.at(b, ed.vel_dofs + off, ent)
    return b


def _eval_callable(fun, qpts):
    flat = qpts.reshape(-1, 2)
    vals = np.asarray([fun(x, y) for x, y in flat], dtype=float)
    return vals.reshape(qpts.shape[:2])


def assemble_mean(mesh, params, kl_mean=1.0, *, delta_from=None,
                  f_p=None, f_f1=None, f_f2=None):
    """Assemble the deterministic matrix and load vector.

    Parameters
    ----------
    mesh : CoupledMesh
    params : PhysicalParams
    kl_mean : scalar, array or callable
        Conductivity field entering the head stiffness and the
        conductivity-carrying interface blocks.
    delta_from : scalar, array or callable, optional
        Field the slip coefficient is evaluated at; defaults to
        ``kl_mean``.  Passing the mean field here while giving a full
        realization as ``kl_mean`` reproduces a complete per-sample matrix
        in one shot (the from-scratch route used to validate the
        mean/perturbation splitting).
    f_p, f_f1, f_f2 : callables, optional
        Volume sources; default zero.

    Returns
    -------
    (A_bar, b) : csr matrix of dimension N and load vector.
    """
    kbar = _nodal_field(mesh, kl_mean)
    dfield = kbar if delta_from is None else _nodal_field(mesh, delta_from)
    ws = _workspace(mesh, params, dfield)
    coo = _Coo((mesh.N, mesh.N))
    _deterministic_triplets(ws, coo)
    _k_dependent_triplets(ws, coo, kbar)
    b = _load_vector(ws, f_p=f_p, f_f1=f_f1, f_f2=f_f2)
    return coo.tocsr(), b


def assemble_perturbation(mesh, params, k_tilde, kbar=1.0):
    """Assemble one sample's perturbation matrix.

    Only the conductivity-weighted blocks are populated (head stiffness
    and the conductivity-carrying interface rows), so the result is
    nonzero only in the first N1 columns of the first N1+2*N2 rows.  The
    slip coefficient inside the interface blocks is evaluated at the mean
    field ``kbar``, never at the sampled field, keeping the mean +
    perturbation split exactly additive.
    """
    return PerturbationAssembler(mesh, params, kbar).assemble(k_tilde)


class PerturbationAssembler:
    """Reusable per-sample assembler (geometry tables built once)."""

    def __init__(self, mesh, params, kbar=1.0):
        self.mesh = mesh
        self.ws = _workspace(mesh, params, _nodal_field(mesh, kbar))

    def assemble(self, k_tilde):
        field_nodal = _nodal_field(self.mesh, k_tilde)
        coo = _Coo((self.mesh.N, self.mesh.N))
        _k_dependent_triplets(self.ws, coo, field_nodal)
        return coo.tocsr()


# ---------------------------------------------------------------------------
# Dirichlet treatment
# ---------------------------------------------------------------------------

def dirichlet_constraints(mesh, wall_velocity=(1.0, 0.0),
                          bottom_velocity=(0.0, 0.0), head_value=0.0):
    """Constraint list (dof, value) for the standard boundary conditions.

    Head is prescribed on the outer porous boundary, velocity on the side
    walls and the floor of the free-flow rectangle.  Interface nodes stay
    free; at corners the Dirichlet tag wins (wall value at the two
    interface corners).
    """
    cons = []
    head_idx = np.flatnonzero(mesh.head_tags == TAG_GAMMA_P)
    cons.extend((int(i), float(head_value)) for i in head_idx)
    wall_idx = np.flatnonzero(mesh.vel_tags == TAG_GAMMA_F_WALL)
    bottom_idx = np.flatnonzero(mesh.vel_tags == TAG_GAMMA_F_BOTTOM)
    for comp, off in ((0, mesh.N1), (1, mesh.N1 + mesh.N2)):
        cons.extend((int(off + i), float(wall_velocity[comp])) for i in wall_idx)
        cons.extend(
            (int(off + i), float(bottom_velocity[comp])) for i in bottom_idx
        )
    cons.sort()
    return cons


def apply_dirichlet(system, constraints):
    """Impose Dirichlet constraints on a SplitSystem.

    Nonhomogeneous values are lifted through the mean matrix
    (``b <- b - A_bar @ g``), then constrained rows/columns of ``A_bar``
    become identity rows/columns with the prescribed values in ``b``, and
    the same rows/columns of every perturbation matrix are zeroed.

    The lift is exact for the whole sample family because perturbations
    have no columns outside the head block and prescribed head values are
    required to be homogeneous.
    """
    n = system.N
    n_flow = system.N1 + 2 * system.N2
    dofs = np.array([c[0] for c in constraints], dtype=np.int64)
    vals = np.array([c[1] for c in constraints], dtype=float)
    if dofs.size != np.unique(dofs).size:
        raise ValueError("duplicate constraint DOFs")
    if np.any(dofs >= n_flow):
        raise ValueError("constraints on pressure DOFs are not allowed")
    head_cons = dofs < system.N1
    if np.any(vals[head_cons] != 0.0):
        raise ValueError(
            "prescribed head values must be homogeneous for the split lift"
        )

    lift = np.zeros(n)
    lift[dofs] = vals
    b = system.b - system.A_bar @ lift
    b[dofs] = vals

    free = np.ones(n)
    free[dofs] = 0.0
    d_free = sp.diags(free)
    pinned = np.zeros(n)
    pinned[dofs] = 1.0
    a_bar = d_free @ system.A_bar @ d_free + sp.diags(pinned)
    a_bar = sp.csr_matrix(a_bar)
    a_tildes = [sp.csr_matrix(d_free @ t @ d_free) for t in system.A_tildes]
    return replace(
        system,
        A_bar=a_bar,
        b=b,
        A_tildes=a_tildes,
        constraints=list(constraints),
    )


def write_coo(matrix, path):
    """Dump a sparse matrix as plain-text coordinate triplets."""
    coo = sp.coo_matrix(matrix)
    with open(path, "w", encoding="utf-8") as f:
        f.write(f"# shape {coo.shape[0]} {coo.shape[1]} nnz {coo.nnz}\n")
        for r, c, v in zip(coo.row, coo.col, coo.data):
            f.write(f"{r} {c} {v:.17e}\n")


# ---------------------------------------------------------------------------
# norm-matrix helpers (used by the statistics module)
# ---------------------------------------------------------------------------

def _space_for(mesh, domain):
    rule = triangle_rule_7pt()
    if domain == "head":
        return _Space(mesh.head_coords, mesh.tri6_p, rule)
    if domain == "velocity":
        return _Space(mesh.vel_coords, mesh.tri6_f, rule)
    raise ValueError("domain must be 'head' or 'velocity'")


def p2_stiffness(mesh, domain):
    """H1-seminorm (stiffness) matrix of one quadratic scalar space."""
    space = _space_for(mesh, domain)
    n = space.coords.shape[0]
    coo = _Coo((n, n))
    ent = np.einsum("tq,tqic,tqjc->tij", space.scale, space.grad, space.grad)
    coo.add_block(space.tri6, space.tri6, ent)
    return coo.tocsr()


def p2_mass(mesh, domain):
    """L2 mass matrix of one quadratic scalar space."""
    space = _space_for(mesh, domain)
    n = space.coords.shape[0]
    coo = _Coo((n, n))
    ent = np.einsum("tq,qi,qj->tij", space.scale, space.val, space.val)
    coo.add_block(space.tri6, space.tri6, ent)
    return coo.tocsr()


def p1_pressure_mass(mesh):
    """L2 mass matrix of the linear pressure space."""
    rule = triangle_rule_7pt()
    verts = mesh.pres_coords[mesh.tri3_pres[:, :3]]
    jac = np.stack(
        [verts[:, 1, :] - verts[:, 0, :], verts[:, 2, :] - verts[:, 0, :]],
        axis=-1,
    )
    det = jac[:, 0, 0] * jac[:, 1, 1] - jac[:, 0, 1] * jac[:, 1, 0]
    area = 0.5 * np.abs(det)
    scale = area[:, None] * rule.weights[None, :]
    p1v = rule.points
    ent = np.einsum("tq,qi,qj->tij", scale, p1v, p1v)
    coo = _Coo((mesh.N3, mesh.N3))
    coo.add_block(mesh.tri3_pres, mesh.tri3_pres, ent)
    return coo.tocsr()
