"""Two-rectangle coupled geometry and nested structured triangulations.

The computational domain is a porous-media rectangle stacked on top of a
free-flow rectangle, glued along one shared horizontal edge (the
interface).  Each rectangle is meshed with a uniform right-triangle grid
(every square cell split along the diagonal from its lower-left to its
upper-right corner), which is nested under n -> 2n refinement.

Discrete spaces and degree-of-freedom layout:

* head (porous rectangle): quadratic Lagrange nodes (vertices plus edge
  midpoints), N1 of them, global indices [0, N1);
* velocity (free-flow rectangle): one shared scalar quadratic node map,
  N2 nodes, used by both components: u1 occupies [N1, N1+N2) and u2
  occupies [N1+N2, N1+2*N2);
* pressure (free-flow rectangle): linear nodes at the vertices, N3 of
  them, indices [N1+2*N2, N1+2*N2+N3).

The total system dimension is N = N1 + 2*N2 + N3.
"""

from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "Geometry",
    "CoupledMesh",
    "InterfaceFrame",
    "build_mesh",
    "interface_frame",
    "write_mesh",
    "TAG_INTERIOR_P",
    "TAG_GAMMA_P",
    "TAG_GAMMA_I",
    "TAG_INTERIOR_F",
    "TAG_GAMMA_F_WALL",
    "TAG_GAMMA_F_BOTTOM",
]

# node classification tags
TAG_INTERIOR_P = 0
TAG_GAMMA_P = 1
TAG_GAMMA_I = 2
TAG_INTERIOR_F = 3
TAG_GAMMA_F_WALL = 4
TAG_GAMMA_F_BOTTOM = 5

TAG_NAMES = {
    TAG_INTERIOR_P: "interior_p",
    TAG_GAMMA_P: "gamma_p",
    TAG_GAMMA_I: "gamma_i",
    TAG_INTERIOR_F: "interior_f",
    TAG_GAMMA_F_WALL: "gamma_f_wall",
    TAG_GAMMA_F_BOTTOM: "gamma_f_bottom",
}


@dataclass(frozen=True)
class Geometry:
    """Axis-aligned two-rectangle domain sharing one horizontal edge.

    Rectangles are (xmin, xmax, ymin, ymax) tuples.  The porous rectangle
    must sit directly on top of the free-flow rectangle (or directly
    below it); both must span the same x interval.
    """

    darcy_rect: tuple = (0.0, 1.0, 0.0, 0.5)
    stokes_rect: tuple = (0.0, 1.0, -0.5, 0.0)
    interface_y: float = 0.0

    def validate(self):
        dx0, dx1, dy0, dy1 = self.darcy_rect
        sx0, sx1, sy0, sy1 = self.stokes_rect
        if not (dx1 > dx0 and dy1 > dy0 and sx1 > sx0 and sy1 > sy0):
            raise ValueError("rectangles must have positive area")
        if abs(dx0 - sx0) > 1e-12 or abs(dx1 - sx1) > 1e-12:
            raise ValueError(
                "rectangles must span the same x interval to share a full edge"
            )
        darcy_above = abs(dy0 - self.interface_y) < 1e-12 and abs(
            sy1 - self.interface_y
        ) < 1e-12
        darcy_below = abs(dy1 - self.interface_y) < 1e-12 and abs(
            sy0 - self.interface_y
        ) < 1e-12
        if not (darcy_above or darcy_below):
            raise ValueError(
                "rectangles must meet exactly at interface_y (one above, one below)"
            )
        return darcy_above


@dataclass
class InterfaceFrame:
    """Per-edge unit outward normal of the free-flow side and unit tangent."""

    normals: np.ndarray  # (n_edges, 2), outward from the Stokes rectangle
    tangents: np.ndarray  # (n_edges, 2)


@dataclass
class CoupledMesh:
    """Structured conforming mesh of the coupled two-rectangle domain."""

    geometry: Geometry
    n: int
    h: float
    darcy_above: bool
    # cell counts per direction
    nx: int
    ny_p: int
    ny_f: int
    # shared vertex lattice of the union domain
    vertices: np.ndarray          # (nv, 2)
    vertex_tags: np.ndarray       # (nv,)
    triangles_p: np.ndarray       # (nt_p, 3) union-vertex triples
    triangles_f: np.ndarray       # (nt_f, 3)
    # quadratic node coordinates and connectivity per subdomain
    head_coords: np.ndarray       # (N1, 2)
    vel_coords: np.ndarray        # (N2, 2)
    pres_coords: np.ndarray       # (N3, 2)
    tri6_p: np.ndarray            # (nt_p, 6) head-node indices
    tri6_f: np.ndarray            # (nt_f, 6) velocity-node indices
    tri3_pres: np.ndarray         # (nt_f, 3) pressure-node indices
    # porous-side vertex field support (hydraulic conductivity lives here)
    darcy_vertices: np.ndarray    # (n_dv, 2) coordinates, interface row included
    tri3_darcy: np.ndarray        # (nt_p, 3) indices into darcy_vertices
    # interface edges ordered by x
    iface_vertex_pairs: np.ndarray  # (ne, 2) union-vertex ids
    iface_darcy_tri: np.ndarray     # (ne,) triangle index into triangles_p
    iface_stokes_tri: np.ndarray    # (ne,) triangle index into triangles_f
    iface_darcy_vpair: np.ndarray   # (ne, 2) indices into darcy_vertices
    # node classification
    head_tags: np.ndarray         # (N1,)
    vel_tags: np.ndarray          # (N2,)

    @property
    def N1(self):
        return self.head_coords.shape[0]

    @property
    def N2(self):
        return self.vel_coords.shape[0]

    @property
    def N3(self):
        return self.pres_coords.shape[0]

    @property
    def N(self):
        return self.N1 + 2 * self.N2 + self.N3

    # global block slices in the [head, u1, u2, pressure] layout
    @property
    def sl_head(self):
        return slice(0, self.N1)

    @property
    def sl_u1(self):
        return slice(self.N1, self.N1 + self.N2)

    @property
    def sl_u2(self):
        return slice(self.N1 + self.N2, self.N1 + 2 * self.N2)

    @property
    def sl_pres(self):
        return slice(self.N1 + 2 * self.N2, self.N)


def _p2_lattice(nx, ny, x0, y0, half):
    """Coordinates of the quadratic node lattice (2nx+1) x (2ny+1)."""
    a = np.arange(2 * nx + 1)
    c = np.arange(2 * ny + 1)
    A, C = np.meshgrid(a, c, indexing="xy")
    xs = x0 + A.ravel() * half
    ys = y0 + C.ravel() * half
    return np.column_stack([xs, ys])


def _tri6_rows(nx, ny):
    """Quadratic connectivity for the structured grid, one row per triangle.

    Triangle 2*(j*nx+i) is the lower half of cell (i, j) (vertices
    lower-left, lower-right, upper-right) and 2*(j*nx+i)+1 the upper half
    (lower-left, upper-right, upper-left).  Local node order is the three
    vertices followed by the midpoints opposite each vertex.
    """
    stride = 2 * nx + 1

    def node(a, c):
        return c * stride + a

    rows = np.empty((2 * nx * ny, 6), dtype=np.int64)
    t = 0
    for j in range(ny):
        for i in range(nx):
            a, c = 2 * i, 2 * j
            ll = node(a, c)
            lr = node(a + 2, c)
            ur = node(a + 2, c + 2)
            ul = node(a, c + 2)
            # lower: vertices (ll, lr, ur)
            rows[t] = (ll, lr, ur, node(a + 2, c + 1), node(a + 1, c + 1),
                       node(a + 1, c))
            # upper: vertices (ll, ur, ul)
            rows[t + 1] = (ll, ur, ul, node(a + 1, c + 2), node(a, c + 1),
                           node(a + 1, c + 1))
            t += 2
    return rows


def _tri3_rows(nx, ny):
    """Linear (vertex) connectivity with the same triangle ordering."""
    stride = nx + 1

    def node(i, j):
        return j * stride + i

    rows = np.empty((2 * nx * ny, 3), dtype=np.int64)
    t = 0
    for j in range(ny):
        for i in range(nx):
            ll = node(i, j)
            lr = node(i + 1, j)
            ur = node(i + 1, j + 1)
            ul = node(i, j + 1)
            rows[t] = (ll, lr, ur)
            rows[t + 1] = (ll, ur, ul)
            t += 2
    return rows


def build_mesh(geometry=None, n=8):
    """Build the conforming coupled mesh with mesh size h = 1/n.

    Parameters
    ----------
    geometry : Geometry, optional
        Domain description; defaults to the unit-width stacked rectangles.
    n : int
        Subdivision count per unit length.  Must place an integer number
        of cells in every direction of both rectangles, which for the
        default geometry means n even and >= 2.

    Raises
    ------
    ValueError
        If the geometry is invalid or n does not align the interface and
        rectangle edges with mesh lines.
    """
    if geometry is None:
        geometry = Geometry()
    darcy_above = geometry.validate()
    if n < 2:
        raise ValueError("n must be at least 2")
    h = 1.0 / n

    dx0, dx1, dy0, dy1 = geometry.darcy_rect
    sx0, sx1, sy0, sy1 = geometry.stokes_rect
    width = dx1 - dx0

    def cells(extent, what):
        count = extent * n
        rounded = round(count)
        if rounded < 1 or abs(count - rounded) > 1e-9:
            raise ValueError(
                f"n={n} does not put an integer cell count across the {what} "
                f"(needs {count:g} cells of size 1/{n})"
            )
        return rounded

    nx = cells(width, "rectangle width")
    ny_p = cells(dy1 - dy0, "porous rectangle height")
    ny_f = cells(sy1 - sy0, "free-flow rectangle height")

    y_if = geometry.interface_y
    half = h / 2.0

    if darcy_above:
        darcy_y0 = y_if
        stokes_y0 = y_if - ny_f * h
    else:
        darcy_y0 = y_if - ny_p * h
        stokes_y0 = y_if

    # union vertex lattice: rows from the bottom rectangle's floor upward
    ny_total = ny_p + ny_f
    bottom_y0 = stokes_y0 if darcy_above else darcy_y0
    i_idx = np.arange(nx + 1)
    j_idx = np.arange(ny_total + 1)
    I, J = np.meshgrid(i_idx, j_idx, indexing="xy")
    vertices = np.column_stack(
        [dx0 + I.ravel() * h, bottom_y0 + J.ravel() * h]
    )
    j_iface = ny_f if darcy_above else ny_p  # lattice row of the interface

    def vid(i, j):
        return j * (nx + 1) + i

    # triangles in union-vertex numbering; subdomain-local row offsets
    tri3_local_p = _tri3_rows(nx, ny_p)
    tri3_local_f = _tri3_rows(nx, ny_f)
    if darcy_above:
        off_p, off_f = ny_f, 0
    else:
        off_p, off_f = 0, ny_p
    triangles_p = tri3_local_p + off_p * (nx + 1)
    triangles_f = tri3_local_f + off_f * (nx + 1)

    # quadratic lattices (local per subdomain)
    head_coords = _p2_lattice(nx, ny_p, dx0, darcy_y0, half)
    vel_coords = _p2_lattice(nx, ny_f, dx0, stokes_y0, half)
    tri6_p = _tri6_rows(nx, ny_p)
    tri6_f = _tri6_rows(nx, ny_f)

    # pressure nodes = Stokes vertices, local numbering
    ip = np.arange(nx + 1)
    jp = np.arange(ny_f + 1)
    IP, JP = np.meshgrid(ip, jp, indexing="xy")
    pres_coords = np.column_stack(
        [dx0 + IP.ravel() * h, stokes_y0 + JP.ravel() * h]
    )
    tri3_pres = tri3_local_f

    # conductivity field support: porous vertices including the interface row
    idv = np.arange(nx + 1)
    jdv = np.arange(ny_p + 1)
    IDV, JDV = np.meshgrid(idv, jdv, indexing="xy")
    darcy_vertices = np.column_stack(
        [dx0 + IDV.ravel() * h, darcy_y0 + JDV.ravel() * h]
    )
    tri3_darcy = tri3_local_p

    # interface edges ordered by x
    ne = nx
    iface_vertex_pairs = np.column_stack(
        [vid(np.arange(ne), j_iface), vid(np.arange(ne) + 1, j_iface)]
    )
    if darcy_above:
        # Darcy cell row 0 touches the interface from above (lower half),
        # Stokes cell row ny_f-1 from below (upper half).
        iface_darcy_tri = 2 * np.arange(ne)
        iface_stokes_tri = 2 * ((ny_f - 1) * nx + np.arange(ne)) + 1
        darcy_row = 0
    else:
        iface_darcy_tri = 2 * ((ny_p - 1) * nx + np.arange(ne)) + 1
        iface_stokes_tri = 2 * np.arange(ne)
        darcy_row = ny_p
    iface_darcy_vpair = np.column_stack(
        [darcy_row * (nx + 1) + np.arange(ne),
         darcy_row * (nx + 1) + np.arange(ne) + 1]
    )

    # node tags.  Dirichlet boundaries win ties against the interface;
    # side walls win at the bottom corners of the free-flow rectangle.
    head_tags = np.full(head_coords.shape[0], TAG_INTERIOR_P, dtype=np.int8)
    a = np.arange(2 * nx + 1)
    c = np.arange(2 * ny_p + 1)
    A, C = np.meshgrid(a, c, indexing="xy")
    A = A.ravel()
    C = C.ravel()
    c_iface_p = 0 if darcy_above else 2 * ny_p
    c_top_p = 2 * ny_p if darcy_above else 0  # outer horizontal lid of D_p
    head_tags[C == c_iface_p] = TAG_GAMMA_I
    head_tags[C == c_top_p] = TAG_GAMMA_P
    head_tags[(A == 0) | (A == 2 * nx)] = TAG_GAMMA_P

    vel_tags = np.full(vel_coords.shape[0], TAG_INTERIOR_F, dtype=np.int8)
    cf = np.arange(2 * ny_f + 1)
    AF, CF = np.meshgrid(a, cf, indexing="xy")
    AF = AF.ravel()
    CF = CF.ravel()
    c_iface_f = 2 * ny_f if darcy_above else 0
    c_bottom_f = 0 if darcy_above else 2 * ny_f  # outer horizontal floor of D_f
    vel_tags[CF == c_iface_f] = TAG_GAMMA_I
    vel_tags[CF == c_bottom_f] = TAG_GAMMA_F_BOTTOM
    vel_tags[(AF == 0) | (AF == 2 * nx)] = TAG_GAMMA_F_WALL

    # vertex tags for the dump: classify through the subdomain tags
    vertex_tags = np.full(vertices.shape[0], TAG_INTERIOR_F, dtype=np.int8)
    iv = I.ravel()
    jv = J.ravel()
    if darcy_above:
        in_f = jv < j_iface
        in_p = jv > j_iface
        f_floor = jv == 0
        p_lid = jv == ny_total
    else:
        in_f = jv > j_iface
        in_p = jv < j_iface
        f_floor = jv == ny_total
        p_lid = jv == 0
    side = (iv == 0) | (iv == nx)
    vertex_tags[in_p] = TAG_INTERIOR_P
    vertex_tags[jv == j_iface] = TAG_GAMMA_I
    vertex_tags[in_p & (side | p_lid)] = TAG_GAMMA_P
    vertex_tags[in_f & f_floor] = TAG_GAMMA_F_BOTTOM
    vertex_tags[(in_f | (jv == j_iface)) & side] = TAG_GAMMA_F_WALL

    return CoupledMesh(
        geometry=geometry,
        n=n,
        h=h,
        darcy_above=darcy_above,
        nx=nx,
        ny_p=ny_p,
        ny_f=ny_f,
        vertices=vertices,
        vertex_tags=vertex_tags,
        triangles_p=triangles_p,
        triangles_f=triangles_f,
        head_coords=head_coords,
        vel_coords=vel_coords,
        pres_coords=pres_coords,
        tri6_p=tri6_p,
        tri6_f=tri6_f,
        tri3_pres=tri3_pres,
        darcy_vertices=darcy_vertices,
        tri3_darcy=tri3_darcy,
        iface_vertex_pairs=iface_vertex_pairs,
        iface_darcy_tri=iface_darcy_tri,
        iface_stokes_tri=iface_stokes_tri,
        iface_darcy_vpair=iface_darcy_vpair,
        head_tags=head_tags,
        vel_tags=vel_tags,
    )


def interface_frame(mesh):
    """Unit outward normal of the free-flow side and unit tangent per edge.

    For the flat horizontal interface the normal is (0, 1) when the
    free-flow rectangle sits below the porous one, (0, -1) otherwise; the
    tangent is always (1, 0).
    """
    ne = mesh.iface_vertex_pairs.shape[0]
    sign = 1.0 if mesh.darcy_above else -1.0
    normals = np.tile([0.0, sign], (ne, 1))
    tangents = np.tile([1.0, 0.0], (ne, 1))
    return InterfaceFrame(normals=normals, tangents=tangents)


def write_mesh(mesh, path):
    """Dump the mesh as plain text: vertices then triangles.

    One line per vertex (``v index x y tag``) followed by one line per
    triangle (``t subdomain v0 v1 v2``) with subdomain ``p`` or ``f``.
    """
    with open(path, "w", encoding="utf-8") as f:
        for i, (x, y) in enumerate(mesh.vertices):
            f.write(f"v {i} {x:.17g} {y:.17g} {TAG_NAMES[mesh.vertex_tags[i]]}\n")
        for tri in mesh.triangles_p:
            f.write(f"t p {tri[0]} {tri[1]} {tri[2]}\n")
        for tri in mesh.triangles_f:
            f.write(f"t f {tri[0]} {tri[1]} {tri[2]}\n")
