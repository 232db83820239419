"""P1 finite element local solver for 2D divergence-form elliptic problems.

Solves div(a grad u) = 0 on rectangular patches of [0, 1]^2 with Dirichlet
data, on a structured grid of square cells each split into two right
triangles along the same diagonal (SE-NW). The coefficient a is sampled
once per triangle at its centroid. With this mesh the assembled operator
is an M-matrix for any positive a (diagonal-neighbor couplings vanish
identically), so a discrete maximum principle holds. A bilinear (Q1)
element is available behind the ``element`` switch.

Boundary nodes of a rectangle are enumerated counterclockwise from the
lower-left corner with each corner counted once, so a patch with n cells
per side carries 4n boundary degrees of freedom.
"""

from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.linalg
import scipy.sparse
import scipy.sparse.linalg

from .errors import GeometryError, NumericalError, ParameterError

_DENSE_NODE_LIMIT = 5200

_system_cache = {}

# local stiffness of the two unit right triangles (legs h), up to the
# factor a_T;  orders (A, B, D) and (B, C, D) for cell corners
#   D --- C
#   |  T2 |
#   | T1  |
#   A --- B
_K_T1 = np.array([[1.0, -0.5, -0.5],
                  [-0.5, 0.5, 0.0],
                  [-0.5, 0.0, 0.5]])
_K_T2 = np.array([[0.5, -0.5, 0.0],
                  [-0.5, 1.0, -0.5],
                  [0.0, -0.5, 0.5]])
# Q1 stiffness on a square cell, order (A, B, C, D)
_K_Q1 = np.array([[4.0, -1.0, -2.0, -1.0],
                  [-1.0, 4.0, -1.0, -2.0],
                  [-2.0, -1.0, 4.0, -1.0],
                  [-1.0, -2.0, -1.0, 4.0]]) / 6.0

_SIDES = ("S", "E", "N", "W")


def clear_cache():
    _system_cache.clear()


def _int_divide(span, step, what):
    n = span / step
    n_round = round(n)
    if n_round < 1 or abs(n - n_round) > 1e-8 * max(1.0, abs(n)):
        raise GeometryError(f"{what}: {step} does not evenly divide {span}")
    return int(n_round)


@dataclass(frozen=True)
class MediaSpec:
    """Coefficient field a(x) on [0, 1]^2.

    kinds: "oscillatory" (two-scale trigonometric medium with fast scale
    eps), "high-contrast" (1 + 1000 on a spiral-bounded region),
    "constant" (a0), "tabulated" (piecewise constant per cell of a
    uniform lookup grid).
    """

    kind: str
    eps: float = 1.0
    a0: float = 1.0
    table_shape: tuple = ()
    table_bytes: bytes = b""

    def __post_init__(self):
        if self.kind not in ("oscillatory", "high-contrast", "constant", "tabulated"):
            raise ParameterError(f"unknown media kind '{self.kind}'")
        if self.kind == "oscillatory" and self.eps <= 0:
            raise ParameterError(f"oscillatory media needs eps > 0, got {self.eps}")
        if self.kind == "constant" and self.a0 <= 0:
            raise ParameterError(f"constant media needs a0 > 0, got {self.a0}")

    @classmethod
    def oscillatory(cls, eps):
        return cls(kind="oscillatory", eps=float(eps))

    @classmethod
    def high_contrast(cls):
        return cls(kind="high-contrast")

    @classmethod
    def constant(cls, a0=1.0):
        return cls(kind="constant", a0=float(a0))

    @classmethod
    def tabulated(cls, values):
        values = np.asarray(values, dtype=float)
        if values.ndim != 2 or np.any(values <= 0):
            raise ParameterError("tabulated media needs a 2-D positive table")
        return cls(kind="tabulated", table_shape=values.shape,
                   table_bytes=values.tobytes())

    @cached_property
    def _table(self):
        return np.frombuffer(self.table_bytes).reshape(self.table_shape)


def media_eval(spec, x1, x2):
    """Evaluate the coefficient; broadcasts over array inputs."""
    x1 = np.asarray(x1, dtype=float)
    x2 = np.asarray(x2, dtype=float)
    if spec.kind == "constant":
        return spec.a0 * np.ones(np.broadcast_shapes(x1.shape, x2.shape))
    if spec.kind == "oscillatory":
        e = spec.eps
        slow = 2.0 + np.sin(2 * np.pi * x1) * np.cos(2 * np.pi * x2)
        f1 = (2.0 + 1.8 * np.sin(2 * np.pi * x1 / e)) / (2.0 + 1.8 * np.cos(2 * np.pi * x2 / e))
        f2 = (2.0 + np.sin(2 * np.pi * x2 / e)) / (2.0 + 1.8 * np.cos(2 * np.pi * x1 / e))
        return slow + f1 + f2
    if spec.kind == "high-contrast":
        r = np.sqrt((x1 - 0.5) ** 2 + (x2 - 0.5) ** 2)
        inside = x1 * np.cos(100.0 * r) <= x2 - 0.5
        return 1.0 + 1000.0 * inside
    n1, n2 = spec.table_shape
    i1 = np.clip((x1 * n1).astype(int), 0, n1 - 1)
    i2 = np.clip((x2 * n2).astype(int), 0, n2 - 1)
    return spec._table[i1, i2]


@dataclass(frozen=True)
class PatchGrid:
    """Structured node grid on a rectangle: (nx+1) x (ny+1) nodes, spacing h.

    Nodal values are stored row-major as values[ix, iy]; flat index is
    ix * (ny + 1) + iy.
    """

    x0: float
    y0: float
    nx: int
    ny: int
    h: float

    @property
    def n_nodes(self):
        return (self.nx + 1) * (self.ny + 1)

    @cached_property
    def x_nodes(self):
        return self.x0 + self.h * np.arange(self.nx + 1)

    @cached_property
    def y_nodes(self):
        return self.y0 + self.h * np.arange(self.ny + 1)

    def flat(self, ix, iy):
        return ix * (self.ny + 1) + iy

    @cached_property
    def boundary_flat(self):
        """Boundary nodes counterclockwise from (x0, y0), corners once."""
        s = self.flat(np.arange(0, self.nx), 0)
        e = self.flat(self.nx, np.arange(0, self.ny))
        n = self.flat(np.arange(self.nx, 0, -1), self.ny)
        w = self.flat(0, np.arange(self.ny, 0, -1))
        return np.concatenate([s, e, n, w])

    @cached_property
    def interior_flat(self):
        mask = np.ones(self.n_nodes, dtype=bool)
        mask[self.boundary_flat] = False
        return np.nonzero(mask)[0]

    @property
    def n_boundary(self):
        return 2 * (self.nx + self.ny)

    def edge_flat(self, side):
        """All nodes of one edge, corners included, ascending coordinate."""
        if side == "S":
            return self.flat(np.arange(self.nx + 1), 0)
        if side == "N":
            return self.flat(np.arange(self.nx + 1), self.ny)
        if side == "W":
            return self.flat(0, np.arange(self.ny + 1))
        if side == "E":
            return self.flat(self.nx, np.arange(self.ny + 1))
        raise GeometryError(f"unknown side '{side}'")

    def edge_inward_flat(self, side):
        """First interior row of nodes next to an edge (for flux stencils)."""
        if side == "S":
            return self.flat(np.arange(self.nx + 1), 1)
        if side == "N":
            return self.flat(np.arange(self.nx + 1), self.ny - 1)
        if side == "W":
            return self.flat(1, np.arange(self.ny + 1))
        if side == "E":
            return self.flat(self.nx - 1, np.arange(self.ny + 1))
        raise GeometryError(f"unknown side '{side}'")

    def edge_coords(self, side):
        """Node coordinates along an edge, and the coefficient sampling
        points halfway between the edge and the first interior row."""
        xs, ys = self.x_nodes, self.y_nodes
        if side == "S":
            return xs, np.full(self.nx + 1, ys[0]), xs, np.full(self.nx + 1, ys[0] + self.h / 2)
        if side == "N":
            return xs, np.full(self.nx + 1, ys[-1]), xs, np.full(self.nx + 1, ys[-1] - self.h / 2)
        if side == "W":
            return np.full(self.ny + 1, xs[0]), ys, np.full(self.ny + 1, xs[0] + self.h / 2), ys
        if side == "E":
            return np.full(self.ny + 1, xs[-1]), ys, np.full(self.ny + 1, xs[-1] - self.h / 2), ys
        raise GeometryError(f"unknown side '{side}'")


@dataclass(frozen=True)
class EllipticPatch:
    """Square patch (m1, m2) of an M x M partition of [0, 1]^2.

    Core is [x_{m1-1}, x_{m1}] x [y_{m2-1}, y_{m2}] with H = 1/M. The
    buffered rectangle is concentric with side buffer_factor * H, clipped
    to the unit square; h must divide core sides and buffer margins.
    """

    m1: int
    m2: int
    m_total: int
    h: float
    buffer_factor: float = 2.0

    def __post_init__(self):
        if self.m_total < 1:
            raise GeometryError(f"m_total must be >= 1, got {self.m_total}")
        if not (1 <= self.m1 <= self.m_total and 1 <= self.m2 <= self.m_total):
            raise GeometryError(
                f"patch ({self.m1},{self.m2}) outside 1..{self.m_total} grid")
        if self.buffer_factor < 1.0:
            raise GeometryError(f"buffer_factor must be >= 1, got {self.buffer_factor}")
        if self.h <= 0:
            raise GeometryError(f"h must be positive, got {self.h}")
        self.grid("core")
        self.grid("buffer")

    @property
    def width(self):
        return 1.0 / self.m_total

    @property
    def core_bounds(self):
        H = self.width
        return ((self.m1 - 1) * H, self.m1 * H, (self.m2 - 1) * H, self.m2 * H)

    @property
    def buffered_bounds(self):
        x0, x1, y0, y1 = self.core_bounds
        margin = 0.5 * (self.buffer_factor - 1.0) * self.width
        return (max(0.0, x0 - margin), min(1.0, x1 + margin),
                max(0.0, y0 - margin), min(1.0, y1 + margin))

    def grid(self, which="core"):
        if which == "core":
            x0, x1, y0, y1 = self.core_bounds
        elif which == "buffer":
            x0, x1, y0, y1 = self.buffered_bounds
        else:
            raise GeometryError(f"unknown grid '{which}'")
        nx = _int_divide(x1 - x0, self.h, "patch x span")
        ny = _int_divide(y1 - y0, self.h, "patch y span")
        return PatchGrid(x0=x0, y0=y0, nx=nx, ny=ny, h=self.h)

    def core_offset(self):
        """(ix, iy) of the core lower-left corner in the buffered grid."""
        bx0, _, by0, _ = self.buffered_bounds
        x0, _, y0, _ = self.core_bounds
        ox = 0 if x0 <= bx0 else _int_divide(x0 - bx0, self.h, "core x offset")
        oy = 0 if y0 <= by0 else _int_divide(y0 - by0, self.h, "core y offset")
        return ox, oy


@dataclass
class EllipticField:
    """Nodal values on a patch grid, shape (nx+1, ny+1), values[ix, iy]."""

    patch: EllipticPatch
    grid_name: str  # "core" or "buffer"
    values: np.ndarray
    media: MediaSpec = None

    def __post_init__(self):
        g = self.patch.grid(self.grid_name)
        if self.values.shape != (g.nx + 1, g.ny + 1):
            raise GeometryError(
                f"field shape {self.values.shape} does not match "
                f"grid ({g.nx + 1}, {g.ny + 1})")
        if not np.all(np.isfinite(self.values)):
            raise NumericalError("field contains non-finite values")


@dataclass
class EdgeTrace:
    """Values and outward-normal fluxes a du/dn along one core edge."""

    edge: str
    values: np.ndarray
    fluxes: np.ndarray


def stiffness_triplets(grid, spec, element="p1"):
    """COO triplets of the full stiffness matrix on a patch grid."""
    nx, ny, h = grid.nx, grid.ny, grid.h
    ix, iy = np.meshgrid(np.arange(nx), np.arange(ny), indexing="ij")
    ix = ix.ravel()
    iy = iy.ravel()
    xa = grid.x0 + h * ix
    ya = grid.y0 + h * iy
    a_n = grid.flat(ix, iy)
    b_n = grid.flat(ix + 1, iy)
    c_n = grid.flat(ix + 1, iy + 1)
    d_n = grid.flat(ix, iy + 1)

    rows, cols, vals = [], [], []

    def scatter(nodes, local, coeff):
        for r in range(len(nodes)):
            for c in range(len(nodes)):
                if local[r, c] == 0.0:
                    continue
                rows.append(nodes[r])
                cols.append(nodes[c])
                vals.append(local[r, c] * coeff)

    if element == "p1":
        a1 = media_eval(spec, xa + h / 3.0, ya + h / 3.0)
        a2 = media_eval(spec, xa + 2.0 * h / 3.0, ya + 2.0 * h / 3.0)
        scatter((a_n, b_n, d_n), _K_T1, a1)
        scatter((b_n, c_n, d_n), _K_T2, a2)
    elif element == "q1":
        am = media_eval(spec, xa + h / 2.0, ya + h / 2.0)
        scatter((a_n, b_n, c_n, d_n), _K_Q1, am)
    else:
        raise ParameterError(f"unknown element '{element}'")

    return (np.concatenate(rows), np.concatenate(cols), np.concatenate(vals))


class EllipticLocalSystem:
    """Factorized interior block of the stiffness matrix on one grid.

    Splitting nodes into interior and boundary, a discrete a-harmonic
    field with Dirichlet data g solves K_II u_I = -K_IB g. The interior
    block is SPD and Cholesky-factorized once per (patch, media, grid).
    """

    def __init__(self, patch, spec, grid_name="core", element="p1"):
        self.patch = patch
        self.spec = spec
        self.grid_name = grid_name
        self.element = element
        g = patch.grid(grid_name)
        self.grid = g
        rows, cols, vals = stiffness_triplets(g, spec, element)
        full = scipy.sparse.coo_matrix((vals, (rows, cols)),
                                       shape=(g.n_nodes, g.n_nodes)).tocsr()
        self.interior = g.interior_flat
        self.boundary = g.boundary_flat
        k_ii = full[self.interior][:, self.interior]
        self.coupling = full[self.interior][:, self.boundary]
        self._full = full
        if g.n_nodes <= _DENSE_NODE_LIMIT:
            try:
                cho = scipy.linalg.cho_factor(k_ii.toarray())
            except scipy.linalg.LinAlgError as exc:
                raise NumericalError(
                    f"interior stiffness block not SPD on patch "
                    f"({patch.m1},{patch.m2}): {exc}") from exc
            self._solve = lambda rhs: scipy.linalg.cho_solve(cho, rhs)
            self.coupling = self.coupling.toarray()
        else:
            try:
                splu = scipy.sparse.linalg.splu(k_ii.tocsc())
            except RuntimeError as exc:
                raise NumericalError(f"singular stiffness block: {exc}") from exc
            self._solve = splu.solve

    def dense_stiffness(self):
        return self._full.toarray()

    def solve_many(self, dirichlet_matrix):
        """Solve for a block of boundary-data columns; returns flat nodal values."""
        g_mat = np.asarray(dirichlet_matrix, dtype=float)
        squeeze = g_mat.ndim == 1
        if squeeze:
            g_mat = g_mat[:, None]
        if g_mat.shape[0] != self.boundary.size:
            raise GeometryError(
                f"dirichlet rows {g_mat.shape[0]} != boundary node count "
                f"{self.boundary.size}")
        rhs = -(self.coupling @ g_mat)
        u_i = self._solve(rhs)
        out = np.empty((self.grid.n_nodes, g_mat.shape[1]))
        out[self.interior] = u_i
        out[self.boundary] = g_mat
        return out[:, 0] if squeeze else out


def assemble_p1_stiffness(patch, spec, grid="core", element="p1"):
    """Cached assembly + factorization of the local system."""
    key = (patch, spec, grid, element)
    system = _system_cache.get(key)
    if system is None:
        system = EllipticLocalSystem(patch, spec, grid, element)
        _system_cache[key] = system
    return system


def solve_local_elliptic(patch, spec, dirichlet, grid="core", element="p1"):
    """Discrete a-harmonic extension of Dirichlet data on a patch grid.

    ``dirichlet`` is ordered along the counterclockwise boundary
    enumeration of the grid.
    """
    system = assemble_p1_stiffness(patch, spec, grid, element)
    flat = system.solve_many(np.asarray(dirichlet, dtype=float))
    g = system.grid
    return EllipticField(patch, grid, flat.reshape(g.nx + 1, g.ny + 1), media=spec)


def core_in_field(field):
    """Offsets and core grid of a field that covers the core patch."""
    patch = field.patch
    core = patch.grid("core")
    if field.grid_name == "core":
        return 0, 0, core
    ox, oy = patch.core_offset()
    return ox, oy, core


def trace_elliptic(field, edge):
    """Value and flux traces along one edge of the core patch.

    Fluxes are one-sided differences into the first interior node row,
    with the coefficient sampled at the midpoint between the two nodes,
    using the outward normal of the owning patch. Edge ids are "S", "E",
    "N", "W"; node order follows ascending coordinate, corners included.
    """
    if edge not in _SIDES:
        raise GeometryError(f"unknown edge '{edge}'")
    ox, oy, core = core_in_field(field)
    vals = field.values[ox:ox + core.nx + 1, oy:oy + core.ny + 1]
    h = core.h
    if edge == "S":
        edge_v, inner = vals[:, 0], vals[:, 1]
    elif edge == "N":
        edge_v, inner = vals[:, -1], vals[:, -2]
    elif edge == "W":
        edge_v, inner = vals[0, :], vals[1, :]
    else:
        edge_v, inner = vals[-1, :], vals[-2, :]
    if field.media is None:
        raise ParameterError("field carries no media spec; flux trace undefined")
    _, _, ax, ay = core.edge_coords(edge)
    a_mid = media_eval(field.media, ax, ay)
    return EdgeTrace(edge=edge, values=edge_v.copy(),
                     fluxes=a_mid * (edge_v - inner) / h)


def msfem_basis(patch, spec, element="p1"):
    """Four a-harmonic basis fields with bilinear corner boundary data.

    Boundary data of field k is 1 at corner k, 0 at the other corners and
    varies linearly along each edge; the four data sum to 1 on the whole
    boundary, so the fields sum to the constant-1 field.
    """
    g = patch.grid("core")
    bidx = g.boundary_flat
    ix = bidx // (g.ny + 1)
    iy = bidx % (g.ny + 1)
    xi = ix / g.nx
    eta = iy / g.ny
    data = np.column_stack([
        (1 - xi) * (1 - eta),
        xi * (1 - eta),
        xi * eta,
        (1 - xi) * eta,
    ])
    system = assemble_p1_stiffness(patch, spec, "core", element)
    flat = system.solve_many(data)
    return [EllipticField(patch, "core",
                          flat[:, k].reshape(g.nx + 1, g.ny + 1), media=spec)
            for k in range(4)]
