"""Fine-grid local solver for the 1D slab transport equation.

The stationary problem on a slab patch [xl, xr] x [-1, 1] is

    v du/dx - (1/eps) S[u] = 0,
    S u(x, v) = int k(x, v, v') u(x, v') dv' - (int k(x, v', v) dv') u(x, v),

with Dirichlet data on the incoming part of the boundary
(left end for v > 0, right end for v < 0). Discretization: first-order
upwind differences in x on a uniform node grid, midpoint quadrature on a
cell-centered velocity grid (the cell centers avoid v = 0, where the
upwind direction is undefined). The kernel is either Henyey-Greenstein
with anisotropy g in (-1, 1) or velocity-homogeneous with cross-section
sigma(x); both are symmetric in (v, v'), so the discrete collision
operator annihilates constants exactly and the assembled system is an
irreducibly diagonally dominant M-matrix (hence invertible, with a
discrete maximum principle).
"""

from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.linalg
import scipy.sparse
import scipy.sparse.linalg

from .errors import GeometryError, NumericalError, ParameterError

# patch systems stay dense (cached LU, many right-hand sides); anything
# larger, e.g. a monolithic whole-domain solve, goes through SuperLU
_DENSE_DOF_LIMIT = 4000

_system_cache = {}


def clear_cache():
    _system_cache.clear()


def _int_divide(span, step, what):
    n = span / step
    n_round = round(n)
    if n_round < 1 or abs(n - n_round) > 1e-8 * max(1.0, abs(n)):
        raise GeometryError(f"{what}: {step} does not evenly divide {span}")
    return int(n_round)


@dataclass(frozen=True)
class VelocityGrid:
    """Cell-centered grid on [-1, 1]: v_j = -1 + (2j - 1)/n_v, j = 1..n_v."""

    n_v: int

    def __post_init__(self):
        if self.n_v < 2 or self.n_v % 2 != 0:
            raise ParameterError(f"n_v must be even and positive, got {self.n_v}")

    @cached_property
    def nodes(self):
        j = np.arange(1, self.n_v + 1)
        return -1.0 + (2.0 * j - 1.0) / self.n_v

    @property
    def dv(self):
        return 2.0 / self.n_v

    @property
    def n_half(self):
        return self.n_v // 2


@dataclass(frozen=True)
class CollisionSpec:
    """Scattering kernel: Henyey-Greenstein(g) or velocity-homogeneous.

    The homogeneous kernel is normalized as k = sigma(x)/2 so that the
    total cross-section int_{-1}^{1} k dv' equals sigma(x); with sigma = 1
    it coincides with the isotropic (g = 0) Henyey-Greenstein kernel.
    """

    kind: str
    g: float = 0.0
    sigma: object = 1.0  # constant or callable of x

    def __post_init__(self):
        if self.kind not in ("henyey-greenstein", "homogeneous"):
            raise ParameterError(f"unknown collision kind '{self.kind}'")
        if self.kind == "henyey-greenstein" and not abs(self.g) < 1.0:
            raise ParameterError(f"anisotropy g must satisfy |g| < 1, got {self.g}")

    @classmethod
    def henyey_greenstein(cls, g):
        return cls(kind="henyey-greenstein", g=float(g))

    @classmethod
    def homogeneous(cls, sigma=1.0):
        return cls(kind="homogeneous", sigma=sigma)

    def sigma_at(self, x):
        if callable(self.sigma):
            return float(self.sigma(x))
        return float(self.sigma)

    def cache_key(self):
        sig = self.sigma if not callable(self.sigma) else id(self.sigma)
        return (self.kind, self.g, sig)


def collision_kernel(spec, x, v, v_prime):
    """Evaluate k(x, v, v'); broadcasts over array-valued v, v'."""
    v = np.asarray(v, dtype=float)
    vp = np.asarray(v_prime, dtype=float)
    if spec.kind == "henyey-greenstein":
        g = spec.g
        return 0.5 * (1.0 - g * g) / (1.0 + g * g + 2.0 * g * (v * vp))
    return 0.5 * spec.sigma_at(x) * np.ones(np.broadcast_shapes(v.shape, vp.shape))


@dataclass(frozen=True)
class RtePatch:
    """Slab patch m of M on [0, 1] with a clipped symmetric buffer.

    The core interval is [(m-1)/M, m/M]; the buffered interval extends it
    by (buffer_factor - 1)/2 patch widths on each side, clipped to [0, 1].
    dx must divide the core width and the buffer margins evenly.
    """

    index: int
    m_total: int
    dx: float
    vgrid: VelocityGrid
    buffer_factor: float = 2.0

    def __post_init__(self):
        if self.m_total < 1:
            raise GeometryError(f"m_total must be >= 1, got {self.m_total}")
        if not 1 <= self.index <= self.m_total:
            raise GeometryError(
                f"patch index {self.index} outside 1..{self.m_total}")
        if self.buffer_factor < 1.0:
            raise GeometryError(f"buffer_factor must be >= 1, got {self.buffer_factor}")
        if self.dx <= 0:
            raise GeometryError(f"dx must be positive, got {self.dx}")
        _int_divide(self.width, self.dx, "patch width")
        if self.buffered_lo > 0.0:
            _int_divide(self.x_lo - self.buffered_lo, self.dx, "left buffer")
        if self.buffered_hi < 1.0:
            _int_divide(self.buffered_hi - self.x_hi, self.dx, "right buffer")

    @property
    def width(self):
        return 1.0 / self.m_total

    @property
    def x_lo(self):
        return (self.index - 1) / self.m_total

    @property
    def x_hi(self):
        return self.index / self.m_total

    @property
    def _margin(self):
        return 0.5 * (self.buffer_factor - 1.0) * self.width

    @property
    def buffered_lo(self):
        return max(0.0, self.x_lo - self._margin)

    @property
    def buffered_hi(self):
        return min(1.0, self.x_hi + self._margin)

    def n_cells(self, grid="core"):
        lo, hi = self.bounds(grid)
        return _int_divide(hi - lo, self.dx, "grid span")

    def bounds(self, grid="core"):
        if grid == "core":
            return self.x_lo, self.x_hi
        if grid == "buffer":
            return self.buffered_lo, self.buffered_hi
        raise GeometryError(f"unknown grid '{grid}'")

    def x_nodes(self, grid="core"):
        lo, hi = self.bounds(grid)
        return np.linspace(lo, hi, self.n_cells(grid) + 1)

    def core_offset(self):
        """Index of the core left edge within the buffered node grid."""
        return _int_divide(self.x_lo - self.buffered_lo, self.dx, "core offset") \
            if self.x_lo > self.buffered_lo else 0


@dataclass
class RteField:
    """Nodal values u(x_i, v_j) on a patch grid, shape (n_x, n_v)."""

    patch: RtePatch
    grid: str  # "core" or "buffer"
    values: np.ndarray

    def __post_init__(self):
        nx = self.patch.n_cells(self.grid) + 1
        nv = self.patch.vgrid.n_v
        if self.values.shape != (nx, nv):
            raise GeometryError(
                f"field shape {self.values.shape} does not match grid ({nx}, {nv})")
        if not np.all(np.isfinite(self.values)):
            raise NumericalError("field contains non-finite values")


@dataclass
class InflowData:
    """Incoming boundary values: left end (v > 0) and right end (v < 0),
    each ordered by increasing velocity index."""

    left: np.ndarray
    right: np.ndarray

    def to_vector(self):
        return np.concatenate([self.left, self.right])

    @classmethod
    def from_vector(cls, vec, n_half):
        vec = np.asarray(vec, dtype=float)
        if vec.size != 2 * n_half:
            raise GeometryError(f"inflow vector length {vec.size} != {2 * n_half}")
        return cls(left=vec[:n_half].copy(), right=vec[n_half:].copy())

    @classmethod
    def constant(cls, value, n_half):
        return cls(left=np.full(n_half, float(value)),
                   right=np.full(n_half, float(value)))


@dataclass
class OutflowData:
    """Outgoing boundary values: left end (v < 0) and right end (v > 0)."""

    left: np.ndarray
    right: np.ndarray


class RteLocalSystem:
    """Assembled upwind discretization on one patch grid.

    Unknowns are all nodes except the n_v inflow nodes; the inflow enters
    through a coupling block, so a solve is linear in the boundary data:
    A u = -B phi. The factorization is computed once and reused for many
    right-hand sides.
    """

    def __init__(self, patch, eps, spec, grid="buffer"):
        if eps <= 0:
            raise ParameterError(f"eps must be positive, got {eps}")
        self.patch = patch
        self.eps = float(eps)
        self.spec = spec
        self.grid = grid
        self.x = patch.x_nodes(grid)
        vg = patch.vgrid
        self.nx = self.x.size
        self.nv = vg.n_v
        v = vg.nodes
        n_dof = self.nx * self.nv

        def flat(i, j):
            return i * self.nv + j

        pos = np.nonzero(v > 0)[0]
        neg = np.nonzero(v < 0)[0]
        self.inflow_idx = np.concatenate([flat(0, pos), flat(self.nx - 1, neg)])
        mask = np.ones(n_dof, dtype=bool)
        mask[self.inflow_idx] = False
        self.unknown_idx = np.nonzero(mask)[0]

        rows, cols, vals = [], [], []

        # upwind transport, rows only at non-inflow nodes
        dx = patch.dx
        for j, vj in enumerate(v):
            if vj > 0:
                i = np.arange(1, self.nx)
                rows.append(flat(i, j)); cols.append(flat(i, j))
                vals.append(np.full(i.size, vj / dx))
                rows.append(flat(i, j)); cols.append(flat(i - 1, j))
                vals.append(np.full(i.size, -vj / dx))
            else:
                i = np.arange(0, self.nx - 1)
                rows.append(flat(i, j)); cols.append(flat(i + 1, j))
                vals.append(np.full(i.size, vj / dx))
                rows.append(flat(i, j)); cols.append(flat(i, j))
                vals.append(np.full(i.size, -vj / dx))

        # collision block -C/eps at every node; rows at inflow nodes are
        # discarded when slicing to unknown rows
        block_rows = np.repeat(np.arange(self.nv), self.nv)
        block_cols = np.tile(np.arange(self.nv), self.nv)
        for i, xi in enumerate(self.x):
            c = self.collision_matrix(xi)
            rows.append(flat(i, block_rows)); cols.append(flat(i, block_cols))
            vals.append((-c / self.eps).ravel())

        rows = np.concatenate(rows)
        cols = np.concatenate(cols)
        vals = np.concatenate(vals)
        full = scipy.sparse.coo_matrix((vals, (rows, cols)),
                                       shape=(n_dof, n_dof)).tocsr()
        a = full[self.unknown_idx][:, self.unknown_idx]
        self.coupling = full[self.unknown_idx][:, self.inflow_idx]

        if n_dof <= _DENSE_DOF_LIMIT:
            a_dense = a.toarray()
            lu, piv = scipy.linalg.lu_factor(a_dense)
            if np.min(np.abs(np.diag(lu))) == 0.0:
                raise NumericalError(
                    f"singular transport system on patch {patch.index} (eps={eps})")
            self._solve = lambda rhs: scipy.linalg.lu_solve((lu, piv), rhs)
            self.coupling = self.coupling.toarray()
        else:
            try:
                splu = scipy.sparse.linalg.splu(a.tocsc())
            except RuntimeError as exc:
                raise NumericalError(
                    f"singular transport system on patch {patch.index}: {exc}") from exc
            self._solve = splu.solve

    def collision_matrix(self, x):
        """Discrete collision operator at one x: (S u)_j = sum_j' C[j,j'] u_j'."""
        vg = self.patch.vgrid
        v = vg.nodes
        k = collision_kernel(self.spec, x, v[:, None], v[None, :])
        gain = vg.dv * k
        loss = vg.dv * k.sum(axis=0)
        return gain - np.diag(loss)

    @property
    def n_unknowns(self):
        return self.unknown_idx.size

    @property
    def n_inflow(self):
        return self.inflow_idx.size

    def solve_many(self, inflow_matrix):
        """Solve for a block of inflow columns; returns (nx*nv, k) values."""
        phi = np.asarray(inflow_matrix, dtype=float)
        squeeze = phi.ndim == 1
        if squeeze:
            phi = phi[:, None]
        if phi.shape[0] != self.n_inflow:
            raise GeometryError(
                f"inflow rows {phi.shape[0]} != inflow node count {self.n_inflow}")
        rhs = -(self.coupling @ phi)
        u = self._solve(rhs)
        out = np.empty((self.nx * self.nv, phi.shape[1]))
        out[self.unknown_idx] = u
        out[self.inflow_idx] = phi
        return out[:, 0] if squeeze else out


def assemble_local_rte(patch, eps, spec, grid="buffer"):
    """Cached assembly of the local transport system on a patch grid."""
    key = (patch, float(eps), spec.cache_key(), grid)
    system = _system_cache.get(key)
    if system is None:
        system = RteLocalSystem(patch, eps, spec, grid)
        _system_cache[key] = system
    return system


def solve_local_rte(patch, eps, spec, inflow, grid="buffer"):
    """Solve the local problem for one set of inflow Dirichlet data."""
    system = assemble_local_rte(patch, eps, spec, grid)
    flat = system.solve_many(inflow.to_vector())
    return RteField(patch, grid, flat.reshape(system.nx, system.nv))


def _core_slice(field):
    patch = field.patch
    if field.grid == "core":
        return 0, patch.n_cells("core")
    i0 = patch.core_offset()
    return i0, i0 + patch.n_cells("core")


def trace_rte(field, which):
    """Extract core-patch boundary traces or the core restriction.

    which = "inflow-of-core": values entering the core (left edge v > 0,
    right edge v < 0); "outflow-of-core": values leaving it;
    "restriction-to-core": the field restricted to core nodes.
    """
    patch = field.patch
    i0, i1 = _core_slice(field)
    if i0 < 0 or i1 > field.values.shape[0] - 1:
        raise GeometryError("core patch does not fit inside the field grid")
    nh = patch.vgrid.n_half
    if which == "restriction-to-core":
        return RteField(patch, "core", field.values[i0:i1 + 1].copy())
    if which == "inflow-of-core":
        return InflowData(left=field.values[i0, nh:].copy(),
                          right=field.values[i1, :nh].copy())
    if which == "outflow-of-core":
        return OutflowData(left=field.values[i0, :nh].copy(),
                           right=field.values[i1, nh:].copy())
    raise ParameterError(f"unknown trace kind '{which}'")
