"""Domain decomposition with full or randomized local bases.

Offline, every patch gets a matrix of local solutions restricted to its
core: either the full set of unit boundary excitations (the discrete
boundary-to-solution map) or a handful of solutions with i.i.d. Gaussian
boundary data posed on an enlarged buffer patch. Online, interface
continuity plus the exterior boundary condition form one global linear
system in the basis coefficients, solved in the least-squares sense; the
global field is stitched patchwise, averaging shared interface nodes.

Transport interfaces match outflow of one patch against inflow of its
neighbor in both velocity half-ranges; elliptic interfaces match nodal
values and one-sided normal fluxes with opposite orientation.
"""

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import elliptic as ell
from . import linalg
from . import rte
from .errors import GeometryError, ParameterError, RankDeficiencyError

_SIDES = ("S", "E", "N", "W")
_OPPOSITE = {"E": "W", "W": "E", "N": "S", "S": "N"}


@dataclass(frozen=True)
class RteParams:
    eps: float
    collision: rte.CollisionSpec

    def describe(self):
        return {"model": "rte", "eps": self.eps, "collision": self.collision.kind,
                "g": self.collision.g}


@dataclass(frozen=True)
class EllipticParams:
    media: ell.MediaSpec
    element: str = "p1"

    def describe(self):
        return {"model": "elliptic", "media": self.media.kind,
                "eps": self.media.eps, "a0": self.media.a0,
                "element": self.element}


@dataclass(frozen=True)
class Partition:
    """Non-overlapping tiling of the domain into core patches."""

    model: str
    m: int
    patches: tuple
    buffer_factor: float

    def patch(self, key):
        for p in self.patches:
            if patch_key(self.model, p) == key:
                return p
        raise GeometryError(f"no patch with key {key}")

    def keys(self):
        return [patch_key(self.model, p) for p in self.patches]


def patch_key(model, patch):
    return patch.index if model == "rte" else (patch.m1, patch.m2)


def patch_ordinal(model, key, m):
    """Stable integer id used to key per-patch random streams."""
    if model == "rte":
        return int(key)
    return (key[0] - 1) * m + key[1]


def partition(model, m, fine, buffer_factor=2.0, n_v=None):
    """Cut [0, 1] (transport) or [0, 1]^2 (elliptic) into M (x M) patches.

    ``fine`` is the mesh size (dx or h) and must divide the patch width
    and the buffer margins evenly.
    """
    if m < 2:
        raise ParameterError(f"partition needs M >= 2, got {m}")
    if model == "rte":
        if n_v is None:
            raise ParameterError("rte partition needs n_v")
        vgrid = rte.VelocityGrid(n_v)
        patches = tuple(rte.RtePatch(index=i, m_total=m, dx=fine, vgrid=vgrid,
                                     buffer_factor=buffer_factor)
                        for i in range(1, m + 1))
    elif model == "elliptic":
        patches = tuple(ell.EllipticPatch(m1=i, m2=j, m_total=m, h=fine,
                                          buffer_factor=buffer_factor)
                        for i in range(1, m + 1) for j in range(1, m + 1))
    else:
        raise ParameterError(f"unknown model '{model}'")
    return Partition(model=model, m=m, patches=patches,
                     buffer_factor=buffer_factor)


@dataclass
class LocalBasis:
    """Columns of core-restricted local solutions plus their traces.

    values has one row per core grid node (phase-space nodes for
    transport) and one column per basis function. traces hold the
    interface data the online stage needs: for transport the full
    velocity profiles on the core's left/right edges, for elliptic the
    nodal values and outward fluxes on each core edge.
    """

    patch: object
    kind: str  # "full" | "buffered-full" | "randomized" | "msfem"
    values: np.ndarray
    orthonormalized: bool
    traces: dict = field(default_factory=dict)

    @property
    def n_columns(self):
        return self.values.shape[1]


def _rte_traces(patch, values):
    nxc = patch.n_cells("core")
    nv = patch.vgrid.n_v
    mat = values.reshape(nxc + 1, nv, -1)
    return {"left": mat[0], "right": mat[nxc]}


def _elliptic_traces(patch, values, media):
    core = patch.grid("core")
    mat = values.reshape(core.nx + 1, core.ny + 1, -1)
    flat = mat.reshape(core.n_nodes, -1)
    traces = {}
    for side in _SIDES:
        edge = flat[core.edge_flat(side)]
        inner = flat[core.edge_inward_flat(side)]
        _, _, ax, ay = core.edge_coords(side)
        a_mid = ell.media_eval(media, ax, ay)
        traces[("value", side)] = edge
        traces[("flux", side)] = a_mid[:, None] * (edge - inner) / core.h
    return traces


def _finish_basis(model, patch, params, values, kind, orthonormalize):
    if orthonormalize:
        q, _ = linalg.qr(values)
        values = q
    if model == "rte":
        traces = _rte_traces(patch, values)
    else:
        traces = _elliptic_traces(patch, values, params.media)
    return LocalBasis(patch=patch, kind=kind, values=values,
                      orthonormalized=orthonormalize, traces=traces)


def _rte_core_values(patch, grid, flat_values):
    """Restrict stacked (nx*nv, k) buffered solutions to core nodes."""
    system_nx = patch.n_cells(grid) + 1
    nv = patch.vgrid.n_v
    mat = flat_values.reshape(system_nx, nv, -1)
    if grid == "buffer":
        i0 = patch.core_offset()
        mat = mat[i0:i0 + patch.n_cells("core") + 1]
    return mat.reshape(-1, flat_values.shape[1])


def _elliptic_core_values(patch, grid, flat_values):
    g = patch.grid(grid)
    mat = flat_values.reshape(g.nx + 1, g.ny + 1, -1)
    if grid == "buffer":
        ox, oy = patch.core_offset()
        core = patch.grid("core")
        mat = mat[ox:ox + core.nx + 1, oy:oy + core.ny + 1]
    return mat.reshape(-1, flat_values.shape[1])


def det_local_basis(patch, params, buffered=False):
    """Full basis: one column per boundary DOF (numerical delta data).

    The full basis lives on the core patch itself; with ``buffered`` the
    deltas are posed on the buffer boundary and the solutions restricted
    to the core (the low-rank reference object).
    """
    grid = "buffer" if buffered else "core"
    kind = "buffered-full" if buffered else "full"
    if isinstance(params, RteParams):
        system = rte.assemble_local_rte(patch, params.eps, params.collision, grid)
        flat = system.solve_many(np.eye(system.n_inflow))
        values = _rte_core_values(patch, grid, flat)
        model = "rte"
    else:
        system = ell.assemble_p1_stiffness(patch, params.media, grid, params.element)
        flat = system.solve_many(np.eye(system.boundary.size))
        values = _elliptic_core_values(patch, grid, flat)
        model = "elliptic"
    return _finish_basis(model, patch, params, values, kind, orthonormalize=False)


def ran_local_basis(patch, params, k_m, rng, orthonormalize=True):
    """Randomized basis: k_m buffered solves with i.i.d. Gaussian data.

    Sample i draws its boundary vector from ``rng.substream(i)``, so the
    basis is bitwise reproducible for a given (seed, patch) and
    independent of scheduling. Columns are restricted to the core and,
    by default, orthonormalized by a QR pass (better conditioning of the
    online system); traces are taken from the returned columns.
    """
    if k_m < 1:
        raise ParameterError(f"k_m must be >= 1, got {k_m}")
    if isinstance(params, RteParams):
        system = rte.assemble_local_rte(patch, params.eps, params.collision, "buffer")
        n_bdofs = system.n_inflow
        model = "rte"
    else:
        system = ell.assemble_p1_stiffness(patch, params.media, "buffer",
                                           params.element)
        n_bdofs = system.boundary.size
        model = "elliptic"
    if k_m > n_bdofs:
        raise ParameterError(
            f"k_m = {k_m} exceeds buffered boundary DOF count {n_bdofs}")
    data = rng.normal_matrix(n_bdofs, k_m)
    flat = system.solve_many(data)
    if model == "rte":
        values = _rte_core_values(patch, "buffer", flat)
    else:
        values = _elliptic_core_values(patch, "buffer", flat)
    return _finish_basis(model, patch, params, values, "randomized", orthonormalize)


def msfem_local_basis(patch, params):
    """Four-column MsFEM basis (corner hat boundary data on the core)."""
    fields = ell.msfem_basis(patch, params.media, params.element)
    values = np.column_stack([f.values.reshape(-1) for f in fields])
    return _finish_basis("elliptic", patch, params, values, "msfem",
                         orthonormalize=False)


def orthonormalize_basis(basis, params):
    """Re-emit a basis with QR-orthonormalized columns and fresh traces."""
    model = "rte" if isinstance(params, RteParams) else "elliptic"
    return _finish_basis(model, basis.patch, params, basis.values, basis.kind,
                         orthonormalize=True)


def is_boundary_patch(model, patch):
    if model == "rte":
        return patch.index in (1, patch.m_total)
    return (patch.m1 in (1, patch.m_total)) or (patch.m2 in (1, patch.m_total))


def core_dof_counts(part):
    """Boundary DOFs of each core patch (the full-basis column counts)."""
    counts = {}
    for p in part.patches:
        key = patch_key(part.model, p)
        if part.model == "rte":
            counts[key] = p.vgrid.n_v
        else:
            counts[key] = p.grid("core").n_boundary
    return counts


def buffered_dof_counts(part):
    counts = {}
    for p in part.patches:
        key = patch_key(part.model, p)
        if part.model == "rte":
            counts[key] = p.vgrid.n_v
        else:
            counts[key] = p.grid("buffer").n_boundary
    return counts


def _resolve_k(k_m, key):
    if isinstance(k_m, dict):
        return int(k_m[key])
    return int(k_m)


def _cache_payload(part, params, key, kind, k, seed, orthonormalize):
    p0 = part.patches[0]
    geometry = {"m": part.m, "buffer_factor": part.buffer_factor}
    if part.model == "rte":
        geometry.update(dx=p0.dx, n_v=p0.vgrid.n_v)
    else:
        geometry.update(h=p0.h, element=params.element)
    return {"params": params.describe(), "geometry": geometry,
            "patch": list(key) if isinstance(key, tuple) else [key],
            "kind": kind, "k_m": k, "seed": seed,
            "orthonormalize": orthonormalize}


def _basis_from_values(part, params, patch, values, kind, orthonormalized):
    basis = _finish_basis(part.model, patch, params, values, kind,
                          orthonormalize=False)
    basis.orthonormalized = orthonormalized
    return basis


def offline_bases(part, params, mode, k_m=None, seed=0, orthonormalize=True,
                  boundary_full=False, workers=1, cache=None):
    """Build the per-patch bases for one global solve.

    mode "full": full bases everywhere. mode "reduced": randomized bases
    of size k_m (int or per-patch dict); transport keeps full bases on
    the two exterior patches so the global Dirichlet data stays exactly
    representable, and ``boundary_full`` opts elliptic boundary patches
    into the same treatment. ``cache`` (an :class:`mspde.io.BasisCache`)
    short-circuits rebuilding by content hash.
    """
    if mode not in ("full", "reduced"):
        raise ParameterError(f"unknown mode '{mode}'")
    if mode == "reduced" and k_m is None:
        raise ParameterError("reduced mode needs k_m")
    root = linalg.RngStream(int(seed))

    def build(patch):
        key = patch_key(part.model, patch)
        full_here = mode == "full" or \
            (part.model == "rte" and is_boundary_patch("rte", patch)) or \
            (part.model == "elliptic" and boundary_full and
             is_boundary_patch("elliptic", patch))
        kind = "full" if full_here else "randomized"
        k = 0 if full_here else _resolve_k(k_m, key)
        ortho = False if full_here else orthonormalize
        cache_key = None
        if cache is not None:
            payload = _cache_payload(part, params, key, kind, k,
                                     0 if full_here else int(seed), ortho)
            cache_key = cache.key(payload)
            values = cache.load(cache_key)
            if values is not None:
                return key, _basis_from_values(part, params, patch, values,
                                               kind, ortho)
        if full_here:
            basis = det_local_basis(patch, params)
        else:
            rng = root.substream(patch_ordinal(part.model, key, part.m))
            basis = ran_local_basis(patch, params, k, rng,
                                    orthonormalize=orthonormalize)
        if cache is not None:
            cache.store(cache_key, basis.values, payload)
        return key, basis

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as ex:
            pairs = list(ex.map(build, part.patches))
    else:
        pairs = [build(p) for p in part.patches]
    return dict(pairs)


@dataclass
class GlobalSystem:
    """Assembled constraint matrix P, right-hand side d and bookkeeping."""

    model: str
    matrix: np.ndarray
    rhs: np.ndarray
    row_tags: list
    col_tags: list

    @property
    def shape(self):
        return self.matrix.shape


def _col_offsets(part, bases):
    offsets = {}
    total = 0
    for key in part.keys():
        if key not in bases:
            raise GeometryError(f"missing basis for patch {key}")
        offsets[key] = total
        total += bases[key].n_columns
    return offsets, total


def _assemble_rte(part, bases, phi, w):
    nv = part.patches[0].vgrid.n_v
    nh = nv // 2
    v = part.patches[0].vgrid.nodes
    v_pos, v_neg = v[nh:], v[:nh]
    offsets, n_cols = _col_offsets(part, bases)

    rows = []
    tags = []
    rhs = []

    def block(entries, tag, data):
        """entries: list of (patch key, trace rows) filling one row block."""
        n_rows = entries[0][1].shape[0]
        r = np.zeros((n_rows, n_cols))
        for key, mat in entries:
            off = offsets[key]
            r[:, off:off + bases[key].n_columns] += mat
        rows.append(r)
        tags.extend([tag] * n_rows)
        rhs.append(data if data is not None else np.zeros(n_rows))

    left = {m: bases[m].traces["left"] for m in part.keys()}
    right = {m: bases[m].traces["right"] for m in part.keys()}

    block([(1, w * left[1][nh:])], ("exterior", 1, "inflow"),
          w * phi(0.0, v_pos))
    for m in range(1, part.m):
        block([(m, right[m][nh:]), (m + 1, -left[m + 1][nh:])],
              ("interface", m, "outflow-match"), None)
        block([(m, -right[m][:nh]), (m + 1, left[m + 1][:nh])],
              ("interface", m, "inflow-match"), None)
    block([(part.m, w * right[part.m][:nh])], ("exterior", part.m, "inflow"),
          w * phi(1.0, v_neg))
    return rows, tags, rhs, offsets, n_cols


def _elliptic_exterior_sides(patch):
    sides = []
    if patch.m2 == 1:
        sides.append("S")
    if patch.m1 == patch.m_total:
        sides.append("E")
    if patch.m2 == patch.m_total:
        sides.append("N")
    if patch.m1 == 1:
        sides.append("W")
    return sides


def _assemble_elliptic(part, bases, phi, w):
    offsets, n_cols = _col_offsets(part, bases)
    rows, tags, rhs = [], [], []

    def emit(row, tag, value):
        rows.append(row)
        tags.append(tag)
        rhs.append(value)

    # exterior rows first: one row per boundary node per owning patch,
    # deduplicated across patches (a node shared by two patches along one
    # side appears once; a domain corner, visited twice by the same
    # patch, keeps both rows)
    seen = {}
    h = part.patches[0].h
    for patch in part.patches:
        key = patch_key("elliptic", patch)
        core = patch.grid("core")
        for side in _elliptic_exterior_sides(patch):
            trace = bases[key].traces[("value", side)]
            ex, ey, _, _ = core.edge_coords(side)
            for i in range(trace.shape[0]):
                node = (round(ex[i] / h), round(ey[i] / h))
                owner = seen.get(node)
                if owner is not None and owner != key:
                    continue
                seen[node] = key
                row = np.zeros(n_cols)
                row[offsets[key]:offsets[key] + bases[key].n_columns] = w * trace[i]
                emit(row, ("exterior", key, side), w * float(phi(ex[i], ey[i])))

    # interface rows: value and flux continuity on every shared edge
    def interface(key_a, key_b, side_a):
        side_b = _OPPOSITE[side_a]
        va = bases[key_a].traces[("value", side_a)]
        vb = bases[key_b].traces[("value", side_b)]
        fa = bases[key_a].traces[("flux", side_a)]
        fb = bases[key_b].traces[("flux", side_b)]
        if va.shape[0] != vb.shape[0]:
            raise GeometryError(
                f"interface node mismatch between {key_a} and {key_b}")
        n_rows = va.shape[0]
        for name, a_mat, b_mat, sign in (("value", va, vb, -1.0),
                                         ("flux", fa, fb, 1.0)):
            r = np.zeros((n_rows, n_cols))
            r[:, offsets[key_a]:offsets[key_a] + bases[key_a].n_columns] = a_mat
            r[:, offsets[key_b]:offsets[key_b] + bases[key_b].n_columns] = sign * b_mat
            rows.append(r)
            tags.extend([(("interface"), (key_a, key_b), name)] * n_rows)
            rhs.append(np.zeros(n_rows))

    for m1 in range(1, part.m):
        for m2 in range(1, part.m + 1):
            interface((m1, m2), (m1 + 1, m2), "E")
    for m1 in range(1, part.m + 1):
        for m2 in range(1, part.m):
            interface((m1, m2), (m1, m2 + 1), "N")

    return rows, tags, rhs, offsets, n_cols


def assemble_global(part, bases, phi, boundary_weight=1.0):
    """Build the global continuity/boundary system over all patch bases.

    The system depends on the bases only through their trace matrices;
    rhs entries are nonzero on exterior rows only.
    """
    w = float(boundary_weight)
    if part.model == "rte":
        rows, tags, rhs, offsets, n_cols = _assemble_rte(part, bases, phi, w)
    else:
        rows, tags, rhs, offsets, n_cols = _assemble_elliptic(part, bases, phi, w)
    matrix = np.vstack([r if r.ndim == 2 else r[None, :] for r in rows])
    d = np.concatenate([np.atleast_1d(r) for r in rhs])
    col_tags = []
    for key in part.keys():
        col_tags.extend((key, j) for j in range(bases[key].n_columns))
    return GlobalSystem(model=part.model, matrix=matrix, rhs=d,
                        row_tags=tags, col_tags=col_tags)


@dataclass
class SolutionField:
    """Fine-grid solution over the whole domain with its axes."""

    model: str
    axes: tuple
    values: np.ndarray


@dataclass
class GlobalSolution:
    coefficients: dict
    field: SolutionField
    residual_norm: float


def _stitch_rte(part, patch_fields):
    cells = part.patches[0].n_cells("core")
    nv = part.patches[0].vgrid.n_v
    n_x = part.m * cells + 1
    acc = np.zeros((n_x, nv))
    cnt = np.zeros(n_x)
    for patch in part.patches:
        i0 = (patch.index - 1) * cells
        acc[i0:i0 + cells + 1] += patch_fields[patch.index]
        cnt[i0:i0 + cells + 1] += 1.0
    values = acc / cnt[:, None]
    return SolutionField(model="rte",
                         axes=(np.linspace(0.0, 1.0, n_x),
                               part.patches[0].vgrid.nodes.copy()),
                         values=values)


def _stitch_elliptic(part, patch_fields):
    cells = part.patches[0].grid("core").nx
    n = part.m * cells + 1
    acc = np.zeros((n, n))
    cnt = np.zeros((n, n))
    for patch in part.patches:
        i0 = (patch.m1 - 1) * cells
        j0 = (patch.m2 - 1) * cells
        acc[i0:i0 + cells + 1, j0:j0 + cells + 1] += patch_fields[(patch.m1, patch.m2)]
        cnt[i0:i0 + cells + 1, j0:j0 + cells + 1] += 1.0
    values = acc / cnt
    ax = np.linspace(0.0, 1.0, n)
    return SolutionField(model="elliptic", axes=(ax, ax.copy()), values=values)


def solve_global(system, bases, part):
    """Least-squares solve of the assembled system plus reconstruction.

    Interface nodes shared by two (or four) patches take the average of
    the adjacent patch values; reduced solutions are discontinuous there
    by the size of the least-squares residual.
    """
    m, n = system.shape
    if m < n:
        raise ParameterError(
            f"global system has more columns ({n}) than rows ({m}); "
            "reduce k_m")
    try:
        coeff = linalg.solve_least_squares(system.matrix, system.rhs)
    except RankDeficiencyError as exc:
        r = np.linalg.qr(system.matrix, mode="r")
        diag = np.abs(np.diag(r))
        bad = np.nonzero(diag <= 1e-12 * diag.max())[0]
        cols = [system.col_tags[i] for i in bad]
        patches = sorted({c[0] for c in cols}, key=str)
        raise RankDeficiencyError(
            f"global system rank deficient (rank {exc.numerical_rank} of {n}); "
            f"deficient columns from patches {patches}",
            numerical_rank=exc.numerical_rank, columns=cols) from exc

    residual = float(np.linalg.norm(system.matrix @ coeff - system.rhs))
    coeffs = {}
    patch_fields = {}
    pos = 0
    for key in part.keys():
        k = bases[key].n_columns
        c = coeff[pos:pos + k]
        coeffs[key] = c
        flat = bases[key].values @ c
        patch = part.patch(key)
        if part.model == "rte":
            shape = (patch.n_cells("core") + 1, patch.vgrid.n_v)
        else:
            core = patch.grid("core")
            shape = (core.nx + 1, core.ny + 1)
        patch_fields[key] = flat.reshape(shape)
        pos += k
    stitch = _stitch_rte if part.model == "rte" else _stitch_elliptic
    return GlobalSolution(coefficients=coeffs,
                          field=stitch(part, patch_fields),
                          residual_norm=residual)


def relative_error(u_ref, u):
    """Discrete l2 relative error between two fields on identical grids."""
    if u_ref.values.shape != u.values.shape:
        raise ParameterError(
            f"grid mismatch: {u_ref.values.shape} vs {u.values.shape}")
    for a, b in zip(u_ref.axes, u.axes):
        if a.shape != b.shape or not np.allclose(a, b, atol=1e-12, rtol=0):
            raise ParameterError("fields live on different grids")
    den = np.linalg.norm(u_ref.values)
    if den == 0.0:
        raise ParameterError("relative error undefined for zero reference")
    return float(np.linalg.norm(u_ref.values - u.values) / den)


def basis_subspace_error(reference_basis, test_basis, n_modes):
    """Projection errors of the reference's leading singular vectors.

    The reference is the buffered full basis (core-restricted Green's
    matrix); u_i are its leading left singular vectors. Returns the
    per-mode errors e_i = ||(I - Q Q^T) u_i|| / ||u_i|| and the aggregate
    spectral-norm error ||(I - Q Q^T) U_n||_2 / ||U_n||_2.
    """
    if n_modes < 1 or n_modes > min(reference_basis.n_columns,
                                    reference_basis.values.shape[0]):
        raise ParameterError(f"n_modes {n_modes} out of range")
    q = test_basis.values
    gram_err = np.max(np.abs(q.T @ q - np.eye(q.shape[1])))
    if gram_err > 1e-8:
        raise ParameterError("test basis must be orthonormalized")
    u_n = linalg.svd(reference_basis.values).u[:, :n_modes]
    resid = u_n - q @ (q.T @ u_n)
    e = np.linalg.norm(resid, axis=0) / np.linalg.norm(u_n, axis=0)
    err = linalg.spectral_norm(resid) / linalg.spectral_norm(u_n)
    return e, err
