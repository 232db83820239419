"""Drivers for the experiment subcommands behind the ``mspde`` CLI.

Every command validates its configuration, runs the offline/online
pipeline and writes one or more CSV artifacts, each with a sibling
``.manifest.json`` echoing the configuration, a content hash and
wall-clock timings per stage.
"""

import time

import numpy as np

from . import elliptic as ell
from . import framework as fw
from . import io, linalg, rte
from ._version import __version__
from .errors import ConfigError

SOLUTION_HEADERS = {"rte": ("x", "v", "u"), "elliptic": ("x1", "x2", "u")}


def rte_boundary(name):
    """Global inflow data phi(x_end, v) for the transport problem."""
    if name == "paper":
        def phi(x_end, v):
            base = 3.0 if x_end == 0.0 else 2.0
            return base + np.sin(2.0 * np.pi * np.asarray(v, dtype=float))
        return phi
    if name == "constant":
        return lambda x_end, v: np.ones_like(np.asarray(v, dtype=float))
    raise ConfigError("boundary_data", f"unknown rte boundary '{name}'")


def elliptic_boundary(name):
    """Global Dirichlet data phi(x, y) on the boundary of the unit square."""
    if name == "sine":
        def phi(x, y):
            # one sine period over the counterclockwise arclength from (0,0)
            x = np.asarray(x, dtype=float)
            y = np.asarray(y, dtype=float)
            s = x * 1.0  # bottom side: s = x
            s = np.where(x >= 1.0 - 1e-12, 1.0 + y, s)
            s = np.where(y >= 1.0 - 1e-12, 3.0 - x, s)
            s = np.where(x <= 1e-12, 4.0 - y, s)
            return np.sin(np.pi * s / 2.0)
        return phi
    if name == "constant":
        return lambda x, y: np.ones(np.broadcast_shapes(
            np.asarray(x, dtype=float).shape, np.asarray(y, dtype=float).shape))
    raise ConfigError("boundary_data", f"unknown elliptic boundary '{name}'")


def boundary_callable(cfg):
    if cfg.model == "rte":
        return rte_boundary(cfg.boundary_data)
    return elliptic_boundary(cfg.boundary_data)


def model_params(cfg, eps):
    if cfg.model == "rte":
        if cfg.collision == "henyey-greenstein":
            spec = rte.CollisionSpec.henyey_greenstein(cfg.g)
        else:
            spec = rte.CollisionSpec.homogeneous(cfg.sigma)
        return fw.RteParams(eps=float(eps), collision=spec)
    if cfg.media == "oscillatory":
        media = ell.MediaSpec.oscillatory(eps)
    elif cfg.media == "high-contrast":
        media = ell.MediaSpec.high_contrast()
    else:
        media = ell.MediaSpec.constant(cfg.a0)
    return fw.EllipticParams(media=media, element=cfg.element)


def build_partition(cfg):
    return fw.partition(cfg.model, cfg.m, cfg.resolution,
                        buffer_factor=cfg.buffer_factor, n_v=cfg.n_v)


def config_patch_key(cfg):
    p = cfg.default_patch()
    return p[0] if cfg.model == "rte" else (p[0], p[1])


def _require_out(cfg):
    if not cfg.out:
        raise ConfigError("out", "an output CSV path is required")


def _basis_cache(cfg):
    return io.BasisCache(cfg.cache_dir) if cfg.cache_dir else None


def _emit(cfg, path, header, rows, timings, extra=None):
    csv_path = io.write_csv(path, header, rows)
    io.write_manifest(csv_path, cfg.to_mapping(), timings, __version__,
                      extra=extra)
    return csv_path


def _solution_rows(field):
    ax0, ax1 = field.axes
    rows = []
    for i, a in enumerate(ax0):
        for j, b in enumerate(ax1):
            rows.append((a, b, field.values[i, j]))
    return rows


def run_local_svd(cfg):
    """Normalized singular values of the core and buffered Green's matrices."""
    _require_out(cfg)
    part = build_partition(cfg)
    params = model_params(cfg, cfg.eps[0])
    patch = part.patch(config_patch_key(cfg))
    t0 = time.perf_counter()
    core = fw.det_local_basis(patch, params, buffered=False)
    buffered = fw.det_local_basis(patch, params, buffered=True)
    sig_core = linalg.svd(core.values).sigma
    svd_buf = linalg.svd(buffered.values)
    offline = time.perf_counter() - t0
    rows = []
    for variant, sig in (("core", sig_core), ("buffered", svd_buf.sigma)):
        for i, s in enumerate(sig, start=1):
            rows.append((variant, i, s, s / sig[0]))
    timings = {"offline_seconds": offline, "online_seconds": 0.0}
    paths = [_emit(cfg, cfg.out, ("variant", "index", "sigma", "sigma_normalized"),
                   rows, timings)]
    for k in range(cfg.modes_dump):
        mode_field = _patch_mode_field(cfg, patch, svd_buf.u[:, k])
        mode_path = str(paths[0]).replace(".csv", f"_mode{k + 1}.csv")
        paths.append(_emit(cfg, mode_path, SOLUTION_HEADERS[cfg.model],
                           _solution_rows(mode_field), timings))
    return paths


def _patch_mode_field(cfg, patch, column):
    if cfg.model == "rte":
        values = column.reshape(patch.n_cells("core") + 1, patch.vgrid.n_v)
        return fw.SolutionField("rte", (patch.x_nodes("core"),
                                        patch.vgrid.nodes.copy()), values)
    core = patch.grid("core")
    values = column.reshape(core.nx + 1, core.ny + 1)
    return fw.SolutionField("elliptic", (core.x_nodes, core.y_nodes), values)


def run_projection_error(cfg):
    """Range-capture error of randomized bases vs the buffered full basis."""
    _require_out(cfg)
    if not cfg.k_m:
        raise ConfigError("k_m", "projection-error needs at least one k_m value")
    part = build_partition(cfg)
    key = config_patch_key(cfg)
    patch = part.patch(key)
    ordinal = fw.patch_ordinal(cfg.model, key, cfg.m)
    rows = []
    t0 = time.perf_counter()
    for eps in cfg.eps:
        params = model_params(cfg, eps)
        reference = fw.det_local_basis(patch, params, buffered=True)
        for k in cfg.k_m:
            for seed in cfg.seeds:
                rng = linalg.RngStream(seed).substream(ordinal)
                basis = fw.ran_local_basis(patch, params, k, rng,
                                           orthonormalize=True)
                err = linalg.projection_error(reference.values, basis.values)
                rows.append((eps, k, seed, err))
    timings = {"offline_seconds": time.perf_counter() - t0, "online_seconds": 0.0}
    return [_emit(cfg, cfg.out, ("eps", "k", "seed", "error"), rows, timings)]


def monolithic_solution(cfg, eps):
    """Single-domain fine solve used for cross-validating the DD reference."""
    params = model_params(cfg, eps)
    phi = boundary_callable(cfg)
    if cfg.model == "rte":
        vgrid = rte.VelocityGrid(cfg.n_v)
        patch = rte.RtePatch(index=1, m_total=1, dx=cfg.resolution, vgrid=vgrid,
                             buffer_factor=1.0)
        nh = vgrid.n_half
        inflow = rte.InflowData(left=phi(0.0, vgrid.nodes[nh:]),
                                right=phi(1.0, vgrid.nodes[:nh]))
        field = rte.solve_local_rte(patch, eps, params.collision, inflow, "core")
        return fw.SolutionField("rte", (patch.x_nodes("core"),
                                        vgrid.nodes.copy()), field.values)
    patch = ell.EllipticPatch(m1=1, m2=1, m_total=1, h=cfg.resolution,
                              buffer_factor=1.0)
    grid = patch.grid("core")
    bidx = grid.boundary_flat
    bx = grid.x_nodes[bidx // (grid.ny + 1)]
    by = grid.y_nodes[bidx % (grid.ny + 1)]
    field = ell.solve_local_elliptic(patch, params.media, phi(bx, by), "core")
    return fw.SolutionField("elliptic", (grid.x_nodes, grid.y_nodes),
                            field.values)


def _solve_once(cfg, part, params, phi, bases):
    system = fw.assemble_global(part, bases, phi, cfg.boundary_weight)
    return fw.solve_global(system, bases, part)


def run_global(cfg):
    """Full or reduced global solve; reduced mode also sweeps (k_m, seed)
    and reports the relative error against the reference solution."""
    _require_out(cfg)
    eps = cfg.eps[0]
    part = build_partition(cfg)
    params = model_params(cfg, eps)
    phi = boundary_callable(cfg)
    cache = _basis_cache(cfg)
    offline = online = 0.0

    full_sol = None
    if cfg.mode == "full" or cfg.reference == "full":
        t0 = time.perf_counter()
        bases = fw.offline_bases(part, params, "full", workers=cfg.workers,
                                 cache=cache)
        offline += time.perf_counter() - t0
        t0 = time.perf_counter()
        full_sol = _solve_once(cfg, part, params, phi, bases)
        online += time.perf_counter() - t0

    paths = []
    if cfg.mode == "full":
        solution_field = full_sol.field
        error_rows = None
        residual = full_sol.residual_norm
    else:
        if not cfg.k_m:
            raise ConfigError("k_m", "reduced mode needs at least one k_m value")
        if cfg.reference == "monolithic":
            t0 = time.perf_counter()
            ref_field = monolithic_solution(cfg, eps)
            offline += time.perf_counter() - t0
        else:
            ref_field = full_sol.field
        error_rows = []
        sol = None
        for k in cfg.k_m:
            for seed in cfg.seeds:
                t0 = time.perf_counter()
                bases = fw.offline_bases(part, params, "reduced", k_m=k,
                                         seed=seed,
                                         orthonormalize=cfg.orthonormalize,
                                         boundary_full=cfg.boundary_full,
                                         workers=cfg.workers, cache=cache)
                offline += time.perf_counter() - t0
                t0 = time.perf_counter()
                sol = _solve_once(cfg, part, params, phi, bases)
                online += time.perf_counter() - t0
                error_rows.append((k, seed,
                                   fw.relative_error(ref_field, sol.field)))
        solution_field = sol.field
        residual = sol.residual_norm

    timings = {"offline_seconds": offline, "online_seconds": online}
    extra = {"residual_norm": residual}
    paths.append(_emit(cfg, cfg.out, SOLUTION_HEADERS[cfg.model],
                       _solution_rows(solution_field), timings, extra=extra))
    if error_rows is not None:
        err_path = str(paths[0]).replace(".csv", "_errors.csv")
        paths.append(_emit(cfg, err_path, ("k_m", "seed", "relative_error"),
                           error_rows, timings))
    return paths


def v_variation(field, m):
    """Velocity spread of a transport solution over the interior slab.

    max over interior x (one patch width trimmed at each end) of
    (max_v - min_v) / |mean_v|.
    """
    x = field.axes[0]
    lo, hi = 1.0 / m - 1e-12, 1.0 - 1.0 / m + 1e-12
    vals = field.values[(x >= lo) & (x <= hi)]
    spread = vals.max(axis=1) - vals.min(axis=1)
    mean = np.abs(vals.mean(axis=1))
    ratio = np.where(spread == 0.0, 0.0, spread / np.maximum(mean, 1e-300))
    return float(ratio.max())


def run_diffusion_check(cfg):
    """v-dependence of the full-basis solution across a sweep of eps."""
    _require_out(cfg)
    if cfg.model != "rte":
        raise ConfigError("model", "diffusion-check is a transport experiment")
    part = build_partition(cfg)
    phi = boundary_callable(cfg)
    cache = _basis_cache(cfg)
    rows = []
    offline = online = 0.0
    for eps in cfg.eps:
        params = model_params(cfg, eps)
        t0 = time.perf_counter()
        bases = fw.offline_bases(part, params, "full", workers=cfg.workers,
                                 cache=cache)
        offline += time.perf_counter() - t0
        t0 = time.perf_counter()
        sol = _solve_once(cfg, part, params, phi, bases)
        online += time.perf_counter() - t0
        rows.append((eps, v_variation(sol.field, cfg.m)))
    timings = {"offline_seconds": offline, "online_seconds": online}
    return [_emit(cfg, cfg.out, ("eps", "v_variation"), rows, timings)]


def run_compare_msfem(cfg):
    """Subspace-capture comparison: SVD reference vs MsFEM vs random sampling."""
    _require_out(cfg)
    if cfg.model != "elliptic":
        raise ConfigError("model", "compare-msfem is an elliptic experiment")
    part = build_partition(cfg)
    params = model_params(cfg, cfg.eps[0])
    key = config_patch_key(cfg)
    patch = part.patch(key)
    ordinal = fw.patch_ordinal("elliptic", key, cfg.m)
    k_random = cfg.k_m[0] if cfg.k_m else 6

    t0 = time.perf_counter()
    reference = fw.det_local_basis(patch, params, buffered=True)
    ref_svd = linalg.svd(reference.values)
    t_ref = time.perf_counter() - t0

    rows = []
    q_ref = fw.LocalBasis(patch=patch, kind="svd-reference",
                          values=ref_svd.u[:, :3], orthonormalized=True)
    e_ref, err_ref = fw.basis_subspace_error(reference, q_ref, 3)
    rows.append(("svd-reference", t_ref, e_ref[0], e_ref[1], e_ref[2],
                 err_ref, ""))

    t0 = time.perf_counter()
    msfem = fw.msfem_local_basis(patch, params)
    msfem_q = fw.orthonormalize_basis(msfem, params)
    t_msfem = time.perf_counter() - t0
    e_ms, err_ms = fw.basis_subspace_error(reference, msfem_q, 3)
    rows.append(("msfem", t_msfem, e_ms[0], e_ms[1], e_ms[2], err_ms, ""))

    for seed in cfg.seeds:
        t0 = time.perf_counter()
        rng = linalg.RngStream(seed).substream(ordinal)
        basis = fw.ran_local_basis(patch, params, k_random, rng,
                                   orthonormalize=True)
        t_rand = time.perf_counter() - t0
        e_r, err_r = fw.basis_subspace_error(reference, basis, 3)
        rows.append(("random-sampling", t_rand, e_r[0], e_r[1], e_r[2],
                     err_r, seed))

    timings = {"offline_seconds": t_ref + t_msfem, "online_seconds": 0.0}
    header = ("method", "cpu_seconds", "e1", "e2", "e3", "error", "seed")
    return [_emit(cfg, cfg.out, header, rows, timings)]
