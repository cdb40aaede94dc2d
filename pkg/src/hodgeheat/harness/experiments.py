"""Convergence, variational-crime, decay and C-shape studies."""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from ..geometry import (estimate_I_minus_Jh, exact_surface_for, geometric_errors,
                        interpolate_surface)
from ..hodge import harmonic_basis, solve_mixed_elliptic
from ..mesh import SimplicialComplex, build_circle_mesh, build_icosphere, build_square_mesh
from ..operators import (boundary_trace_load, l2_error, mass_matrix, project_data)
from ..parabolic import ParabolicProblem, run
from ..spaces import FormSpace, build_form_space
from .config import ExperimentConfig
from .manufactured import UnsupportedCaseError, manufactured_case


@dataclass
class Check:
    name: str
    passed: bool
    detail: str


@dataclass
class ConvergenceReport:
    """Per-level raw errors plus observed orders between consecutive levels."""

    levels: list
    h: list
    dofs: list
    errors: dict  # name -> list of values per level

    def orders(self, name) -> list[float]:
        e = self.errors[name]
        return [observed_order(a, b) if a > 0 and b > 0 else float("nan")
                for a, b in zip(e[:-1], e[1:])]

    def rows(self) -> list[dict]:
        out = []
        for i, lvl in enumerate(self.levels):
            row = {"level": lvl, "h": self.h[i], "dofs": self.dofs[i]}
            for name, vals in self.errors.items():
                row[name] = vals[i]
                row[f"order_{name}"] = self.orders(name)[i - 1] if i else float("nan")
            out.append(row)
        return out


@dataclass
class ExperimentResult:
    report: list
    checks: list = field(default_factory=list)
    series: list = field(default_factory=list)
    snapshots: list = field(default_factory=list)  # (name, mesh, cell_data, point_data)
    tables: dict = field(default_factory=dict)
    data: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)


def observed_order(e_coarse: float, e_fine: float) -> float:
    """log2 of the error ratio between consecutive uniform refinements."""
    if not (e_coarse > 0 and e_fine > 0):
        raise ValueError("errors must be positive")
    return math.log2(e_coarse / e_fine)


def _threads() -> int:
    try:
        cap = int(os.environ.get("FEEC_THREADS", "0"))
    except ValueError:
        cap = 0
    return cap if cap > 0 else (os.cpu_count() or 1)


def parallel_map(func, items):
    items = list(items)
    workers = min(_threads(), len(items))
    if workers <= 1:
        return [func(it) for it in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(func, items))


def build_level_mesh(geometry: str, level: int, side: float = 1.0) -> SimplicialComplex:
    if geometry == "square":
        return build_square_mesh(level, level, side)
    if geometry == "circle":
        return build_circle_mesh(level)
    if geometry == "sphere":
        return build_icosphere(level)
    raise ValueError(f"unknown geometry {geometry!r}")


def level_geometry(mesh: SimplicialComplex, s: int):
    exact = exact_surface_for(mesh)
    return interpolate_surface(mesh, exact, s) if exact is not None else None


def select_spaces(mesh, geom, k: int, r: int, family: str, quad_degree=None):
    """The (sigma, u) pair used for a given u-space choice.

    Trimmed degree r pairs with trimmed degree r one degree down; the full
    degree-1 top forms pair with the degree-2 trimmed (k-1)-forms.
    """
    u = build_form_space(mesh, k, r, family, geom, quad_degree)
    if k == 0:
        return None, u
    if family == "trimmed":
        return build_form_space(mesh, k - 1, r, "trimmed", geom, quad_degree), u
    if family == "full" and r == 1 and k == mesh.dim:
        return build_form_space(mesh, k - 1, 2, "trimmed", geom, quad_degree), u
    raise UnsupportedCaseError(f"no sigma space paired with family={family}, r={r}, k={k}")


def _order_check(name, report, key, bound):
    orders = report.orders(key)
    worst = min(orders)
    return Check(name, worst >= bound,
                 f"orders {', '.join(f'{o:.3f}' for o in orders)}; required >= {bound}")


# -- mesh / cohomology -----------------------------------------------------

def run_mesh(cfg: ExperimentConfig) -> ExperimentResult:
    def one(level):
        mesh = build_level_mesh(cfg.geometry, level, cfg.side)
        geom = level_geometry(mesh, 1)
        spaces = [build_form_space(mesh, k, 1, "trimmed", geom) for k in range(mesh.dim + 1)]
        dims, gaps = [], []
        for k in range(mesh.dim + 1):
            hb = harmonic_basis(spaces[k - 1] if k else None, spaces[k], null_tol=cfg.null_tol)
            dims.append(hb.dim)
            gaps.append(hb.gap)
        return mesh, dims, gaps

    results = parallel_map(one, cfg.levels)
    rows, checks, snaps = [], [], []
    for level, (mesh, dims, gaps) in zip(cfg.levels, results):
        row = {"level": level, "h": mesh.mesh_size(), "chi": mesh.euler_characteristic()}
        for k, c in enumerate(mesh.counts):
            row[f"count_{k}"] = c
        for k, (d, g) in enumerate(zip(dims, gaps)):
            row[f"harmonic_{k}"] = d
            row[f"gap_{k}"] = g
        rows.append(row)
        snaps.append((f"mesh_{level}", mesh, None, None))
        if cfg.assert_betti:
            checks.append(Check(f"betti_level_{level}", tuple(dims) == tuple(cfg.assert_betti),
                                f"harmonic dims {dims}, expected {list(cfg.assert_betti)}"))
    return ExperimentResult(rows, checks, snapshots=snaps)


# -- elliptic ----------------------------------------------------------------

def _elliptic_level(cfg: ExperimentConfig, case, level):
    mesh = build_level_mesh(cfg.geometry, level, cfg.side)
    geom = level_geometry(mesh, cfg.s)
    sig_space, u_space = select_spaces(mesh, geom, cfg.k, cfg.r, cfg.family, cfg.quad_degree)
    ex = case.exact
    f_h = project_data(u_space, lambda x: ex.minus_laplacian(x, 0.0))
    w_h = project_data(u_space, lambda x: ex.harmonic_part(x, 0.0))
    boundary = None
    if case.boundary_trace is not None:
        boundary = boundary_trace_load(sig_space, lambda x: case.boundary_trace(x, 0.0))
    sol = solve_mixed_elliptic(sig_space, u_space, f_h, w_h, boundary)
    errs = {"u_L2": l2_error(u_space, sol.u, lambda x: ex.u(x, 0.0))}
    if ex.du is not None:
        errs["du_L2"] = l2_error(u_space, sol.u, lambda x: ex.du(x, 0.0), derivative=True)
    if sig_space is not None:
        errs["sigma_L2"] = l2_error(sig_space, sol.sigma, lambda x: ex.sigma(x, 0.0))
        errs["dsigma_L2"] = l2_error(sig_space, sol.sigma, lambda x: ex.dsigma(x, 0.0),
                                     derivative=True)
    dofs = u_space.dof_count + (sig_space.dof_count if sig_space is not None else 0)
    return mesh, u_space, sol, errs, dofs


def run_elliptic_convergence(cfg: ExperimentConfig) -> ExperimentResult:
    case = manufactured_case(cfg.geometry, cfg.k, cfg.mode, cfg.harmonic)
    results = parallel_map(lambda lvl: _elliptic_level(cfg, case, lvl), cfg.levels)
    names = list(results[0][3])
    report = ConvergenceReport(list(cfg.levels), [r[0].mesh_size() for r in results],
                               [r[4] for r in results],
                               {n: [r[3][n] for r in results] for n in names})
    checks = []
    if cfg.assert_u_order is not None:
        checks.append(_order_check("u_order", report, "u_L2", cfg.assert_u_order))
    if cfg.assert_sigma_order is not None and "sigma_L2" in names:
        checks.append(_order_check("sigma_order", report, "sigma_L2", cfg.assert_sigma_order))
    residual = max(max(r[2].residuals.values()) for r in results)
    checks.append(Check("solver_residuals", residual <= 1e-9, f"max relative residual {residual:.3e}"))
    mesh, u_space, sol = results[-1][:3]
    snaps = [(f"u_level_{cfg.levels[-1]}",) + _field_snapshot(mesh, u_space, sol.u.coefficients)]
    return ExperimentResult(report.rows(), checks, snapshots=snaps,
                            data={"report": report, "solutions": [r[2] for r in results]})


# -- parabolic ---------------------------------------------------------------

def level_dt(cfg: ExperimentConfig, h: float) -> tuple[float, int]:
    dt = cfg.dt if cfg.dt is not None else min(cfg.dt_cap, cfg.dt_factor * h * h)
    n = max(1, math.ceil(cfg.T / dt - 1e-9))
    return cfg.T / n, n


def _parabolic_level(cfg, case, level, dt=None, method=None):
    mesh = build_level_mesh(cfg.geometry, level, cfg.side)
    geom = level_geometry(mesh, cfg.s)
    sig_space, u_space = select_spaces(mesh, geom, cfg.k, cfg.r, cfg.family, cfg.quad_degree)
    if dt is None:
        dt, _ = level_dt(cfg, mesh.mesh_size())
    problem = ParabolicProblem(sig_space, u_space, cfg.T, dt, exact=case.exact)
    result = run(problem, method=method or cfg.method)
    return mesh, u_space, dt, result


def run_parabolic_convergence(cfg: ExperimentConfig) -> ExperimentResult:
    case = manufactured_case(cfg.geometry, cfg.k, cfg.mode, cfg.harmonic)
    if case.boundary_trace is not None:
        raise UnsupportedCaseError("parabolic studies need a closed manifold")
    results = parallel_map(lambda lvl: _parabolic_level(cfg, case, lvl), cfg.levels)
    errors = {}
    for key in ("u_error", "sigma_error"):
        if key in results[0][3].bochner:
            for norm in ("Linf", "L2"):
                errors[f"{key}_{norm}"] = [r[3].bochner[key][norm] for r in results]
    report = ConvergenceReport(list(cfg.levels), [r[0].mesh_size() for r in results],
                               [r[1].dof_count for r in results], errors)
    rows = report.rows()
    for row, r in zip(rows, results):
        row["dt"] = r[2]
        row["steps"] = len(r[3].times) - 1
        row["r1_max"] = float(np.nanmax(r[3].series.get("r1", [0.0])))
        row["r2_max"] = float(np.nanmax(r[3].series.get("r2", [0.0])))
    series = []
    for lvl, r in zip(cfg.levels, results):
        series.extend(_series_rows(r[3], level=lvl))
    checks = []
    if cfg.assert_u_order is not None:
        checks.append(_order_check("u_order_Linf_L2", report, "u_error_Linf", cfg.assert_u_order))
    if cfg.assert_sigma_order is not None and "sigma_error_Linf" in errors:
        checks.append(_order_check("sigma_order_Linf_L2", report, "sigma_error_Linf",
                                   cfg.assert_sigma_order))
    if cfg.assert_r1_max is not None:
        worst = max(row["r1_max"] for row in rows)
        checks.append(Check("r1_max", worst <= cfg.assert_r1_max,
                            f"max r1 {worst:.3e}; required <= {cfg.assert_r1_max}"))
    tables, data = {}, {"report": report, "runs": [r[3] for r in results]}
    if cfg.thomee_dts:
        study = thomee_study(cfg, case)
        tables["thomee"] = study
        data["thomee"] = study
        if cfg.assert_r2_order is not None:
            orders = [row["order_r2"] for row in study[1:]]
            checks.append(Check("r2_order", min(orders) >= cfg.assert_r2_order,
                                f"orders {', '.join(f'{o:.3f}' for o in orders)}; "
                                f"required >= {cfg.assert_r2_order}"))
    mesh, u_space, _, last = results[-1]
    snaps = [(f"u_level_{cfg.levels[-1]}_t{last.times[-1]:.4g}",)
             + _field_snapshot(mesh, u_space, last.states[-1].u.coefficients)]
    return ExperimentResult(rows, checks, series, snaps, tables, data)


def thomee_study(cfg: ExperimentConfig, case) -> list[dict]:
    """Second error-equation residual under dt refinement at a fixed mesh.

    Uses the exact semidiscrete flow so that the only time error left is the
    difference quotient; samples before ``thomee.t_min * T`` are skipped
    because mesh-scale modes decay there faster than any dt resolves.
    """
    level = cfg.thomee_level if cfg.thomee_level is not None else cfg.levels[0]
    rows, prev = [], None
    for dt in cfg.thomee_dts:
        _, _, _, res = _parabolic_level(cfg, case, level, dt=dt, method="semidiscrete")
        keep = res.times >= cfg.thomee_t_min * cfg.T - 1e-12
        r2 = float(res.series["r2"][keep].max())
        r1 = float(res.series["r1"].max())
        rows.append({"level": level, "dt": dt, "r1_max": r1, "r2_max": r2,
                     "order_r2": observed_order(prev, r2) if prev else float("nan")})
        prev = r2
    return rows


def _series_rows(result, level=None):
    cols = ("t", "theta", "epsilon", "dtheta", "depsilon", "rho", "psi", "r1", "r2",
            "energy", "mass")
    out = []
    for i in range(len(result.times)):
        row = {} if level is None else {"level": level}
        for c in cols:
            vals = result.series.get(c)
            row[c] = float(vals[i]) if vals is not None else float("nan")
        out.append(row)
    return out


# -- decay -------------------------------------------------------------------

def run_decay(cfg: ExperimentConfig) -> ExperimentResult:
    """Backward Euler decay of one eigenmode against exp(-rate T), zero source."""
    case = manufactured_case(cfg.geometry, cfg.k, cfg.mode, cfg.harmonic)
    level = cfg.levels[-1]
    mesh = build_level_mesh(cfg.geometry, level, cfg.side)
    geom = level_geometry(mesh, cfg.s)
    sig_space, u_space = select_spaces(mesh, geom, cfg.k, cfg.r, cfg.family, cfg.quad_degree)
    dt = cfg.dt if cfg.dt is not None else 1e-4
    ex = case.exact
    problem = ParabolicProblem(sig_space, u_space, cfg.T, dt, initial=lambda x: ex.u(x, 0.0),
                               initial_mode="projection")
    res = run(problem)
    energy = res.series["energy"]
    harm = res.series.get("harmonic")
    if harm is not None:
        # basis is A-orthonormal, so the harmonic share of the energy is |c|^2
        energy = energy - np.sum(harm ** 2, axis=1)
    ratio = math.sqrt(energy[-1] / energy[0])
    target = math.exp(-case.rate * cfg.T)
    rel = abs(ratio / target - 1.0)
    drift = float(np.abs(np.diff(harm, axis=0)).max()) if harm is not None else 0.0
    row = {"level": level, "dt": dt, "T": cfg.T, "norm_ratio": ratio, "expected": target,
           "relative_error": rel, "harmonic_dim": 0 if harm is None else harm.shape[1],
           "harmonic_drift_max": drift}
    checks = []
    if cfg.assert_decay_tol is not None:
        checks.append(Check("decay_rate", rel <= cfg.assert_decay_tol,
                            f"ratio {ratio:.6f} vs exp(-rate T) {target:.6f}"))
    if cfg.assert_harmonic_drift is not None:
        checks.append(Check("harmonic_constant", harm is not None
                            and drift <= cfg.assert_harmonic_drift,
                            f"max per-step change of harmonic coefficients {drift:.3e}"))
    return ExperimentResult([row], checks, _series_rows(res), data={"run": res})


# -- crimes ------------------------------------------------------------------

def _crime_level(cfg, level):
    mesh = build_level_mesh(cfg.geometry, level)
    geom = level_geometry(mesh, cfg.s)
    if geom is None:
        raise UnsupportedCaseError("variational crimes need a curved geometry")
    space = build_form_space(mesh, cfg.k, cfg.r, cfg.family, geom, cfg.quad_degree)
    delta, nu = geometric_errors(geom, cfg.samples)
    crime = estimate_I_minus_Jh(mass_matrix(space), mass_matrix(space, exact=True))
    return mesh.mesh_size(), space.dof_count, delta, nu, crime


def run_crimes(cfg: ExperimentConfig) -> ExperimentResult:
    results = parallel_map(lambda lvl: _crime_level(cfg, lvl), cfg.levels)
    report = ConvergenceReport(list(cfg.levels), [r[0] for r in results], [r[1] for r in results],
                               {"delta_inf": [r[2] for r in results],
                                "normal_err_inf": [r[3] for r in results],
                                "I_minus_Jh": [r[4] for r in results]})
    checks = []
    if cfg.assert_crime_order is not None:
        checks.append(_order_check("I_minus_Jh_order", report, "I_minus_Jh", cfg.assert_crime_order))
    if cfg.assert_delta_tol is not None:
        orders = report.orders("delta_inf")
        target = cfg.s + 1
        ok = all(abs(o - target) <= cfg.assert_delta_tol for o in orders)
        checks.append(Check("delta_order", ok,
                            f"orders {', '.join(f'{o:.3f}' for o in orders)}; "
                            f"required within {cfg.assert_delta_tol} of {target}"))
    return ExperimentResult(report.rows(), checks, data={"report": report})


# -- C-shape -----------------------------------------------------------------

def cshape_indicator(points, outer=(0.2, 0.8), cut=(0.4, 1.0, 0.4, 0.6)):
    """Characteristic function of a square with a rectangular bite taken out."""
    x, y = points[:, 0], points[:, 1]
    lo, hi = outer
    inside = (x >= lo) & (x <= hi) & (y >= lo) & (y <= hi)
    bite = (x >= cut[0]) & (x <= cut[1]) & (y >= cut[2]) & (y <= cut[3])
    return (inside & ~bite).astype(float)


def cshape_initial(space: FormSpace, outer, cut) -> np.ndarray:
    """Top-degree Whitney cochain of the indicator, sampled at centroids."""
    mesh = space.mesh
    cent = mesh.vertices[mesh.cells].mean(axis=1)
    return mesh.volumes(mesh.dim) * cshape_indicator(cent, outer, cut)


def run_cshape(cfg: ExperimentConfig) -> ExperimentResult:
    n = cfg.levels[0]
    mesh = build_square_mesh(n, n, cfg.side)
    sig_space = build_form_space(mesh, 1, 1, "trimmed", quad_degree=cfg.quad_degree)
    u_space = build_form_space(mesh, 2, 1, "trimmed", quad_degree=cfg.quad_degree)
    dt = cfg.dt if cfg.dt is not None else 1e-4
    steps = cfg.steps if cfg.steps is not None else max(1, round(cfg.T / dt))
    u0 = cshape_initial(u_space, cfg.cshape_outer, cfg.cshape_cut)
    problem = ParabolicProblem(sig_space, u_space, steps * dt, dt, initial_coefficients=u0)
    snap_times = cfg.snapshots or (0.0, steps * dt)
    res = run(problem, snapshot_times=snap_times)
    energy = res.series["energy"]
    diffs = np.diff(energy)
    rows = [{"mesh": n, "dt": dt, "steps": steps, "energy_initial": energy[0],
             "energy_final": energy[-1], "max_energy_increment": float(diffs.max(initial=-np.inf)),
             "mass_initial": res.series["mass"][0], "mass_final": res.series["mass"][-1]}]
    checks = []
    if cfg.assert_energy:
        checks.append(Check("energy_nonincreasing", bool(np.all(diffs <= 0.0)),
                            f"largest energy increment {diffs.max(initial=-np.inf):.3e}"))
    snaps = []
    if cfg.write_snapshots:
        for t, st in sorted(res.snapshots.items()):
            snaps.append((f"cshape_t{t:.6g}",) + _field_snapshot(mesh, u_space, st.u.coefficients))
    return ExperimentResult(rows, checks, _series_rows(res), snaps, data={"run": res})


def _field_snapshot(mesh, space: FormSpace, coefficients):
    """Cell or point data for VTK output of a discrete form."""
    coefficients = np.asarray(coefficients, dtype=float)
    if space.k == 0 and space.kind == "whitney":
        return mesh, None, {"u": coefficients[:len(mesh.vertices)]}
    centroid = np.full((1, mesh.dim), 1.0 / (mesh.dim + 1))
    vals, _ = space.evaluate(centroid)
    comp = np.einsum("eqic,ei->eqc", vals, coefficients[space.elem_dofs])[:, 0, :]
    jac = space.geometry.chart_jacobian(centroid)[:, 0]
    g = np.einsum("ead,eaf->edf", jac, jac)
    if space.k == space.n:
        data = comp[:, 0] / np.sqrt(np.linalg.det(g))
        return mesh, {"u_density": data}, None
    if space.k == 0:
        return mesh, {"u": comp[:, 0]}, None
    # 1-forms on surfaces: ambient vector proxy J G^{-1} c
    vec = np.einsum("ead,edf,ef->ea", jac, np.linalg.inv(g), comp)
    return mesh, {f"u_{i}": vec[:, i] for i in range(vec.shape[1])}, None


RUNNERS = {
    "mesh": run_mesh,
    "elliptic-convergence": run_elliptic_convergence,
    "parabolic-convergence": run_parabolic_convergence,
    "crimes": run_crimes,
    "cshape": run_cshape,
    "decay": run_decay,
}


def run_experiment(cfg: ExperimentConfig) -> ExperimentResult:
    return RUNNERS[cfg.kind](cfg)
