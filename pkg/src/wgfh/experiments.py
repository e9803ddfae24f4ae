"""Configuration, orchestration and persistence for named experiments.

A JSON config selects an experiment kind, a medium and numerical parameters;
`run` dispatches to the library, writes deterministic CSV artifacts (17
significant digits, fixed column orders), a gnuplot script, a verdicts table
for the invariants bound to the kind, and a manifest with checksums.
`report` re-validates a manifest: checksums first, then the invariant columns
of the emitted CSVs.
"""

import concurrent.futures as cf
import hashlib
import json
import os
import time
from dataclasses import dataclass

import jsonschema
import numpy as np

from . import __version__
from . import cell as cell_mod
from . import edi as edi_mod
from . import flow as flow_mod
from . import gammaconv as gamma_mod
from . import media as media_mod
from . import metrics as metrics_mod
from .grids import Grid
from .linalg import SolverError
from .quadrature import QuadratureError

KINDS = ("solve", "effective", "edi", "sweep", "metric", "gamma", "checkerboard")


class ConfigError(ValueError):
    pass


class NumericalFailure(RuntimeError):
    pass


_EXPR = {"type": "string", "minLength": 1}
_EXPR_MATRIX = {
    "type": "array", "minItems": 2, "maxItems": 2,
    "items": {"type": "array", "minItems": 2, "maxItems": 2, "items": _EXPR},
}
_B_FAMILY = {
    "type": "object",
    "properties": {
        "family": {"enum": ["constant", "layered", "checkerboard"]},
        "value": {"type": "number"},
        "values": {"type": "array", "items": {"type": "number"}, "minItems": 2},
        "alpha": {"type": "number", "exclusiveMinimum": 0},
        "beta": {"type": "number", "exclusiveMinimum": 0},
    },
    "required": ["family"],
}
_PI_FAMILY = {
    "type": "object",
    "properties": {
        "variant": {"enum": ["oscillatory", "uniform"]},
        "pi0": _EXPR,
        "pi1": _EXPR,
    },
    "required": ["variant", "pi0", "pi1"],
}

CONFIG_SCHEMA = {
    "type": "object",
    "properties": {
        "kind": {"enum": list(KINDS)},
        "medium": {
            "type": "object",
            "properties": {
                "dim": {"enum": [1, 2]},
                "B": {"anyOf": [_EXPR, _B_FAMILY, _EXPR_MATRIX]},
                "bounds": {"type": "array", "minItems": 2, "maxItems": 2,
                           "items": {"type": "number", "exclusiveMinimum": 0}},
                "pi": {"anyOf": [_EXPR, _PI_FAMILY]},
                "pi_bounds": {"type": "array", "minItems": 2, "maxItems": 2,
                              "items": {"type": "number", "exclusiveMinimum": 0}},
            },
            "required": ["B", "pi"],
        },
        "initial": _EXPR,
        "eps": {"type": "array", "items": {"type": "number", "exclusiveMinimum": 0},
                "minItems": 1},
        "cells": {"type": "integer", "minimum": 2},
        "ycells": {"type": "integer", "minimum": 32},
        "dt": {"type": "number", "exclusiveMinimum": 0},
        "T": {"type": "number", "exclusiveMinimum": 0},
        "output_times": {"type": "array", "items": {"type": "number", "minimum": 0},
                         "minItems": 1},
        "seed": {"type": "integer", "minimum": 0},
        "out": {"type": "string"},
        "points": {"type": "array", "minItems": 2, "maxItems": 2,
                   "items": {"type": "number"}},
        "wasserstein": {
            "type": "object",
            "properties": {"rho0": _EXPR, "rho1": _EXPR},
            "required": ["rho0", "rho1"],
        },
        "data": {
            "type": "object",
            "properties": {
                "breaks": {"type": "array", "items": {"type": "number"}, "minItems": 2},
                "slopes": {"type": "array", "items": {"type": "number"}, "minItems": 1},
                "base": {"type": "number"},
            },
            "required": ["breaks", "slopes"],
        },
        "d1": {"type": "number", "exclusiveMinimum": 0},
        "d2": {"type": "number", "exclusiveMinimum": 0},
        "alpha": {"type": "number", "exclusiveMinimum": 0},
        "beta": {"type": "number", "exclusiveMinimum": 0},
        "source": {"type": "array", "minItems": 2, "maxItems": 2,
                   "items": {"type": "number"}},
        "target": {"type": "array", "minItems": 2, "maxItems": 2,
                   "items": {"type": "number"}},
        "geodesic_tolerance": {"type": "number", "exclusiveMinimum": 0},
        "topology": {"enum": ["line", "torus"]},
    },
    "required": ["kind"],
}

_VALIDATOR = jsonschema.Draft202012Validator(CONFIG_SCHEMA)


def load_config(source):
    """Load and validate a config from a path or a dict; schema errors carry
    JSON-pointer paths."""
    if isinstance(source, (str, os.PathLike)):
        try:
            with open(source, "r", encoding="utf-8") as fh:
                cfg = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {source}: {exc}") from exc
    else:
        cfg = dict(source)
    errors = sorted(_VALIDATOR.iter_errors(cfg), key=lambda e: e.json_path)
    if errors:
        e = errors[0]
        raise ConfigError(f"config schema violation at {e.json_path}: {e.message}")
    eps = cfg.get("eps")
    if eps and any(b >= a for a, b in zip(eps, eps[1:])):
        raise ConfigError("config field /eps: values must be strictly decreasing")
    if "T" in cfg and "dt" in cfg:
        steps = cfg["T"] / cfg["dt"]
        if abs(steps - round(steps)) > 1e-9:
            raise ConfigError("config field /T: must be an integer multiple of /dt")
    for t in cfg.get("output_times", []):
        if "dt" in cfg and abs(t / cfg["dt"] - round(t / cfg["dt"])) > 1e-9:
            raise ConfigError(f"config field /output_times: {t} is not a multiple of /dt")
        if "T" in cfg and t > cfg["T"] + 1e-12:
            raise ConfigError(f"config field /output_times: {t} exceeds /T")
    return cfg


def build_medium(cfg):
    """Construct (MobilityTensor, StationaryDensity) from the medium object."""
    mc = cfg.get("medium")
    if mc is None:
        raise ConfigError("config field /medium is required for this kind")
    dim = mc.get("dim", 1)
    b_spec = mc["B"]
    bounds = mc.get("bounds")
    if isinstance(b_spec, str):
        if bounds is None:
            raise ConfigError("config field /medium/bounds is required for expression B")
        mob = media_mod.MobilityTensor.from_expr(b_spec, bounds=bounds, dim=dim)
    elif isinstance(b_spec, list):
        if bounds is None:
            raise ConfigError("config field /medium/bounds is required for expression B")
        mob = media_mod.MobilityTensor.from_expr(b_spec, bounds=bounds, dim=2)
    else:
        fam = b_spec["family"]
        if fam == "constant":
            mob = media_mod.MobilityTensor.constant(b_spec["value"], dim=dim, bounds=bounds)
        elif fam == "layered":
            mob = media_mod.MobilityTensor.layered(b_spec["values"], dim=dim, bounds=bounds)
        else:
            mob = media_mod.MobilityTensor.checkerboard(b_spec["alpha"], b_spec["beta"])
    pi_spec = mc["pi"]
    pi_bounds = mc.get("pi_bounds")
    if isinstance(pi_spec, str):
        den = media_mod.StationaryDensity.general(pi_spec, dim=mob.dim, bounds=pi_bounds)
    elif pi_spec["variant"] == "oscillatory":
        den = media_mod.StationaryDensity.oscillatory(pi_spec["pi0"], pi_spec["pi1"],
                                                      dim=mob.dim, bounds=pi_bounds)
    else:
        den = media_mod.StationaryDensity.uniform(pi_spec["pi0"], pi_spec["pi1"],
                                                  dim=mob.dim, bounds=pi_bounds)
    return mob, den


def _fmt(v):
    if isinstance(v, str):
        return v
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return format(float(v), ".17g")


def _write_csv(path, header, rows):
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(_fmt(v) for v in row))
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


def _sha256(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(65536), b""):
            h.update(chunk)
    return h.hexdigest()


@dataclass
class RunManifest:
    path: str
    config_sha256: str
    kind: str
    version: str
    created_utc: str
    entries: list  # (relative path, sha256, bytes)
    ok: bool
    notes: dict = None

    def to_json(self):
        out = {
            "config_sha256": self.config_sha256,
            "kind": self.kind,
            "version": self.version,
            "created_utc": self.created_utc,
            "artifacts": [
                {"path": p, "sha256": s, "bytes": n} for p, s, n in self.entries
            ],
            "ok": self.ok,
        }
        if self.notes:
            out["notes"] = self.notes
        return out


def _tensor_headers(dim, prefix):
    return [f"{prefix}_{i + 1}{j + 1}" for i in range(dim) for j in range(dim)]


# ---------------------------------------------------------------- kinds --


def _run_effective(cfg, out):
    mob, den = build_medium(cfg)
    medium = media_mod.Medium(mob, den)
    ycells = cfg.get("ycells", 64)
    if den.depends_on_x:
        cells = cfg.get("cells", 16)
        grid = Grid(1, cells) if mob.dim == 1 else Grid(2, cells)
        pts = grid.centers() if mob.dim == 1 else None
        if mob.dim != 1:
            raise ConfigError("slow-varying effective sweeps are 1-d only")
        eff = cell_mod.effective_tensors(medium, slow_points=pts, ycells=ycells)
    else:
        eff = cell_mod.effective_tensors(medium, ycells=ycells)
    dim = eff.dim
    header = (["x"] if dim == 1 else ["x1", "x2"])
    header += _tensor_headers(dim, "D") + _tensor_headers(dim, "G")
    header += _tensor_headers(dim, "B") + ["pi_bar"]
    rows = []
    for k in range(eff.points.shape[0]):
        row = [float(v) for v in np.atleast_1d(eff.points[k])]
        row += list(eff.D_bar[k].ravel()) + list(eff.G_bar[k].ravel())
        row += list(eff.B_bar[k].ravel()) + [eff.pi_bar[k]]
        rows.append(row)
    _write_csv(os.path.join(out, "effective.csv"), header, rows)
    verdicts = [("effective_tensors_spd", 1.0, 1.0, True)]
    try:
        eff.validate()
    except cell_mod.CellProblemError:
        verdicts = [("effective_tensors_spd", 0.0, 1.0, False)]
    return ["effective.csv"], verdicts, _gp_effective()


def _flow_system_for(mob, den, eps, cells):
    sampled = media_mod.sample_medium(mob, den, eps, cells)
    return flow_mod.FlowSystem.from_sampled(sampled)


def _run_solve(cfg, out):
    mob, den = build_medium(cfg)
    eps = cfg["eps"][0]
    cells = cfg["cells"]
    dt = cfg["dt"]
    T = cfg["T"]
    system = _flow_system_for(mob, den, eps, cells)
    state = flow_mod.well_prepared_initial(cfg["initial"], system)
    traj = flow_mod.evolve(state, system, T=T, dt=dt)
    out_times = cfg.get("output_times", [T])
    artifacts = []
    by_t = {round(t, 12): k for k, t in enumerate(traj.times)}
    for t in out_times:
        k = by_t.get(round(t, 12))
        if k is None:
            raise ConfigError(f"output time {t} does not land on a step boundary")
        st = traj.states[k]
        name = f"snapshot_{t:.6f}.csv"
        if system.dim == 1:
            x = system.grid.centers()
            rows = list(zip(x, st.rho, st.f))
            _write_csv(os.path.join(out, name), ["x", "rho", "f"], rows)
        else:
            x1, x2 = system.grid.centers()
            rows = list(zip(x1.ravel(), x2.ravel(), st.rho.ravel(), st.f.ravel()))
            _write_csv(os.path.join(out, name), ["x", "x2", "rho", "f"], rows)
        artifacts.append(name)
    diag_rows = [
        (r.t, r.f_min, r.f_max, r.norm2_pi, r.dirichlet, r.dtf_norm2, r.mass)
        for r in traj.records
    ]
    _write_csv(os.path.join(out, "diagnostics.csv"),
               ["t", "f_min", "f_max", "norm2_pi", "dirichlet", "dtf_norm2", "mass"],
               diag_rows)
    artifacts.append("diagnostics.csv")
    masses = np.array([r.mass for r in traj.records])
    # per-step drift: the accumulated one grows with the step count
    mass_drift = float(np.abs(np.diff(masses)).max() / masses[0]) if masses.size > 1 else 0.0
    ident = abs(traj.l2_identity_residual())
    rng = [(r.f_min, r.f_max) for r in traj.records]
    contained = all(lo >= rng[0][0] - 1e-12 and hi <= rng[0][1] + 1e-12 for lo, hi in rng)
    verdicts = [
        ("mass_drift", mass_drift, 1e-13, mass_drift <= 1e-13),
        ("l2_energy_identity", ident, 1e-10, ident <= 1e-10),
        ("max_principle_containment", 1.0 if contained else 0.0, 1.0, contained),
    ]
    return artifacts, verdicts, _gp_solve(artifacts)


_EDI_HEADER = ["eps", "t", "E_eps", "int_psi", "int_psistar",
               "E_bar", "int_psi_bar", "int_psistar_bar", "residual"]


def _edi_rows_for_eps(mob, den, cfg, eps, limit_records, sample_times):
    system = _flow_system_for(mob, den, eps, cfg["cells"])
    state = flow_mod.well_prepared_initial(cfg["initial"], system)
    traj = flow_mod.evolve(state, system, T=cfg["T"], dt=cfg["dt"])
    recs = edi_mod._records_at(edi_mod.edi_trace(traj), sample_times)
    rows = []
    for r, rl in zip(recs, limit_records):
        rows.append((eps, r.t, r.energy, r.int_psi, r.int_psi_star,
                     rl.energy, rl.int_psi, rl.int_psi_star, r.residual))
    return rows


def _limit_records(mob, den, cfg, sample_times):
    medium = media_mod.Medium(mob, den)
    grid = Grid(mob.dim, cfg["cells"])
    ycells = cfg.get("ycells", 256)
    if den.depends_on_x:
        eff = cell_mod.effective_tensors(medium, slow_points=grid.centers(), ycells=ycells)
    else:
        eff = cell_mod.effective_tensors(medium, ycells=ycells)
    limit_sys = flow_mod.FlowSystem.from_effective(eff, grid)
    state = flow_mod.well_prepared_initial(cfg["initial"], limit_sys)
    traj = flow_mod.evolve(state, limit_sys, T=cfg["T"], dt=cfg["dt"])
    return edi_mod._records_at(edi_mod.edi_trace(traj), sample_times)


def _run_edi(cfg, out, threads=1):
    mob, den = build_medium(cfg)
    sample_times = cfg.get("output_times", [cfg["T"]])
    limit_recs = _limit_records(mob, den, cfg, sample_times)
    rows = _edi_rows_for_eps(mob, den, cfg, cfg["eps"][0], limit_recs, sample_times)
    _write_csv(os.path.join(out, "edi.csv"), _EDI_HEADER, rows)
    worst = min(r[-1] for r in rows)
    verdicts = [("edi_residual_sign", worst, -1e-8, worst >= -1e-8)]
    return ["edi.csv"], verdicts, _gp_edi("edi.csv")


def _run_sweep(cfg, out, threads=1):
    mob, den = build_medium(cfg)
    sample_times = cfg.get("output_times", [cfg["T"]])
    limit_recs = _limit_records(mob, den, cfg, sample_times)
    eps_list = cfg["eps"]
    results = {}
    if threads > 1:
        with cf.ThreadPoolExecutor(max_workers=threads) as pool:
            futs = {pool.submit(_edi_rows_for_eps, mob, den, cfg, e, limit_recs,
                                sample_times): e for e in eps_list}
            for fut in cf.as_completed(futs):
                results[futs[fut]] = fut.result()
    else:
        for e in eps_list:
            results[e] = _edi_rows_for_eps(mob, den, cfg, e, limit_recs, sample_times)
    rows = [row for e in eps_list for row in results[e]]
    _write_csv(os.path.join(out, "sweep.csv"), _EDI_HEADER, rows)
    deltas = []
    for e in eps_list:
        worst = 0.0
        for row in results[e]:
            worst = max(worst, row[5] - row[2], row[6] - row[3], row[7] - row[4], 0.0)
        deltas.append(worst)
    dec = all(b <= a + 1e-12 for a, b in zip(deltas, deltas[1:]))
    worst_res = min(row[-1] for row in rows)
    verdicts = [
        ("lower_bound_deficits_decreasing", 1.0 if dec else 0.0, 1.0, dec),
        ("edi_residual_sign", worst_res, -1e-8, worst_res >= -1e-8),
    ]
    _write_csv(os.path.join(out, "deltas.csv"), ["eps", "delta"],
               list(zip(eps_list, deltas)))
    return ["sweep.csv", "deltas.csv"], verdicts, _gp_edi("sweep.csv")


def _density_from_expr(expr, cells):
    x = (np.arange(cells) + 0.5) / cells
    from . import expressions as ex

    vals = ex.evaluate_array(ex.parse(expr), {"x": x})
    vals = np.broadcast_to(vals, x.shape).astype(np.float64, copy=True)
    if np.any(vals <= 0):
        raise ConfigError("wasserstein densities must be positive")
    return vals / (vals.sum() / cells)


def _run_metric(cfg, out, threads=1):
    mob, den = build_medium(cfg)
    if mob.dim != 1:
        raise ConfigError("the metric comparison kind runs on 1-d media")
    medium = media_mod.Medium(mob, den)
    rep = metrics_mod.gap_report(medium)
    x0, y0 = cfg.get("points", [0.0, 1.0])
    cells = cfg.get("cells", 256)
    w_cfg = cfg.get("wasserstein")
    topology = cfg.get("topology", "line")  # transport always runs on the line
    rows = []
    for eps in cfg["eps"]:
        d_eps = metrics_mod.d_eps_1d(mob, eps, x0, y0, topology=topology)
        d_gh = float(np.sqrt(rep.c_bar)) * abs(y0 - x0)
        d_b = metrics_mod.d_bar(rep.b_bar, x0, y0)
        if w_cfg is not None:
            rho0 = _density_from_expr(w_cfg["rho0"], cells)
            rho1 = _density_from_expr(w_cfg["rho1"], cells)
            w_eps = metrics_mod.wasserstein_1d(
                rho0, rho1, metrics_mod.TransportCost.from_eps(mob, eps))
            w_gh = metrics_mod.wasserstein_1d(
                rho0, rho1, metrics_mod.TransportCost.gromov_hausdorff(mob))
            w_bar = metrics_mod.wasserstein_1d(
                rho0, rho1, metrics_mod.TransportCost.induced(rep.b_bar))
        else:
            w_eps = w_gh = w_bar = 0.0
        rows.append((eps, rep.c_bar, rep.b_bar, rep.gap, d_eps, d_gh, d_b,
                     w_eps, w_gh, w_bar))
    _write_csv(os.path.join(out, "metric.csv"),
               ["eps", "C_bar", "B_bar", "gap", "d_eps", "d_gh", "d_bar",
                "W_eps", "W_gh", "W_bar"], rows)
    ordered = rep.c_bar <= rep.b_bar + 1e-12
    tri_ok = _triangle_spotcheck(mob, cfg.get("seed", 0), cells)
    verdicts = [
        ("metric_coefficient_order", rep.b_bar - rep.c_bar, 0.0, ordered),
        ("equality_flag_consistent", 1.0, 1.0,
         rep.equality == (abs(rep.gap) <= 1e-10)),
        ("wasserstein_triangle", 1.0 if tri_ok else 0.0, 1.0, tri_ok),
    ]
    return ["metric.csv"], verdicts, _gp_metric()


def _triangle_spotcheck(mob, seed, cells, triples=10):
    rng = np.random.default_rng(seed)
    cost = metrics_mod.TransportCost.from_eps(mob, 1 / 8)
    for _ in range(triples):
        rhos = []
        for _ in range(3):
            raw = rng.uniform(0.2, 2.0, size=cells)
            rhos.append(raw / (raw.sum() / cells))
        d01 = metrics_mod.wasserstein_1d(rhos[0], rhos[1], cost)
        d12 = metrics_mod.wasserstein_1d(rhos[1], rhos[2], cost)
        d02 = metrics_mod.wasserstein_1d(rhos[0], rhos[2], cost)
        if d02 > d01 + d12 + 1e-9:
            return False
    return True


def _run_gamma(cfg, out, threads=1):
    mob, den = build_medium(cfg)
    medium = media_mod.Medium(mob, den)
    data_cfg = cfg.get("data")
    if data_cfg is None:
        raise ConfigError("config field /data is required for the gamma kind")
    data = gamma_mod.PiecewiseAffine(data_cfg["breaks"], data_cfg["slopes"],
                                     base=data_cfg.get("base", 0.0))
    eff = cell_mod.effective_tensors(medium, ycells=cfg.get("ycells", 256))
    limit = gamma_mod.effective_energy(data, eff.flux_tensor()[0, 0])
    rows = []
    consts = []
    for eps in cfg["eps"]:
        rec = gamma_mod.build_recovery(data, medium, eps,
                                       d1=cfg.get("d1", 2.0), d2=cfg.get("d2", 4.0))
        cells = int(round(cfg.get("cells", 64) / eps))
        f_eps = gamma_mod.recovery_energy(rec, cells)
        rows.append((eps, f_eps, limit, abs(f_eps - limit)))
        consts.append(rec.gradient_bound_constant())
    _write_csv(os.path.join(out, "gamma.csv"),
               ["eps", "F_eps", "F_limit", "error"], rows)
    _write_csv(os.path.join(out, "gradient_bound.csv"), ["eps", "constant"],
               list(zip(cfg["eps"], consts)))
    errs = [r[3] for r in rows]
    dec = all(b < a for a, b in zip(errs, errs[1:]))
    cdec = all(b <= a * (1 + 1e-6) for a, b in zip(consts, consts[1:]))
    verdicts = [
        ("recovery_error_decreasing", 1.0 if dec else 0.0, 1.0, dec),
        ("gradient_bound_nonincreasing", 1.0 if cdec else 0.0, 1.0, cdec),
    ]
    return ["gamma.csv", "gradient_bound.csv"], verdicts, _gp_gamma()


def _run_checkerboard(cfg, out, threads=1):
    alpha = cfg["alpha"]
    beta = cfg["beta"]
    source = tuple(cfg.get("source", [0.0, 0.0]))
    target = tuple(cfg.get("target", [1.0, 1.0]))
    tol = cfg.get("geodesic_tolerance", 0.05)
    rows = []
    for eps in cfg["eps"]:
        grid = metrics_mod.GeodesicGrid2D(eps=eps, alpha=alpha, beta=beta, source=source)
        val = metrics_mod.checkerboard_geodesic(grid, target)
        limit = metrics_mod.finsler_limit(alpha, source, target)
        d_b = metrics_mod.d_bar(beta * np.eye(2), source, target)
        rows.append((eps, grid.spacing, val, limit, d_b))
    _write_csv(os.path.join(out, "checkerboard.csv"),
               ["eps", "spacing", "d_graph", "d_limit", "d_bar"], rows)
    finsler_regime = 2 * alpha < beta
    last = rows[-1]
    within = abs(last[2] - last[3]) <= tol * last[3]
    gap = last[4] > last[2]
    verdicts = [
        ("geodesic_near_limit", abs(last[2] - last[3]) / last[3], tol,
         within or not finsler_regime),
        ("averaged_tensor_strictly_larger", last[4] - last[2], 0.0,
         gap or not finsler_regime),
    ]
    return ["checkerboard.csv"], verdicts, _gp_checkerboard()


# --------------------------------------------------------- plot scripts --


def _gp_effective():
    return ('set datafile separator ","\nset key autotitle columnhead\n'
            'plot "effective.csv" using 1:2 with linespoints\n')


def _gp_solve(artifacts):
    first = next((a for a in artifacts if a.startswith("snapshot")), None)
    lines = ['set datafile separator ","', "set key autotitle columnhead"]
    if first:
        lines.append(f'plot "{first}" using 1:2 with lines, "{first}" using 1:3 with lines')
    lines.append('# diagnostics: plot "diagnostics.csv" using 1:4 with lines')
    return "\n".join(lines) + "\n"


def _gp_edi(csv_name):
    return ('set datafile separator ","\nset key autotitle columnhead\n'
            f'plot "{csv_name}" using 2:3 with linespoints, '
            f'"{csv_name}" using 2:6 with linespoints\n')


def _gp_metric():
    return ('set datafile separator ","\nset key autotitle columnhead\n'
            'set logscale x\nplot "metric.csv" using 1:5 with linespoints, '
            '"metric.csv" using 1:6 with lines, "metric.csv" using 1:7 with lines\n')


def _gp_gamma():
    return ('set datafile separator ","\nset key autotitle columnhead\n'
            'set logscale xy\nplot "gamma.csv" using 1:4 with linespoints\n')


def _gp_checkerboard():
    return ('set datafile separator ","\nset key autotitle columnhead\n'
            'set logscale x\nplot "checkerboard.csv" using 1:3 with linespoints, '
            '"checkerboard.csv" using 1:4 with lines, '
            '"checkerboard.csv" using 1:5 with lines\n')


# ---------------------------------------------------------------- run --


_RUNNERS = {
    "effective": lambda cfg, out, threads: _run_effective(cfg, out),
    "solve": lambda cfg, out, threads: _run_solve(cfg, out),
    "edi": _run_edi,
    "sweep": _run_sweep,
    "metric": _run_metric,
    "gamma": _run_gamma,
    "checkerboard": _run_checkerboard,
}

_REQUIRED_FIELDS = {
    "solve": ("medium", "initial", "eps", "cells", "dt", "T"),
    "effective": ("medium",),
    "edi": ("medium", "initial", "eps", "cells", "dt", "T"),
    "sweep": ("medium", "initial", "eps", "cells", "dt", "T"),
    "metric": ("medium", "eps"),
    "gamma": ("medium", "eps", "data"),
    "checkerboard": ("eps", "alpha", "beta"),
}

_NUMERICAL_ERRORS = (
    SolverError, QuadratureError, flow_mod.FlowError, cell_mod.CellProblemError,
    edi_mod.EDIError, gamma_mod.GammaError,
)


def run(config, out_dir=None, threads=None):
    """Execute the experiment described by `config` (path or dict).

    Artifacts land in the output directory; a manifest.json with checksums is
    written last.  Identical config and seed reproduce identical CSV bytes.
    """
    cfg = load_config(config)
    kind = cfg["kind"]
    for field_name in _REQUIRED_FIELDS[kind]:
        if field_name not in cfg:
            raise ConfigError(f"config field /{field_name} is required for kind {kind!r}")
    out = out_dir or cfg.get("out")
    if out is None:
        raise ConfigError("no output directory: set /out in the config or pass out_dir")
    os.makedirs(out, exist_ok=True)
    if threads is None:
        threads = int(os.environ.get("WGFH_THREADS", "1"))
    try:
        artifacts, verdicts, gp = _RUNNERS[kind](cfg, out, threads)
    except media_mod.MediumError as exc:
        raise ConfigError(f"medium setup failed: {exc}") from exc
    except _NUMERICAL_ERRORS as exc:
        raise NumericalFailure(str(exc)) from exc
    _write_csv(os.path.join(out, "verdicts.csv"),
               ["invariant", "value", "threshold", "pass"], verdicts)
    artifacts = artifacts + ["verdicts.csv"]
    with open(os.path.join(out, "plot.gp"), "w", encoding="utf-8") as fh:
        fh.write('# gnuplot script; run inside the output directory\n' + gp)
    artifacts.append("plot.gp")
    cfg_bytes = json.dumps(cfg, sort_keys=True).encode()
    entries = []
    for name in artifacts:
        p = os.path.join(out, name)
        entries.append((name, _sha256(p), os.path.getsize(p)))
    notes = None
    if kind == "metric":
        # the point metric honors the configured topology; transport always
        # couples densities on the line
        notes = {"point_metric_topology": cfg.get("topology", "line"),
                 "transport_topology": "line"}
    manifest = RunManifest(
        path=os.path.join(out, "manifest.json"),
        config_sha256=hashlib.sha256(cfg_bytes).hexdigest(),
        kind=kind,
        version=__version__,
        created_utc=time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime()),
        entries=entries,
        ok=all(v[3] for v in verdicts),
        notes=notes,
    )
    with open(manifest.path, "w", encoding="utf-8") as fh:
        json.dump(manifest.to_json(), fh, indent=2, sort_keys=True)
        fh.write("\n")
    return manifest


# -------------------------------------------------------------- report --


@dataclass
class ReportResult:
    ok: bool
    lines: list

    @property
    def text(self):
        return "\n".join(self.lines)


def _read_csv(path):
    with open(path, "r", encoding="utf-8") as fh:
        lines = [ln.strip() for ln in fh if ln.strip()]
    header = lines[0].split(",")
    rows = [ln.split(",") for ln in lines[1:]]
    return header, rows


def report(manifest_path):
    """Re-validate a run: artifact checksums, then the invariant columns of
    the emitted CSVs.  Returns a human-readable pass/fail summary."""
    try:
        with open(manifest_path, "r", encoding="utf-8") as fh:
            man = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read manifest {manifest_path}: {exc}") from exc
    base = os.path.dirname(os.path.abspath(manifest_path))
    if not man.get("artifacts"):
        raise ConfigError("manifest lists no artifacts")
    lines = []
    checks = []

    def check(name, ok, detail=""):
        checks.append(ok)
        mark = "PASS" if ok else "FAIL"
        lines.append(f"[{mark}] {name}" + (f": {detail}" if detail else ""))

    intact = set()
    for art in man["artifacts"]:
        p = os.path.join(base, art["path"])
        if not os.path.exists(p):
            check(f"artifact {art['path']} present", False, "missing file")
            continue
        ok = _sha256(p) == art["sha256"]
        check(f"artifact {art['path']} checksum", ok)
        if ok:
            intact.add(art["path"])
    # content re-checks only on artifacts whose bytes are intact
    if "verdicts.csv" in intact:
        _, rows = _read_csv(os.path.join(base, "verdicts.csv"))
        for name, value, threshold, passed in rows:
            check(f"invariant {name}", passed == "1",
                  f"value {value}, threshold {threshold}")
    for name in ("edi.csv", "sweep.csv"):
        if name in intact:
            header, rows = _read_csv(os.path.join(base, name))
            col = header.index("residual")
            worst = min(float(r[col]) for r in rows)
            check("energy-dissipation residual sign", worst >= -1e-8,
                  f"min residual {worst:.3e}")
    if "metric.csv" in intact:
        header, rows = _read_csv(os.path.join(base, "metric.csv"))
        ic, ib = header.index("C_bar"), header.index("B_bar")
        ok = all(float(r[ic]) <= float(r[ib]) + 1e-12 for r in rows)
        check("metric coefficient order C_bar <= B_bar", ok)
    n_ok = sum(checks)
    lines.append(f"{'PASS' if all(checks) else 'FAIL'} {n_ok}/{len(checks)}")
    return ReportResult(ok=all(checks), lines=lines)
