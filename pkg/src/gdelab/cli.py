"""``gde-lab <scenario> --config <path> [--out <dir>] [--seed N]``.

Exit codes: 0 every check passed, 1 a check failed or a numerical error
stopped the run (the report is still written), 2 the config is invalid
(nothing is written).  Random matrices come from
``numpy.random.default_rng(seed)`` (PCG64), one stream per run.
"""

from __future__ import annotations

import argparse
import configparser
import csv
import json
import os
import sys
import time

import numpy as np

from . import __version__
from . import bound_states as bs
from . import config as cfgmod
from . import dynamical_shift as ds
from . import gde_energy as ge
from . import gde_time as gt
from .errors import ConfigInvalid, GDEError
from .interactions import (InteractionModel, random_hermitian, read_kernel_csv,
                           total_hamiltonian)
from .state_space import FreeBasis, ZContour

REPORT_SCHEMA = "gdelab.report/1"


class Run:
    """Collects checks, results and written files for one scenario."""

    def __init__(self, cfg, out_dir):
        self.cfg = cfg
        self.out_dir = out_dir
        self.checks = []
        self.results = {}
        self.files = []
        self.rng = np.random.default_rng(cfg.seed)

    def check(self, name, value, tol, mode="max"):
        value = float(value)
        if mode == "max":
            ok = value <= tol
        elif mode == "min":
            ok = value >= tol
        else:
            lo, hi = tol
            ok = lo <= value <= hi
        self.checks.append({"name": name, "value": value,
                            "tolerance": list(tol) if mode == "range" else float(tol),
                            "mode": mode, "passed": bool(ok and np.isfinite(value))})

    def flag(self, name, ok):
        self.checks.append({"name": name, "value": bool(ok), "tolerance": True,
                            "mode": "flag", "passed": bool(ok)})

    def tol(self, key):
        return self.cfg.tolerances[key]

    def write_csv(self, name, header, rows):
        path = os.path.join(self.out_dir, name)
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(header)
            for r in rows:
                w.writerow([_fmt(x) for x in r])
        self.files.append(name)
        return path


def _fmt(x):
    if isinstance(x, (bool, np.bool_)):
        return str(bool(x))
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    return str(x)


# ---------------------------------------------------------------- builders

def build_basis(run):
    return FreeBasis(cfgmod.basis_energies(run.cfg, run.rng))


def build_model(run, basis):
    cfg = run.cfg
    kind = cfg.get("interaction", "kind")
    if kind == "instantaneous":
        return InteractionModel.instantaneous(cfgmod.parse_matrix(cfg.get("interaction", "matrix")))
    if kind == "random":
        frac = cfg.number("interaction", "norm_fraction", 0.3)
        return InteractionModel.instantaneous(
            random_hermitian(run.rng, basis.dimension, frac * basis.min_gap()))
    if kind == "separable_exponential":
        phi = np.array(cfgmod.parse_list(cfg.get("interaction", "form_vector")), dtype=complex)
        return InteractionModel.separable(cfg.number("interaction", "coupling"),
                                          phi / np.linalg.norm(phi),
                                          cfg.number("interaction", "duration", 0.0))
    return read_kernel_csv(cfg.get("interaction", "kernel_csv"))


def build_contour(run, basis):
    cfg = run.cfg
    return ZContour.standard(basis, start_radius=cfg.number("solver", "start_radius"),
                             imag_offset=cfg.number("solver", "imag_offset"),
                             n_points=cfg.integer("solver", "n_points", 50))


def build_settings(run):
    cfg = run.cfg
    kw = {"seed": cfg.get("solver", "seed_rule", "born")}
    if cfg.get("solver", "rtol") is not None:
        kw["rtol"] = cfg.number("solver", "rtol")
    return ge.SolverSettings(**kw)


def _rel(a, b):
    nb = np.linalg.norm(b)
    return float(np.linalg.norm(a - b) / nb) if nb > 0 else float(np.linalg.norm(a))


# --------------------------------------------------------------- scenarios

def scenario_equivalence(run):
    cfg = run.cfg
    n_models = cfg.integer("run", "models", 1)
    if cfg.get("interaction", "kind") == "instantaneous":
        n_models = 1
    rows, per_point = [], []
    worst_t = worst_res = worst_pole = 0.0
    for k in range(n_models):
        basis = build_basis(run)
        model = build_model(run, basis)
        contour = build_contour(run, basis)
        sol = ge.solve_t_ode(model, basis, contour, build_settings(run))
        devs, residuals = [], []
        for i, z in enumerate(contour.sample_points):
            ls = ge.lippmann_schwinger_oracle(model.h_matrix, basis, z)
            devs.append(_rel(sol.samples[i], ls))
            if 0 < i < len(contour) - 1:
                residuals.append(ge.dt_dz_residual(sol, z))
            if k == 0:
                per_point.append((z.real, z.imag, devs[-1], residuals[-1] if residuals and i > 0 else ""))
        exact = np.linalg.eigvalsh(total_hamiltonian(model, basis))
        pole_err = 0.0
        for n in basis.labels:
            pole = bs.analyse_level(bs.extract_channel(sol, basis, n), basis, n, check_residue=False)
            pole_err = max(pole_err, abs(pole.energy - exact[n]))
        rows.append((k, basis.dimension, max(devs), max(residuals), pole_err))
        worst_t = max(worst_t, max(devs))
        worst_res = max(worst_res, max(residuals))
        worst_pole = max(worst_pole, pole_err)
    run.write_csv("equivalence.csv", ["model", "dimension", "max_rel_dev", "max_residual",
                                      "max_pole_error"], rows)
    run.write_csv("contour_deviation.csv", ["re_z", "im_z", "rel_dev", "residual"], per_point)
    run.results.update(models=n_models, max_deviation=worst_t, max_residual=worst_res,
                       max_pole_error=worst_pole)
    run.check("t_relative_deviation", worst_t, run.tol("t_relative"))
    run.check("dt_dz_residual", worst_res, run.tol("residual"))
    run.check("pole_vs_eigenvalue", worst_pole, run.tol("pole_absolute"))


def scenario_bound_state(run):
    cfg = run.cfg
    basis = build_basis(run)
    model = build_model(run, basis)
    contour = build_contour(run, basis)
    settings = build_settings(run)
    sol = ge.solve_t_ode(model, basis, contour, settings)
    levels = [int(x) for x in cfgmod.parse_list(cfg.get("run", "levels", "0"))]
    broadening = tuple(cfgmod.parse_list(cfg.get("time", "broadening", "")))
    exact = None
    if model.is_local:
        exact = np.linalg.eigvals(total_hamiltonian(model, basis))
    rows, poles = [], []
    for n in levels:
        ch = bs.extract_channel(sol, basis, n)
        direct = bs.solve_channel_ode(model, basis, n, contour, settings)
        agree = max(float(np.abs(ch.c_samples - direct.c_samples).max()),
                    float(np.abs(ch.m_samples - direct.m_samples).max()))
        pole = bs.analyse_level(ch, basis, n, broadening=broadening)
        poles.append(pole.to_dict())
        e = complex(pole.energy)
        rows.append((n, e.real, e.imag, pole.width, complex(pole.c0).real, complex(pole.c0).imag,
                     pole.residue_defect, pole.diagnostics["overlap"], agree))
        run.check(f"pole_equation[{n}]", pole.diagnostics["pole_residual"],
                  run.tol("pole_equation") * basis.span)
        run.check(f"normalization[{n}]", abs(pole.diagnostics["overlap"] - 1.0), run.tol("overlap"))
        run.check(f"channel_agreement[{n}]", agree, run.tol("channel_agreement"))
        if not broadening:
            run.check(f"residue[{n}]", pole.residue_defect, run.tol("residue"))
        if exact is not None and not broadening:
            run.check(f"pole_vs_eigenvalue[{n}]", float(np.abs(exact - e).min()),
                      run.tol("pole_absolute"))
    run.results["poles"] = poles
    run.write_csv("poles.csv", ["label", "re_energy", "im_energy", "width", "re_c0", "im_c0",
                                "residue_defect", "overlap", "channel_agreement"], rows)


def scenario_evolve(run):
    cfg = run.cfg
    basis = build_basis(run)
    model = build_model(run, basis)
    t_max = cfg.number("time", "t_max", 10.0)
    step = cfg.number("time", "step", 1e-2)
    zb = _boundary_point(run)
    defects = []
    first = None
    for h in (step, step / 2):
        kernel = gt.propagate_kernel(gt.seed_kernel(model, gt.TimeGrid(0.0, t_max, h), basis, zb))
        ev = gt.assemble_evolution(kernel)
        defects.append(ev.max_defect())
        first = first or (ev, kernel)
    ev, kernel = first
    path = os.path.join(run.out_dir, "evolution.csv")
    ev.to_csv(path)
    run.files.append("evolution.csv")
    ratio = defects[0] / defects[1] if defects[1] > 0 else float("inf")
    run.results.update(unitarity_defect=defects[0], unitarity_defect_half=defects[1],
                       order_ratio=ratio, relation_defect=max(kernel.relation_defect.values(),
                                                              default=0.0))
    run.check("unitarity", defects[0], run.tol("unitarity"))
    run.check("order_ratio", ratio, (run.tol("order_low"), run.tol("order_high")), "range")


def _boundary_point(run):
    r = run.cfg.number("solver", "start_radius")
    return None if r is None else 1j * r


def scenario_crosscheck(run):
    cfg = run.cfg
    basis = build_basis(run)
    model = build_model(run, basis)
    t_max = cfg.number("time", "t_max", 10.0)
    step = cfg.number("time", "step", 1e-2)
    zb = _boundary_point(run)
    kernel = gt.propagate_kernel(gt.seed_kernel(model, gt.TimeGrid(0.0, t_max, step), basis, zb))
    if zb is None:
        zb = ZContour.standard(basis).boundary_point
    rows, worst = [], 0.0
    for z in cfgmod.parse_complex_list(cfg.get("time", "z_points", "2+2j")):
        t_time = gt.laplace_crosscheck(kernel, z)
        t_energy = ge.t_at(model, basis, z, zb, build_settings(run))
        dev = _rel(t_time, t_energy)
        worst = max(worst, dev)
        rows.append((z.real, z.imag, dev))
    run.write_csv("crosscheck.csv", ["re_z", "im_z", "rel_dev"], rows)
    run.results["max_deviation"] = worst
    run.check("laplace_vs_energy", worst, run.tol("laplace"))


def _self_energy(run, family):
    cfg = run.cfg
    fam = cfg.get("self_energy", "family", family)
    cutoff = cfg.number("self_energy", "cutoff", 20.0) if fam == "regulated" else None
    return ds.SelfEnergyModel(cfg.number("self_energy", "alpha", 1 / 137.036),
                              cfg.number("self_energy", "mass", 1.0), fam, cutoff)


def scenario_shift(run):
    model = _self_energy(run, "regulated")
    e0 = run.cfg.number("self_energy", "e0", 0.5)
    rep = ds.scaling_report(model, e0)
    run.results["shift"] = rep.to_dict()
    path = os.path.join(run.out_dir, "shift.json")
    rep.to_json(path)
    run.files.append("shift.json")
    run.write_csv("cutoff_spread.csv", ["cutoff", "re_a0", "im_a0"],
                  [(k, complex(v).real, complex(v).imag) for k, v in rep.a0_spread.items()
                   if v is not None])
    run.check("window_stability", rep.doubling_change, run.tol("window_stability"))
    run.check("pole_sum_agreement", abs(rep.deltaD - rep.pole_sum) / max(abs(rep.pole_sum), 1e-300),
              run.tol("pole_sum"))
    if rep.derivative_ratio is not None:
        run.check("derivative_identity", abs(rep.derivative_ratio - 1.0),
                  run.tol("derivative_identity"))


def scenario_divergence(run):
    cfg = run.cfg
    model = _self_energy(run, "asymptotic")
    e0 = cfg.number("self_energy", "e0", 0.5)
    windows = cfg.numbers("self_energy", "windows")
    if windows is not None:
        windows = [w * model.mass for w in windows]
    rec = ds.divergence_demo(model, e0, windows)
    rec.to_csv(os.path.join(run.out_dir, "divergence.csv"))
    run.files.append("divergence.csv")
    run.results["divergence"] = rec.to_dict()
    run.flag("partials_increasing", rec.increasing)
    run.flag("increments_nondecreasing", rec.increments_ok)
    run.check("log_sq_correlation", rec.log_sq_correlation, run.tol("log_sq_correlation"), "min")
    reg = ds.SelfEnergyModel(model.alpha, model.mass, "regulated",
                             cfg.number("self_energy", "cutoff", 20.0))
    try:
        det = ds.dynamical_shift_contour(reg, e0, details=True)
        run.results["regulated"] = {"value": [det.value.real, det.value.imag],
                                    "window": det.window, "doubling_change": det.doubling_change}
        run.flag("regulated_converges", True)
    except GDEError as exc:
        run.results["regulated"] = {"error": str(exc)}
        run.flag("regulated_converges", False)


SCENARIO_FUNCS = {
    "equivalence": scenario_equivalence,
    "bound-state": scenario_bound_state,
    "evolve": scenario_evolve,
    "shift": scenario_shift,
    "divergence": scenario_divergence,
    "crosscheck": scenario_crosscheck,
}


def _clean(x):
    if isinstance(x, dict):
        return {str(k): _clean(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_clean(v) for v in x]
    if isinstance(x, (np.bool_, bool)):
        return bool(x)
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (float, np.floating)):
        x = float(x)
        return x if np.isfinite(x) else None
    if isinstance(x, complex):
        return [_clean(x.real), _clean(x.imag)]
    return x


def run(cfg, out_dir):
    """Validate, execute and report.  Returns the exit code."""
    problems = cfgmod.validate(cfg)
    if problems:
        raise ConfigInvalid(problems)
    os.makedirs(out_dir, exist_ok=True)
    r = Run(cfg, out_dir)
    start = time.perf_counter()
    error = None
    try:
        SCENARIO_FUNCS[cfg.scenario](r)
    except GDEError as exc:
        error = f"{type(exc).__module__}.{type(exc).__name__}: {exc}"
    passed = error is None and all(c["passed"] for c in r.checks)
    report = {
        "schema": REPORT_SCHEMA,
        "version": __version__,
        "scenario": cfg.scenario,
        "config": cfg.echo(),
        "checks": r.checks,
        "results": r.results,
        "error": error,
        "passed": passed,
        "artifacts": sorted(r.files + ["report.json"]),
        "wall_clock_s": time.perf_counter() - start,
    }
    with open(os.path.join(out_dir, "report.json"), "w") as fh:
        json.dump(_clean(report), fh, indent=2, sort_keys=True)
    return 0 if passed else 1


def main(argv=None):
    p = argparse.ArgumentParser(prog="gde-lab", description="Scenario runner for the GDE toolkit.")
    p.add_argument("scenario", choices=cfgmod.SCENARIOS)
    p.add_argument("--config", required=True, help="INI scenario config")
    p.add_argument("--out", default="gde-lab-out", help="output directory")
    p.add_argument("--seed", type=int, default=None, help="override [run] seed")
    args = p.parse_args(argv)
    try:
        cfg = cfgmod.load(args.config, args.scenario, args.seed)
        code = run(cfg, args.out)
    except ConfigInvalid as exc:
        for v in exc.violations:
            print(f"config: {v}", file=sys.stderr)
        return 2
    except (OSError, configparser.Error) as exc:
        print(f"config: {exc}", file=sys.stderr)
        return 2
    status = "PASS" if code == 0 else "FAIL"
    print(f"{args.scenario}: {status} (report in {os.path.join(args.out, 'report.json')})")
    return code


if __name__ == "__main__":
    sys.exit(main())
