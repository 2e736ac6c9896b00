"""Command-line orchestration: ``ptlab {simulate,lawcheck,mde-probe,dos,plot}``.

Exit status is 0 when every acceptance-tagged check passes, 1 when one
fails and 2 for invalid input or an inadmissible reference energy.
"""
from __future__ import annotations

import argparse
import csv
import datetime as _dt
import json
import platform
import sys
from pathlib import Path

import numpy as np
import scipy

from . import __version__
from . import config as cfgmod
from .dynamics import TimeGrid, heisenberg_series, monte_carlo_perturbed, plateau_value, realization_seeds, write_series_csv
from .lawcheck import fixed_k_surrogate, residual_sweep, scaling_exponent_fit, summary, write_samples_csv, write_summary_json
from .mde import solve_mde
from .models import (
    build_localized_state,
    build_observable,
    custom_model,
    free_fermion_model,
    nnn_density,
    nnn_model,
    nnn_spectrum,
)
from .plotting import PlotSpec, emit_plot
from .spectra import Eigensystem, dos_estimate, eigendecompose, overlaps
from .theory import pretherm_gap, predict, rate_constants


class AdmissibilityError(RuntimeError):
    pass


def _check(name: str, passed: bool, value, threshold, acceptance: bool = True) -> dict:
    return {"name": name, "acceptance": acceptance, "pass": bool(passed), "value": value, "threshold": threshold}


def _versions() -> dict:
    return {"ptlab": __version__, "numpy": np.__version__, "scipy": scipy.__version__, "python": platform.python_version()}


def _json(path: Path, data) -> None:
    path.write_text(json.dumps(data, indent=2, sort_keys=True, default=float) + "\n")


def build_model(cfg):
    if cfg.model == "nnn":
        return nnn_model(cfg.size)
    if cfg.model == "free-fermion":
        return free_fermion_model(cfg.size)
    return custom_model(cfg.path)


def sector_mask(cfg, model):
    """Basis-state mask selected by ``[state] sector`` (``none`` for no restriction)."""
    sec = cfg.state_sector.strip().lower()
    if sec == "none" or model.sectors is None:
        return None
    if model.kind == "nnn":
        if sec not in ("even", "odd"):
            raise ValueError("nnn state sector must be even, odd or none")
        return model.sectors == (0 if sec == "even" else 1)
    return model.sectors == int(sec)


def default_index(eig: Eigensystem, window, mask) -> int:
    """In-window eigenvalue index closest to ``E0`` whose vector lies in the sector."""
    idx = np.flatnonzero(window.contains(eig.values))
    if mask is not None:
        U = eig.require_vectors()
        idx = idx[np.sum(np.abs(U[mask][:, idx]) ** 2, axis=0) > 1e-8]
    if idx.size == 0:
        raise ValueError("no eigenvalue of H0 in the window and sector")
    return int(idx[np.argmin(np.abs(eig.values[idx] - window.E0))])


def prepare(cfg):
    """Model, eigensystem, state, observable and density estimate for a config."""
    model = build_model(cfg)
    window = cfg.window()
    eig0 = eigendecompose(model.H0, sectors=model.sectors)
    dos = dos_estimate(eig0, window)
    if not dos.admissible:
        raise AdmissibilityError(f"E0={cfg.E0} is not admissible: {dos.diagnostic}")
    rho0 = float(nnn_density(np.array([cfg.E0]))[0]) if cfg.rho0_source == "analytic" else dos.rho0_at_E0
    mask = sector_mask(cfg, model)
    index = cfg.state_index if cfg.state_index >= 0 else default_index(eig0, window, mask)
    state = build_localized_state(eig0, window, cfg.state_kind, index=index, width=cfg.state_width, sector=mask)
    A = build_observable(
        model, eig0, cfg.observable_kind,
        f=cfgmod.ENERGY_FUNCTIONS[cfg.observable_function], seed=cfg.observable_seed, n=cfg.observable_n,
    )
    return model, eig0, window, dos, rho0, state, A


def time_grid(cfg) -> TimeGrid:
    if cfg.lam > 0:
        return TimeGrid.default(cfg.lam, cfg.T_min, cfg.T_max, cfg.points)
    ref = TimeGrid.default(cfg.reference_lambda, cfg.T_min, cfg.T_max, cfg.points)
    return TimeGrid(ref.times, 0.0)


def fitted_rate(grid: TimeGrid, mean, target: float, T_range) -> float:
    """Decay rate in ``t`` of ``|mean - target|`` from a log-linear fit over ``T_range``."""
    T = grid.kinetic
    sel = (T >= T_range[0]) & (T <= T_range[1])
    dev = np.abs(np.asarray(mean)[sel] - target)
    if sel.sum() < 2 or np.any(dev <= 0):
        return float("nan")
    return float(-np.polyfit(grid.times[sel], np.log(dev), 1)[0])


def run_prethermalization(cfg, out_dir=None, svg: bool = False, per_seed: bool = False) -> dict:
    """Exact ensemble, unperturbed series, predictions and plateau report."""
    out = Path(out_dir or cfg.output)
    out.mkdir(parents=True, exist_ok=True)
    model, eig0, window, dos, rho0, state, A = prepare(cfg)
    grid = time_grid(cfg)
    A_dyn = np.diag(A).copy() if np.count_nonzero(A - np.diag(np.diag(A))) == 0 else A
    unperturbed = heisenberg_series(eig0, state, A_dyn, grid)
    ens = monte_carlo_perturbed(model.H0, state, A_dyn, cfg.lam, cfg.wigner(model.dim), cfg.n_realizations, grid)

    ens.to_csv(out / "ensemble.csv")
    write_series_csv(out / "unperturbed.csv", grid, unperturbed.values, np.zeros(grid.times.size), 1)
    if per_seed:
        for seed, row in zip(ens.seeds, ens.series):
            write_series_csv(out / f"series_{seed}.csv", grid, row, np.zeros(row.size), 1)

    T_plot = grid.kinetic if cfg.lam > 0 else cfg.reference_lambda**2 * grid.times
    plot_grid = TimeGrid(grid.times, cfg.lam if cfg.lam > 0 else cfg.reference_lambda)
    checks = []
    report = {
        "lambda": cfg.lam,
        "N": model.dim,
        "rho0": rho0,
        "rho0_source": cfg.rho0_source,
        "dos": dos.to_json_dict(),
        "seeds": list(ens.seeds),
        "versions": _versions(),
        "state_rank": state.rank,
    }
    A_pre = plateau_value(plot_grid, unperturbed.values, cfg.pre_range)
    early = plateau_value(plot_grid, ens.mean, cfg.pre_range)
    late = plateau_value(plot_grid, ens.mean, cfg.late_range)
    report.update(prethermal_value=A_pre, early_plateau=early, late_plateau=late)

    guides = [("pre", A_pre)]
    if cfg.lam == 0:
        dev = float(np.max(np.abs(ens.mean - unperturbed.values)))
        report["no_relaxation"] = True
        checks.append(_check("exact_equals_unperturbed", dev <= 1e-10, dev, 1e-10))
    else:
        report["no_relaxation"] = False
        rc = rate_constants(rho0, cfg.lam)
        bundle = predict(eig0, A, state, rc, grid, unperturbed, cfg.E0, cfg.rho0_source)
        bundle.extra.update(seeds=list(ens.seeds), versions=_versions(), N=model.dim)
        bundle.to_csv(out / "predictions.csv")
        bundle.to_json(out / "predictions.json")
        gap = pretherm_gap(A_pre, bundle.tilde_P)
        report.update(alpha=rc.alpha, r=bundle.r, tilde_P=bundle.tilde_P, mc=bundle.mc, pretherm_gap=gap)
        guides.append(("terminal", bundle.tilde_P))
        if cfg.plateau_checks:
            checks.append(_check("prethermal_plateau", abs(early - A_pre) <= cfg.pre_tol, abs(early - A_pre), cfg.pre_tol))
            checks.append(_check("terminal_plateau", abs(late - bundle.tilde_P) <= cfg.late_tol, abs(late - bundle.tilde_P), cfg.late_tol))
            checks.append(_check("pretherm_gap", gap >= cfg.gap_threshold, gap, cfg.gap_threshold, acceptance=False))
        if cfg.rate_check:
            ratio = fitted_rate(grid, ens.mean, bundle.tilde_P, cfg.rate_range) / rc.rate
            checks.append(_check("golden_rule_rate", abs(ratio - 1) <= cfg.rate_tol, ratio, [1 - cfg.rate_tol, 1 + cfg.rate_tol]))
        if cfg.rhs_check:
            sel = (grid.kinetic >= cfg.rhs_range[0]) & (grid.kinetic <= cfg.rhs_range[1])
            sup = float(np.max(np.abs(ens.mean[sel] - bundle.relax_rhs[sel])))
            checks.append(_check("relaxation_formula", sup <= cfg.rhs_tol, sup, cfg.rhs_tol))
    report["checks"] = checks
    report["pass"] = all(c["pass"] for c in checks if c["acceptance"])
    _json(out / "report.json", report)
    (out / "config.ini").write_text(cfgmod.dump(cfg))
    _json(out / "metadata.json", {"created": _dt.datetime.now(_dt.timezone.utc).isoformat(), "versions": _versions()})

    if svg:
        with open(out / "plot.csv", "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["t", "T", "mean", "unperturbed"])
            for row in zip(grid.times, T_plot, ens.mean, unperturbed.values):
                w.writerow([repr(float(v)) for v in row])
        emit_plot(out / "plot.csv", PlotSpec(x="T", y=("mean", "unperturbed"), guides=tuple(guides), title="ensemble mean"), out / "plot.svg")
    return report


def run_lawcheck(cfg, out_dir=None) -> dict:
    """Two-resolvent and single-resolvent residuals across system sizes."""
    out = Path(out_dir or cfg.output)
    out.mkdir(parents=True, exist_ok=True)
    stress = (complex(cfg.z1.real, 0.5 * np.sign(cfg.z1.imag)), complex(cfg.z2.real, 0.5 * np.sign(cfg.z2.imag)))
    main_pair = (cfg.z1, cfg.z2)
    samples, inclusion = [], {}
    for N in cfg.sizes:
        model = build_model(cfg.replace(size=N))
        eig0 = eigendecompose(model.H0)
        e = np.zeros(model.dim)
        e[0] = 1.0
        seeds = realization_seeds(cfg.master_seed + N, cfg.seeds)
        s, inc = residual_sweep(
            eig0, cfg.lam, [main_pair, stress], [cfg.z1], np.eye(model.dim), e, e, seeds,
            wigner=cfg.wigner(model.dim), H0=model.H0, epsilon=cfg.epsilon,
        )
        samples += s
        inclusion[str(N)] = float(np.mean([ok for _, ok, _ in inc]))
    write_samples_csv(out / "residuals.csv", samples)

    main = [s for s in samples if s.kind == "two-resolvent" and s.z1 == main_pair[0] and s.z2 == main_pair[1]]
    degenerate = max(s.residual for s in main) <= 1e-8
    checks, fit, sur = [], None, None
    if degenerate:
        checks.append(_check("degenerate_residuals", True, max(s.residual for s in main), 1e-8))
    else:
        fit = scaling_exponent_fit(main)
        sur = fixed_k_surrogate(main)
        lo, hi = cfg.slope_range
        checks.append(_check("two_resolvent_slope", lo <= fit.slope <= hi, fit.slope, [lo, hi]))
        checks.append(_check("fixed_k_surrogate", sur["pass"], sur["K"], sur["delta"], acceptance=False))
    data = summary(main, fit, sur, degenerate)
    data.update(
        checks=checks,
        spectrum_inclusion_pass_rate=inclusion,
        stress_medians=summary([s for s in samples if s.kind == "two-resolvent" and s.z1 == stress[0]], None, None)["medians"],
        single_medians=summary([s for s in samples if s.kind == "single-resolvent"], None, None)["medians"],
        versions=_versions(),
    )
    data["pass"] = all(c["pass"] for c in checks if c["acceptance"])
    write_summary_json(out / "lawcheck_summary.json", data)
    _json(out / "metadata.json", {"created": _dt.datetime.now(_dt.timezone.utc).isoformat(), "versions": _versions()})
    return data


def run_mde_probe(cfg, stream=None, out_dir=None) -> list:
    if cfg.model == "nnn":
        mu = nnn_spectrum(cfg.size)
    else:
        mu = eigendecompose(build_model(cfg).H0, check=False).values
    rows = []
    for lam in cfg.lambdas:
        for im in cfg.im_values:
            for re in np.linspace(cfg.re_min, cfg.re_max, cfg.re_points):
                sol = solve_mde(mu, complex(re, im), lam)
                rows.append([re, im, lam, sol.m.real, sol.m.imag, sol.residual, sol.iterations])
    header = ["rez", "imz", "lambda", "rem", "imm", "residual", "iterations"]
    w = csv.writer(stream or sys.stdout, lineterminator="\n")
    w.writerow(header)
    w.writerows([[repr(float(v)) for v in r[:-1]] + [r[-1]] for r in rows])
    if out_dir is not None:
        Path(out_dir).mkdir(parents=True, exist_ok=True)
        with open(Path(out_dir) / "mde_probe.csv", "w", newline="") as fh:
            wf = csv.writer(fh, lineterminator="\n")
            wf.writerow(header)
            wf.writerows([[repr(float(v)) for v in r[:-1]] + [r[-1]] for r in rows])
    return rows


def run_dos(cfg, out_dir=None):
    if cfg.model == "nnn":
        eig = Eigensystem.from_values(nnn_spectrum(cfg.size))
    else:
        eig = eigendecompose(build_model(cfg).H0, check=False)
    est = dos_estimate(eig, cfg.window())
    data = {**est.to_json_dict(), "diagnostic": est.diagnostic}
    if cfg.model == "nnn":
        data["rho0_closed_form"] = float(nnn_density(np.array([cfg.E0]))[0])
    if out_dir is not None:
        Path(out_dir).mkdir(parents=True, exist_ok=True)
        _json(Path(out_dir) / "dos.json", data)
    return data


def _parse_guides(items) -> tuple:
    guides = []
    for item in items or []:
        label, _, value = item.partition("=")
        guides.append((label, float(value)))
    return tuple(guides)


def make_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="ptlab", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)
    for name in ("simulate", "lawcheck", "mde-probe", "dos"):
        sp = sub.add_parser(name)
        sp.add_argument("--config", type=Path, help="INI experiment config (defaults used when omitted)")
        sp.add_argument("--seed", type=int, help="master seed (unsigned 64-bit)")
        sp.add_argument("--out", type=Path, help="output directory")
        sp.add_argument("--realizations", type=int, help="Wigner realizations (seeds per N for lawcheck)")
        if name == "simulate":
            sp.add_argument("--svg", action="store_true", help="also write plot.svg")
            sp.add_argument("--per-seed", action="store_true", help="write one CSV per realization")
    pp = sub.add_parser("plot")
    pp.add_argument("csv", type=Path)
    pp.add_argument("--out", type=Path, required=True, help="SVG file to write")
    pp.add_argument("--x", default="T")
    pp.add_argument("--y", default="mean", help="comma-separated columns")
    pp.add_argument("--guide", action="append", help="horizontal guide LABEL=VALUE (repeatable)")
    pp.add_argument("--linear", action="store_true", help="linear instead of logarithmic x axis")
    pp.add_argument("--svg", action="store_true", help=argparse.SUPPRESS)
    return p


def _config_from_args(args):
    cfg = cfgmod.load(args.config) if args.config else cfgmod.ExperimentConfig()
    over = {}
    if args.seed is not None:
        over["master_seed"] = args.seed
    if args.out is not None:
        over["output"] = str(args.out)
    if args.realizations is not None:
        over["n_realizations" if args.command != "lawcheck" else "seeds"] = args.realizations
    return cfg.replace(**over) if over else cfg


def main(argv=None) -> int:
    args = make_parser().parse_args(argv)
    try:
        if args.command == "plot":
            spec = PlotSpec(x=args.x, y=tuple(args.y.split(",")), guides=_parse_guides(args.guide), log_x=not args.linear)
            emit_plot(args.csv, spec, args.out)
            return 0
        cfg = _config_from_args(args)
        if args.command == "simulate":
            report = run_prethermalization(cfg, svg=args.svg, per_seed=args.per_seed)
            for c in report["checks"]:
                tag = "acceptance" if c["acceptance"] else "diagnostic"
                print(f"{'PASS' if c['pass'] else 'FAIL'} [{tag}] {c['name']}: value={c['value']} threshold={c['threshold']}")
            return 0 if report["pass"] else 1
        if args.command == "lawcheck":
            data = run_lawcheck(cfg)
            for c in data["checks"]:
                tag = "acceptance" if c["acceptance"] else "diagnostic"
                print(f"{'PASS' if c['pass'] else 'FAIL'} [{tag}] {c['name']}: value={c['value']} threshold={c['threshold']}")
            return 0 if data["pass"] else 1
        if args.command == "mde-probe":
            run_mde_probe(cfg, out_dir=args.out)
            return 0
        if args.command == "dos":
            print(json.dumps(run_dos(cfg, out_dir=args.out), indent=2, sort_keys=True))
            return 0
    except AdmissibilityError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 2


if __name__ == "__main__":
    sys.exit(main())
