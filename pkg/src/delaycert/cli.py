"""Command-line front end: ``delaycert {certify,sweep,simulate,selftest}``.

Exit codes: 0 success, 1 usage or config error, 2 infeasible at the
requested tolerance, 3 numerical failure (solver or divergence).
"""

import argparse
import concurrent.futures
import logging
import math
import os
import sys

import numpy as np

from . import config as cfgmod
from . import dde, lmi, oracle, pde
from .linalg import place_poles, realify
from .exceptions import DelayCertError, DivergenceError, IndeterminateError
from .ledger import ResultRecord, append_record

log = logging.getLogger("delaycert")

EXIT_OK, EXIT_USAGE, EXIT_INFEASIBLE, EXIT_NUMERICAL = 0, 1, 2, 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


# --------------------------------------------------------------------------
# system assembly


class Setup:
    """Everything derived from the config that the commands need."""

    def __init__(self, cfg, kappa=None, tol=None):
        self.cfg = cfg
        cert = cfg["certification"]
        self.D0 = float(cert["D0"])
        self.kappa = float(cert["kappa"] if kappa is None else kappa)
        self.tol = float(cert["tol"] if tol is None else tol)
        self.eps_pd = float(cert["eps_pd"])
        self.mu_grid = cert.get("mu_grid")
        sysc = cfg["system"]
        self.kind = sysc["kind"]
        self.spectral = None
        self.rd = None
        if self.kind == "lti":
            self.A = cfgmod.to_array(sysc["A"])
            self.B = cfgmod.to_array(sysc["B"])
        elif self.kind == "reaction_diffusion":
            self.rd = pde.ReactionDiffusionConfig(sysc.get("a", 0.5), sysc.get("c", 0.5),
                                                  sysc.get("L", 2 * math.pi))
            self.spectral = pde.reaction_diffusion_system(self.rd, sysc.get("N0", 3),
                                                          sysc.get("N_sim", 10))
        else:
            self.spectral = pde.SpectralSystem(
                cfgmod.to_array(sysc["eigenvalues"], 1), cfgmod.to_array(sysc["input_coeffs"]),
                sysc["N0"], tuple(sysc.get("riesz_bounds", (1.0, 1.0))))
        if self.spectral is not None:
            self.A, self.B = self.spectral.truncated()
        if "K" in sysc:
            self.K = cfgmod.to_array(sysc["K"])
        else:
            poles = cfgmod.to_array(sysc["poles"], 1) if "poles" in sysc else None
            if poles is None and self.spectral is None:
                raise cfgmod.ConfigError("system: give either K or poles")
            if poles is None:
                poles = pde.DEFAULT_POLES
            self.K = place_poles(self.A, self.B, poles)

    @property
    def is_pde(self):
        return self.spectral is not None

    def problem(self, D0=None):
        return lmi.build_problem(self.A, self.B, self.K, self.D0 if D0 is None else D0,
                                 self.kappa, self.eps_pd)


def _delay(cfg, D0):
    d = cfg.get("delay", {"kind": "constant"})
    kind = d["kind"]
    if kind == "constant":
        return dde.DelaySignal.constant(D0)
    if kind == "sinusoid":
        return dde.DelaySignal.sinusoid(D0, d.get("amplitude", 0.0), d.get("omega", 0.0),
                                        d.get("phase", 0.0))
    return dde.DelaySignal("table", D0, table=tuple(map(tuple, d["table"])))


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v)).lower()
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return "" if math.isnan(v) else f"{float(v):.15g}"
    return str(v)


def _write_table(path, header, rows):
    with open(path, "w") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(v) for v in row) + "\n")
    return str(path)


# --------------------------------------------------------------------------
# commands


def cmd_certify(setup, out):
    problem = setup.problem()
    search = lmi.search_max_delta(problem, setup.tol)
    try:
        dstar = lmi.delta_star(problem)
    except DelayCertError as exc:
        log.info("delta_star unavailable: %s", exc)
        dstar = None
    d_e = lmi.delta_E(setup.A, setup.B, setup.K, setup.D0)
    d_sg, env = lmi.small_gain_delta(setup.A, setup.B, setup.K, setup.D0, setup.mu_grid)
    results = {
        "D0": setup.D0, "kappa": setup.kappa, "tol": setup.tol,
        "delta_lmi": search.delta, "delta_star": dstar, "delta_E": d_e,
        "delta_smallgain": d_sg, "M_const": env.M_const, "mu": env.mu,
        "indeterminate": len(search.indeterminate),
    }
    if setup.is_pde and setup.spectral.N_sim > setup.spectral.N0:
        alpha = setup.spectral.alpha
        results["alpha"] = alpha
        if setup.kappa > 0:
            results["eta"] = lmi.decay_rate_eta(setup.kappa, alpha)
    keys = list(results)
    path = _write_table(os.path.join(out, "certify.csv"), keys, [[results[k] for k in keys]])
    print(f"{'quantity':<18}value")
    for k in keys:
        print(f"{k:<18}{_fmt(results[k]) or '-'}")
    if search.diagnostic:
        print(f"note: {search.diagnostic}")
    if search.flagged:
        print(f"warning: solver was indeterminate at delta = {search.indeterminate}")
    code = EXIT_OK
    if search.delta == 0.0:
        code = EXIT_NUMERICAL if search.indeterminate else EXIT_INFEASIBLE
    return code, results, [path]


def _sweep_point(args):
    A, B, K, D0, kappa, tol, eps_pd, mu_grid = args
    row = {"D0": D0, "delta_E": None, "delta_lmi": None, "delta_smallgain": None}
    try:
        row["delta_E"] = lmi.delta_E(A, B, K, D0)
    except (DelayCertError, ValueError, ArithmeticError) as exc:
        row["error_E"] = str(exc)
    try:
        res = lmi.search_max_delta(lmi.build_problem(A, B, K, D0, kappa, eps_pd), tol)
        if not (res.delta == 0.0 and res.indeterminate):
            row["delta_lmi"] = res.delta
    except (DelayCertError, ValueError, ArithmeticError) as exc:
        row["error_lmi"] = str(exc)
    try:
        row["delta_smallgain"] = lmi.small_gain_delta(A, B, K, D0, mu_grid)[0]
    except (DelayCertError, ValueError, ArithmeticError) as exc:
        row["error_smallgain"] = str(exc)
    return row


def run_sweep(setup, grid, jobs=1):
    """Rows of the sweep, in grid order."""
    tasks = [(setup.A, setup.B, setup.K, float(D0), setup.kappa, setup.tol, setup.eps_pd,
              setup.mu_grid) for D0 in grid]
    if jobs > 1 and len(tasks) > 1:
        with concurrent.futures.ProcessPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(_sweep_point, tasks))
    return [_sweep_point(t) for t in tasks]


def cmd_sweep(setup, out, jobs=1, figures=True):
    grid = cfgmod.d0_grid(setup.cfg)
    if not grid:
        raise cfgmod.ConfigError("sweep: D0_grid is empty")
    rows = run_sweep(setup, grid, jobs)
    cols = ["D0", "delta_E", "delta_lmi", "delta_smallgain"]
    artifacts = [_write_table(os.path.join(out, "sweep.csv"), cols, [[r[c] for c in cols] for r in rows])]
    for r in rows:
        for key in ("error_E", "error_lmi", "error_smallgain"):
            if key in r:
                log.warning("D0=%g: %s", r["D0"], r[key])
        print("  ".join(f"{c}={_fmt(r[c]) or '-'}" for c in cols))
    if figures:
        from . import plotting
        artifacts.append(plotting.plot_sweep(rows, os.path.join(out, "sweep.png")))
    failed = sum(r["delta_lmi"] is None for r in rows)
    return EXIT_OK, {"points": len(rows), "failed_lmi": failed}, artifacts


def _fit(traj, window, T):
    lo, hi = window if window else (min(10.0, 0.25 * T), T)
    hi = min(hi, T)
    try:
        return dde.fit_decay(traj, lo, hi)[0]
    except ValueError as exc:
        log.info("decay fit skipped: %s", exc)
        return None


def cmd_simulate(setup, out, figures=True):
    sim = setup.cfg.get("simulation")
    if sim is None:
        raise cfgmod.ConfigError("simulation section is required for simulate")
    delay = _delay(setup.cfg, setup.D0)
    phi = dde.TransitionSignal(sim["t0"])
    T, h = float(sim["T"]), sim.get("h")
    artifacts = []
    results = {"delta": delay.delta, "T": T}
    if not setup.is_pde:
        x0 = sim.get("x0", [0.0] * setup.A.shape[0])
        traj = dde.simulate_closed_loop(setup.A, setup.B, setup.K, setup.D0, delay, phi, x0, T, h)
        artifacts.append(os.path.join(out, "trajectory.csv"))
        traj.to_csv(artifacts[-1])
        if figures:
            from . import plotting
            artifacts.append(plotting.plot_trajectory(traj, os.path.join(out, "trajectory.png")))
    else:
        spec = setup.spectral
        if "X0" in sim:
            consts = {"pi": math.pi}
            if setup.rd is not None:
                consts.update(L=setup.rd.L, a=setup.rd.a, c=setup.rd.c)
            X0 = cfgmod.compile_profile(sim["X0"], consts)
            if setup.rd is not None:
                X0 = pde.project_initial(setup.rd, X0, spec.N_sim)
        else:
            X0 = np.asarray(sim.get("x0", [0.0] * spec.N_sim), dtype=float)
        K = setup.K
        if np.iscomplexobj(K):
            K = realify(K)
        traj = pde.simulate_pde_closed_loop(spec, spec.N0, spec.N_sim, K, setup.D0, delay, phi,
                                            X0, T, h, x_points=sim.get("x_points", 201))
        artifacts.append(os.path.join(out, "modal.csv"))
        traj.modal_csv(artifacts[-1])
        if traj.y is not None:
            artifacts.append(os.path.join(out, "field.csv"))
            traj.field_csv(artifacts[-1], setup.cfg["output"]["field_stride"])
        if figures:
            from . import plotting
            if traj.y is not None:
                artifacts.append(plotting.plot_field(traj, os.path.join(out, "field.png")))
            artifacts.append(plotting.plot_boundary_input(traj, os.path.join(out, "boundary_input.png")))
    results["decay_rate"] = _fit(traj, sim.get("fit_window"), T)
    results["h"] = traj.meta["h"]
    summary = os.path.join(out, "summary.csv")
    _write_table(summary, ["quantity", "value"], [[k, v] for k, v in results.items()])
    artifacts.insert(0, summary)
    for k, v in results.items():
        print(f"{k:<12}{_fmt(v) or '-'}")
    return EXIT_OK, results, artifacts


def cmd_selftest(systems=5, points=6, seed=2024):
    """Scalar LMI decisions against the brute-force grid oracle."""
    rng = np.random.default_rng(seed)
    deltas = np.linspace(0.05, 0.95, points)
    kappas = np.linspace(0.0, 0.9, points)
    bad = 0
    for s in range(systems):
        m, n = rng.uniform(-3.0, -0.3), rng.uniform(-2.0, 2.0)
        verdict_o = oracle.oracle_grid(m, n, 1.0, deltas, kappas)
        verdict_s = np.zeros_like(verdict_o)
        for i, d in enumerate(deltas):
            for j, k in enumerate(kappas):
                try:
                    verdict_s[i, j] = lmi.check_feasibility(lmi.CertificationProblem([[m]], [[n]], 1.0, k), d)[0]
                except IndeterminateError:
                    verdict_s[i, j] = False
        outside, total = oracle.compare_with_oracle(verdict_s, verdict_o)
        bad += outside
        status = "ok" if outside == 0 else "FAIL"
        print(f"system {s + 1}: M={m:+.4f} N={n:+.4f} disagreements={total} "
              f"(outside boundary band: {outside}) {status}")
    return (EXIT_OK if bad == 0 else EXIT_NUMERICAL), {"outside_band": bad}, []


# --------------------------------------------------------------------------
# entry point


def build_parser():
    parser = _Parser(prog="delaycert", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for name, text in (("certify", "certified delay deviations for one system"),
                       ("sweep", "certified deviations over a grid of nominal delays"),
                       ("simulate", "closed-loop simulation with trajectory export")):
        p = sub.add_parser(name, help=text)
        p.add_argument("--config", required=True, help="YAML experiment file")
        p.add_argument("--out", help="output directory (default: output.dir of the config)")
        p.add_argument("--kappa", type=float, help="decay rate override")
        p.add_argument("--tol", type=float, help="bisection tolerance override")
        if name == "sweep":
            p.add_argument("--jobs", type=int, default=1, help="parallel grid points")
    p = sub.add_parser("selftest", help="scalar solver against the brute-force oracle")
    p.add_argument("--out", help="directory for the run ledger")
    p.add_argument("--jobs", type=int, default=1, help="accepted for symmetry; unused")
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s: %(message)s")
    try:
        if args.command == "selftest":
            out = args.out or "results"
            os.makedirs(out, exist_ok=True)
            code, results, artifacts = cmd_selftest()
            cfg_hash = cfgmod.config_hash({"selftest": True})
        else:
            if args.kappa is not None and args.kappa < 0:
                parser.error("--kappa must be non-negative")
            if args.tol is not None and args.tol <= 0:
                parser.error("--tol must be positive")
            cfg = cfgmod.load_config(args.config)
            out = args.out or cfg["output"]["dir"]
            os.makedirs(out, exist_ok=True)
            setup = Setup(cfg, args.kappa, args.tol)
            figures = cfg["output"]["figures"]
            overrides = {"kappa": args.kappa, "tol": args.tol}
            cfg_hash = cfgmod.config_hash(cfg, overrides)
            if args.command == "certify":
                code, results, artifacts = cmd_certify(setup, out)
            elif args.command == "sweep":
                if args.jobs < 1:
                    parser.error("--jobs must be at least 1")
                code, results, artifacts = cmd_sweep(setup, out, args.jobs, figures)
            else:
                code, results, artifacts = cmd_simulate(setup, out, figures)
    except cfgmod.ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except DivergenceError as exc:
        print(f"diverged: {exc} (last finite time {exc.time:g} s)", file=sys.stderr)
        return EXIT_NUMERICAL
    except IndeterminateError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (DelayCertError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    if code in (EXIT_OK, EXIT_INFEASIBLE):
        rec = append_record(os.path.join(out, "ledger.jsonl"),
                            ResultRecord(args.command, cfg_hash, results, artifacts))
        if rec.duplicate:
            print("note: identical configuration already recorded in the ledger")
    return code


if __name__ == "__main__":
    sys.exit(main())
