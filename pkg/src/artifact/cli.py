"""Command-line front end: ``artifact <subcommand> [--config PATH] [--out DIR] [--jobs N] [--strict]``.

Exit codes: 0 pass, 1 a check failed, 2 config or hypothesis error,
3 partial failure (rows written before the failure are kept).

Every CSV starts with a ``# config_sha256=<hash>`` line and every JSON file
carries a ``config_sha256`` key.  CSV schemas:

    coeff.csv            alpha, c2_routeA, c2_routeB, discrepancy
    oned_ladder.csv      eps, g, g1, g2, residual, checks_passed
    recovery_ladder.csv  eps, g, g1, g2, residual, checks_passed
    pde2d_ladder.csv     eps, g, g1, g2, residual, checks_passed
    expansion_ladder.csv eps, energy_coarse, energy_fine, energy, energy_recovery, c2_hat_eps, oracle_gap
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import sys
import threading
import warnings
from pathlib import Path

from .config import RunConfig
from .errors import ConfigError, HypothesisError, SolverError

EXIT_PASS, EXIT_FAIL, EXIT_CONFIG, EXIT_PARTIAL = 0, 1, 2, 3
LADDER_COLUMNS = ("eps", "g", "g1", "g2", "residual", "checks_passed")

_write_lock = threading.Lock()


class PartialFailure(Exception):
    """A ladder stopped early; rows already written stay on disk."""


def _json_default(obj):
    import numpy as np

    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.floating, np.integer, np.bool_)):
        return obj.item()
    raise TypeError(f"not serialisable: {type(obj).__name__}")


class Outputs:
    """Output directory bound to one config hash; every file it writes embeds that hash."""

    def __init__(self, cfg: RunConfig):
        self.dir = cfg.output_dir
        self.sha = cfg.sha256
        try:
            self.dir.mkdir(parents=True, exist_ok=True)
        except OSError as exc:
            raise ConfigError(f"output directory {self.dir} is not writable: {exc}") from exc
        (self.dir / "config.ini").write_text(cfg.to_ini(), encoding="utf-8")

    def csv(self, name: str, columns) -> "CsvSink":
        return CsvSink(self.dir / name, columns, self.sha)

    def json(self, name: str, payload: dict) -> Path:
        path = self.dir / name
        body = {"config_sha256": self.sha, **payload}
        with _write_lock:
            path.write_text(json.dumps(body, indent=2, default=_json_default) + "\n", encoding="utf-8")
        return path

    def text(self, name: str, text: str) -> Path:
        path = self.dir / name
        with _write_lock:
            path.write_text(f"# config_sha256={self.sha}\n{text}\n", encoding="utf-8")
        return path


class CsvSink:
    """Row-at-a-time CSV writer; each row is flushed so partial ladders survive."""

    def __init__(self, path: Path, columns, sha: str):
        self.path, self.columns = path, tuple(columns)
        with _write_lock, open(path, "w", newline="", encoding="utf-8") as fh:
            fh.write(f"# config_sha256={sha}\n")
            csv.writer(fh).writerow(self.columns)

    def append(self, row: dict) -> None:
        with _write_lock, open(self.path, "a", newline="", encoding="utf-8") as fh:
            csv.writer(fh).writerow([_cell(row[c]) for c in self.columns])


def _cell(x):
    if isinstance(x, bool):
        return int(x)
    if isinstance(x, float):
        return repr(x)
    return x


def read_csv(path) -> tuple[dict, list[dict]]:
    """Inverse of :class:`CsvSink`: (header comments, rows as dicts of strings)."""
    meta, lines = {}, []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if line.startswith("#"):
                k, _, v = line[1:].strip().partition("=")
                meta[k] = v
            else:
                lines.append(line)
    return meta, list(csv.DictReader(lines))


# ---------------------------------------------------------------------------
# Subcommands


def cmd_potential_info(cfg: RunConfig, args, out: Outputs) -> int:
    from .potential import validate_hypotheses, well_constants

    spec = cfg.potential()
    report = validate_hypotheses(spec)
    if not report.passed:
        first = report.failures()[0]
        raise HypothesisError(f"{first.name} (witness {first.witness})")
    wc = well_constants(spec)
    print(f"wells a={spec.a:g} b={spec.b:g} saddle c={spec.c:g}")
    print(f"sigma     = {wc.sigma:.15g}")
    print(f"C_W       = {wc.cW:.15g}")
    print(f"alpha_bar = {wc.alpha_bar:.15g}")
    print(f"alpha_-   = {wc.alpha_minus:.15g}   beta_- = {wc.beta_minus:.15g}")
    print(f"{'rho':>12} {'mu_rho':>20}")
    for rho, mu in wc.mu_rho.items():
        print(f"{rho:>12.6g} {mu:>20.15g}")
    out.json("potential_info.json", {"constants": wc.to_dict(),
                                     "hypotheses": {c.name: c.passed for c in report.checks}})
    return EXIT_PASS


def cmd_coeff(cfg: RunConfig, args, out: Outputs) -> int:
    from .potential import default_thresholds, require_valid
    from .profile import coefficient_table

    spec = cfg.potential()
    require_valid(spec)
    levels = tuple(args.alpha) if args.alpha else cfg.coeff_levels()
    lo, _ = default_thresholds(spec)
    bad = [a for a in levels if not lo <= a <= spec.b]
    if bad:
        raise HypothesisError(f"alpha outside [alpha_-, b]: {bad}")
    sink = out.csv("coeff.csv", ("alpha", "c2_routeA", "c2_routeB", "discrepancy"))
    rows = coefficient_table(spec, levels)
    print(f"{'alpha':>8} {'c2 (route A)':>20} {'c2 (route B)':>20} {'discrepancy':>12}")
    for row in rows:
        sink.append(row)
        print(f"{row['alpha']:>8.4g} {row['c2_routeA']:>20.15g} {row['c2_routeB']:>20.15g} {row['discrepancy']:>12.2e}")
    return EXIT_PASS


def _ladder_loop(eps_values, solve_one, sink: CsvSink):
    """Run ``solve_one`` per eps, append rows; a solver failure mid-ladder becomes PartialFailure."""
    results = []
    for i, eps in enumerate(eps_values):
        try:
            row, extra = solve_one(eps)
        except (SolverError, FloatingPointError) as exc:
            if i == 0:
                raise
            raise PartialFailure(f"eps={eps:g}: {exc}") from exc
        sink.append(row)
        results.append(extra)
    return results


def cmd_oned_run(cfg: RunConfig, args, out: Outputs) -> int:
    from .asymptotics import richardson_limit
    from .oned import (breakdown_from_energy, check_minimizer_properties, check_regime, ladder_constants_stable,
                       solve_refined)
    from .profile import second_order_coefficient

    spec = cfg.potential()
    template = cfg.oned_template(spec)
    regime, omega0, thr = check_regime(template, spec)
    if not regime:
        raise HypothesisError(f"regime check failed: omega'(0)={omega0:g} not below {thr:g}")
    grid_spec = cfg.grid_spec()
    sink = out.csv("oned_ladder.csv", LADDER_COLUMNS)

    def one(eps):
        prob = template.with_eps(eps, spec)
        ref = solve_refined(prob, spec, grid_spec)
        diag = check_minimizer_properties(ref.solution, prob, spec)
        br = breakdown_from_energy(ref.extrapolated, prob, spec)
        row = dict(eps=eps, g=br.g, g1=br.g1, g2=br.g2, residual=ref.solution.residual_norm,
                   checks_passed=diag.count_passed)
        print(f"eps={eps:<8g} G2={br.g2:+.10f} checks {diag.count_passed}/{len(diag.checks)}")
        return row, (br.g2, diag)

    results = _ladder_loop(cfg.oned_ladder(), one, sink)
    eps = list(cfg.oned_ladder())
    lim = richardson_limit(eps, [r[0] for r in results])
    target = float(template.weight.domega(0.0)) * second_order_coefficient(spec, template.alpha)
    rel = abs(lim.limit - target) / abs(target) if target else abs(lim.limit)
    stable = ladder_constants_stable([r[1].constants for r in results])
    diag_ok = all(r[1].passed for r in results)
    ok = rel <= cfg.num("checks", "oned_tol") and diag_ok and all(stable.values())
    print(f"G2 limit {lim.limit:.10f} (order {lim.order:.3g}); target {target:.10f}; rel.err {rel:.3e}")
    out.json("oned_report.json", {"limit": lim.limit, "order": lim.order, "uncertainty": lim.uncertainty,
                                  "target": target, "rel_error": rel, "constants_stable": stable,
                                  "diagnostics_passed": diag_ok, "passed": ok})
    return EXIT_PASS if ok else EXIT_FAIL


def cmd_recovery_run(cfg: RunConfig, args, out: Outputs) -> int:
    from .recovery import build_recovery_1d, evaluate_limsup_bound, ladder_limsup_ok, recovery_g2_limit

    spec = cfg.potential()
    template = cfg.oned_template(spec)
    schedule = cfg.schedule()
    l_grid = cfg.l_grid()
    sink = out.csv("recovery_ladder.csv", LADDER_COLUMNS)

    def one(eps):
        prob = template.with_eps(eps, spec)
        cand = build_recovery_1d(prob, schedule, spec)
        # l beyond T/eps is meaningless; clip with a warning
        l_ok = [l for l in l_grid if l * eps <= prob.weight.T]
        if len(l_ok) < len(l_grid):
            warnings.warn(f"l grid clipped to T/eps at eps={eps:g}", RuntimeWarning, stacklevel=1)
        rep = evaluate_limsup_bound(cand, prob, l_ok, spec)
        en = cand.energy(prob.weight)
        g1 = en / eps
        row = dict(eps=eps, g=en, g1=g1, g2=rep.g2, residual=cand.ode_residual(), checks_passed=int(rep.bounded))
        print(f"eps={eps:<8g} G2(recovery)={rep.g2:+.10f} delta={cand.delta:.3e} T_eps={cand.t_eps:.4g}")
        return row, rep

    reports = _ladder_loop(cfg.oned_ladder(), one, sink)
    tol = cfg.num("checks", "oned_tol") * abs(reports[0].target)
    ok = ladder_limsup_ok(reports, tol) and all(r.bounded for r in reports)
    out.json("recovery_report.json", {
        "schedule": schedule.label, "target": reports[0].target, "g2_limit": recovery_g2_limit(reports),
        "g2": [r.g2 for r in reports], "coefficients": [r.coefficients for r in reports],
        "tail_bound": [r.tail_bound for r in reports], "passed": ok,
    })
    print(f"extrapolated G2 {recovery_g2_limit(reports):+.8f} vs target {reports[0].target:+.8f} (+{tol:.3g}): "
          f"{'ok' if ok else 'FAIL'}")
    return EXIT_PASS if ok else EXIT_FAIL


def cmd_pde2d_run(cfg: RunConfig, args, out: Outputs) -> int:
    from . import pde2d
    from .asymptotics import theory_c1

    spec, geometry, data = cfg.potential(), cfg.geometry(), cfg.data()
    eps_values = [args.eps] if args.eps else list(cfg.ladder())
    c1 = theory_c1(geometry, data, spec)
    sink = out.csv("pde2d_ladder.csv", LADDER_COLUMNS)

    def one(eps):
        ref = pde2d.solve_refined_2d(geometry, data, eps, spec, cfg.grid_spec(), cfg.n_theta)
        fld = ref.fine
        checks = [
            pde2d.check_maximum_principle(fld, spec),
            pde2d.check_exponential_decay(fld, 2 * eps, spec),
            pde2d.check_gradient_bound(fld),
            pde2d.check_level_set_confinement(fld, 0.5, 5 * eps * abs(math.log(eps))),
        ]
        energy = ref.extrapolated
        g1 = energy / eps
        pde2d.dump_grid(fld, out.dir / f"field_eps{eps:g}.txt", {"config_sha256": out.sha})
        row = dict(eps=eps, g=energy, g1=g1, g2=(g1 - c1) / eps, residual=fld.residual,
                   checks_passed=sum(c.passed for c in checks))
        print(f"eps={eps:<8g} F={energy:.12g} F2={(g1 - c1) / eps:+.8f} checks {row['checks_passed']}/4")
        return row, checks

    results = _ladder_loop(eps_values, one, sink)
    ok = all(c.passed for checks in results for c in checks)
    out.json("pde2d_report.json", {
        "c1_theory": c1,
        "checks": [{c.name: {"passed": c.passed, **c.values} for c in checks} for checks in results],
        "passed": ok,
    })
    return EXIT_PASS if ok else EXIT_FAIL


def cmd_expansion(cfg: RunConfig, args, out: Outputs) -> int:
    from .asymptotics import verify_expansion

    rep = verify_expansion(
        cfg.geometry(), cfg.data(), cfg.potential(), cfg.ladder(), cfg.grid_spec(), cfg.n_theta, jobs=args.jobs,
        c1_tol=cfg.num("checks", "c1_tol"), c2_tol=cfg.num("checks", "c2_tol"),
        oracle_tol=cfg.num("checks", "oracle_tol"),
    )
    sink = out.csv("expansion_ladder.csv", ("eps", "energy_coarse", "energy_fine", "energy", "energy_recovery",
                                            "c2_hat_eps", "oracle_gap"))
    for en, c2e in zip(rep.entries, rep.expansion.c2_sequence):
        sink.append(dict(eps=en.eps, energy_coarse=en.energy_coarse, energy_fine=en.energy_fine, energy=en.energy,
                         energy_recovery=en.energy_recovery, c2_hat_eps=c2e,
                         oracle_gap="" if en.oracle_gap is None else en.oracle_gap))
    table = rep.expansion.table()
    print(table)
    print("verdict: " + ", ".join(f"{k}={'ok' if v else 'FAIL'}" for k, v in rep.verdict.items()))
    out.text("expansion_table.txt", table)
    out.json("expansion_report.json", {
        "expansion": rep.expansion.to_dict(), "recovery_expansion": rep.recovery_expansion.to_dict(),
        "verdict": rep.verdict,
        "entries": [{"eps": en.eps, "diagnostics": en.diagnostics, "flags": en.flags} for en in rep.entries],
        "passed": rep.passed,
    })
    return EXIT_PASS if rep.passed else EXIT_FAIL


def cmd_verify_all(cfg: RunConfig, args, out: Outputs) -> int:
    from .acceptance import run_all

    results = run_all(jobs=args.jobs)
    for r in results:
        print(r.line())
    out.json("acceptance.json", {"criteria": [
        {"number": r.number, "title": r.title, "passed": r.passed, "detail": r.detail, "seconds": r.seconds}
        for r in results]})
    return EXIT_PASS if all(r.passed for r in results) else EXIT_FAIL


COMMANDS = {
    "potential-info": (cmd_potential_info, "print well constants (sigma, C_W, alpha_bar, mu_rho table)"),
    "coeff": (cmd_coeff, "tabulate c2(alpha) by both routes"),
    "oned-run": (cmd_oned_run, "1D minimiser ladder and its second-order limit"),
    "recovery-run": (cmd_recovery_run, "1D recovery candidates and the limsup bound"),
    "pde2d-run": (cmd_pde2d_run, "2D minimisers with diagnostics and grid dumps"),
    "expansion": (cmd_expansion, "2D ladder, coefficient extraction and verdict"),
    "verify-all": (cmd_verify_all, "run the eight acceptance criteria"),
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="artifact", description=__doc__.split("\n")[0])
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="INI run configuration (defaults apply when omitted)")
    common.add_argument("--out", type=Path, help="output directory (overrides [output] dir)")
    common.add_argument("--jobs", type=int, default=1, help="worker processes for ladder entries")
    common.add_argument("--strict", action="store_true", help="turn warnings into errors")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, (_, help_text) in COMMANDS.items():
        p = sub.add_parser(name, parents=[common], help=help_text)
        if name == "coeff":
            p.add_argument("alpha", nargs="*", type=float, help="levels (default: [coeff] alpha)")
        if name == "pde2d-run":
            p.add_argument("--eps", type=float, help="single eps instead of the ladder")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.jobs < 1:
        print("error: --jobs must be >= 1", file=sys.stderr)
        return EXIT_CONFIG
    with warnings.catch_warnings():
        if args.strict:
            warnings.simplefilter("error")
        try:
            cfg = RunConfig.from_file(args.config) if args.config else RunConfig.from_string("")
            if args.out is not None:
                cfg = cfg.with_output(args.out)
            out = Outputs(cfg)
            return COMMANDS[args.command][0](cfg, args, out)
        except (ConfigError, HypothesisError) as exc:
            print(f"error: {exc}", file=sys.stderr)
            return EXIT_CONFIG
        except PartialFailure as exc:
            print(f"partial failure: {exc}", file=sys.stderr)
            return EXIT_PARTIAL
        except Warning as exc:
            print(f"error (strict): {exc}", file=sys.stderr)
            return EXIT_CONFIG
        except SolverError as exc:
            print(f"solver failure: {exc}", file=sys.stderr)
            return EXIT_PARTIAL


if __name__ == "__main__":
    sys.exit(main())
