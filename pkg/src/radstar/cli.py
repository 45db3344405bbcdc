"""radstar: steady self-gravitating gas spheres and their time evolution.

Exit codes: 0 ok, 1 usage or bad input, 2 no steady state in this regime,
3 solver failure during a run, 4 verification failure.
"""

from __future__ import annotations

import argparse
import logging
import sys
import time
from pathlib import Path

from . import __version__, io, verify
from .errors import ConfigError, RadStarError
from .params import StarParams, classify_regime
from .runs import execute, resolve_config, steady_from_options
from .steady import critical_mass, fit_boundary_exponents

EXIT_OK, EXIT_USAGE, EXIT_REGIME, EXIT_SOLVER, EXIT_VERIFY = 0, 1, 2, 3, 4


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _steady(args) -> int:
    params = StarParams(K=args.K, epsilon=args.epsilon)
    started = io.timestamp()
    profile = steady_from_options(params, args.entropy, args.u0, args.mass, args.central_density, args.n_grid)
    fit = fit_boundary_exponents(profile)
    print(f"regime      {classify_regime(params).value}")
    print(f"S           {profile.exponents.S!r}")
    print(f"K_bar       {profile.exponents.K_bar!r}")
    print(f"R           {profile.R!r}")
    print(f"mass_tilde  {profile.mass_tilde!r}")
    print(f"M           {profile.M!r}")
    print(f"boundary    rho ~ sigma^{fit.rho_exponent:.4f}, theta'(R) = {fit.theta_slope_at_R:.6g}")
    if args.out:
        out = Path(args.out)
        files = io.write_profile(profile, out, fit)
        config = {k: getattr(args, k) for k in ("K", "epsilon", "entropy", "u0", "mass", "central_density", "n_grid")}
        io.RunManifest(
            "steady",
            config,
            started=started,
            finished=io.timestamp(),
            summary={"R": profile.R, "mass_tilde": profile.mass_tilde, "M": profile.M, "S": profile.exponents.S},
            outputs=files,
        ).write(out)
    return EXIT_OK


def _critical_mass(args) -> int:
    rows = [(kt, critical_mass(kt)) for kt in args.ktilde]
    print("K_tilde,M_c")
    for kt, m in rows:
        print(f"{io.fmt(kt)},{io.fmt(m)}")
    if args.out:
        io.write_csv(args.out, ("K_tilde", "M_c"), rows)
    return EXIT_OK


def _evolve_from(cfg_raw: dict, out: Path, base_dir, command: str) -> int:
    cfg = resolve_config(cfg_raw)
    started = io.timestamp()
    result, files, summary = execute(cfg, out, base_dir)
    status = "ok" if result.ok else f"failed: {type(result.error).__name__}"
    io.RunManifest(
        command,
        {k: cfg[k] for k in sorted(cfg)},
        started=started,
        finished=io.timestamp(),
        summary=summary,
        outputs=files,
        status=status,
    ).write(out)
    print(f"t = {summary['t_final']!r}, R(t) = {summary['boundary_radius']!r}, steps = {summary['steps']}")
    if "exact_boundary_radius" in summary:
        print(f"exact R(t) = {summary['exact_boundary_radius']!r}")
    print(f"energy ledger max relative residual = {summary['energy_ledger_max_relative']:.3e}")
    if not result.ok:
        print(f"error: {summary['error']} (partial output kept in {out})", file=sys.stderr)
        return EXIT_SOLVER
    return EXIT_OK


def _evolve(args) -> int:
    raw = io.load_config(args.config)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.txt").write_text(io.format_config(raw))
    return _evolve_from(raw, out, Path(args.config).parent, "evolve")


def _replay(args) -> int:
    manifest = io.read_manifest(args.manifest)
    if manifest.get("command") not in ("evolve", "replay"):
        raise ConfigError("only evolve manifests can be replayed")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return _evolve_from(manifest["config"], out, Path(args.manifest).parent, "replay")


def _verify(args) -> int:
    numbers = verify.QUICK if args.quick else tuple(verify.CRITERIA)
    t0 = time.perf_counter()
    if args.out:
        results, _ = verify.produce(numbers, args.out, quick=args.quick)
    else:
        results = verify.run_criteria(numbers)
    if not args.quick:
        results.append(verify.criterion_10(numbers))
    for res in results:
        print(res.line())
        for c in res.checks:
            mark = "ok  " if c.passed else "FAIL"
            print(f"    {mark} {c.name}: {c.measured:.6g} ({c.tolerance})")
    failed = [r.number for r in results if not r.passed]
    print(f"{len(results) - len(failed)}/{len(results)} criteria passed in {time.perf_counter() - t0:.1f} s")
    return EXIT_VERIFY if failed else EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="radstar", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"radstar {__version__}")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("steady", help="compute a steady star and write its profile")
    s.add_argument("--K", type=float, required=True)
    s.add_argument("--epsilon", type=float, required=True)
    s.add_argument("--mass", type=float, help="total mass M = 4 pi int rho r^2 dr")
    s.add_argument("--central-density", type=float)
    s.add_argument("--entropy", type=float, help="entropy constant S")
    s.add_argument("--u0", type=float, help="central value of the Lane-Emden variable (with --entropy)")
    s.add_argument("--n-grid", type=int, default=4096)
    s.add_argument("--out", help="output directory")
    s.set_defaults(func=_steady)

    c = sub.add_parser("critical-mass", help="tabulate M_c(K_tilde) = K_tilde^1.5 M_1")
    c.add_argument("--ktilde", type=float, nargs="+", required=True)
    c.add_argument("--out", help="CSV file")
    c.set_defaults(func=_critical_mass)

    e = sub.add_parser("evolve", help="run the Lagrangian evolution described by a config file")
    e.add_argument("--config", required=True)
    e.add_argument("--out", required=True)
    e.set_defaults(func=_evolve)

    r = sub.add_parser("replay", help="re-run an evolve manifest")
    r.add_argument("manifest")
    r.add_argument("--out", required=True)
    r.set_defaults(func=_replay)

    v = sub.add_parser("verify", help="run the acceptance suite")
    v.add_argument("--quick", action="store_true", help="steady-state criteria only")
    v.add_argument("--out", help="directory for checks.csv, run outputs and manifest")
    v.set_defaults(func=_verify)
    return p


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as exc:  # --help, --version and usage errors
        return exc.code if isinstance(exc.code, int) else EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except RadStarError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
