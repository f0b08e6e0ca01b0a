"""Command line interface: ``acvem <verb> [--config run.toml] [overrides]``."""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from . import harness, meshgen
from .assembly import assemble
from .config import DOMAINS, METHODS, RunConfig, load_config
from .io import atomic_write_text
from .pencil import pencil_report


def _bool(s: str) -> bool:
    if s.lower() in ("1", "true", "yes", "on"):
        return True
    if s.lower() in ("0", "false", "no", "off"):
        return False
    raise argparse.ArgumentTypeError(f"not a boolean: {s}")


def _levels(s: str) -> tuple[int, ...]:
    if "-" in s and "," not in s:
        lo, hi = s.split("-")
        return tuple(range(int(lo), int(hi) + 1))
    return tuple(int(x) for x in s.split(","))


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", type=Path, help="TOML file with run settings")
    p.add_argument("--domain", choices=DOMAINS)
    p.add_argument("--a", type=float)
    p.add_argument("--b", type=float)
    p.add_argument("--family", choices=meshgen.FAMILIES)
    p.add_argument("--levels", type=_levels, help="e.g. 1,2,3 or 1-4")
    p.add_argument("--order", "-k", type=int)
    p.add_argument("--sigma-e", dest="sigma_e", type=float)
    p.add_argument("--stabilized", type=_bool)
    p.add_argument("--stab-mode", dest="stab_mode", choices=("projected", "raw"))
    p.add_argument("--n-eigs", dest="n_eigs", type=int)
    p.add_argument("--zero-tol", dest="zero_tol", type=float)
    p.add_argument("--seed", type=int)
    p.add_argument("--outdir")
    p.add_argument("--method", choices=METHODS)


_KEYS = ("domain", "a", "b", "family", "levels", "order", "sigma_e", "stabilized",
         "stab_mode", "n_eigs", "zero_tol", "seed", "outdir", "method")


def make_config(args: argparse.Namespace) -> RunConfig:
    base = load_config(args.config) if args.config else RunConfig()
    return base.with_overrides(**{k: getattr(args, k, None) for k in _KEYS})


def _single_level(cfg: RunConfig, level: int | None) -> int:
    return cfg.levels[0] if level is None else level


def cmd_mesh(args) -> int:
    cfg = make_config(args)
    level = _single_level(cfg, args.level)
    mesh = meshgen.generate(cfg.family, level, cfg.make_domain(), seed=cfg.seed)
    q = meshgen.quality_report(mesh)
    print(f"{cfg.family} level {level}: {mesh.n_cells} cells, {mesh.n_edges} edges, "
          f"{mesh.n_vertices} vertices")
    print(f"min edge ratio {q['edge_ratio'].min():.4f}, min disk ratio {q['disk_ratio'].min():.4f}")
    if args.out:
        meshgen.save_mesh(mesh, args.out)
        print(f"wrote {args.out}")
    return 0


def cmd_spectrum(args) -> int:
    cfg = make_config(args)
    level = _single_level(cfg, args.level)
    run = harness.run_level(cfg, level)
    res = run.result
    print(f"N = {run.pencil.n}, status {res.pencil_status}, discarded {res.n_zero_discarded} zero modes")
    print(" i       lambda         lambda/pi^2   residual")
    for i, (lam, r) in enumerate(zip(res.eigenvalues, res.residuals), 1):
        print(f"{i:2d} {lam:16.10f} {lam / np.pi**2:14.8f}   {r:.1e}")
    if cfg.outdir:
        Path(cfg.outdir).mkdir(parents=True, exist_ok=True)
        res.write_csv(Path(cfg.outdir) / f"spectrum_l{level}.csv")
    return 0


def cmd_converge(args) -> int:
    cfg = make_config(args)
    table = harness.run_experiment(cfg)
    print(table.to_markdown(), end="")
    if cfg.outdir:
        print(f"outputs in {cfg.outdir}")
    return 0


def cmd_diagnose(args) -> int:
    cfg = make_config(args)
    level = _single_level(cfg, args.level)
    mesh = meshgen.generate(cfg.family, level, cfg.make_domain(), seed=cfg.seed)
    pen = assemble(mesh, cfg.order, cfg.sigma, cfg.stabilized, cfg.stab_mode)
    rep = pencil_report(pen, args.rank_tol)
    print(f"N = {rep.n}")
    print(f"dim ker A = {rep.dim_ker_A}")
    print(f"dim ker B = {rep.dim_ker_B}")
    print(f"dim (ker A cap ker B) = {rep.dim_intersection}")
    print(f"pencil: {rep.status} (rank_tol {rep.rank_tol:g})")
    return 0


def cmd_normgap(args) -> int:
    rows = harness.norm_gap_study(args.sizes)
    lines = ["n,mu_min,mu_max"] + [f"{r.n},{r.mu_min:.10e},{r.mu_max:.10e}" for r in rows]
    print("\n".join(lines))
    if args.out:
        atomic_write_text(args.out, "\n".join(lines) + "\n")
    return 0


def cmd_dumpfun(args) -> int:
    cfg = make_config(args)
    level = _single_level(cfg, args.level)
    run = harness.run_level(cfg, level)
    dump = harness.dump_eigenfunction(run.pencil, run.result, args.index, args.out, sub=args.sub)
    print(f"lambda = {run.result.eigenvalues[args.index]:.10f}, {len(dump.points)} samples, "
          f"max |u| = {dump.modulus.max():.4f}")
    if args.out:
        print(f"wrote {args.out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="acvem", description="Virtual elements for the acoustic eigenproblem")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="verb", required=True)

    s = sub.add_parser("mesh", help="generate a mesh and optionally export it")
    _common(s)
    s.add_argument("--level", type=int)
    s.add_argument("--out", type=Path)
    s.set_defaults(func=cmd_mesh)

    s = sub.add_parser("spectrum", help="solve at a single level")
    _common(s)
    s.add_argument("--level", type=int)
    s.set_defaults(func=cmd_spectrum)

    s = sub.add_parser("converge", help="level sweep with error and rate tables")
    _common(s)
    s.set_defaults(func=cmd_converge)

    s = sub.add_parser("diagnose", help="kernel dimensions of the pencil")
    _common(s)
    s.add_argument("--level", type=int)
    s.add_argument("--rank-tol", dest="rank_tol", type=float, default=1e-10)
    s.set_defaults(func=cmd_diagnose)

    s = sub.add_parser("normgap", help="extreme Rayleigh quotients of the mass against the exact L2 mass")
    s.add_argument("--sizes", type=lambda t: [int(x) for x in t.split(",")], default=[4, 8, 16, 32])
    s.add_argument("--out", type=Path)
    s.set_defaults(func=cmd_normgap)

    s = sub.add_parser("dumpfun", help="sample a projected eigenfunction")
    _common(s)
    s.add_argument("--level", type=int)
    s.add_argument("--index", type=int, default=0, help="0-based eigenpair index")
    s.add_argument("--sub", type=int, default=2)
    s.add_argument("--out", type=Path)
    s.set_defaults(func=cmd_dumpfun)
    return p


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        return args.func(args)
    except (ValueError, RuntimeError, IndexError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
