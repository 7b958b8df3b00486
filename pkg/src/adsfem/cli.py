"""Command line driver.

Subcommands: ``mesh`` (build and export), ``run`` (time stepping with CSV
output), ``convergence`` (final energy across mesh levels), and ``check``
(the invariant suite).  Exit codes: 0 success, 1 check failure, 2 usage
error, 3 runtime error.
"""

import argparse
import os
import sys

from . import __version__
from .evolve import SimConfig, run_simulation, setup_problem
from .mesh import LatticeSpec, build_shell_mesh, mesh_statistics, write_vtk
from .sparsela import save_triplets

CSV_HEADER = "step,time,E_L2,B_L2,p_L2,energy,minres_iters,div_residual"


def _add_solver_args(p):
    p.add_argument("--gamma", type=float, default=0.05,
                   help="dissipation parameter (> 0)")
    p.add_argument("--tau", type=float, default=0.1, help="time step")
    p.add_argument("--steps", type=int, default=20, help="number of steps")
    p.add_argument("--cg-tol", type=float, default=1e-12,
                   help="relative tolerance of the CG solves")
    p.add_argument("--minres-tol", type=float, default=1e-10,
                   help="relative tolerance of the MINRES step solves")
    p.add_argument("--no-precondition", action="store_true",
                   help="run the step solves with plain diagonal scaling only")
    p.add_argument("--zero-impedance", action="store_true",
                   help="drop the dissipative boundary term (conservation mode)")
    p.add_argument("--negative-control", action="store_true",
                   help="skip the divergence projection of the initial data")


def _config_from_args(args):
    return SimConfig(
        J=args.J,
        gamma=args.gamma,
        tau=args.tau,
        steps=args.steps,
        outer_radius=args.R,
        cg_tol=args.cg_tol,
        minres_tol=args.minres_tol,
        precondition=not args.no_precondition,
        zero_impedance=args.zero_impedance,
        unprojected_initial=args.negative_control,
    )


def build_parser():
    parser = argparse.ArgumentParser(
        prog="adsfem",
        description="Finite element simulator for exponentially decaying "
        "electromagnetic fields in a spherical shell with an impedance "
        "inner boundary.",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p_mesh = sub.add_parser("mesh", help="build the shell mesh and export it")
    p_mesh.add_argument("--J", type=int, default=3, help="cells per axis = 2^J")
    p_mesh.add_argument("--R", type=float, default=4.0, help="outer radius")
    p_mesh.add_argument("--out", default=None, help="VTK output path")

    p_run = sub.add_parser("run", help="run the time stepping")
    p_run.add_argument("--J", type=int, default=3)
    p_run.add_argument("--R", type=float, default=4.0)
    _add_solver_args(p_run)
    p_run.add_argument("--csv", default=None, help="CSV output path")
    p_run.add_argument("--export-vtk", default=None, metavar="PATH",
                       help="also export the mesh as VTK")
    p_run.add_argument("--dump-matrices", default=None, metavar="DIR",
                       help="dump assembled matrices as triplet files")
    p_run.add_argument("--quiet", action="store_true",
                       help="suppress the console table")

    p_conv = sub.add_parser(
        "convergence", help="final energy across mesh levels"
    )
    p_conv.add_argument("--J", type=int, nargs="+", default=[3, 4],
                        help="mesh exponents to run")
    p_conv.add_argument("--R", type=float, default=4.0)
    _add_solver_args(p_conv)
    p_conv.add_argument("--csv", default=None, help="CSV output path")

    p_check = sub.add_parser("check", help="run the invariant suite")
    p_check.add_argument("--J", type=int, default=3)
    p_check.add_argument("--R", type=float, default=4.0)
    _add_solver_args(p_check)
    return parser


def _validate_common(parser, args):
    js = [args.J] if isinstance(args.J, int) else args.J
    for j in js:
        if j < 2:
            parser.error(f"J must be at least 2 (got {j})")
    if hasattr(args, "gamma") and not args.gamma > 0.0:
        parser.error("gamma must be positive")
    if hasattr(args, "tau") and not args.tau > 0.0:
        parser.error("tau must be positive")
    if hasattr(args, "steps") and args.steps < 0:
        parser.error("steps must be nonnegative")
    if not args.R > 1.0:
        parser.error("R must exceed 1")


def cmd_mesh(args):
    mesh = build_shell_mesh(LatticeSpec(args.J, args.R))
    stats = mesh_statistics(mesh)
    print(f"vertices: {stats.n_vertices}")
    print("  " + "  ".join(f"{k}: {v}" for k, v in stats.vertices.items()))
    print(f"edges: {sum(stats.edges.values())}")
    print("  " + "  ".join(f"{k}: {v}" for k, v in stats.edges.items()))
    print(f"faces: {sum(stats.faces.values())}")
    print("  " + "  ".join(f"{k}: {v}" for k, v in stats.faces.items()))
    print(f"tets: {stats.n_tets}")
    out = args.out or f"shell_J{args.J}.vtk"
    write_vtk(mesh, out)
    print(f"wrote {out}")
    return 0


def _write_csv(report, path):
    with open(path, "w") as fh:
        fh.write(CSV_HEADER + "\n")
        for r in report.records:
            fh.write(
                "%d,%.6e,%.6e,%.6e,%.6e,%.6e,%d,%.6e\n"
                % (
                    r.step, r.time, r.e_norm, r.b_norm, r.p_norm,
                    r.energy, r.minres_iters, r.div_residual,
                )
            )


def _print_table(report):
    print(f"{'step':>5} {'||E||':>9} {'||B||':>9}")
    for r in report.records:
        print(f"{r.step:>5} {r.e_norm:>9.3f} {r.b_norm:>9.3f}")


def cmd_run(args):
    config = _config_from_args(args)
    problem = setup_problem(config)
    if args.export_vtk:
        write_vtk(problem.mesh, args.export_vtk)
    if args.dump_matrices:
        os.makedirs(args.dump_matrices, exist_ok=True)
        mats = problem.matrices
        for name, mat in (("M_v", mats.M_v), ("M_e", mats.M_e),
                          ("M_f", mats.M_f), ("L_v", mats.L_v),
                          ("Z_e", mats.Z_e)):
            save_triplets(mat, os.path.join(args.dump_matrices, name + ".txt"))
    report = run_simulation(config, problem=problem)
    csv_path = args.csv or f"run_J{args.J}.csv"
    _write_csv(report, csv_path)
    if not args.quiet:
        _print_table(report)
        print(f"wrote {csv_path} ({report.wall_seconds:.1f} s)")
    return 0


def cmd_convergence(args):
    rows = []
    failed = False
    for j in args.J:
        config = _config_from_args(
            argparse.Namespace(**{**vars(args), "J": j})
        )
        try:
            report = run_simulation(config)
        except Exception as exc:  # keep the sweep going
            print(f"J={j}: FAILED ({exc})", file=sys.stderr)
            failed = True
            continue
        final = report.records[-1]
        rows.append((j, 2.0**-j, final.energy))
        print(f"J={j}  h={2.0 ** -j:.6g}  final_energy={final.energy:.6e}")
    csv_path = args.csv or "convergence.csv"
    with open(csv_path, "w") as fh:
        fh.write("J,h,final_energy\n")
        for j, h, en in rows:
            fh.write("%d,%.6e,%.6e\n" % (j, h, en))
    print(f"wrote {csv_path}")
    return 3 if failed else 0


def cmd_check(args):
    from .checks import run_check_suite

    config = _config_from_args(args)
    results, passed = run_check_suite(config)
    for res in results:
        mark = "PASS" if res.passed else "FAIL"
        print(f"[{mark}] {res.name}: {res.detail}")
    if config.unprojected_initial:
        print("negative control: the monitor is expected to flag the "
              "unprojected initial data")
    print("all checks passed" if passed else "CHECK FAILURES PRESENT")
    return 0 if passed else 1


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    _validate_common(parser, args)
    handler = {
        "mesh": cmd_mesh,
        "run": cmd_run,
        "convergence": cmd_convergence,
        "check": cmd_check,
    }[args.command]
    try:
        return handler(args)
    except BrokenPipeError:
        return 0
    except Exception as exc:
        print(f"error [{args.command}]: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
