"""Command-line interface: ``ipvem run | mesh | dump-system``."""
from __future__ import annotations

import argparse
import logging
import os
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .analysis import example_case, markdown_table, parse_mesh_source, run_study
from .assembly import (
    PenaltyConfig,
    SolverError,
    apply_boundary_conditions,
    assemble,
    build_dof_map,
    compute_operators,
    dump_system,
)
from .element import BASIS_KINDS
from .estimator import IPVEMSolver
from .mesh import MeshError, generate_cvt_polygonal, generate_distorted_grid, \
    generate_rectangle_grid, l_shape, load_mesh, save_mesh

log = logging.getLogger("ipvem")

THREADS_ENV = "IPVEM_THREADS"


@dataclass(frozen=True)
class RunConfig:
    subcommand: str
    example: int = 1
    eps: tuple = (1e-6,)
    k: int = 2
    lam: float = 1.0
    mesh: str = ""
    seed: int = 1
    lloyd_iters: int = 200
    delta: float = 0.1
    out: str = "."
    fmt: str = "markdown"
    tol: float = 1e-12
    threads: int = 1
    method: str = "direct"
    field_dump: int = 0
    basis: str = "auto"


def _eps_list(text):
    try:
        vals = tuple(float(t) for t in text.split(",") if t.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"invalid epsilon list {text!r}")
    if not vals or any(not 0 < v <= 1 for v in vals):
        raise argparse.ArgumentTypeError("every epsilon must lie in (0, 1]")
    return vals


def _degree(text):
    k = int(text)
    if k < 2:
        raise argparse.ArgumentTypeError("k >= 2 required")
    return k


def _positive(text):
    v = float(text)
    if not v > 0:
        raise argparse.ArgumentTypeError("must be positive")
    return v


def build_parser():
    default_threads = int(os.environ.get(THREADS_ENV, "1"))
    p = argparse.ArgumentParser(prog="ipvem", description="Interior penalty VEM solver "
                                "for eps^2 lap^2 u - lap u = f with clamped boundary data.")
    sub = p.add_subparsers(dest="subcommand")

    run = sub.add_parser("run", help="convergence study for one example")
    run.add_argument("--example", type=int, choices=(1, 2, 3), default=1)
    run.add_argument("--eps", type=_eps_list, default=(1e-6,),
                     help="comma-separated epsilon values")
    run.add_argument("--k", type=_degree, default=None, help="degree (default per example)")
    run.add_argument("--lam", type=_positive, default=1.0, help="edge penalty lambda")
    run.add_argument("--mesh", required=True,
                     help="cvt:N1,N2 | lshape:N1,N2 | distorted:n1,n2 | grid:n1,n2 | file:a,b")
    run.add_argument("--seed", type=int, default=1)
    run.add_argument("--lloyd-iters", type=int, default=200)
    run.add_argument("--delta", type=float, default=0.1)
    run.add_argument("--out", default=".")
    run.add_argument("--format", dest="fmt", choices=("csv", "markdown"), default="markdown")
    run.add_argument("--tol", type=_positive, default=1e-12)
    run.add_argument("--threads", type=int, default=default_threads)
    run.add_argument("--method", choices=("direct", "cg"), default="direct")
    run.add_argument("--field-dump", type=int, default=0, metavar="N",
                     help="write Pi^nabla u_h on an N x N raster of the finest mesh")
    run.add_argument("--basis", choices=BASIS_KINDS, default="auto",
                     help="local polynomial basis (auto orthonormalises stretched cells)")

    mesh = sub.add_parser("mesh", help="generate a mesh file")
    g = mesh.add_mutually_exclusive_group(required=True)
    g.add_argument("--cvt", type=int, metavar="N")
    g.add_argument("--lshape", type=int, metavar="N")
    g.add_argument("--grid", type=int, metavar="N")
    g.add_argument("--distorted", type=int, metavar="N")
    mesh.add_argument("--seed", type=int, default=1)
    mesh.add_argument("--lloyd-iters", type=int, default=200)
    mesh.add_argument("--delta", type=float, default=0.1)
    mesh.add_argument("--out", required=True)

    dump = sub.add_parser("dump-system", help="write the assembled matrix in coordinate form")
    dump.add_argument("--mesh", required=True, help="a single mesh source, e.g. grid:1 or file:m.txt")
    dump.add_argument("--example", type=int, choices=(1, 2, 3), default=1)
    dump.add_argument("--eps", type=_eps_list, default=(1e-6,))
    dump.add_argument("--k", type=_degree, default=2)
    dump.add_argument("--lam", type=_positive, default=1.0)
    dump.add_argument("--seed", type=int, default=1)
    dump.add_argument("--basis", choices=BASIS_KINDS, default="auto")
    dump.add_argument("--out", required=True)
    return p


def parse_args(argv):
    parser = build_parser()
    if not argv:
        parser.print_usage(sys.stderr)
        raise SystemExit(2)
    ns = parser.parse_args(argv)
    if ns.subcommand is None:
        parser.print_usage(sys.stderr)
        raise SystemExit(2)
    if ns.subcommand == "run":
        if ns.threads < 1:
            parser.error("--threads must be >= 1")
        return ns, RunConfig("run", ns.example, ns.eps, ns.k, ns.lam, ns.mesh, ns.seed,
                             ns.lloyd_iters, ns.delta, ns.out, ns.fmt, ns.tol, ns.threads,
                             ns.method, ns.field_dump, ns.basis)
    if ns.subcommand == "mesh":
        return ns, RunConfig("mesh", seed=ns.seed, lloyd_iters=ns.lloyd_iters, delta=ns.delta,
                             out=ns.out)
    return ns, RunConfig("dump-system", ns.example, ns.eps, ns.k, ns.lam, ns.mesh, ns.seed,
                         out=ns.out, basis=ns.basis)


def _run(cfg):
    sources = parse_mesh_source(cfg.mesh, cfg.seed, cfg.lloyd_iters, cfg.delta)
    meshes = [s.build() for s in sources]
    reports = run_study(cfg.example, list(cfg.eps), sources, k=cfg.k,
                        config=PenaltyConfig(cfg.lam), method=cfg.method, tol=cfg.tol,
                        n_jobs=cfg.threads, meshes=meshes, basis=cfg.basis)
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    stem = f"example{cfg.example}"
    table = markdown_table(reports)
    (out / f"{stem}_table.md").write_text(table)
    plot = ["# eps h Err"]
    for rep in reports:
        (out / f"{stem}_eps{rep.epsilon:.0e}.csv").write_text(rep.to_csv())
        plot += [f"{rep.epsilon:.17e} {lv.h:.17e} {lv.err:.17e}" for lv in rep.levels]
    (out / f"{stem}_plot.dat").write_text("\n".join(plot) + "\n")
    if cfg.field_dump:
        _field_dump(cfg, meshes[-1], out / f"{stem}_field.dat")
    if cfg.fmt == "markdown":
        sys.stdout.write(table)
    else:
        for rep in reports:
            sys.stdout.write(f"# eps={rep.epsilon:.0e} rate={rep.rate:.16e}\n")
            sys.stdout.write(rep.to_csv())
    return 0


def _field_dump(cfg, mesh, path):
    case = example_case(cfg.example, cfg.eps[0])
    k = case.k if cfg.k is None else cfg.k
    solver = IPVEMSolver(k=k, epsilon=cfg.eps[0], penalty=cfg.lam, tol=cfg.tol,
                         n_jobs=cfg.threads, basis=cfg.basis).fit(mesh, case)
    lo, hi = mesh.vertices.min(axis=0), mesh.vertices.max(axis=0)
    n = cfg.field_dump
    # cell-centred raster keeps samples off the domain boundary
    xs = lo[0] + (np.arange(n) + 0.5) / n * (hi[0] - lo[0])
    ys = lo[1] + (np.arange(n) + 0.5) / n * (hi[1] - lo[1])
    X, Y = np.meshgrid(xs, ys)
    pts = np.column_stack([X.ravel(), Y.ravel()])
    pts = pts[solver.locate(pts) >= 0]
    uh = solver.predict(pts)
    with open(path, "w") as fh:
        fh.write("# x y uh u\n")
        for (x, y), a, b in zip(pts, uh, case.u(pts)):
            fh.write(f"{x:.17e} {y:.17e} {a:.17e} {b:.17e}\n")


def _mesh(ns):
    if ns.cvt is not None:
        m = generate_cvt_polygonal(ns.cvt, None, ns.seed, ns.lloyd_iters)
    elif ns.lshape is not None:
        m = generate_cvt_polygonal(ns.lshape, l_shape(), ns.seed, ns.lloyd_iters)
    elif ns.grid is not None:
        m = generate_rectangle_grid(ns.grid, ns.grid)
    else:
        m = generate_distorted_grid(ns.distorted, ns.distorted, ns.delta)
    Path(ns.out).parent.mkdir(parents=True, exist_ok=True)
    save_mesh(m, ns.out)
    print(f"wrote {m.n_cells} cells, {m.n_vertices} vertices to {ns.out}")
    return 0


def _dump(cfg):
    if cfg.mesh.startswith("file:"):
        mesh = load_mesh(cfg.mesh[5:])
    else:
        sources = parse_mesh_source(cfg.mesh, cfg.seed)
        if len(sources) != 1:
            raise ValueError("dump-system takes exactly one mesh")
        mesh = sources[0].build()
    case = example_case(cfg.example, cfg.eps[0])
    dof_map = build_dof_map(mesh, cfg.k)
    ops = compute_operators(mesh, cfg.k, basis=cfg.basis)
    system = assemble(mesh, dof_map, cfg.k, cfg.eps[0], case.f, ops, PenaltyConfig(cfg.lam),
                      case.boundary)
    reduced = apply_boundary_conditions(system, dof_map, case.boundary)
    Path(cfg.out).parent.mkdir(parents=True, exist_ok=True)
    dump_system(reduced, cfg.out)
    print(f"wrote {reduced.matrix.nnz} entries of a {reduced.n}x{reduced.n} matrix to {cfg.out}")
    return 0


def execute(ns, cfg):
    try:
        if cfg.subcommand == "run":
            return _run(cfg)
        if cfg.subcommand == "mesh":
            return _mesh(ns)
        return _dump(cfg)
    except (MeshError, SolverError, ValueError, OSError, RuntimeError, IndexError) as exc:
        print(f"ipvem: error: {exc}", file=sys.stderr)
        return 1


def main(argv=None):
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    argv = sys.argv[1:] if argv is None else argv
    ns, cfg = parse_args(argv)
    return execute(ns, cfg)


if __name__ == "__main__":
    raise SystemExit(main())
