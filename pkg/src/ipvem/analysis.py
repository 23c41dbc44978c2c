"""Manufactured solutions, the projected energy error and convergence studies."""
from __future__ import annotations

import csv
import io
import time
from dataclasses import dataclass, field

import numpy as np

from .assembly import (
    BoundaryData,
    PenaltyConfig,
    apply_boundary_conditions,
    assemble,
    build_dof_map,
    compute_operators,
    solve,
)
from .mesh import (
    generate_cvt_polygonal,
    generate_distorted_grid,
    generate_rectangle_grid,
    l_shape,
    load_mesh,
    unit_square,
)
from .quadrature import cell_quadrature

__all__ = [
    "ManufacturedCase",
    "StudyError",
    "ConvergenceLevel",
    "ConvergenceReport",
    "example_case",
    "polynomial_case",
    "energy_error",
    "source_norm",
    "fit_rate",
    "MeshSource",
    "parse_mesh_source",
    "run_convergence",
    "run_study",
    "markdown_table",
]


class StudyError(RuntimeError):
    """A convergence level failed; the message names the level."""


@dataclass(frozen=True, eq=False)
class ManufacturedCase:
    """Closed-form data for one test problem.

    ``u``, ``grad`` and ``hess`` describe the function the error is
    measured against; ``grad`` returns (n, 2) and ``hess`` (n, 3) as
    (xx, xy, yy).  With ``homogeneous`` set the clamped data are zero.
    """

    name: str
    epsilon: float
    u: object
    grad: object
    hess: object
    f: object
    domain: np.ndarray
    k: int = 2
    homogeneous: bool = False

    @property
    def boundary(self):
        if self.homogeneous:
            return BoundaryData()
        return BoundaryData(g_D=self.u, g_N=lambda p, n: self.grad(p) @ np.asarray(n))

    def scaled(self, factor):
        """The same problem with data and solution multiplied by ``factor``."""
        return ManufacturedCase(
            self.name, self.epsilon,
            lambda p: factor * self.u(p), lambda p: factor * self.grad(p),
            lambda p: factor * self.hess(p), lambda p: factor * self.f(p),
            self.domain, self.k, self.homogeneous,
        )


def _example1(eps):
    def u(p):
        x, y = p[:, 0], p[:, 1]
        return eps * (np.exp(-x / eps) + np.exp(-y / eps)) - x ** 2 * y

    def grad(p):
        x, y = p[:, 0], p[:, 1]
        return np.column_stack([-np.exp(-x / eps) - 2 * x * y, -np.exp(-y / eps) - x ** 2])

    def hess(p):
        x, y = p[:, 0], p[:, 1]
        return np.column_stack([np.exp(-x / eps) / eps - 2 * y, -2 * x, np.exp(-y / eps) / eps])

    def f(p):
        return 2.0 * p[:, 1]

    return ManufacturedCase("example1", eps, u, grad, hess, f, unit_square(), k=2)


def layer_profile(t, eps, order=0):
    """Derivative ``order`` of g(t) = exp(sin pi t) - 1 - pi eps (C - cosh s)/S.

    ``s = (2t - 1) / (2 eps)``, ``C = cosh(1/(2 eps))``, ``S = sinh(1/(2 eps))``.
    Hyperbolic ratios are formed from exponentials of non-positive
    arguments so that tiny ``eps`` cannot overflow.
    """
    t = np.asarray(t, dtype=float)
    pi = np.pi
    sn, cs = np.sin(pi * t), np.cos(pi * t)
    E = np.exp(sn)
    a = np.abs(2 * t - 1)
    q = -np.expm1(-1.0 / eps)                      # 1 - exp(-1/eps)
    ep = np.exp((a - 1) / (2 * eps))
    em = np.exp((-a - 1) / (2 * eps))
    cosh_ratio = (ep + em) / q                    # cosh(s) / S
    sinh_ratio = np.sign(2 * t - 1) * (ep - em) / q
    coth = (1 + np.exp(-1.0 / eps)) / q
    if order == 0:
        return E - 1 - pi * eps * (coth - cosh_ratio)
    if order == 1:
        return pi * cs * E + pi * sinh_ratio
    if order == 2:
        return pi ** 2 * (cs ** 2 - sn) * E + pi / eps * cosh_ratio
    if order == 3:
        return -pi ** 3 * (sn + 3) * sn * cs * E + pi / eps ** 2 * sinh_ratio
    if order == 4:
        poly = sn ** 4 + 6 * sn ** 3 + 5 * sn ** 2 - 5 * sn - 3
        return pi ** 4 * poly * E + pi / eps ** 3 * cosh_ratio
    raise ValueError("order must be 0..4")


def _example2(eps):
    g = layer_profile

    def u(p):
        return g(p[:, 0], eps) * g(p[:, 1], eps)

    def grad(p):
        x, y = p[:, 0], p[:, 1]
        return np.column_stack([g(x, eps, 1) * g(y, eps), g(x, eps) * g(y, eps, 1)])

    def hess(p):
        x, y = p[:, 0], p[:, 1]
        return np.column_stack([
            g(x, eps, 2) * g(y, eps),
            g(x, eps, 1) * g(y, eps, 1),
            g(x, eps) * g(y, eps, 2),
        ])

    def f(p):
        x, y = p[:, 0], p[:, 1]
        gx = [g(x, eps, r) for r in range(5)]
        gy = [g(y, eps, r) for r in range(5)]
        bih = gx[4] * gy[0] + 2 * gx[2] * gy[2] + gx[0] * gy[4]
        lap = gx[2] * gy[0] + gx[0] * gy[2]
        return eps ** 2 * bih - lap

    return ManufacturedCase("example2", eps, u, grad, hess, f, l_shape(), k=3)


def _example3(eps):
    pi = np.pi

    def u(p):
        return np.sin(pi * p[:, 0]) * np.sin(pi * p[:, 1])

    def grad(p):
        x, y = pi * p[:, 0], pi * p[:, 1]
        return pi * np.column_stack([np.cos(x) * np.sin(y), np.sin(x) * np.cos(y)])

    def hess(p):
        x, y = pi * p[:, 0], pi * p[:, 1]
        return pi ** 2 * np.column_stack([
            -np.sin(x) * np.sin(y), np.cos(x) * np.cos(y), -np.sin(x) * np.sin(y)])

    def f(p):
        return 2 * pi ** 2 * u(p)

    # u here is the reduced (Poisson) solution; the clamped data stay zero.
    return ManufacturedCase("example3", eps, u, grad, hess, f, unit_square(), k=2,
                            homogeneous=True)


def example_case(example, epsilon):
    if not 0 < epsilon <= 1:
        raise ValueError("epsilon must lie in (0, 1]")
    builders = {1: _example1, 2: _example2, 3: _example3}
    if example not in builders:
        raise ValueError(f"unknown example {example!r}; choose 1, 2 or 3")
    return builders[example](float(epsilon))


def polynomial_case(coeffs, epsilon, domain=None):
    """Case whose solution is the polynomial sum c_ab x^a y^b (dict (a, b) -> c)."""
    terms = [(int(a), int(b), float(c)) for (a, b), c in coeffs.items()]
    degree = max(a + b for a, b, _ in terms)

    def mono(p, a, b, dx, dy):
        if a < dx or b < dy:
            return np.zeros(len(p))
        ca = np.prod(np.arange(a - dx + 1, a + 1)) if dx else 1
        cb = np.prod(np.arange(b - dy + 1, b + 1)) if dy else 1
        return ca * cb * p[:, 0] ** (a - dx) * p[:, 1] ** (b - dy)

    def d(p, dx, dy):
        return sum(c * mono(p, a, b, dx, dy) for a, b, c in terms)

    def f(p):
        bih = d(p, 4, 0) + 2 * d(p, 2, 2) + d(p, 0, 4)
        return epsilon ** 2 * bih - d(p, 2, 0) - d(p, 0, 2)

    return ManufacturedCase(
        f"poly{degree}", float(epsilon),
        lambda p: d(p, 0, 0),
        lambda p: np.column_stack([d(p, 1, 0), d(p, 0, 1)]),
        lambda p: np.column_stack([d(p, 2, 0), d(p, 1, 1), d(p, 0, 2)]),
        f, unit_square() if domain is None else domain, k=max(degree, 2),
    )


def source_norm(mesh, f, degree):
    total = 0.0
    for c in range(mesh.n_cells):
        pts, wts = cell_quadrature(mesh, c, degree)
        total += wts @ np.asarray(f(pts), dtype=float) ** 2
    return float(np.sqrt(total))


def energy_error(mesh, k, epsilon, u_h, dof_map, operators, case, degree=None):
    """Relative energy error of the projected discrete solution.

    ``sqrt(sum_K eps^2 |u - P_delta u_h|_2^2 + |u - P_nabla u_h|_1^2) / ||f||``.
    """
    degree = 2 * k + 6 if degree is None else degree
    total = 0.0
    for c, op in enumerate(operators):
        local = u_h[dof_map.cell_dofs[c]]
        pts, wts = cell_quadrature(mesh, c, degree)
        p_nabla = op.P_nabla @ local
        p_delta = op.P_delta @ local
        eg = case.grad(pts) - np.einsum("qjd,j->qd", op.basis.gradients(pts), p_nabla)
        eh = case.hess(pts) - np.einsum("qjd,j->qd", op.basis.hessians(pts), p_delta)
        h2 = eh[:, 0] ** 2 + 2 * eh[:, 1] ** 2 + eh[:, 2] ** 2
        total += wts @ (epsilon ** 2 * h2 + (eg ** 2).sum(axis=1))
    return float(np.sqrt(total)) / source_norm(mesh, case.f, degree)


def fit_rate(h, err):
    """Least-squares slope of log(err) against log(h)."""
    h = np.asarray(h, dtype=float)
    err = np.asarray(err, dtype=float)
    if len(h) < 2:
        raise ValueError("need at least two levels to fit a rate")
    if np.ptp(np.log(h)) == 0:
        raise ValueError("all mesh sizes are identical")
    slope, _ = np.polyfit(np.log(h), np.log(err), 1)
    return float(slope)


@dataclass
class ConvergenceLevel:
    descriptor: str
    n_cells: int
    h: float
    err: float
    n_dofs: int = 0


@dataclass
class ConvergenceReport:
    case: str
    epsilon: float
    k: int
    levels: list = field(default_factory=list)
    wall_time: float = 0.0

    @property
    def h(self):
        return np.array([lv.h for lv in self.levels])

    @property
    def errors(self):
        return np.array([lv.err for lv in self.levels])

    @property
    def rate(self):
        return fit_rate(self.h, self.errors)

    def running_rates(self):
        h, e = self.h, self.errors
        out = [float("nan")]
        out += [float(np.log(e[i] / e[i - 1]) / np.log(h[i] / h[i - 1])) for i in range(1, len(h))]
        return out

    def to_csv(self):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["N", "h", "Err", "rate_running"])
        for lv, r in zip(self.levels, self.running_rates()):
            w.writerow([lv.n_cells, f"{lv.h:.16e}", f"{lv.err:.16e}",
                        "" if np.isnan(r) else f"{r:.16e}"])
        return buf.getvalue()


def markdown_table(reports):
    """One row per epsilon, one column per level, plus the fitted rate."""
    cols = [str(lv.n_cells) for lv in reports[0].levels]
    lines = ["| eps \\ N | " + " | ".join(cols) + " | Rate |",
             "|" + "---|" * (len(cols) + 2)]
    for r in reports:
        vals = " | ".join(f"{e:.4e}" for e in r.errors)
        lines.append(f"| {r.epsilon:.0e} | {vals} | {r.rate:.2f} |")
    return "\n".join(lines) + "\n"


@dataclass(frozen=True)
class MeshSource:
    """A named mesh generator (or file) for one refinement level."""

    descriptor: str
    kind: str
    size: int = 0
    seed: int = 1
    path: str = ""
    lloyd_iters: int = 200
    delta: float = 0.1

    def build(self):
        if self.kind == "cvt":
            return generate_cvt_polygonal(self.size, unit_square(), self.seed, self.lloyd_iters)
        if self.kind == "lshape":
            return generate_cvt_polygonal(self.size, l_shape(), self.seed, self.lloyd_iters)
        if self.kind == "distorted":
            return generate_distorted_grid(self.size, self.size, self.delta)
        if self.kind == "grid":
            return generate_rectangle_grid(self.size, self.size)
        if self.kind == "file":
            return load_mesh(self.path)
        raise ValueError(f"unknown mesh kind {self.kind!r}")


def parse_mesh_source(text, seed=1, lloyd_iters=200, delta=0.1):
    """``cvt:32,64`` | ``lshape:100,200`` | ``distorted:6,8`` | ``grid:4,8`` | ``file:a.txt,b.txt``."""
    kind, _, rest = text.partition(":")
    kind = kind.strip().lower()
    items = [s.strip() for s in rest.split(",") if s.strip()]
    if not items:
        raise ValueError(f"mesh source {text!r} lists no levels")
    if kind == "file":
        return [MeshSource(f"file:{p}", "file", path=p) for p in items]
    if kind not in ("cvt", "lshape", "distorted", "grid"):
        raise ValueError(f"unknown mesh kind {kind!r}")
    sizes = [int(s) for s in items]
    return [MeshSource(f"{kind}:{n}", kind, n, seed, "", lloyd_iters, delta) for n in sizes]


def _solve_level(mesh, k, case, config, operators, dof_map, method, tol):
    system = assemble(mesh, dof_map, k, case.epsilon, case.f, operators, config, case.boundary)
    reduced = apply_boundary_conditions(system, dof_map, case.boundary)
    return solve(reduced, method=method, tol=tol, lam=config.lam)


def run_study(example, epsilons, sources, k=None, config=None, method="direct", tol=1e-12,
              n_jobs=1, meshes=None, basis="auto"):
    """Reports for every epsilon over the same mesh sequence.

    Element operators do not depend on epsilon, so each mesh is processed
    once and reused for all epsilon values.
    """
    config = PenaltyConfig() if config is None else config
    cases = [example_case(example, e) if isinstance(example, int) else example(e) for e in epsilons]
    k = cases[0].k if k is None else k
    reports = [ConvergenceReport(c.name, c.epsilon, k) for c in cases]
    t0 = time.perf_counter()
    for level, src in enumerate(sources):
        try:
            mesh = meshes[level] if meshes is not None else src.build()
            dof_map = build_dof_map(mesh, k)
            operators = compute_operators(mesh, k, n_jobs=n_jobs, basis=basis)
            for case, rep in zip(cases, reports):
                u_h = _solve_level(mesh, k, case, config, operators, dof_map, method, tol)
                err = energy_error(mesh, k, case.epsilon, u_h, dof_map, operators, case)
                rep.levels.append(ConvergenceLevel(src.descriptor, mesh.n_cells, mesh.h, err,
                                                   dof_map.n_dofs))
        except Exception as exc:
            raise StudyError(f"level {level} ({src.descriptor}): {exc}") from exc
    elapsed = time.perf_counter() - t0
    for rep in reports:
        rep.wall_time = elapsed
    return reports


def run_convergence(case, sources, k=None, epsilon=None, config=None, **kwargs):
    """Single-epsilon convergence study; ``case`` is an example id or builder."""
    if epsilon is None:
        raise ValueError("epsilon is required")
    return run_study(case, [epsilon], sources, k=k, config=config, **kwargs)[0]
