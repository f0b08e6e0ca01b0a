"""End-to-end acceptance criteria, one test each, with a printed PASS/FAIL line."""
import time
import warnings

import numpy as np
import pytest
from scipy import linalg, optimize

from acvem import harness, meshgen
from acvem.assembly import assemble, local_div, local_matrices
from acvem.config import RunConfig
from acvem.pencil import pencil_report, solve, solve_dense
from acvem.polyquad import dim_poly
from acvem.raviart_thomas import rt0_div, rt0_global_mass
from acvem.vemspace import LocalSpace

from conftest import random_star_polygon


@pytest.fixture
def report(capsys):
    def emit(number, title, ok, detail, seconds):
        with capsys.disabled():
            status = "PASS" if ok else "FAIL"
            print(f"\n[{status}] criterion {number:2d}: {title} | {detail} | {seconds:.1f}s")
        assert ok, detail

    return emit


def sweep(**kw):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        return harness.run_experiment(RunConfig(**kw), write=False)


def fmt(a):
    return "[" + ", ".join(f"{x:.3g}" for x in np.ravel(a)) + "]"


def test_c01_square_rectangle_k0(report):
    t0 = time.perf_counter()
    tab = sweep(family="square", levels=(1, 2, 3, 4), n_eigs=1)
    dt = time.perf_counter() - t0
    err = tab.errors[0]
    ref = np.array([2.63e-2, 6.46e-3, 1.61e-3, 4.02e-4])
    rates = tab.rates[0, 1:]
    ok = bool(np.all(np.abs(err / ref - 1) <= 0.05) and np.all(np.abs(rates - 2) <= 0.05) and dt < 30)
    report(1, "squares, k=0, first eigenvalue", ok, f"errors {fmt(err)} rates {fmt(rates)}", dt)


def test_c02_triangle_rectangle_k0(report):
    t0 = time.perf_counter()
    tab = sweep(family="triangular", levels=(3, 4), n_eigs=7)
    dt = time.perf_counter() - t0
    rates = tab.rate_between(3, 4)
    ok = bool(np.all(np.abs(rates - 2) <= 0.15) and dt < 60)
    report(2, "triangles, k=0, rates l=3->4", ok, f"rates {fmt(rates)}", dt)


def test_c03_higher_order_triangles(report):
    t0 = time.perf_counter()
    bounds = {1: 1e-5, 2: 1e-8, 3: 1e-11}
    errs = {k: sweep(family="triangular", levels=(2,), order=k, n_eigs=1).errors[0, 0] for k in bounds}
    dt = time.perf_counter() - t0
    ok = all(errs[k] <= bounds[k] for k in bounds)
    report(3, "triangles l=2, k=1,2,3", ok, "errors " + ", ".join(f"k={k}: {e:.2e}" for k, e in errs.items()), dt)


def test_c04_stabilized_polygons(report):
    t0 = time.perf_counter()
    rates = {}
    for fam in ("voronoi", "hexagonal"):
        tab = sweep(family=fam, levels=(3, 4), n_eigs=7, stabilized=True, sigma_e=0.1)
        rates[fam] = tab.rate_between(3, 4)
    dt = time.perf_counter() - t0
    ok = all(np.all(np.abs(r - 2) <= 0.2) for r in rates.values()) and dt < 120
    report(4, "stabilized k=0 Voronoi/hexagons l=3->4", ok,
           " ".join(f"{f} {fmt(r)}" for f, r in rates.items()), dt)


def test_c05_nonstabilized_hexagons_stall(report):
    t0 = time.perf_counter()
    tab = sweep(family="hexagonal", levels=(3, 4), n_eigs=7)
    dt = time.perf_counter() - t0
    rates = tab.rate_between(3, 4)
    stalled = int(np.sum(rates < 0.5))
    converged = int(np.sum(np.abs(rates - 2) <= 0.2))
    ok = stalled >= 2 and converged >= 1
    report(5, "non-stabilized hexagons k=0 l=3->4", ok,
           f"rates {fmt(rates)}; {stalled} stalled, {converged} at 2", dt)


def test_c06_singular_pencil(report):
    t0 = time.perf_counter()
    details, ok = [], True
    for level in (0, 1):
        pen = assemble(meshgen.generate("hexagonal", level), 1)
        rep = pencil_report(pen)
        res = solve(pen, 7, method="dense")
        good = (rep.dim_intersection > 0 and res.pencil_status.startswith("singular") and res.deflated
                and np.all(np.isfinite(res.eigenvalues)) and np.all(np.isreal(res.eigenvalues))
                and res.residuals.max() < 1e-8)
        ok &= bool(good)
        details.append(f"l={level}: dim(kerA cap kerB)={rep.dim_intersection}, {res.pencil_status}, "
                       f"lambda/pi^2 {fmt(res.scaled[:4])}, max residual {res.residuals.max():.1e}")
    dt = time.perf_counter() - t0
    report(6, "hexagons k=1 singular pencil", ok, "; ".join(details), dt)


def test_c07_kernel_b_trivial(report):
    t0 = time.perf_counter()
    dims = {}
    for fam in ("triangular", "square"):
        for level in (1, 2, 3):
            dims[fam, level] = pencil_report(assemble(meshgen.generate(fam, level), 0)).dim_ker_B
    dt = time.perf_counter() - t0
    ok = all(d == 0 for d in dims.values())
    report(7, "dim ker B = 0, k=0 triangles/squares", ok,
           " ".join(f"{f[:3]}{l}:{d}" for (f, l), d in dims.items()), dt)


def test_c08_kernel_mass_is_rt0(report):
    t0 = time.perf_counter()
    ratios = []
    for level in (1, 2, 3):
        mesh = meshgen.generate("triangular", level)
        pen = assemble(mesh, 0)
        M = rt0_global_mass(mesh, pen.dofmap)
        A = pen.A.toarray()
        w, U = linalg.eigh(A)
        Y = U[:, w <= 1e-10 * np.abs(A).sum(0).max()]
        ratios.append(np.linalg.norm((pen.B0 - M) @ Y, 2) / np.linalg.norm(M.toarray(), 2))
    dt = time.perf_counter() - t0
    ok = max(ratios) <= 1e-10
    report(8, "B0 = M_RT0 on ker A, triangles", ok, f"|(B0-M)Y|/|M| {fmt(ratios)}", dt)


def test_c09_norm_gap(report):
    t0 = time.perf_counter()
    rows = {r.n: r for r in harness.norm_gap_study((8, 32))}
    dt = time.perf_counter() - t0
    ok = rows[32].mu_min < 0.5 * rows[8].mu_min
    report(9, "norm non-equivalence", ok, f"mu_min(8)={rows[8].mu_min:.4g} mu_min(32)={rows[32].mu_min:.4g}", dt)


def test_c10_lshape(report):
    t0 = time.perf_counter()
    lines, ok = [], True
    for k in (0, 1, 2):
        tab = sweep(domain="lshape", family="triangular", levels=(1, 2, 3, 4), order=k, n_eigs=5)
        r = tab.rate_between(3, 4)
        first_ok = abs(r[0] - 4 / 3) <= 0.06
        pair_ok = np.all(r[2:4] >= 5) if k == 2 else np.all(np.abs(r[2:4] - 2 * (k + 1)) <= 0.3)
        ok &= bool(first_ok and pair_ok)
        lines.append(f"k={k}: first {r[0]:.2f}, pi^2 pair {fmt(r[2:4])}")
    tab = sweep(domain="lshape", family="square", levels=(4, 5, 6, 7, 8), n_eigs=1)
    r = tab.rates[0, 1:]
    ok &= bool(np.all(np.abs(r - 2) <= 0.05))
    lines.append(f"squares k=0 first {fmt(r)}")
    dt = time.perf_counter() - t0
    report(10, "L-shape rates", ok, "; ".join(lines), dt)


def test_c11_property_suites(report):
    t0 = time.perf_counter()
    rng = np.random.default_rng(11)
    checks = {}

    # projector orthogonality on a random hexagon, k=2
    poly = random_star_polygon(rng, 6)
    sp = LocalSpace(poly, 2)
    ops = local_matrices(poly, 2, space=sp)
    x = rng.standard_normal(sp.ndof)
    g = sp.basis.grad_pkp1(sp.rule.points)
    pi_v = np.einsum("pia,i->pa", g, ops.proj_matrix @ x)
    lhs = np.einsum("p,pa,pja->j", sp.rule.weights, pi_v, g)
    rhs = ops.gradient_moments(x)
    checks["projector"] = np.abs(lhs - rhs).max() / max(1.0, np.abs(rhs).max()) <= 1e-11

    # local divergence against the RT0 closed form
    worst = 0.0
    for _ in range(10):
        tri = rng.uniform(0, 1, (3, 2))
        e1, e2 = tri[1] - tri[0], tri[2] - tri[0]
        if e1[0] * e2[1] - e1[1] * e2[0] < 0:
            tri = tri[::-1]
        ref = rt0_div(tri)
        worst = max(worst, np.abs(local_div(tri, 0)[0] - ref).max() / np.abs(ref).max())
    checks["rt0 div"] = worst <= 1e-13

    # exact symmetry and PSD of the assembled matrices
    sym_ok = True
    for fam, k, stab in (("voronoi", 1, True), ("hexagonal", 0, False), ("triangular", 2, False)):
        pen = assemble(meshgen.generate(fam, 0), k, 0.1, stab)
        for M in (pen.A, pen.B):
            sym_ok &= (M - M.T).count_nonzero() == 0
            sym_ok &= np.linalg.eigvalsh(M.toarray()).min() >= -1e-11 * abs(M).sum(axis=0).max()
    checks["symmetry/psd"] = bool(sym_ok)

    # commuting property for a polynomial vector field of degree k+2
    worst = 0.0
    for k in (0, 1, 2, 3):
        poly = random_star_polygon(rng, 7) * 0.3
        sp = LocalSpace(poly, k)
        cx, cy = rng.standard_normal((2, dim_poly(k + 2)))
        bas = sp.basis

        def field(p):
            m = bas.values(p, k + 2)
            return np.column_stack([m @ cx, m @ cy])

        def div(p):
            gr = bas.gradients(p, k + 2)
            return gr[:, :, 0] @ cx + gr[:, :, 1] @ cy

        d = local_div(poly, k, sp) @ sp.dofs_of(field)
        mk = bas.values(sp.rule.points, k)
        Mk = (mk * sp.rule.weights[:, None]).T @ mk
        ref = np.linalg.solve(Mk, mk.T @ (sp.rule.weights * div(sp.rule.points)))
        worst = max(worst, np.abs(d - ref).max() / max(1.0, np.abs(ref).max()))
    checks["commuting"] = worst <= 1e-11

    # dense solver against a determinant sweep on random 4x4 pencils
    worst = 0.0
    for _ in range(10):
        Q1, _ = np.linalg.qr(rng.standard_normal((4, 4)))
        Q2, _ = np.linalg.qr(rng.standard_normal((4, 4)))
        A = Q1 @ np.diag(rng.uniform(0.5, 5, 4)) @ Q1.T
        B = Q2 @ np.diag(rng.uniform(0.5, 5, 4)) @ Q2.T
        lam = solve_dense(A, B, 4).eigenvalues
        # roots of the quartic det(A - t B), recovered by interpolation at Chebyshev nodes
        hi = 2 * lam.max()
        nodes = hi / 2 * (1 - np.cos(np.pi * (np.arange(9) + 0.5) / 9))
        coef = np.polynomial.chebyshev.chebfit(2 * nodes / hi - 1, [np.linalg.det(A - t * B) for t in nodes], 4)
        roots = np.sort(np.real((np.polynomial.chebyshev.chebroots(coef) + 1) * hi / 2))
        # polish each root by bisection on the sign change of det
        f = lambda t: np.linalg.det(A - t * B)
        roots = np.array([optimize.brentq(f, r * (1 - 1e-5), r * (1 + 1e-5), xtol=1e-16, rtol=1e-15)
                          for r in roots])
        worst = max(worst, np.abs(np.sort(roots) - lam).max() / lam.max())
    checks["4x4 det oracle"] = worst <= 1e-10

    dt = time.perf_counter() - t0
    report(11, "property suites", all(checks.values()),
           " ".join(f"{n}:{'ok' if v else 'FAIL'}" for n, v in checks.items()), dt)
