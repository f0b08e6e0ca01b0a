import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from acvem import harness
from acvem.assembly import assemble
from acvem.config import RunConfig
from acvem.harness import (ConvergenceTable, exact_lshape, exact_rectangle, match_to_exact, rate,
                           run_experiment)
from acvem.pencil import solve
from acvem.raviart_thomas import rt0_global_mass

from conftest import cached_mesh

PI2 = math.pi**2


def brute_force_rectangle(a, b, count):
    vals = sorted(PI2 * ((n / a) ** 2 + (m / b) ** 2) for n in range(21) for m in range(21) if n + m > 0)
    return np.array(vals[:count])


def test_exact_rectangle_examples():
    ex = exact_rectangle(1.0, 1.1, 4)
    assert ex.values[0] == pytest.approx(PI2 / 1.21, rel=1e-15)
    assert ex.values[1] == pytest.approx(PI2, rel=1e-15)
    assert ex.values[2] == pytest.approx(PI2 * (1 + 1 / 1.21), rel=1e-15)
    assert ex.scaled[0] == pytest.approx(1 / 1.21)


def test_exact_unit_square_multiplicity():
    ex = exact_rectangle(1.0, 1.0, 5)
    assert ex.scaled == pytest.approx([1, 1, 2, 4, 4])


@settings(max_examples=40, deadline=None)
@given(a=st.floats(0.3, 3.0), b=st.floats(0.3, 3.0), count=st.integers(1, 20))
def test_exact_rectangle_brute_force(a, b, count):
    assert exact_rectangle(a, b, count).values == pytest.approx(brute_force_rectangle(a, b, count), rel=1e-14)


def test_exact_rectangle_rejects_bad_sides():
    with pytest.raises(ValueError):
        exact_rectangle(0.0, 1.0)


def test_exact_lshape():
    ex = exact_lshape(5)
    assert ex.values[2] == ex.values[3] == pytest.approx(PI2)
    assert exact_lshape(5, precise=False).values == pytest.approx(ex.values, abs=1e-6)
    with pytest.raises(ValueError):
        exact_lshape(6)


@pytest.mark.parametrize("e_prev, e_cur, expected", [
    (4e-2, 1e-2, 2.0),
    (6.72e-4, 1.81e-4, 1.892),
    (1.0, 1.0, 0.0),
    (1e-3, 2e-3, -1.0),
])
def test_rate_examples(e_prev, e_cur, expected):
    assert rate(e_prev, e_cur) == pytest.approx(expected, abs=5e-4)


@pytest.mark.parametrize("e_prev, e_cur", [(0.0, 1e-3), (1e-3, 0.0), (np.nan, 1.0), (np.inf, 1.0), (-1.0, 1.0)])
def test_rate_undefined(e_prev, e_cur):
    assert math.isnan(rate(e_prev, e_cur))


def test_match_with_multiplicity():
    exact = exact_rectangle(1.0, 1.0, 5).values
    computed = exact * (1 + np.array([1e-3, -2e-3, 1e-3, 5e-4, 1e-3]))
    matched, notes = match_to_exact(computed[::-1], exact)
    assert np.allclose(matched, np.sort(computed))
    assert notes == []


def test_match_flags_misordering():
    exact = np.array([1.0, 2.0, 3.0])
    matched, notes = match_to_exact([1.0, 2.9, 3.0], exact)
    assert any("eigenvalue 2" in n and "#3" in n for n in notes)


def test_match_short_list():
    matched, notes = match_to_exact([1.0], [1.0, 2.0])
    assert np.isnan(matched[1]) and notes


def _table():
    exact = np.array([1.0, 2.0])
    lam = np.array([[1.04, 1.01, 1.0025], [2.08, 2.02, 2.005]])
    return ConvergenceTable(exact, [1, 2, 3], lam)


def test_table_errors_and_rates():
    t = _table()
    assert t.errors[:, 0] == pytest.approx([0.04, 0.04])
    assert np.isnan(t.rates[:, 0]).all()
    assert t.rates[:, 1:] == pytest.approx(np.full((2, 2), 2.0))
    assert t.rate_between(1, 3) == pytest.approx([4.0, 4.0])


def test_rates_skip_nonconsecutive_levels():
    t = ConvergenceTable(np.array([1.0]), [1, 3], np.array([[1.04, 1.0025]]))
    assert np.isnan(t.rates).all()


def test_table_csv_schema_and_determinism():
    t = _table()
    text = t.to_csv()
    lines = text.splitlines()
    assert lines[0] == "eig_index,exact,level,lambda,rel_error,rate"
    assert len(lines) == 1 + 2 * 3
    assert lines[1].endswith(",")  # no rate at the first level
    assert lines[2].split(",")[-1] == "2.0000"
    assert text == _table().to_csv()
    md = t.to_markdown()
    assert md.splitlines()[0] == "| exact | l=1 | l=2 | l=3 |"
    assert "(2.00)" in md


def test_run_experiment_square(tmp_path):
    cfg = RunConfig(levels=(1, 2), n_eigs=4, outdir=str(tmp_path))
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        t = run_experiment(cfg)
    assert (t.errors[:, 1] < t.errors[:, 0]).all()
    assert np.nanmin(t.rates[:, 1]) > 1.8
    for name in ("convergence.csv", "convergence.md", "config.json", "spectrum_l1.csv", "spectrum_l2.csv"):
        assert (tmp_path / name).exists()
    first = (tmp_path / "convergence.csv").read_text()
    run_experiment(cfg)
    assert (tmp_path / "convergence.csv").read_text() == first


def test_run_experiment_without_outdir_writes_nothing(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    run_experiment(RunConfig(levels=(0,), n_eigs=3))
    assert list(tmp_path.iterdir()) == []


def test_experiment_error_names_stage():
    cfg = RunConfig(levels=(0,), n_eigs=3)
    with pytest.raises(harness.ExperimentError) as info:
        harness.run_level(cfg, -1)
    assert info.value.stage == "mesh" and info.value.level == -1


def test_triangles_level1_value():
    cfg = RunConfig(family="triangular", levels=(1,), n_eigs=1)
    lam = harness.run_level(cfg, 1).result.eigenvalues[0]
    assert abs(lam - PI2 / 1.21) / (PI2 / 1.21) == pytest.approx(6.72e-4, rel=5e-3)


# ---------------------------------------------------------------------------
# counterexample field and norm gap


@pytest.mark.parametrize("n", [4, 8, 16, 32])
def test_counterexample_l2_norm(n):
    mesh, v = harness.counterexample_field(n)
    M = rt0_global_mass(mesh, v.dofmap)
    # h^2/2 on every triangle except for the boundary-edge deficit
    assert v.values @ M @ v.values == pytest.approx(1 - 2 / (3 * n * n), rel=1e-12)


def test_counterexample_mass_decays():
    b0 = []
    for n in (4, 8, 16, 32):
        mesh, v = harness.counterexample_field(n)
        pen = assemble(mesh, 0)
        b0.append(v.values @ pen.B0 @ v.values)
    b0 = np.array(b0)
    assert b0[0] == pytest.approx(2 / 9, rel=1e-12)
    assert b0[1] == pytest.approx(1 / 8, rel=1e-12)
    ratios = b0[:-1] / b0[1:]
    assert np.all((ratios > 1.7) & (ratios < 2.1))


def test_counterexample_interior_projection_vanishes():
    mesh, v = harness.counterexample_field(8)
    from acvem.assembly import element_operators
    ops, shape_of = element_operators(mesh, 0)
    boundary_cells = set(mesh.edge_cells[mesh.boundary_edges, 0])
    for c in range(mesh.n_cells):
        if c in boundary_cells:
            continue
        coef = ops[shape_of[c]].proj_matrix @ v.dofmap.global_to_local(c, v.values)
        assert np.abs(coef).max() < 1e-12


def test_counterexample_needs_n3():
    with pytest.raises(ValueError):
        harness.counterexample_field(2)


def test_norm_gap_shrinks():
    rows = harness.norm_gap_study((4, 8, 16))
    mins = [r.mu_min for r in rows]
    assert all(a > b for a, b in zip(mins, mins[1:]))
    assert mins[1] == pytest.approx(0.0346, rel=1e-2)
    assert all(r.mu_max == pytest.approx(1.0, abs=1e-10) for r in rows)


def test_norm_gap_rejects_polygons():
    with pytest.raises(ValueError):
        harness.norm_gap(cached_mesh("square", 0))


# ---------------------------------------------------------------------------
# eigenfunction dump


@pytest.mark.parametrize("k", [1, 2])
def test_eigenfunction_matches_first_mode(k, tmp_path):
    cfg = RunConfig(levels=(3,), order=k, n_eigs=1)
    run = harness.run_level(cfg, 3)
    x = run.result.vectors[:, 0]
    dump = harness.dump_eigenfunction(run.pencil, run.result, 0, tmp_path / "u.csv", sub=2)
    norm = np.sqrt(x @ run.pencil.B0 @ x)
    a, b = 1.0, 1.1
    ref = np.abs(np.sin(np.pi * dump.points[:, 1] / b) / b) / np.sqrt(a / (2 * b))
    got = dump.modulus / norm
    assert np.abs(got - ref).max() <= 0.05 * ref.max()
    # the field is vertical
    assert np.abs(dump.values[:, 0]).max() <= 0.05 * np.abs(dump.values[:, 1]).max()
    lines = (tmp_path / "u.csv").read_text().splitlines()
    assert lines[0] == "cell,x,y,ux,uy,modulus" and len(lines) == len(dump.points) + 1


def test_dump_index_out_of_range():
    pen = assemble(cached_mesh("square", 0), 0)
    res = solve(pen, 2)
    with pytest.raises(IndexError):
        harness.dump_eigenfunction(pen, res, 5)


