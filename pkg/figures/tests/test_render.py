import numpy as np
import pytest

from dtmec_figures.render import (BREAKDOWN_IDENTITY_TOL, FigureDataError,
                                  render, render_breakdown, render_convergence)


def write(path, header, rows, comments=()):
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = [f"# {c}" for c in comments] + [header]
    lines += [",".join(str(v) for v in r) for r in rows]
    path.write_text("\n".join(lines) + "\n")


@pytest.fixture
def bundle(tmp_path):
    d = tmp_path / "bundle"
    write(d / "convergence.csv", "k,b,iteration,deployment_cost",
          [(10, 4, it, 1.0 / (1 + it)) for it in range(40)],
          comments=["synthetic"])
    write(d / "deploy_compare.csv", "k,b,method,objective_mean,objective_ci,seeds",
          [(k, 6, mth, obj, 0.01, 5)
           for k, base in [(20, 0.3), (40, 0.5)]
           for mth, obj in [("proposed", base), ("nearest", base + 0.1),
                            ("random", base + 0.2)]])
    write(d / "total_cost.csv", "policy,p_tx,q,omega,c,total_cost_mean,total_cost_ci",
          [(pol, 0.8, q, 1.0, 12.0, 5 + i + q, 0.05)
           for i, pol in enumerate(["zw", "sac", "solved"])
           for q in (0.1, 0.5, 0.9)])
    aoci = np.array([3.0, 2.5, 2.0])
    cost = np.array([1.0, 2.0, 3.0])
    write(d / "breakdown.csv", "policy,p_tx,q,omega,c,avg_aoci,avg_update_cost,total_cost",
          [("zw", 0.8, q, 1.0, 12.0, a, c, a + c)
           for q, a, c in zip((0.1, 0.5, 0.9), aoci, cost)])
    return d


def test_all_figures_render(bundle, tmp_path):
    for fid in ("fig-convergence", "fig-deploy-compare", "fig-total-cost",
                "fig-breakdown"):
        out = render(fid, bundle, tmp_path / f"{fid}.png")
        assert out.exists()
        assert out.stat().st_size > 0


def test_rendering_is_deterministic_and_read_only(bundle, tmp_path):
    before = (bundle / "convergence.csv").read_bytes()
    a = render("fig-convergence", bundle, tmp_path / "a.png").read_bytes()
    b = render("fig-convergence", bundle, tmp_path / "b.png").read_bytes()
    assert a == b
    assert (bundle / "convergence.csv").read_bytes() == before


def test_monotone_series_plots_decreasing(bundle, tmp_path):
    # the synthetic convergence series is strictly decreasing; spot-check the
    # values the renderer will draw
    from dtmec_figures.render import read_csv
    rows = read_csv(bundle / "convergence.csv")
    vals = [float(r["deployment_cost"]) for r in rows]
    assert all(a > b for a, b in zip(vals, vals[1:]))
    render("fig-convergence", bundle, tmp_path / "c.png")


def test_empty_csv_is_an_error(tmp_path):
    d = tmp_path / "empty"
    write(d / "convergence.csv", "k,b,iteration,deployment_cost", [])
    with pytest.raises(FigureDataError, match="no data rows"):
        render_convergence(d, tmp_path / "x.png")
    assert not (tmp_path / "x.png").exists()


def test_missing_column_is_an_error(tmp_path):
    d = tmp_path / "cols"
    write(d / "convergence.csv", "k,b,iteration", [(1, 1, 0)])
    with pytest.raises(FigureDataError, match="deployment_cost"):
        render_convergence(d, tmp_path / "x.png")


def test_missing_file_is_an_error(tmp_path):
    with pytest.raises(FigureDataError, match="missing"):
        render("fig-total-cost", tmp_path, tmp_path / "x.png")


def test_breakdown_identity_guard(bundle, tmp_path):
    path = bundle / "breakdown.csv"
    lines = path.read_text().splitlines()
    cells = lines[1].split(",")
    cells[-1] = str(float(cells[-1]) + 10 * BREAKDOWN_IDENTITY_TOL)
    lines[1] = ",".join(cells)
    path.write_text("\n".join(lines) + "\n")
    with pytest.raises(FigureDataError, match="component sum"):
        render_breakdown(bundle, tmp_path / "x.png")
    assert not (tmp_path / "x.png").exists()


def test_unknown_figure_id(bundle, tmp_path):
    with pytest.raises(FigureDataError, match="unknown figure id"):
        render("fig-nonsense", bundle, tmp_path / "x.png")


def test_cli_roundtrip(bundle, tmp_path, capsys):
    from dtmec_figures.cli import main
    out = tmp_path / "cli.png"
    assert main(["fig-breakdown", "--bundle", str(bundle), "--out", str(out)]) == 0
    assert out.exists()
    assert main(["fig-convergence", "--bundle", str(tmp_path / "nope"),
                 "--out", str(out)]) == 1
