import json
import math

import pytest

from subdiff_plots import FigureSpec, MissingSeries, SchemaMismatch, render_comparison
from subdiff_plots.cli import main as cli_main
from subdiff_plots.render import load_curves, load_theory

HEADER = "iteration,algorithm,msd_db,msd_component_U_db,msd_component_perp_db"


def _write_run(tmp_path, floors, theory_exact, theory_small, iterations=60, stride=10):
    """Synthesize a contract-shaped result set: curves decaying onto floors."""
    rows = [HEADER]
    for algo, floor in floors.items():
        for i in range(1, iterations + 1):
            it = i * stride
            msd = floor + 20.0 * math.exp(-it / 120.0)
            rows.append(f"{it},{algo},{msd},{msd - 0.5},{msd - 9.0}")
    curves = tmp_path / "curves.csv"
    curves.write_text("\n".join(rows) + "\n")
    summary = tmp_path / "summary.json"
    summary.write_text(
        json.dumps({"theory": {"msd_exact_db": theory_exact, "msd_small_mu_db": theory_small}})
    )
    return curves, summary


@pytest.fixture
def high_noise_files(tmp_path):
    # two nearly overlapping curves, as in the high-noise comparison
    sub = tmp_path / "high"
    sub.mkdir()
    return _write_run(sub, {"exact_diffusion": -41.2, "approx_projection": -41.1}, -41.4, -41.6)


@pytest.fixture
def low_noise_files(tmp_path):
    # bias-corrected curve settles well below the approximate one
    sub = tmp_path / "low"
    sub.mkdir()
    return _write_run(sub, {"exact_diffusion": -64.3, "approx_projection": -53.8}, -64.7, -65.0)


def test_render_high_noise_figure(high_noise_files, tmp_path):
    curves, summary = high_noise_files
    out = tmp_path / "fig_high.png"
    path = render_comparison(
        FigureSpec(curves_path=str(curves), summary_path=str(summary), out_path=str(out))
    )
    assert out.exists() and out.stat().st_size > 1000
    assert path == str(out)


def test_render_low_noise_svg_contains_series_and_overlays(low_noise_files, tmp_path):
    curves, summary = low_noise_files
    out = tmp_path / "fig_low.svg"
    render_comparison(
        FigureSpec(
            curves_path=str(curves),
            summary_path=str(summary),
            out_path=str(out),
            algorithms=["exact_diffusion", "approx_projection"],
            theory=["exact", "small_mu"],
        )
    )
    text = out.read_text()
    assert "exact_diffusion" in text
    assert "approx_projection" in text
    assert "theory (series)" in text
    assert "theory (small step)" in text


@pytest.mark.parametrize("suffix", ["png", "svg"])
def test_rerender_is_byte_identical(high_noise_files, tmp_path, suffix):
    curves, summary = high_noise_files
    out1 = tmp_path / f"a.{suffix}"
    out2 = tmp_path / f"b.{suffix}"
    spec1 = FigureSpec(curves_path=str(curves), summary_path=str(summary), out_path=str(out1))
    spec2 = FigureSpec(curves_path=str(curves), summary_path=str(summary), out_path=str(out2))
    render_comparison(spec1)
    render_comparison(spec2)
    assert out1.read_bytes() == out2.read_bytes()


def test_empty_selection_raises(high_noise_files, tmp_path):
    curves, summary = high_noise_files
    spec = FigureSpec(
        curves_path=str(curves), summary_path=str(summary),
        out_path=str(tmp_path / "x.png"), algorithms=[],
    )
    with pytest.raises(MissingSeries):
        render_comparison(spec)


def test_absent_algorithm_raises(high_noise_files, tmp_path):
    curves, summary = high_noise_files
    spec = FigureSpec(
        curves_path=str(curves), summary_path=str(summary),
        out_path=str(tmp_path / "x.png"), algorithms=["centralized"],
    )
    with pytest.raises(MissingSeries, match="centralized"):
        render_comparison(spec)


def test_malformed_csv_raises(tmp_path):
    bad = tmp_path / "bad.csv"
    bad.write_text("iteration,algorithm,wrong\n1,a,2\n")
    with pytest.raises(SchemaMismatch):
        load_curves(str(bad))


def test_non_numeric_csv_raises(tmp_path):
    bad = tmp_path / "bad.csv"
    bad.write_text(HEADER + "\n1,a,not_a_number,0,0\n")
    with pytest.raises(SchemaMismatch):
        load_curves(str(bad))


def test_missing_files_raise(tmp_path):
    with pytest.raises(SchemaMismatch):
        load_curves(str(tmp_path / "none.csv"))
    with pytest.raises(SchemaMismatch):
        load_theory(str(tmp_path / "none.json"), ["exact"])


def test_missing_theory_value_raises(high_noise_files, tmp_path):
    curves, _ = high_noise_files
    partial = tmp_path / "partial.json"
    partial.write_text(json.dumps({"theory": {"msd_exact_db": -41.0}}))
    with pytest.raises(SchemaMismatch, match="msd_small_mu_db"):
        load_theory(str(partial), ["exact", "small_mu"])
    with pytest.raises(SchemaMismatch, match="unknown"):
        load_theory(str(partial), ["bogus"])


def test_cli_render_smoke(high_noise_files, tmp_path, capsys):
    curves, summary = high_noise_files
    out = tmp_path / "cli.png"
    rc = cli_main(
        [
            "render", "--curves", str(curves), "--summary", str(summary),
            "--out", str(out), "--algos", "exact_diffusion,approx_projection",
            "--theory", "exact,small_mu",
        ]
    )
    assert rc == 0
    assert out.exists()
    assert str(out) in capsys.readouterr().out


def test_cli_reports_errors(high_noise_files, tmp_path, capsys):
    curves, summary = high_noise_files
    rc = cli_main(
        [
            "render", "--curves", str(curves), "--summary", str(summary),
            "--out", str(tmp_path / "x.png"), "--algos", "nope",
        ]
    )
    assert rc == 1
    assert "nope" in capsys.readouterr().err
