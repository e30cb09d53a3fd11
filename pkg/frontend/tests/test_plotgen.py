"""plotgen tests: schema handling, figure properties, determinism, and the
full pipeline driven through the simulator's CLI (its external interface)."""
import subprocess
import sys

import numpy as np
import pytest

from plotgen import (PanelSpec, SchemaError, build_convergence_figure,
                     build_energy_figure, fit_order, read_convergence,
                     read_records, render_convergence, render_energy_panels)
from plotgen.cli import main as cli_main
from plotgen.records import EXPECTED_COLUMNS

HEADER = ",".join(EXPECTED_COLUMNS)


def simulate(tmp_path, name, *args):
    """Run the simulator CLI; plotgen only sees the files it writes."""
    out = tmp_path / name
    cmd = [sys.executable, "-m", "leapfrog4d.cli", *args]
    res = subprocess.run(cmd, capture_output=True, text=True)
    assert res.returncode == 0, res.stderr
    return out


def fake_records(tmp_path, name="fake.csv", n=50, h=0.02, amp=1e-4):
    rows = [HEADER]
    for k in range(n + 1):
        tau = k * h
        err = amp * np.sin(0.37 * k)
        rows.append(f"{k},{tau:.17g},{tau:.17g},0,1,0,1.02,0.1,0,0,"
                    f"3.05,{err:.17g},-0.5,,")
    path = tmp_path / name
    path.write_text("\n".join(rows) + "\n")
    return path


def test_read_records_roundtrip(tmp_path):
    path = fake_records(tmp_path)
    rec = read_records(path)
    assert rec.h == pytest.approx(0.02, rel=1e-12)
    assert rec.tau_end == pytest.approx(1.0, rel=1e-12)
    assert len(rec.data) == 51
    assert np.isnan(rec.data[0, 13])


def test_schema_mismatch_names_offending_column(tmp_path):
    bad = tmp_path / "bad.csv"
    bad.write_text(HEADER.replace("gamma", "lorentz") + "\n0,0,0\n")
    with pytest.raises(SchemaError) as err:
        read_records(bad)
    assert "gamma" in str(err.value)
    assert "lorentz" in str(err.value)


def test_missing_and_empty_files(tmp_path):
    with pytest.raises(FileNotFoundError):
        read_records(tmp_path / "none.csv")
    empty = tmp_path / "empty.csv"
    empty.write_text(HEADER + "\n")
    with pytest.raises(SchemaError):
        read_records(empty)


def test_energy_panel_limits_match_envelope(tmp_path):
    paths = [fake_records(tmp_path, f"r{i}.csv", h=h, n=40)
             for i, h in enumerate((0.04, 0.02, 0.01))]
    spec = PanelSpec(csv_paths=tuple(paths), envelope_constant=2.0)
    fig = build_energy_figure(spec)
    assert len(fig.axes) == 3
    for ax, h in zip(fig.axes, (0.04, 0.02, 0.01)):
        lo, hi = ax.get_ylim()
        assert hi == pytest.approx(2.0 * h * h, rel=1e-12)
        assert lo == pytest.approx(-2.0 * h * h, rel=1e-12)


def test_render_is_deterministic(tmp_path):
    path = fake_records(tmp_path)
    spec = PanelSpec(csv_paths=(str(path),), envelope_constant=2.0)
    out1 = tmp_path / "a.png"
    out2 = tmp_path / "b.png"
    render_energy_panels(spec, out1)
    render_energy_panels(spec, out2)
    assert out1.read_bytes() == out2.read_bytes()


def test_fit_order_paths():
    h = np.array([0.04, 0.02, 0.01])
    assert fit_order(h, 3.0 * h**2) == pytest.approx(2.0, abs=1e-9)
    assert fit_order(np.array([0.04]), np.array([1e-4])) is None
    assert fit_order(h, np.full(3, 2.5e-7)) is None


def test_convergence_figure_annotates_slope():
    table = np.column_stack([[0.04, 0.02, 0.01],
                             [4e-3, 1e-3, 2.5e-4],
                             [np.nan, 2.0, 2.0]])
    fig, slope = build_convergence_figure(table)
    assert slope == pytest.approx(2.0, abs=1e-9)
    texts = [t.get_text() for t in fig.axes[0].texts]
    assert any("fitted slope" in t for t in texts)


def test_convergence_single_point_omits_fit(tmp_path):
    table = np.array([[0.02, 1e-3, np.nan]])
    fig, slope = build_convergence_figure(table)
    assert slope is None
    texts = [t.get_text() for t in fig.axes[0].texts]
    assert not any("fitted slope" in t for t in texts)


def test_cli_error_paths(tmp_path):
    assert cli_main(["energy", "--csv", str(tmp_path / "none.csv"),
                     "--c", "2", "--out", str(tmp_path / "o.png")]) == 2
    bad = tmp_path / "bad.csv"
    bad.write_text("h,err\n")
    assert cli_main(["converge", "--csv", str(bad),
                     "--out", str(tmp_path / "o.png")]) == 2


def test_criterion_14_energy_panels_and_convergence(tmp_path):
    """Secondary acceptance: a three-panel figure from the quadratic-well
    envelope runs with y-limits exactly +-2 h^2, and a convergence plot
    whose fitted slope lies in [1.8, 2.2]."""
    csvs = []
    for h in (0.01, 0.02, 0.04):
        out = tmp_path / f"env_h{h}.csv"
        simulate(tmp_path, out.name, "run", "--preset", "example1",
                 "--method", "explicit", "--h", str(h), "--tau-end", "10000",
                 "--record-every", str(max(1, int(round(10000 / h) // 2000))),
                 "--out", str(out))
        csvs.append(str(out))

    fig_path = tmp_path / "fig1.png"
    code = cli_main(["energy", "--csv", *csvs, "--c", "2",
                     "--out", str(fig_path)])
    assert code == 0
    assert fig_path.stat().st_size > 10_000

    spec = PanelSpec(csv_paths=tuple(csvs), envelope_constant=2.0)
    fig = build_energy_figure(spec)
    for ax, h in zip(fig.axes, (0.01, 0.02, 0.04)):
        lo, hi = ax.get_ylim()
        assert hi == pytest.approx(2.0 * h * h, rel=1e-12)
        assert lo == -hi

    conv_csv = tmp_path / "conv.csv"
    simulate(tmp_path, conv_csv.name, "converge", "--method", "explicit",
             "--h-list", "0.04,0.02,0.01,0.005", "--tau-end", "10",
             "--h-ref", "1e-4", "--out", str(conv_csv))
    conv_png = tmp_path / "conv.png"
    slope = render_convergence(read_convergence(conv_csv), conv_png)
    assert conv_png.stat().st_size > 5_000
    assert 1.8 <= slope <= 2.2
    print(f"criterion 14: PASS - three-panel envelope figure rendered; "
          f"fitted convergence slope {slope:.3f} in [1.8, 2.2]")
