"""Command-line behaviour: exit codes, config precedence, file outputs."""

import numpy as np
import pytest

from condnet.cli import main
from condnet.calibrate import load_constants
from condnet.generator import load_sample
from netfixtures import DATA

REFERENCE_GRAPH = str(DATA / "reference_network_8x13.txt")

GEN_FLAGS = ["--target-volume-fraction", "0.05", "--n-spheres", "10",
             "--sphere-radius", "0.1", "--seed", "3"]


def run(args):
    return main(args)


# ---------------------------------------------------------------------------
# usage errors
# ---------------------------------------------------------------------------

def test_no_args_usage_error(capsys):
    assert run([]) == 2
    assert "usage" in capsys.readouterr().err.lower()


def test_unknown_command():
    assert run(["frobnicate"]) == 2


def test_unknown_config_key(tmp_path):
    cfg = tmp_path / "bad.ini"
    cfg.write_text("[generation]\nwibble = 3\n")
    assert run(["--config", str(cfg), "generate", "--out",
                str(tmp_path / "s.txt")]) == 2


def test_unknown_config_section(tmp_path):
    cfg = tmp_path / "bad.ini"
    cfg.write_text("[wibble]\nx = 1\n")
    assert run(["--config", str(cfg), "generate", "--out",
                str(tmp_path / "s.txt")]) == 2


def test_bad_config_version(tmp_path):
    cfg = tmp_path / "bad.ini"
    cfg.write_text("[run]\nconfig_version = 99\n")
    assert run(["--config", str(cfg), "generate", "--out",
                str(tmp_path / "s.txt")]) == 2


def test_voxel_rejects_graph_file(tmp_path):
    assert run(["voxel", "--raw", REFERENCE_GRAPH, "--dims", "2,2,2",
                "--out", str(tmp_path / "v.txt")]) == 2


def test_missing_input_exit_1(tmp_path, capsys):
    missing = str(tmp_path / "nope.txt")
    rc = run(["tensor", "--sample", missing, "--out", str(tmp_path / "t.txt")])
    assert rc == 1
    assert "nope.txt" in capsys.readouterr().err
    assert not (tmp_path / "t.txt").exists()


# ---------------------------------------------------------------------------
# generate
# ---------------------------------------------------------------------------

def test_generate_writes_sample(tmp_path):
    out = tmp_path / "sample.txt"
    assert run(["generate", *GEN_FLAGS, "--puff-factor", "1.2",
                "--fraction-probes", "1000", "--out", str(out)]) == 0
    sample = load_sample(out)
    assert sample.n_inclusions == 10
    assert sample.spec.seed == 3
    # puffed by default
    assert sample.inclusions[0].radius == pytest.approx(0.12)


def test_generate_no_puff(tmp_path):
    out = tmp_path / "sample.txt"
    assert run(["generate", *GEN_FLAGS, "--puff-factor", "1.2", "--no-puff",
                "--out", str(out)]) == 0
    assert load_sample(out).inclusions[0].radius == pytest.approx(0.1)


def test_config_file_and_flag_precedence(tmp_path):
    cfg = tmp_path / "run.ini"
    cfg.write_text(
        "[run]\nconfig_version = 1\n"
        "[generation]\nn_spheres = 5\nsphere_radius = 0.08\n"
        "target_volume_fraction = 0.05\nseed = 4\n")
    out = tmp_path / "a.txt"
    assert run(["--config", str(cfg), "generate", "--out", str(out),
                "--no-puff"]) == 0
    assert load_sample(out).n_inclusions == 5
    out2 = tmp_path / "b.txt"
    assert run(["--config", str(cfg), "generate", "--n-spheres", "7",
                "--out", str(out2), "--no-puff"]) == 0
    assert load_sample(out2).n_inclusions == 7


def test_duplicate_flag_last_wins(tmp_path, capsys):
    out = tmp_path / "sample.txt"
    assert run(["generate", *GEN_FLAGS, "--seed", "9", "--no-puff",
                "--out", str(out)]) == 0
    assert load_sample(out).spec.seed == 9
    assert "last occurrence wins" in capsys.readouterr().err


# ---------------------------------------------------------------------------
# homogenize / tensor
# ---------------------------------------------------------------------------

def test_homogenize_reference_graph(tmp_path, capsys):
    out = tmp_path / "g.txt"
    assert run(["homogenize", "--graph", REFERENCE_GRAPH, "--out", str(out)]) == 0
    text = out.read_text()
    value = float([ln for ln in text.splitlines() if ln.startswith("value")][0].split()[1])
    assert value == pytest.approx(0.10717589915720106, rel=1e-9)


def test_homogenize_sample_all_directions(tmp_path):
    sample_path = tmp_path / "s.txt"
    assert run(["generate", *GEN_FLAGS, "--puff-factor", "1.3",
                "--fraction-probes", "1000", "--out", str(sample_path)]) == 0
    out = tmp_path / "h.txt"
    assert run(["homogenize", "--sample", str(sample_path), "--out", str(out)]) == 0
    lines = out.read_text().splitlines()
    axes = [ln.split()[1] for ln in lines if ln.startswith("axis")]
    assert axes == ["x", "y", "z"]


def test_homogenize_dump_solution(tmp_path):
    dump = tmp_path / "sol.txt"
    assert run(["homogenize", "--graph", REFERENCE_GRAPH, "--out",
                str(tmp_path / "g.txt"), "--dump-solution", str(dump)]) == 0
    text = dump.read_text()
    assert text.startswith("# condnet solution v1")
    assert "nan" not in text.lower()


def test_tensor_output(tmp_path):
    sample_path = tmp_path / "s.txt"
    assert run(["generate", *GEN_FLAGS, "--puff-factor", "1.3",
                "--fraction-probes", "1000", "--out", str(sample_path)]) == 0
    out = tmp_path / "t.txt"
    assert run(["tensor", "--sample", str(sample_path), "--out", str(out)]) == 0
    lines = out.read_text().splitlines()
    keys = [ln.split()[0] for ln in lines[1:]]
    assert keys == ["Lxx", "Lyy", "Lzz", "Lxy", "Lxz", "Lyz"]


def test_tensor_rejects_graph_file(tmp_path):
    assert run(["tensor", "--sample", REFERENCE_GRAPH,
                "--out", str(tmp_path / "t.txt")]) == 2


# ---------------------------------------------------------------------------
# campaign
# ---------------------------------------------------------------------------

def test_campaign_csv_and_figure(tmp_path):
    out = tmp_path / "sweep.csv"
    plot = tmp_path / "sweep.png"
    rc = run(["campaign", "--target-volume-fraction", "0.1",
              "--sphere-radius", "0.11", "--cylinder-radius", "0.07",
              "--cylinder-aspect", "3", "--puff-factor", "1.2",
              "--values", "0,0.5", "--samples", "2", "--master-seed", "5",
              "--fraction-probes", "1000",
              "--out", str(out), "--plot", str(plot)])
    assert rc == 0
    lines = out.read_text().splitlines()
    assert len(lines) == 3  # header + 2 sweep points
    assert plot.exists() and plot.stat().st_size > 0
    assert not list(tmp_path.glob("*.part"))


def test_campaign_raw_records(tmp_path):
    out = tmp_path / "sweep.csv"
    raw = tmp_path / "records.csv"
    rc = run(["campaign", "--target-volume-fraction", "0.1",
              "--sphere-radius", "0.11", "--cylinder-radius", "0.07",
              "--cylinder-aspect", "3", "--puff-factor", "1.2",
              "--values", "0,0.5", "--samples", "2", "--fraction-probes", "1000",
              "--out", str(out), "--raw-records", str(raw)])
    assert rc == 0
    lines = raw.read_text().splitlines()
    assert len(lines) == 5   # header + 2 points x 2 samples
    assert lines[0].startswith("point_index,sweep_value,sample_index,seed")


def test_campaign_infeasible_values_usage_error(tmp_path):
    rc = run(["campaign", "--sphere-radius", "0.1", "--cylinder-radius", "0.05",
              "--values", "2.5", "--samples", "1",
              "--out", str(tmp_path / "x.csv")])
    assert rc == 2


def test_generate_puff_radial_only(tmp_path):
    out = tmp_path / "s.txt"
    rc = run(["generate", "--target-volume-fraction", "0.02", "--n-cylinders", "4",
              "--cylinder-radius", "0.04", "--cylinder-aspect", "3",
              "--puff-factor", "1.5", "--puff-radial-only",
              "--fraction-probes", "1000", "--seed", "2", "--out", str(out)])
    assert rc == 0
    inc = load_sample(out).inclusions[0]
    assert inc.radius == pytest.approx(0.06)
    assert inc.half_length == pytest.approx(0.06)  # unscaled


def test_campaign_config_file(tmp_path):
    cfg = tmp_path / "c.ini"
    cfg.write_text(
        "[generation]\ntarget_volume_fraction = 0.1\nsphere_radius = 0.11\n"
        "cylinder_radius = 0.07\ncylinder_aspect = 3\npuff_factor = 1.2\n"
        "[campaign]\nvalues = 0, 1\nn_samples = 1\nmaster_seed = 2\n"
        "fraction_probes = 1000\n")
    out = tmp_path / "sweep.csv"
    assert run(["--config", str(cfg), "campaign", "--out", str(out)]) == 0
    assert len(out.read_text().splitlines()) == 3


# ---------------------------------------------------------------------------
# voxel
# ---------------------------------------------------------------------------

def test_voxel_raw_roundtrip(tmp_path):
    raw = tmp_path / "vol.bin"
    raw.write_bytes(bytes([255] * 64))
    out = tmp_path / "v.txt"
    csv_path = tmp_path / "v.csv"
    assert run(["voxel", "--raw", str(raw), "--dims", "4,4,4",
                "--normalized", "--out", str(out), "--csv", str(csv_path)]) == 0
    values = [float(ln.split()[2]) for ln in out.read_text().splitlines()
              if ln.startswith("axis")]
    np.testing.assert_allclose(values, 1.0, rtol=1e-9)
    csv_lines = csv_path.read_text().splitlines()
    assert csv_lines[0] == "nx,ny,nz,occupied_fraction,gx,gy,gz"
    assert csv_lines[1].startswith("4,4,4,1,")


def test_voxel_slices(tmp_path):
    from condnet.voxel import write_pgm
    sl = tmp_path / "slices"
    sl.mkdir()
    for z in range(4):
        write_pgm(sl / f"s{z}.pgm", np.full((4, 4), 255, dtype=np.uint8))
    out = tmp_path / "v.txt"
    assert run(["voxel", "--slices", str(sl), "--out", str(out)]) == 0
    assert "axis z" in out.read_text()


def test_voxel_raw_needs_dims(tmp_path):
    raw = tmp_path / "vol.bin"
    raw.write_bytes(bytes(8))
    assert run(["voxel", "--raw", str(raw), "--out", str(tmp_path / "o.txt")]) == 2


def test_voxel_size_mismatch_exit_1(tmp_path):
    raw = tmp_path / "vol.bin"
    raw.write_bytes(bytes(7))
    assert run(["voxel", "--raw", str(raw), "--dims", "2,2,2",
                "--out", str(tmp_path / "o.txt")]) == 1


# ---------------------------------------------------------------------------
# calibrate and rve-scan
# ---------------------------------------------------------------------------

def test_calibrate_command(tmp_path):
    ref = tmp_path / "ref.txt"
    ref.write_text("# condnet reference v1\n"
                   "point sphere-sphere 0.1 0.2\n"
                   "point sphere-sphere 0.2 0.3\n")
    out = tmp_path / "cal.txt"
    assert run(["calibrate", "--reference", str(ref), "--out", str(out)]) == 0
    assert load_constants(out).k_ss == pytest.approx(1.6, abs=1e-12)


def test_rve_scan_command(tmp_path):
    out = tmp_path / "rve.csv"
    plot = tmp_path / "rve.png"
    rc = run(["rve-scan", *GEN_FLAGS, "--puff-factor", "1.2",
              "--multipliers", "1,2", "--samples", "2",
              "--fraction-probes", "1000",
              "--out", str(out), "--plot", str(plot)])
    assert rc == 0
    lines = out.read_text().splitlines()
    assert len(lines) == 3
    assert plot.exists()
