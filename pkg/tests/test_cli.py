import csv
import json
import subprocess
import sys

import pytest

from overshoot import cli, fem1d
from overshoot.numkit import SingularMatrix


def run(tmp_path, *args):
    return cli.main([*args, "--out", str(tmp_path)])


def read_csv(path):
    with open(path) as fh:
        return list(csv.DictReader(fh))


def test_proj_sweep_peak(tmp_path, capsys):
    assert run(tmp_path, "proj-sweep", "--space", "p1dg", "--t-steps", "101", "--h", "1.0") == 0
    rows = read_csv(tmp_path / "sweep_p1dg.csv")
    assert len(rows) == 101
    os_ = [float(r["os"]) for r in rows]
    peak = max(range(101), key=os_.__getitem__)
    assert float(rows[peak]["t"]) == pytest.approx(0.33, abs=0.011)
    assert os_[peak] == pytest.approx(2 / 3, abs=1e-3)
    assert os_[0] == os_[-1] == 0
    assert "max_os=" in capsys.readouterr().out


def test_rd1d_matched_summary(tmp_path, capsys):
    assert run(tmp_path, "rd1d", "--case", "matched", "--eps", "1e-16", "--theta", "0.8",
               "--iters", "20") == 0
    out = capsys.readouterr().out
    line = next(ln for ln in out.splitlines() if ln.startswith("overshoot_conforming="))
    assert float(line.split("=")[1]) == pytest.approx(0.2546, abs=0.01)
    recs = read_csv(tmp_path / "rd1d_matched_records.csv")
    assert list(recs[0]) == ["iter", "dofs", "eta_total", "overshoot"]
    assert len(recs) == 21
    final = read_csv(tmp_path / "rd1d_matched_final.csv")
    assert len(final) == 44
    assert (tmp_path / "rd1d_matched_mesh.txt").read_text().startswith("mesh1d 45")


def test_transport_strip_p0(tmp_path):
    assert run(tmp_path, "transport2d", "--case", "strip_pi3", "--degree", "0",
               "--iters", "15") == 0
    stem = tmp_path / "transport2d_strip_pi3_k0"
    recs = read_csv(f"{stem}_records.csv")
    assert len(recs) == 16
    assert all(float(r["overshoot"]) <= 1e-12 for r in recs)
    ntri = int(recs[-1]["dofs"])
    assert len((tmp_path / "transport2d_strip_pi3_k0_solution.txt").read_text().splitlines()) == ntri
    assert (tmp_path / "transport2d_strip_pi3_k0_mesh.txt").read_text().startswith("mesh2d")


def test_proj_adapt(tmp_path, capsys):
    assert run(tmp_path, "proj-adapt", "--iters", "19") == 0
    out = capsys.readouterr().out
    assert "elements=3" in out
    assert len(read_csv(tmp_path / "proj_adapt_records.csv")) == 20


def test_manifest(tmp_path):
    assert run(tmp_path, "proj-sweep", "--space", "p0", "--seed", "7") == 0
    m = json.loads((tmp_path / "manifest.json").read_text())
    assert m["config"]["command"] == "proj-sweep"
    assert m["config"]["seed"] == 7
    assert m["config"]["params"] == {"space": "p0", "t_steps": 101, "h": 1.0}
    assert m["version"].startswith("0.1.0")
    assert m["wall_time_s"] >= 0


def test_outputs_are_deterministic(tmp_path):
    for sub in ("a", "b"):
        assert cli.main(["transport2d", "--case", "curved2", "--degree", "1", "--iters", "6",
                         "--out", str(tmp_path / sub)]) == 0
    for name in ("records.csv", "projected.csv", "solution.txt", "mesh.txt"):
        f = f"transport2d_curved2_k1_{name}"
        assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()


def test_config_file_and_precedence(tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("# sweep settings\ncommand = proj-sweep\nspace = s1-uniform\nt_steps = 11\n"
                   f"out = {tmp_path / 'from_cfg'}\n")
    c = cli.parse_config(["--config", str(cfg)])
    assert (c.command, c.params["space"], c.params["t_steps"]) == ("proj-sweep", "s1-uniform", 11)
    c = cli.parse_config(["proj-sweep", "--config", str(cfg), "--t-steps", "5"])
    assert c.params["t_steps"] == 5
    assert c.out == str(tmp_path / "from_cfg")


def test_bad_config_file(tmp_path, capsys):
    cfg = tmp_path / "bad.cfg"
    cfg.write_text("space p0\n")
    assert cli.main(["proj-sweep", "--config", str(cfg)]) == 2
    assert cli.main(["proj-sweep", "--config", str(tmp_path / "missing.cfg")]) == 2


@pytest.mark.parametrize("argv", [
    [],
    ["fly"],
    ["rd1d", "--case", "wedge"],
    ["rd1d", "--eps", "-1"],
    ["rd1d", "--theta", "1.5"],
    ["rd1d", "--mu", "0"],
    ["proj-sweep", "--h", "0"],
    ["proj-sweep", "--t-steps", "1"],
    ["transport2d", "--degree", "2"],
    ["transport2d", "--theta", "0"],
])
def test_invalid_config_exit_2(tmp_path, argv, capsys):
    assert cli.main([*argv, "--out", str(tmp_path)] if argv else argv) == 2
    assert "error" in capsys.readouterr().err


def test_compute_failure_exit_1(tmp_path, monkeypatch, capsys):
    def boom(*a, **k):
        raise SingularMatrix("zero pivot")
    monkeypatch.setattr(fem1d, "run_case", boom)
    assert run(tmp_path, "rd1d") == 1
    assert "zero pivot" in capsys.readouterr().err


def test_plot_os_vs_t(tmp_path):
    run(tmp_path, "proj-sweep", "--space", "p1dg")
    assert run(tmp_path, "plot", "--csv", str(tmp_path / "sweep_p1dg.csv"),
               "--kind", "os-vs-t") == 0
    svg = (tmp_path / "sweep_p1dg.svg").read_text()
    assert svg.startswith("<svg") and "<polyline" in svg and "<script" not in svg


def test_plot_projected_solution(tmp_path):
    run(tmp_path, "transport2d", "--case", "half_disk", "--degree", "1", "--iters", "6")
    out = tmp_path / "proj.svg"
    assert run(tmp_path, "plot", "--csv", str(tmp_path / "transport2d_half_disk_k1_projected.csv"),
               "--kind", "projected-solution", "--output", str(out)) == 0
    assert out.read_text().count("<circle") > 100


def test_plot_os_vs_iter(tmp_path):
    run(tmp_path, "rd1d", "--case", "nonmatched", "--iters", "5")
    path = cli.plot(tmp_path / "rd1d_nonmatched_records.csv", "os-vs-iter")
    assert path.suffix == ".svg"


def test_plot_schema_errors(tmp_path):
    empty = tmp_path / "empty.csv"
    empty.write_text("")
    with pytest.raises(cli.SchemaMismatch):
        cli.plot(empty, "os-vs-t")
    wrong = tmp_path / "wrong.csv"
    wrong.write_text("iter,dofs,eta_total,overshoot\n0,3,1.0,0.0\n")
    with pytest.raises(cli.SchemaMismatch):
        cli.plot(wrong, "os-vs-t")
    assert cli.main(["plot", "--csv", str(empty), "--kind", "os-vs-t",
                     "--out", str(tmp_path)]) == 2


def test_help_lists_defaults(capsys):
    with pytest.raises(SystemExit) as exc:
        cli.main(["rd1d", "--help"])
    assert exc.value.code == 0
    out = capsys.readouterr().out
    assert "default: 1e-16" in out and "default: 0.8" in out


def test_module_entry_point(tmp_path):
    res = subprocess.run([sys.executable, "-m", "overshoot", "proj-sweep", "--space", "p0",
                          "--t-steps", "3", "--out", str(tmp_path)],
                         capture_output=True, text=True, timeout=60)
    assert res.returncode == 0, res.stderr
    assert (tmp_path / "sweep_p0.csv").exists()
