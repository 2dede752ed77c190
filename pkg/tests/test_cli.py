import subprocess
import sys

import numpy as np
import pytest

from lrlab import cli, csvio
from lrlab.errors import ConfigError
from lrlab.lattice import LatticeSpec, torus_frac_laplacian

SPEC_LINES = "d = 1\nL = 2\nN = 12\nalpha = 0.55\n"


def write(tmp_path, name, text):
    p = tmp_path / name
    p.write_text(text)
    return str(p)


def test_nearest_neighbour_kernel_file(tmp_path):
    out = tmp_path / "k.csv"
    cfg = write(tmp_path, "k.cfg", f"d = 1\nL = 2\nN = 3\nalpha = 2\noutput = {out}\n")
    assert cli.main(["kernel", cfg]) == 0
    data = csvio.read_csv(out)
    k = data.to_kernel()
    assert k.spec == LatticeSpec(1, 2, 3, 2.0)
    assert k[0] == pytest.approx(2.0, abs=1e-14)
    assert k[1] == pytest.approx(-1.0, abs=1e-14) and k[7] == pytest.approx(-1.0, abs=1e-14)
    assert np.allclose(k.values[2:7], 0.0, atol=1e-14)


def test_kernel_round_trip_exact(tmp_path):
    files = cli.run("kernel", SPEC_LINES)
    k = csvio.parse_csv(files[None]).to_kernel()
    assert np.array_equal(k.values, torus_frac_laplacian(LatticeSpec(1, 2, 12, 0.55)).values)


def test_gaussian_prediction_is_free(tmp_path):
    text = cli.run("predict", SPEC_LINES + "n = 1\ng0 = 0\nm2 = 1e-6\nradii = 1,4,16\n")[None]
    data = csvio.parse_csv(text)
    assert data.columns == ["r", "G_pred", "C_free", "ratio"]
    assert np.allclose(data.column("ratio"), 1.0, atol=1e-12)


def test_predict_then_fit(tmp_path):
    pred = tmp_path / "pred.csv"
    cfg = write(tmp_path, "p.cfg", "d = 1\nL = 2\nN = 30\nalpha = 0.55\nn = 1\ng0 = sbar\n"
                f"radii = 16,32,64,128,256,512,1024\noutput = {pred}\n")
    assert cli.main(["predict", cfg]) == 0
    fit = tmp_path / "fit.csv"
    cfg = write(tmp_path, "f.cfg", f"input = {pred}\nx = r\ny = G_pred\noutput = {fit}\n")
    assert cli.main(["fit", cfg]) == 0
    row = csvio.read_csv(fit)
    assert row.column("slope")[0] == pytest.approx(-0.45, abs=0.03)
    assert row.column("n_points")[0] == 7


def test_reruns_are_byte_identical(tmp_path):
    cfg = SPEC_LINES + "g = 0.05\nnu = 0.5\nsamples = 5000\nseed = 7\nradii = 1,2\n"
    a = cli.run("mc", cfg)[None]
    b = cli.run("mc", cfg)[None]
    assert a == b
    assert "# meta seed=7\n" in a and "# meta rng=" in a
    c = cli.run("mc", cfg.replace("seed = 7", "seed = 8"))[None]
    assert c != a


def test_decompose_writes_slices(tmp_path):
    out = tmp_path / "dec.csv"
    cfg = write(tmp_path, "d.cfg", "d = 1\nL = 2\nN = 5\nalpha = 0.55\nm2 = 0.01\n"
                f"output = {out}\n")
    assert cli.main(["decompose", cfg]) == 0
    manifest = csvio.read_csv(out)
    assert len(manifest.rows) == 5
    total = sum(csvio.read_csv(tmp_path / f"dec_C{j}.csv").to_kernel().values for j in range(1, 6))
    from lrlab.lattice import resolvent
    assert np.allclose(total, resolvent(LatticeSpec(1, 2, 5, 0.55), 0.01).values, atol=1e-12)


def test_cluster_subcommand(tmp_path):
    act = write(tmp_path, "act.csv", "polymer_anchor_list,coefficient_name,value\n"
                "0,1,0.01\n1,1,0.01\n0;1,1,0.01\n")
    text = cli.run("cluster", f"L = 2\nN = 4\nactivity = {act}\nn_max = 10\n")[None]
    data = csvio.parse_csv(text)
    rows = {(r[0], str(r[1])): r[2] for r in data.rows}
    assert rows[("log_z", "1")] == pytest.approx(np.log(1.03), rel=1e-12)
    assert ("convergence", "0") in rows


def test_cluster_jet_activity(tmp_path):
    act = write(tmp_path, "act.csv", "polymer_anchor_list,coefficient_name,value\n"
                "0,1,0.01\n0,phi^2,0.5\n2,sa,0.1\n")
    text = cli.run("cluster", f"L = 2\nN = 3\nactivity = {act}\n")[None]
    rows = {(r[0], str(r[1])): r[2] for r in csvio.parse_csv(text).rows}
    assert rows[("log_z", "sa")] == pytest.approx(0.1)
    assert rows[("log_z", "phi^2")] == pytest.approx(0.5 / 1.01)


@pytest.mark.parametrize("text,needle", [
    ("d = 1\nL = 2\nN = 3\nalpha = 1\nbogus = 1\n", "line 5"),
    ("d = 1\nL = 2\nN = 3\nalpha = 1\nalpha = 2\n", "line 5"),
    ("d = 1\nL = 2\n\n# comment\nN = x\nalpha = 1\n", "line 5"),
    ("d = 1\nL = 2\nN = 3\n", "alpha"),
    ("d = 1\nL = 2\nN = 3\nalpha = 1\nkind = other\n", "line 5"),
])
def test_config_errors_name_the_line(text, needle):
    with pytest.raises(ConfigError, match=needle):
        cli.run("kernel", text)


def run_cli(*args):
    return subprocess.run([sys.executable, "-m", "lrlab", *args], capture_output=True, text=True)


def test_exit_codes(tmp_path):
    bad = write(tmp_path, "bad.cfg", "d = 1\nL = 2\nN = 3\nalpha = 1\nbogus = 1\n")
    r = run_cli("kernel", bad)
    assert r.returncode == 2 and "line 5" in r.stderr
    assert run_cli("kernel", str(tmp_path / "missing.cfg")).returncode == 2
    domain = write(tmp_path, "dom.cfg", "d = 1\nL = 2\nN = 3\nalpha = 2.5\n")
    assert run_cli("kernel", domain).returncode == 2
    blowup = write(tmp_path, "blow.cfg", SPEC_LINES + "n = 1\ng0 = 50\nnu0 = 0\n")
    assert run_cli("flow", blowup).returncode == 3
    act = write(tmp_path, "act.csv", "polymer_anchor_list,coefficient_name,value\n"
                + "".join(f"{i},1,0.01\n{i};{(i + 1) % 8},1,0.001\n" for i in range(8)))
    huge = write(tmp_path, "huge.cfg", f"L = 2\nN = 3\nactivity = {act}\nn_max = 40\n")
    r = run_cli("cluster", huge)
    assert r.returncode == 4, r.stderr


def test_stdout_when_no_output(tmp_path):
    cfg = write(tmp_path, "k.cfg", "d = 1\nL = 2\nN = 2\nalpha = 1\n")
    r = run_cli("kernel", cfg)
    assert r.returncode == 0
    assert r.stdout.startswith("#")
