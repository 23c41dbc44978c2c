import numpy as np
import pytest

from ipvem.cli import main, parse_args
from ipvem.mesh import load_mesh


def test_example1_config():
    _, cfg = parse_args("run --example 1 --eps 1e-6,1e-8 --k 2 --mesh cvt:32,64,128,256,512 --seed 1".split())
    assert cfg.example == 1 and cfg.eps == (1e-6, 1e-8) and cfg.k == 2
    assert cfg.mesh == "cvt:32,64,128,256,512" and cfg.seed == 1 and cfg.lam == 1.0


def test_threads_default_from_environment(monkeypatch):
    monkeypatch.setenv("IPVEM_THREADS", "3")
    _, cfg = parse_args(["run", "--mesh", "grid:2"])
    assert cfg.threads == 3


@pytest.mark.parametrize("argv", [[], ["run", "--k", "1", "--mesh", "grid:2"], ["run", "--bogus"],
                                  ["run", "--mesh", "grid:2", "--eps", "0"]])
def test_bad_arguments_exit_2(argv, capsys):
    with pytest.raises(SystemExit) as exc:
        main(argv)
    assert exc.value.code == 2
    err = capsys.readouterr().err
    assert "usage" in err
    if "--k" in argv:
        assert "k >= 2 required" in err


def test_run_writes_artifacts(tmp_path, capsys):
    rc = main(["run", "--example", "3", "--eps", "1e-8,1e-10", "--mesh", "distorted:4,6",
               "--out", str(tmp_path), "--field-dump", "8"])
    assert rc == 0
    out = capsys.readouterr().out
    assert out.count("\n") == 4 and "Rate" in out and "| 1e-10 |" in out
    for name in ("example3_table.md", "example3_eps1e-08.csv", "example3_eps1e-10.csv",
                 "example3_plot.dat", "example3_field.dat"):
        assert (tmp_path / name).exists()
    plot = np.loadtxt(tmp_path / "example3_plot.dat")
    assert plot.shape == (4, 3)
    field = np.loadtxt(tmp_path / "example3_field.dat")
    assert field.shape == (64, 4) and np.abs(field[:, 2] - field[:, 3]).max() < 0.05


def test_run_csv_format(tmp_path, capsys):
    assert main(["run", "--mesh", "grid:2,4", "--format", "csv", "--out", str(tmp_path)]) == 0
    assert "N,h,Err,rate_running" in capsys.readouterr().out


def test_run_failure_is_nonzero(tmp_path, capsys):
    rc = main(["run", "--mesh", f"file:{tmp_path / 'nope.txt'}", "--out", str(tmp_path)])
    assert rc == 1 and "error" in capsys.readouterr().err


def test_mesh_subcommand(tmp_path):
    path = tmp_path / "m.txt"
    assert main(["mesh", "--cvt", "32", "--seed", "1", "--out", str(path)]) == 0
    assert load_mesh(path).n_cells == 32


def test_dump_system_single_cell(tmp_path):
    mesh_path, out = tmp_path / "m.txt", tmp_path / "A.txt"
    main(["mesh", "--grid", "1", "--out", str(mesh_path)])
    assert main(["dump-system", "--mesh", f"file:{mesh_path}", "--out", str(out)]) == 0
    rows = np.loadtxt(out, comments="#")
    n = int(rows[:, :2].max()) + 1
    A = np.zeros((n, n))
    A[rows[:, 0].astype(int), rows[:, 1].astype(int)] = rows[:, 2]
    assert np.allclose(A, A.T, atol=1e-14)


def test_repeated_runs_are_bitwise_identical(tmp_path):
    for d in ("a", "b"):
        assert main(["run", "--mesh", "cvt:32,64", "--eps", "1e-6,1e-8",
                     "--out", str(tmp_path / d), "--threads", "1"]) == 0
    for name in ("example1_eps1e-06.csv", "example1_eps1e-08.csv", "example1_plot.dat"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
