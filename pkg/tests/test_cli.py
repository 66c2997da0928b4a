import math

import numpy as np
import pytest

from dirmatch.cli import main
from dirmatch.errors import ConfigError, LengthMismatch, ParseError
from dirmatch.io import save_shape
from dirmatch.pipeline import make_config, read_config_file, run_pipeline
from dirmatch.refine import DirConfig
from dirmatch.synthetic import blob, rigid_copy


@pytest.fixture(scope="module")
def files(tmp_path_factory):
    d = tmp_path_factory.mktemp("cli")
    a = blob(frequency=12)
    save_shape(a, d / "a.off")
    save_shape(rigid_copy(a, seed=1), d / "b.off")
    np.savetxt(d / "id.txt", np.arange(a.n), fmt="%d")
    np.savetxt(d / "short.txt", np.arange(a.n - 1), fmt="%d")
    (d / "cfg.txt").write_text("# test config\nK = 60\nmax_iters = 3\nlmd_thresholds = 0.26, 0.2\n")
    (d / "lm.txt").write_text("0 0\n300 300\n700 700\n1200 1200\n")
    return d, a.n


def _tree_bytes(root):
    return {p.relative_to(root).as_posix(): p.read_bytes() for p in sorted(root.rglob("*")) if p.is_file()}


def test_match_writes_artifacts(files, tmp_path, capsys):
    d, n = files
    out = tmp_path / "r"
    assert main(["match", "--src", str(d / "a.off"), "--dst", str(d / "b.off"), "--out", str(out),
                 "--config", str(d / "cfg.txt")]) == 0
    lines = (out / "correspondence.txt").read_text().splitlines()
    assert len(lines) == n
    assert np.mean(np.array(lines, dtype=int) == np.arange(n)) >= 0.99
    manifest = (out / "manifest.txt").read_text()
    assert "K = 60" in manifest and "sha256=" in manifest
    listed = manifest.split("[outputs]\n")[1].split()
    assert "correspondence.txt" in listed and all((out / p).exists() for p in listed)
    assert (out / "fmaps" / "iter_01.csv").exists()


def test_match_rerun_identical(files, tmp_path):
    d, _ = files
    args = ["match", "--src", str(d / "a.off"), "--dst", str(d / "b.off"), "--config", str(d / "cfg.txt")]
    before = _tree_bytes(d)
    main(args + ["--out", str(tmp_path / "r1")])
    main(args + ["--out", str(tmp_path / "r2")])
    assert (tmp_path / "r1/correspondence.txt").read_bytes() == (tmp_path / "r2/correspondence.txt").read_bytes()
    assert _tree_bytes(d) == before  # inputs untouched


def test_match_landmarks_gds(files, tmp_path):
    d, n = files
    out = tmp_path / "g"
    assert main(["match", "--src", str(d / "a.off"), "--dst", str(d / "b.off"), "--out", str(out),
                 "--mode", "gds", "--init", "landmarks", "--landmarks", str(d / "lm.txt")]) == 0
    T = np.loadtxt(out / "correspondence.txt", dtype=int)
    assert np.mean(T == np.arange(n)) >= 0.99


def test_match_landmarks_missing(files, tmp_path, capsys):
    d, _ = files
    code = main(["match", "--src", str(d / "a.off"), "--dst", str(d / "b.off"), "--out", str(tmp_path),
                 "--init", "landmarks"])
    assert code == 1
    assert "usage" in capsys.readouterr().err


def test_match_bad_flag_exit_one(files, tmp_path):
    with pytest.raises(SystemExit) as info:
        main(["match", "--src", "a.off", "--out", str(tmp_path), "--mode", "fast"])
    assert info.value.code == 1


def test_match_missing_file(files, tmp_path, capsys):
    d, _ = files
    assert main(["match", "--src", str(d / "nope.off"), "--dst", str(d / "b.off"), "--out", str(tmp_path)]) == 1
    assert "nope.off" in capsys.readouterr().err


def test_match_runtime_error_exit_two(files, tmp_path, capsys):
    d, _ = files
    cfg = tmp_path / "strict.txt"
    cfg.write_text("lmd_thresholds = 1e-12\nK = 60\n")
    junk = tmp_path / "junk.txt"
    np.savetxt(junk, np.random.default_rng(0).integers(0, 100, files[1]), fmt="%d")
    code = main(["match", "--src", str(d / "a.off"), "--dst", str(d / "b.off"), "--out", str(tmp_path / "o"),
                 "--config", str(cfg), "--init", "file", "--init-map", str(junk)])
    assert code == 2
    assert "EmptyAnchorSet" in capsys.readouterr().err


def test_eval_exact(files, tmp_path, capsys):
    d, _ = files
    assert main(["eval", "--map", str(d / "id.txt"), "--gt", str(d / "id.txt"), "--dst", str(d / "a.off"),
                 "--out", str(tmp_path)]) == 0
    out = capsys.readouterr().out.splitlines()
    assert float(out[0].split()[1]) == pytest.approx(0.25, abs=1e-12)
    assert float(out[1].split()[1]) == 0.0
    assert (tmp_path / "curve.csv").exists() and (tmp_path / "errors.csv").exists()


def test_eval_length_mismatch(files, tmp_path):
    d, _ = files
    assert main(["eval", "--map", str(d / "short.txt"), "--gt", str(d / "id.txt"), "--dst", str(d / "a.off"),
                 "--out", str(tmp_path)]) == 1


def test_thm1_small(tmp_path, capsys):
    assert main(["thm1", "--n2", "3", "--trials", "0", "--out", str(tmp_path)]) == 0
    eta = float(capsys.readouterr().out.split()[1])
    assert eta == pytest.approx(2 / 3, abs=1e-15)
    assert (tmp_path / "perturbation.csv").read_text() == "trial,k,n,n2,error\n"


def test_thm1_n2_25(tmp_path, capsys):
    assert main(["thm1", "--n2", "25", "--k", "10", "--n", "100", "--trials", "2", "--out", str(tmp_path)]) == 0
    eta = float(capsys.readouterr().out.splitlines()[0].split()[1])
    # 95680443760576 involutions among 25! permutations
    assert eta == pytest.approx(95680443760576 / math.factorial(25), rel=1e-12)
    assert 1e-12 <= eta < 1e-11


def test_thm1_invalid(tmp_path):
    assert main(["thm1", "--n2", "0", "--out", str(tmp_path)]) == 1
    assert main(["thm1", "--n2", "10", "--n", "5", "--k", "3", "--out", str(tmp_path)]) == 1


def test_eigs_and_lmd(files, tmp_path, capsys):
    d, n = files
    assert main(["eigs", "--shape", str(d / "a.off"), "--k", "12", "--out", str(tmp_path / "e")]) == 0
    evals = (tmp_path / "e" / "evals.csv").read_text().splitlines()
    assert len(evals) == 13 and any(p.suffix == ".npz" for p in (tmp_path / "e").iterdir())
    assert main(["lmd", "--src", str(d / "a.off"), "--dst", str(d / "b.off"), "--map", str(d / "id.txt"),
                 "--out", str(tmp_path / "l")]) == 0
    assert len((tmp_path / "l" / "lmd.csv").read_text().splitlines()) == n + 1


def test_threads_flag(files, tmp_path):
    d, _ = files
    assert main(["--threads", "1", "eval", "--map", str(d / "id.txt"), "--gt", str(d / "id.txt"),
                 "--dst", str(d / "a.off"), "--out", str(tmp_path)]) == 0


def test_config_precedence(tmp_path):
    p = tmp_path / "c.txt"
    p.write_text("K = 120\nmode = gds\nprune = true\n")
    cfg = make_config(read_config_file(p), K=50)
    assert cfg.K == 50 and cfg.mode == "gds" and cfg.prune is True
    p.write_text("bogus = 1\n")
    with pytest.raises(ParseError):
        read_config_file(p)
    p.write_text("K = many\n")
    with pytest.raises(ConfigError):
        make_config(read_config_file(p))


def test_pipeline_errors(files, tmp_path):
    d, _ = files
    with pytest.raises(ParseError, match="missing.off"):
        run_pipeline(d / "missing.off", d / "b.off", DirConfig(K=60), tmp_path)
    with pytest.raises(LengthMismatch):
        run_pipeline(d / "a.off", d / "b.off", DirConfig(K=60, init="file"), tmp_path, init_map=d / "short.txt")


def test_pipeline_default_config(files, tmp_path):
    d, n = files
    result = run_pipeline(d / "a.off", d / "b.off", DirConfig(K=60), tmp_path)
    assert len((tmp_path / "correspondence.txt").read_text().splitlines()) == n
    assert len(result.correspondence) == n
