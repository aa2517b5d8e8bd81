import math

import pytest

from fastgpom.cli import main
from fastgpom.config import ConfigError, parse_config
from fastgpom.evaluation import read_auc_csv
from fastgpom.simulator import read_scanlog


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    """gen-map -> simulate -> build (both pipelines) on a small rooms map."""
    root = tmp_path_factory.mktemp("run")
    cfg = root / "run.ini"
    cfg.write_text("[mapper]\nwindow_width = 40\nwindow_height = 40\nhyperparam_budget = 40\n"
                   "[simulation]\nstep = 0.5\n")
    assert main(["gen-map", "--kind", "simple_rooms", "--size", "100", "--res", "0.05", "--seed", "7",
                 "-o", str(root / "maps")]) == 0
    pgm = root / "maps" / "simple_rooms.pgm"
    assert main(["--config", str(cfg), "simulate", "--map", str(pgm), "--seed", "3",
                 "-o", str(root / "log.jsonl")]) == 0
    for algo in ("gpom", "fast"):
        assert main(["--config", str(cfg), "build", "--algo", algo, "--log", str(root / "log.jsonl"),
                     "--map", str(pgm), "-o", str(root / "out")]) == 0
    return root, cfg, pgm


def test_gen_map_outputs(workspace, tmp_path):
    root, _, pgm = workspace
    assert pgm.exists()
    meta = (root / "maps" / "simple_rooms.meta").read_text()
    assert "resolution 0.05" in meta and "seed 7" in meta
    assert main(["gen-map", "--kind", "simple_rooms", "--size", "100", "--res", "0.05", "--seed", "7",
                 "-o", str(tmp_path)]) == 0
    assert (tmp_path / "simple_rooms.pgm").read_bytes() == pgm.read_bytes()


def test_gen_map_too_small(tmp_path, capsys):
    assert main(["gen-map", "--kind", "corridor", "--size", "10", "-o", str(tmp_path)]) == 2
    assert "at least" in capsys.readouterr().err


def test_usage_error_exit_code(capsys):
    with pytest.raises(SystemExit) as info:
        main(["build", "--algo", "hilbert"])
    assert info.value.code == 2


@pytest.mark.parametrize("cmd", ["gen-map", "simulate", "build", "eval", "bench"])
def test_help(cmd, capsys):
    with pytest.raises(SystemExit) as info:
        main([cmd, "--help"])
    assert info.value.code == 0
    assert "usage" in capsys.readouterr().out


def test_simulate_waypoint_count(workspace, tmp_path):
    _, _, pgm = workspace
    # straight 1.5 m segment at 0.1 m spacing
    assert main(["simulate", "--map", str(pgm), "--waypoints", "1.0,1.0;2.5,1.0", "--step", "0.1",
                 "--seed", "1", "-o", str(tmp_path / "s.jsonl")]) == 0
    assert len(read_scanlog(tmp_path / "s.jsonl").frames) == math.ceil(1.5 / 0.1) + 1
    assert main(["simulate", "--map", str(pgm), "--waypoints", "1.0,1.0;2.5,1.0", "--step", "0.1",
                 "--seed", "1", "-o", str(tmp_path / "t.jsonl")]) == 0
    assert (tmp_path / "s.jsonl").read_bytes() == (tmp_path / "t.jsonl").read_bytes()


def test_simulate_through_wall(workspace, tmp_path, capsys):
    _, _, pgm = workspace
    code = main(["simulate", "--map", str(pgm), "--waypoints", "1.0,1.0;1.0,4.8;4.0,4.8", "--step", "0.02",
                 "-o", str(tmp_path / "w.jsonl")])
    assert code == 1
    assert "frame" in capsys.readouterr().err
    assert not (tmp_path / "w.jsonl").exists()


def test_pose_file(workspace, tmp_path):
    _, _, pgm = workspace
    (tmp_path / "poses.txt").write_text("# x y theta\n1.0 1.0 0.0\n1.2 1.0 0.5\n")
    assert main(["simulate", "--map", str(pgm), "--pose-file", str(tmp_path / "poses.txt"),
                 "-o", str(tmp_path / "p.jsonl")]) == 0
    log = read_scanlog(tmp_path / "p.jsonl")
    assert len(log.frames) == 2 and log.frames[1].pose.theta == 0.5


def test_build_outputs(workspace):
    root, _, _ = workspace
    for name in ("gpom", "fast_gpom"):
        for suffix in (".png", ".latent", "_timings.csv", "_frames.csv"):
            assert (root / "out" / f"{name}{suffix}").exists()


def test_build_empty_log(workspace, tmp_path, capsys):
    root, _, pgm = workspace
    (tmp_path / "empty.jsonl").write_text((root / "log.jsonl").read_text().splitlines()[0] + "\n")
    code = main(["build", "--log", str(tmp_path / "empty.jsonl"), "--map", str(pgm), "-o", str(tmp_path / "o")])
    assert code == 1
    assert not (tmp_path / "o").exists()


def test_build_resolution_mismatch(workspace, tmp_path):
    root, _, pgm = workspace
    code = main(["build", "--log", str(root / "log.jsonl"), "--map", str(pgm), "--res", "0.1",
                 "-o", str(tmp_path / "o")])
    assert code == 1


def test_eval(workspace, tmp_path):
    root, _, pgm = workspace
    args = ["eval", "--truth", str(pgm), "--dump", str(root / "out" / "gpom.latent"),
            "--dump", f"fast={root / 'out' / 'fast_gpom.latent'}"]
    assert main(args + ["-o", str(tmp_path / "e1")]) == 0
    assert main(args + ["-o", str(tmp_path / "e2")]) == 0
    rows = read_auc_csv(tmp_path / "e1" / "auc.csv")
    assert [r.name for r in rows] == ["fast", "gpom"]
    assert all(0.0 <= r.auc <= 1.0 for r in rows)
    for name in ("auc.csv", "roc.csv"):
        assert (tmp_path / "e1" / name).read_bytes() == (tmp_path / "e2" / name).read_bytes()


def test_eval_perfect_map(tmp_path):
    import numpy as np
    from fastgpom.mapping import MapperState, write_latent_dump
    from fastgpom.simulator import generate_synthetic_map
    from fastgpom.world import CellState, save_pgm

    truth = generate_synthetic_map("corridor", 60, 60, 0.05, 0)
    save_pgm(truth, tmp_path / "t.pgm")
    state = MapperState.create(truth.geometry)
    state.latent.mu = np.where(truth.cells == CellState.OCCUPIED, 1.0, -1.0)
    write_latent_dump(state, tmp_path / "perfect.latent")
    assert main(["eval", "--truth", str(tmp_path / "t.pgm"), "--dump", str(tmp_path / "perfect.latent"),
                 "-o", str(tmp_path / "e")]) == 0
    assert read_auc_csv(tmp_path / "e" / "auc.csv")[0].auc == 1.0


def test_eval_geometry_mismatch(workspace, tmp_path):
    root, _, _ = workspace
    assert main(["gen-map", "--kind", "corridor", "--size", "60", "-o", str(tmp_path)]) == 0
    assert main(["eval", "--truth", str(tmp_path / "corridor.pgm"), "--dump", str(root / "out" / "gpom.latent"),
                 "-o", str(tmp_path / "e")]) == 1


def test_bench(workspace, tmp_path, capsys):
    root, cfg, pgm = workspace
    assert main(["--config", str(cfg), "bench", "--log", str(root / "log.jsonl"), "--map", str(pgm),
                 "-o", str(tmp_path)]) == 0
    header = (tmp_path / "bench_timings.csv").read_text().splitlines()[0]
    assert header == "step,gpom/simple_rooms,fast_gpom/simple_rooms"
    assert not list(tmp_path.glob("*.png"))


def test_end_to_end_byte_identical(workspace, tmp_path):
    root, cfg, pgm = workspace
    assert main(["--config", str(cfg), "simulate", "--map", str(pgm), "--seed", "3",
                 "-o", str(tmp_path / "log.jsonl")]) == 0
    assert (tmp_path / "log.jsonl").read_bytes() == (root / "log.jsonl").read_bytes()
    assert main(["--config", str(cfg), "build", "--algo", "fast", "--log", str(tmp_path / "log.jsonl"),
                 "--map", str(pgm), "-o", str(tmp_path / "out")]) == 0
    for name in ("fast_gpom.png", "fast_gpom.latent"):
        assert (tmp_path / "out" / name).read_bytes() == (root / "out" / name).read_bytes()


class TestConfig:
    def test_sections(self):
        cfg = parse_config("[scanner]\nbeam_count = 90\nnoise_mean = 0.5\n"
                           "[mapper]\nd = 0.25\nregion_a_overwrite = true\nsquash_denominator = sqrt\n"
                           "[output]\ndirectory = results\n")
        assert cfg.scanner.beam_count == 90 and cfg.scanner.noise_mean == 0.5
        assert cfg.mapper.d == 0.25 and cfg.mapper.region_a_overwrite is True
        assert cfg.mapper.squash_denominator == "sqrt"
        assert cfg.output.directory == "results"

    @pytest.mark.parametrize("text", ["[mapper]\nd_interval = 0.5\n", "[plotting]\nx = 1\n",
                                      "[mapper]\nd = fast\n", "[mapper]\nd = -1\n",
                                      "[mapper]\nregion_a_overwrite = maybe\n"])
    def test_strict(self, text):
        with pytest.raises(ConfigError):
            parse_config(text)

    def test_unknown_key_exit_code(self, tmp_path):
        (tmp_path / "bad.ini").write_text("[mapper]\nalpha_gain = 3\n")
        assert main(["--config", str(tmp_path / "bad.ini"), "gen-map", "-o", str(tmp_path)]) == 2


def test_threads_flag(workspace, capsys):
    root, _, pgm = workspace
    with pytest.raises(SystemExit) as info:
        main(["bench", "--log", str(root / "log.jsonl"), "--map", str(pgm), "--threads", "4"])
    assert info.value.code == 2
