import math

import numpy as np
import pytest

from fastgpom.bench import (TIMED_STEPS, FrameTiming, StepTimings, instrument, read_table, summarize,
                            write_histogram, write_table)
from fastgpom.mapping import MapperConfig, run_pipeline, squash_map
from fastgpom.simulator import (ScanLog, ScannerSpec, generate_synthetic_map, interpolate_waypoints,
                                simulate_trajectory, synthetic_waypoints)

CFG = MapperConfig(window_width=40, window_height=40)


@pytest.fixture(scope="module")
def scene():
    grid = generate_synthetic_map("simple_rooms", 100, 100, 0.05, 5)
    poses = interpolate_waypoints(synthetic_waypoints("simple_rooms", 100, 100, 0.05, 5), 0.5)[:5]
    return grid, simulate_trajectory(grid, poses, ScannerSpec(), 5)


def timings_from(values):
    t = StepTimings("gpom")
    for i, v in enumerate(values):
        t.records.append(FrameTiming(i, *([v] * (len(TIMED_STEPS) - 1)), build_map_total=v * 7))
    return t


class TestInstrument:
    def test_one_frame(self, scene):
        grid, log = scene
        one = ScanLog(log.spec, log.map_resolution, log.frames[:1])
        t, _ = instrument("gpom", one, grid.geometry, CFG)
        assert len(t.records) == 1 and t.records[0].frame_index == 0

    def test_empty_dataset(self, scene):
        grid, log = scene
        with pytest.raises(ValueError):
            instrument("gpom", ScanLog(log.spec, log.map_resolution, []), grid.geometry, CFG)

    @pytest.mark.parametrize("algo", ["gpom", "fast_gpom"])
    def test_records_consistent(self, scene, algo):
        grid, log = scene
        t, _ = instrument(algo, log, grid.geometry, CFG)
        assert len(t.records) == len(log.frames)
        for r in t.records:
            steps = sum(r.step(s) for s in TIMED_STEPS[:-1])
            assert all(r.step(s) >= 0 for s in TIMED_STEPS)
            assert r.build_map_total >= 0.95 * steps

    @pytest.mark.parametrize("algo", ["gpom", "fast_gpom"])
    def test_transparent(self, scene, algo):
        grid, log = scene
        _, state = instrument(algo, log, grid.geometry, CFG)
        plain, _ = run_pipeline(algo, log.frames, grid.geometry, CFG)
        assert squash_map(state).tobytes() == squash_map(plain).tobytes()

    def test_failures_recorded(self, scene, monkeypatch):
        grid, log = scene
        from fastgpom import mapping

        calls = {"n": 0}
        real = mapping.gpom_update

        def flaky(state, scan, pose=None):
            calls["n"] += 1
            if calls["n"] == 2:
                raise RuntimeError("sensor glitch")
            return real(state, scan, pose)

        monkeypatch.setitem(mapping.PIPELINES, "gpom", flaky)
        t, _ = instrument("gpom", log, grid.geometry, CFG)
        assert list(t.failures) == [1] and len(t.records) == len(log.frames) - 1
        assert summarize(t).frames == len(log.frames) - 1


class TestSummary:
    def test_single_frame(self):
        s = summarize(timings_from([3.5]))
        for step in TIMED_STEPS:
            assert s.steps[step].mean == s.steps[step].median
        assert s.mean("predict") == 3.5

    def test_streaming_oracle(self):
        rng = np.random.default_rng(0)
        values = rng.exponential(10.0, 257)
        s = summarize(timings_from(values))
        total, count = 0.0, 0
        for v in values:
            total += v
            count += 1
        assert abs(s.mean("predict") - total / count) < 1e-9
        assert s.steps["predict"].minimum <= s.mean("predict") <= s.steps["predict"].maximum
        assert s.steps["predict"].p95 <= s.steps["predict"].maximum

    def test_empty(self):
        with pytest.raises(ValueError):
            summarize(StepTimings("gpom"))

    def test_table_round_trip(self, tmp_path):
        a = summarize(timings_from([1.25, 2.5]))
        b = summarize(timings_from([0.125]))
        write_table({("gpom", "rooms"): a, ("fast_gpom", "rooms"): b}, tmp_path / "t.csv")
        back = read_table(tmp_path / "t.csv")
        assert set(back) == {("gpom", "rooms"), ("fast_gpom", "rooms")}
        for key, s in ((("gpom", "rooms"), a), (("fast_gpom", "rooms"), b)):
            for step in TIMED_STEPS:
                assert back[key][step] == pytest.approx(s.mean(step), abs=5e-4)
            assert back[key]["frames"] == s.frames

    def test_histogram(self, tmp_path):
        write_histogram({("gpom", "m"): timings_from([1.0, 2.0])}, tmp_path / "h.csv")
        lines = (tmp_path / "h.csv").read_text().splitlines()
        assert lines == ["pipeline,map,frame_index,build_map_total_ms", "gpom,m,0,7.000", "gpom,m,1,14.000"]
