import numpy as np
import pytest

from wavefill import (
    EmptyDatasetError,
    ParameterError,
    ParseError,
    TrajectorySet,
    load_trajectories,
    sample_penetration,
    write_trajectories,
)

COLUMNS = {"vehicle_id": "id", "time": "t", "position": "x", "speed": "v"}


def write_csv(path, rows, header="id,t,x,v"):
    path.write_text(header + "\n" + "\n".join(rows) + ("\n" if rows else ""))


def make_set(n_vehicles=10, points_per=5, seed=0):
    rng = np.random.default_rng(seed)
    tracks = {}
    for i in range(n_vehicles):
        t = np.sort(rng.uniform(0, 100, size=points_per))
        while np.any(np.diff(t) <= 0):
            t = np.sort(rng.uniform(0, 100, size=points_per))
        s = np.sort(rng.uniform(0, 500, size=points_per))
        v = rng.uniform(0, 90, size=points_per)
        tracks[f"veh{i}"] = np.column_stack([t, s, v])
    return TrajectorySet(tracks=tracks, segment_length_m=500.0, window_length_s=100.0)


def test_load_converts_mps_to_kmh(tmp_path):
    p = tmp_path / "traj.csv"
    write_csv(p, ["12,4.0,30.5,15.2"])
    ts = load_trajectories(
        p, COLUMNS, {"speed": "mps"}, segment_length_m=100.0, window_length_s=10.0
    )
    (point,) = list(ts.iter_points())
    assert point.vehicle_id == "12"
    assert point.time_s == 4.0
    assert point.position_m == 30.5
    assert point.speed_kmh == pytest.approx(54.72)


def test_load_converts_feet_and_fps(tmp_path):
    p = tmp_path / "traj.csv"
    write_csv(p, ["a,1.0,100.0,10.0"])
    ts = load_trajectories(
        p,
        COLUMNS,
        {"position": "ft", "speed": "fps"},
        segment_length_m=100.0,
        window_length_s=10.0,
    )
    (point,) = list(ts.iter_points())
    assert point.position_m == pytest.approx(30.48)
    assert point.speed_kmh == pytest.approx(10.9728)


def test_load_drops_and_counts_out_of_domain_rows(tmp_path):
    p = tmp_path / "traj.csv"
    write_csv(p, ["a,1,10,50", "a,2,600,50", "a,200,10,50", "b,3,20,40"])
    ts = load_trajectories(p, COLUMNS, segment_length_m=500.0, window_length_s=100.0)
    assert ts.dropped_rows == 2
    assert ts.n_points == 2


def test_load_malformed_row_reports_line_number(tmp_path):
    p = tmp_path / "traj.csv"
    write_csv(p, ["a,1,10,50", "a,2,oops,50"])
    with pytest.raises(ParseError) as err:
        load_trajectories(p, COLUMNS, segment_length_m=500.0, window_length_s=100.0)
    assert err.value.line_number == 3


def test_load_all_rows_out_of_domain_is_empty_dataset(tmp_path):
    p = tmp_path / "traj.csv"
    write_csv(p, ["a,900,10,50"])
    with pytest.raises(EmptyDatasetError):
        load_trajectories(p, COLUMNS, segment_length_m=500.0, window_length_s=100.0)


def test_load_missing_column_rejected(tmp_path):
    p = tmp_path / "traj.csv"
    write_csv(p, ["a,1,10"], header="id,t,x")
    with pytest.raises(ParseError):
        load_trajectories(p, COLUMNS, segment_length_m=500.0, window_length_s=100.0)


def test_unknown_unit_rejected(tmp_path):
    p = tmp_path / "traj.csv"
    write_csv(p, ["a,1,10,50"])
    with pytest.raises(ParameterError):
        load_trajectories(
            p, COLUMNS, {"speed": "furlongs"}, segment_length_m=500.0, window_length_s=100.0
        )


def test_export_then_load_fixpoint(tmp_path):
    # 6-decimal export quantizes once; after the first reload the
    # round-trip is bit-identical
    ts = make_set(seed=3)
    p1 = tmp_path / "a.csv"
    write_trajectories(ts, p1)
    loaded = load_trajectories(
        p1,
        {"vehicle_id": "vehicle_id", "time": "time_s", "position": "position_m", "speed": "speed_kmh"},
        segment_length_m=500.0,
        window_length_s=100.0,
    )
    p2 = tmp_path / "b.csv"
    write_trajectories(loaded, p2)
    reloaded = load_trajectories(
        p2,
        {"vehicle_id": "vehicle_id", "time": "time_s", "position": "position_m", "speed": "speed_kmh"},
        segment_length_m=500.0,
        window_length_s=100.0,
    )
    assert loaded.equals(reloaded)
    assert p1.read_bytes() == p2.read_bytes()


def test_sample_rate_one_is_identity():
    ts = make_set()
    assert sample_penetration(ts, 1.0, seed=0) is ts


def test_sample_counts_and_determinism():
    ts = make_set(n_vehicles=100)
    sub = sample_penetration(ts, 0.05, seed=7)
    assert sub.n_vehicles == 5
    again = sample_penetration(ts, 0.05, seed=7)
    assert sub.vehicle_ids == again.vehicle_ids
    assert sub.equals(again)
    other = sample_penetration(ts, 0.05, seed=8)
    assert sub.vehicle_ids != other.vehicle_ids


def test_sample_keeps_whole_trajectories_in_original_order():
    ts = make_set(n_vehicles=20)
    sub = sample_penetration(ts, 0.4, seed=1)
    order = [ts.vehicle_ids.index(v) for v in sub.vehicle_ids]
    assert order == sorted(order)
    for vid in sub.vehicle_ids:
        assert np.array_equal(sub.tracks[vid], ts.tracks[vid])


def test_sweep_rates_supported():
    ts = make_set(n_vehicles=100)
    for rate in (0.03, 0.05, 0.10, 0.15):
        sub = sample_penetration(ts, rate, seed=2)
        assert sub.n_vehicles == round(rate * 100)


def test_sample_rejects_bad_rate():
    ts = make_set()
    for rate in (0.0, -0.1, 1.5):
        with pytest.raises(ParameterError):
            sample_penetration(ts, rate, seed=0)


def test_set_validates_monotonic_time():
    bad = {"v": np.array([[2.0, 1.0, 3.0], [1.0, 2.0, 4.0]])}
    with pytest.raises(ParameterError):
        TrajectorySet(tracks=bad, segment_length_m=10.0, window_length_s=10.0)
