"""Hourly aggregation, cleaning, selection and encoding."""

from datetime import datetime, timedelta, timezone

import numpy as np
import pytest

from parkcast.errors import SchemaError
from parkcast.features import (
    ATTRIBUTE_NAMES,
    FeatureRow,
    aggregate_hourly,
    availability,
    clean,
    encode_and_scale,
    encode_row,
    rows_from_csv,
    rows_to_csv,
    section_for_segment,
    select_features,
    standardize,
    unstandardize,
)
from parkcast.spatial import JoinedObservation, VehicleObservation, point_at_offset

UTC = timezone.utc
T0 = datetime(2022, 9, 5, 8, tzinfo=UTC)


def joined_obs(segments, key, segment_id, offset, minute, speed=20.0, ts=None):
    seg = next(s for s in segments if s.id == segment_id)
    point = point_at_offset(seg.polyline, offset)
    obs = VehicleObservation(
        vehicle_key=key,
        point=point,
        timestamp=(ts or T0) + timedelta(minutes=minute),
        speed_kmh=speed,
    )
    return JoinedObservation(
        observation=obs,
        segment_id=segment_id,
        offset_m=offset,
        snap_distance_m=0.0,
        section_id=None,
        expected_gate=seg.end_gate,
    )


class TestAggregateHourly:
    def test_influx_outflux_counts(self, campus, segments):
        joined = [
            # three inbound vehicles (single point, or increasing offsets)
            joined_obs(segments, "a1", 1, 100.0, 1),
            joined_obs(segments, "a2", 1, 100.0, 2),
            joined_obs(segments, "a2", 1, 200.0, 10),
            joined_obs(segments, "a3", 1, 300.0, 3),
            joined_obs(segments, "a3", 1, 310.0, 9),
            joined_obs(segments, "a3", 1, 320.0, 15),
            # two outbound vehicles (decreasing offsets)
            joined_obs(segments, "x1", 1, 400.0, 4),
            joined_obs(segments, "x1", 1, 300.0, 12),
            joined_obs(segments, "x2", 1, 500.0, 5),
            joined_obs(segments, "x2", 1, 450.0, 11),
        ]
        rows = aggregate_hourly(joined, campus, (T0, T0), segments=segments)
        assert len(rows) == len(segments)  # one bucket, every segment present
        row1 = next(r for r in rows if r.segment_no == 1)
        assert row1.n_vehicles == 3
        assert row1.n_vehicles_exit == 2
        seg1 = next(s for s in segments if s.id == 1)
        offsets = [100.0, 100.0, 200.0, 300.0, 310.0, 320.0, 400.0, 300.0, 500.0, 450.0]
        assert row1.distance_m == pytest.approx(
            float(np.mean([seg1.length_m - o for o in offsets]))
        )
        assert row1.travel_speed_kmh == pytest.approx(20.0)
        # gates 1 and 2 both feed section 1: net influx 1 -> availability 314/315
        assert row1.availability == pytest.approx(314 / 315)

    def test_paper_schedule_yields_180_rows(self, campus, segments):
        # 2022-09-05 07:00 .. 2022-09-08 15:00, hourly, five segments sharing hours
        window = (
            datetime(2022, 9, 5, 7, tzinfo=UTC),
            datetime(2022, 9, 8, 15, tzinfo=UTC),
        )
        rows = aggregate_hourly([], campus, window, segments=segments)
        assert len(rows) == 180
        hours = {r.timestamp for r in rows}
        assert len(hours) == 36
        assert all(7 <= h.hour <= 15 for h in hours)

    def test_empty_buckets_emit_zero_count_rows(self, campus, segments):
        joined = [joined_obs(segments, "a1", 2, 50.0, 5)]
        rows = aggregate_hourly(joined, campus, (T0, T0 + timedelta(hours=1)), segments=segments)
        assert len(rows) == 2 * len(segments)
        empty = [r for r in rows if not (r.segment_no == 2 and r.timestamp == T0)]
        assert all(r.n_vehicles == 0 and r.n_vehicles_exit == 0 for r in empty)

    def test_window_must_be_hour_aligned(self, campus, segments):
        with pytest.raises(ValueError, match="hour-aligned"):
            aggregate_hourly([], campus, (T0, T0 + timedelta(minutes=30)), segments=segments)

    def test_departing_vehicle_not_counted_as_influx(self, campus, segments):
        joined = [
            joined_obs(segments, "x9", 3, 400.0, 2),
            joined_obs(segments, "x9", 3, 350.0, 20),
        ]
        rows = aggregate_hourly(joined, campus, (T0, T0), segments=segments)
        row3 = next(r for r in rows if r.segment_no == 3)
        assert row3.n_vehicles == 0
        assert row3.n_vehicles_exit == 1

    def test_conservation_of_influx(self, campus, segments):
        # sum of n_vehicles equals the count of distinct inbound
        # (vehicle, hour) first-sightings, recomputed independently here
        from parkcast.spatial import spatial_join
        from parkcast.synth import default_synth_spec, generate_traces, spec_from_dict

        spec = spec_from_dict(default_synth_spec())
        obs, _ = generate_traces(spec, campus, seed=17)
        joined = spatial_join(obs, campus, threshold_m=30.0, segments=segments)
        rows = aggregate_hourly(joined, campus, spec.window(), segments=segments)

        by_vehicle_hour = {}
        for j in joined:
            if j.segment_id is None:
                continue
            key = (j.observation.vehicle_key, j.observation.timestamp.replace(minute=0, second=0, microsecond=0))
            by_vehicle_hour.setdefault(key, []).append(j)
        inbound_first_sightings = 0
        for sightings in by_vehicle_hour.values():
            sightings.sort(key=lambda j: j.observation.timestamp)
            first_seg = sightings[0].segment_id
            offsets = [j.offset_m for j in sightings if j.segment_id == first_seg]
            if offsets[-1] >= offsets[0]:
                inbound_first_sightings += 1
        assert sum(r.n_vehicles for r in rows) == inbound_first_sightings


class TestClean:
    def make_rows(self, n, segment=1):
        return [
            FeatureRow(
                distance_m=float(i),
                timestamp=T0 + timedelta(hours=i),
                travel_speed_kmh=20.0,
                n_vehicles=i % 5,
                n_vehicles_exit=i % 3,
                segment_no=segment,
                total_parking_space=315,
                availability=0.5,
            )
            for i in range(n)
        ]

    def test_already_clean_unchanged(self):
        rows = self.make_rows(10)
        kept, report = clean(rows)
        assert kept == rows
        assert report.total_dropped == 0

    def test_duplicates_keep_first(self):
        rows = self.make_rows(3)
        kept, report = clean(rows + [rows[1]])
        assert kept == rows
        assert report.dropped_duplicates == 1

    def test_missing_and_out_of_range_targets_dropped(self):
        rows = self.make_rows(4)
        bad = [
            FeatureRow(1.0, T0, 1.0, 0, 0, 1, 315, None),
            FeatureRow(2.0, T0, 1.0, 0, 0, 1, 315, float("nan")),
            FeatureRow(3.0, T0, 1.0, 0, 0, 1, 315, 1.5),
            FeatureRow(4.0, T0, 1.0, 0, 0, 1, 315, -0.1),
        ]
        kept, report = clean(rows + bad)
        assert kept == rows
        assert report.dropped_missing_target == 2
        assert report.dropped_out_of_range == 2

    def test_idempotent(self):
        rows = self.make_rows(20) + self.make_rows(5)
        once, _ = clean(rows)
        twice, report2 = clean(once)
        assert twice == once
        assert report2.total_dropped == 0

    def test_180_to_144_bookkeeping(self):
        # fixture mirroring the published pipeline's row accounting
        good = self.make_rows(144)
        dupes = good[:20]
        missing = [
            FeatureRow(100.0 + i, T0 + timedelta(hours=i), 1.0, 0, 0, 2, 315, None)
            for i in range(10)
        ]
        bad_range = [
            FeatureRow(200.0 + i, T0 + timedelta(hours=i), 1.0, 0, 0, 3, 315, 2.0)
            for i in range(6)
        ]
        rows = good + dupes + missing + bad_range
        assert len(rows) == 180
        kept, report = clean(rows)
        assert len(kept) == 144
        assert (report.dropped_duplicates, report.dropped_missing_target, report.dropped_out_of_range) == (20, 10, 6)


class TestSelectFeatures:
    def raw_map(self):
        raw = {
            "Distance": 120.5,
            "Timestamp": "2022-09-05T08:00:00Z",
            "Travel Speed": 23.0,
            "No. of Vehicles": 4,
            "No. of Vehicles exit": 1,
            "No. Segment": 2,
            "Total Parking Space": 315,
            "Availability": 0.71,
        }
        # 17 redundant extras, as in a raw 25-attribute export
        for i in range(17):
            raw[f"redundant_{i}"] = i
        return raw

    def test_25_to_8(self):
        raw = self.raw_map()
        assert len(raw) == 25
        row = select_features(raw)
        assert row.segment_no == 2
        assert row.availability == 0.71
        assert row.timestamp == datetime(2022, 9, 5, 8, tzinfo=UTC)

    def test_identity_on_exactly_8(self):
        raw = {k: v for k, v in self.raw_map().items() if k in ATTRIBUTE_NAMES}
        assert len(raw) == 8
        row = select_features(raw)
        assert row.distance_m == 120.5

    def test_missing_availability_is_schema_error(self):
        raw = self.raw_map()
        del raw["Availability"]
        with pytest.raises(SchemaError, match="Availability"):
            select_features(raw)


class TestEncodeAndScale:
    def make_rows(self, n, segment_no=1, speed=20.0, start=T0):
        return [
            FeatureRow(
                distance_m=50.0 * (i + 1),
                timestamp=start + timedelta(hours=i),
                travel_speed_kmh=speed,
                n_vehicles=i,
                n_vehicles_exit=n - i,
                segment_no=segment_no,
                total_parking_space=315,
                availability=i / n,
            )
            for i in range(n)
        ]

    def test_zero_variance_column_maps_to_zero(self):
        rows = self.make_rows(6)  # constant speed and capacity
        ds = encode_and_scale(rows, [])
        speed_col = ds.feature_names.index("travel_speed")
        cap_col = ds.feature_names.index("total_parking_space")
        assert np.all(ds.train_X[:, speed_col] == 0.0)
        assert np.all(ds.train_X[:, cap_col] == 0.0)
        assert np.all(np.isfinite(ds.train_X))

    def test_one_hot_layout(self):
        rows = self.make_rows(4, segment_no=2)
        ds = encode_and_scale(rows, [], n_segments=5)
        hot = ds.train_X[:, -5:]
        assert np.array_equal(hot[0], [0.0, 1.0, 0.0, 0.0, 0.0])

    def test_scale_roundtrip(self):
        rng = np.random.default_rng(0)
        values = rng.normal(10.0, 5.0, size=(50, 7))
        mean = values.mean(axis=0)
        std = values.std(axis=0)
        back = unstandardize(standardize(values, mean, std), mean, std)
        assert np.max(np.abs(back - values)) < 1e-12

    def test_test_rows_use_training_statistics(self):
        train = self.make_rows(8, speed=20.0)
        test = self.make_rows(4, speed=40.0, start=T0 + timedelta(days=1))
        ds = encode_and_scale(train, test)
        speed_col = ds.feature_names.index("travel_speed")
        # train speed constant -> zero-variance -> train zeros, test offset
        assert np.all(ds.train_X[:, speed_col] == 0.0)
        assert np.all(ds.test_X[:, speed_col] == 20.0)

    def test_no_nan_inf_for_finite_inputs(self):
        rng = np.random.default_rng(42)
        rows = []
        for i in range(60):
            rows.append(
                FeatureRow(
                    distance_m=float(rng.uniform(0, 1e6)),
                    timestamp=T0 + timedelta(hours=int(rng.integers(0, 1000))),
                    travel_speed_kmh=float(rng.uniform(0, 200)),
                    n_vehicles=int(rng.integers(0, 10_000)),
                    n_vehicles_exit=int(rng.integers(0, 10_000)),
                    segment_no=int(rng.integers(1, 6)),
                    total_parking_space=int(rng.integers(1, 2000)),
                    availability=float(rng.uniform(0, 1)),
                )
            )
        ds = encode_and_scale(rows[:40], rows[40:])
        assert np.all(np.isfinite(ds.train_X)) and np.all(np.isfinite(ds.test_X))
        assert np.all(np.isfinite(ds.train_y)) and np.all(np.isfinite(ds.test_y))

    def test_encode_row_matches_dataset_encoding(self):
        rows = self.make_rows(6, segment_no=3)
        ds = encode_and_scale(rows, [], n_segments=5)
        vec = encode_row(rows[2], ds.sidecar())
        assert np.allclose(vec, ds.train_X[2], atol=1e-12)

    def test_csv_roundtrip(self):
        rows = self.make_rows(5)
        assert rows_from_csv(rows_to_csv(rows)) == rows


class TestAvailability:
    def test_full_occupancy(self):
        assert availability(945, 945) == 0.0

    def test_empty_campus(self):
        assert availability(945, 0) == 1.0

    def test_direct_arithmetic(self):
        assert availability(315, 94) == pytest.approx((315 - 94) / 315, abs=1e-15)
        assert availability(315, 94) == pytest.approx(0.701587, abs=1e-6)

    def test_domain_errors(self):
        with pytest.raises(ValueError):
            availability(315, 316)
        with pytest.raises(ValueError):
            availability(315, -1)
        with pytest.raises(ValueError):
            availability(0, 0)


class TestSectionForSegment:
    def test_fixture_mapping(self, campus, segments):
        mapping = {s.id: section_for_segment(campus, s) for s in segments}
        assert mapping == {1: 1, 2: 1, 3: 2, 4: 3, 5: 3}
