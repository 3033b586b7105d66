"""Synthetic trace generator: shapes, reproducibility, balance bookkeeping."""

import pytest

from parkcast.errors import GenerationError
from parkcast.features import aggregate_hourly, clean, section_for_segment
from parkcast.spatial import spatial_join, write_observations_csv
from parkcast.synth import (
    default_synth_spec,
    generate_traces,
    spec_from_dict,
    truth_from_csv,
    truth_to_csv,
)


def make_spec(**overrides):
    doc = default_synth_spec()
    doc.update(overrides)
    return spec_from_dict(doc)


class TestGenerator:
    def test_zero_rates_give_empty_observations_constant_occupancy(self, campus):
        zero = {str(g): [0.0] * 8 for g in range(1, 6)}
        spec = make_spec(arrival_rates=zero, departure_rates=zero)
        obs, truth = generate_traces(spec, campus, seed=0)
        assert obs == []
        assert len(truth) == 3 * 8 * 3  # days x hours x sections
        assert all(t.occupied == 0 and t.availability == 1.0 for t in truth)

    def test_three_day_spec_yields_120_row_dataset(self, campus, segments):
        spec = make_spec()
        obs, _ = generate_traces(spec, campus, seed=1)
        joined = spatial_join(obs, campus, threshold_m=30.0, segments=segments)
        rows = aggregate_hourly(joined, campus, spec.window(), segments=segments)
        assert len(rows) == 3 * 8 * 5  # days x hours x segments

    def test_same_seed_reproducible(self, campus):
        spec = make_spec()
        obs1, truth1 = generate_traces(spec, campus, seed=9)
        obs2, truth2 = generate_traces(spec, campus, seed=9)
        assert obs1 == obs2
        assert truth1 == truth2
        assert write_observations_csv(obs1) == write_observations_csv(obs2)

    def test_different_seed_differs(self, campus):
        spec = make_spec()
        obs1, _ = generate_traces(spec, campus, seed=1)
        obs2, _ = generate_traces(spec, campus, seed=2)
        assert obs1 != obs2

    def test_overflow_raises_generation_error(self, campus):
        # 400 arrivals/hour at one gate would exceed the 315-space section
        hot = {str(g): [400.0] + [0.0] * 7 for g in range(1, 6)}
        cold = {str(g): [0.0] * 8 for g in range(1, 6)}
        spec = make_spec(arrival_rates=hot, departure_rates=cold, gps_noise_sigma_m=0.0)
        with pytest.raises(GenerationError, match="capacity"):
            generate_traces(spec, campus, seed=0)

    def test_rate_curve_length_validation(self, campus):
        bad = default_synth_spec()
        bad["arrival_rates"]["1"] = [1.0, 2.0]
        with pytest.raises(GenerationError, match="entries"):
            generate_traces(spec_from_dict(bad), campus, seed=0)

    def test_truth_csv_roundtrip(self, campus):
        spec = make_spec()
        _, truth = generate_traces(spec, campus, seed=3)
        assert truth_from_csv(truth_to_csv(truth)) == truth


class TestPipelineInversion:
    def test_noiseless_pipeline_recovers_ground_truth_exactly(self, campus, segments):
        spec = make_spec(gps_noise_sigma_m=0.0)
        obs, truth = generate_traces(spec, campus, seed=42)
        joined = spatial_join(obs, campus, threshold_m=30.0, segments=segments)
        assert all(j.segment_id is not None for j in joined)
        rows = aggregate_hourly(joined, campus, spec.window(), segments=segments)
        cleaned, report = clean(rows)
        assert report.total_dropped == 0

        truth_map = {(t.hour, t.section_id): t.availability for t in truth}
        section_of = {s.id: section_for_segment(campus, s) for s in segments}
        max_err = max(
            abs(r.availability - truth_map[(r.timestamp, section_of[r.segment_no])])
            for r in cleaned
        )
        assert max_err < 1e-9

    def test_noisy_pipeline_stays_close(self, campus, segments):
        spec = make_spec(gps_noise_sigma_m=5.0)
        obs, truth = generate_traces(spec, campus, seed=4)
        joined = spatial_join(obs, campus, threshold_m=30.0, segments=segments)
        rows = aggregate_hourly(joined, campus, spec.window(), segments=segments)
        truth_map = {(t.hour, t.section_id): t.availability for t in truth}
        section_of = {s.id: section_for_segment(campus, s) for s in segments}
        errs = [
            abs(r.availability - truth_map[(r.timestamp, section_of[r.segment_no])])
            for r in rows
        ]
        assert sum(errs) / len(errs) < 0.05  # GPS noise misassigns only a few snaps
