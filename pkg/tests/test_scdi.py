import datetime as dt
import io

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conflictseq.grid import CellId, GridSpec
from conflictseq.ingest import EventRecord, EventSet
from conflictseq.scdi import (
    State,
    build_state_field,
    classify_cell_year,
    intensity_threshold,
    nearest_neighbor_index,
    read_state_field_csv,
    write_state_field_csv,
)

GRID = GridSpec(0.0, 0.0, 1.0, 8, 8)


def make_events(cell_year_counts: dict, grid: GridSpec = GRID, span=(2000, 2005)) -> EventSet:
    """Events with the given number per (cell, year), spread inside each cell."""
    records = []
    k = 0
    for (cell, year), count in cell_year_counts.items():
        x0, y0 = grid.cell_origin(cell)
        for i in range(count):
            # deterministic scattered offsets, strictly inside the cell
            fx = (0.131 + 0.613 * ((i * 7 + k) % 11) / 11.0) % 0.97 + 0.01
            fy = (0.271 + 0.419 * ((i * 5 + k) % 13) / 13.0) % 0.97 + 0.01
            records.append(
                EventRecord(
                    id=f"e{k}",
                    date=dt.date(year, 6, 15),
                    year=year,
                    lon=x0 + fx * grid.cell_size,
                    lat=y0 + fy * grid.cell_size,
                    event_type="battle",
                    cell=cell,
                )
            )
            k += 1
    return EventSet(records=records, grid=grid, year_min=span[0], year_max=span[1],
                    n_input_rows=len(records))


class TestIntensityThreshold:
    def test_mean_of_two_cell_years(self):
        events = make_events({(CellId(0, 0), 2000): 4, (CellId(1, 1), 2001): 2})
        assert intensity_threshold(events) == 3.0

    def test_single_violent_cell_year(self):
        events = make_events({(CellId(0, 0), 2000): 7})
        assert intensity_threshold(events) == 7.0

    def test_planted_counts_1_1_4_6(self):
        events = make_events(
            {
                (CellId(0, 0), 2000): 1,
                (CellId(1, 0), 2000): 1,
                (CellId(2, 0), 2001): 4,
                (CellId(3, 0), 2002): 6,
            }
        )
        assert intensity_threshold(events) == 3.0

    def test_no_events_raises(self):
        events = make_events({})
        with pytest.raises(ValueError, match="no violent cell-years"):
            intensity_threshold(events)


class TestNearestNeighborIndex:
    def test_colocated_points_give_zero(self):
        pts = np.array([[0.3, 0.3], [0.3, 0.3], [0.3, 0.3]])
        assert nearest_neighbor_index(pts, 1.0) == 0.0

    def test_two_opposite_corners_of_unit_cell(self):
        # observed mean NN distance sqrt(2); CSR expectation 0.5*sqrt(1/2)
        pts = np.array([[0.0, 0.0], [1.0, 1.0]])
        assert nearest_neighbor_index(pts, 1.0) == pytest.approx(4.0, abs=1e-12)

    def test_regular_lattice_is_dispersed(self):
        # 5x5 lattice with spacing 1/4: brute-force NN distance is 0.25 for
        # every point, expectation 0.5*sqrt(1/25) = 0.1, so NNI = 2.5
        xs, ys = np.meshgrid(np.linspace(0, 1, 5), np.linspace(0, 1, 5))
        pts = np.column_stack([xs.ravel(), ys.ravel()])
        brute = []
        for i in range(len(pts)):
            d = np.hypot(*(pts[i] - np.delete(pts, i, axis=0)).T)
            brute.append(d.min())
        expected = np.mean(brute) / (0.5 * np.sqrt(1.0 / 25))
        nni = nearest_neighbor_index(pts, 1.0)
        assert nni == pytest.approx(expected, abs=1e-12)
        assert nni == pytest.approx(2.5, abs=1e-12)
        assert nni > 1

    def test_fewer_than_two_points_undefined(self):
        with pytest.raises(ValueError):
            nearest_neighbor_index(np.array([[0.5, 0.5]]), 1.0)

    @given(
        scale=st.floats(min_value=0.01, max_value=1000.0),
        seed=st.integers(min_value=0, max_value=2**31),
    )
    @settings(max_examples=50, deadline=None)
    def test_scale_invariance(self, scale, seed):
        rng = np.random.default_rng(seed)
        pts = rng.random((8, 2))
        base = nearest_neighbor_index(pts, 1.0)
        scaled = nearest_neighbor_index(pts * scale, scale**2)
        assert scaled == pytest.approx(base, rel=1e-9)


class TestClassifyCellYear:
    def test_zero_count_is_nc(self):
        assert classify_cell_year(0, 3.0) is State.NC

    def test_high_clustered_is_ch(self):
        assert classify_cell_year(10, 3.0, 0.4) is State.CH

    def test_single_event_defaults_dispersed_low(self):
        assert classify_cell_year(1, 3.0) is State.DL

    def test_single_event_clustered_rule_option(self):
        assert classify_cell_year(1, 3.0, single_event_rule="clustered") is State.CL

    def test_count_equal_to_threshold_is_low(self):
        assert classify_cell_year(3, 3.0, 0.4) is State.CL
        assert classify_cell_year(3, 3.0, 1.7) is State.DL

    def test_nni_exactly_one_is_dispersed(self):
        assert classify_cell_year(10, 3.0, 1.0) is State.DH

    @given(
        count=st.integers(min_value=0, max_value=50),
        threshold=st.floats(min_value=0.5, max_value=20),
        nni=st.one_of(st.none(), st.floats(min_value=0, max_value=5)),
    )
    @settings(max_examples=200, deadline=None)
    def test_exhaustive_and_exclusive(self, count, threshold, nni):
        state = classify_cell_year(count, threshold, None if count < 2 else nni)
        assert state in State
        assert (state is State.NC) == (count == 0)

    @given(
        threshold=st.floats(min_value=0.5, max_value=20),
        nni=st.one_of(st.none(), st.floats(min_value=0, max_value=5)),
        low=st.integers(min_value=2, max_value=30),
        bump=st.integers(min_value=0, max_value=30),
    )
    @settings(max_examples=200, deadline=None)
    def test_monotone_in_count(self, threshold, nni, low, bump):
        # a higher count with the same point pattern never drops HIGH to LOW
        first = classify_cell_year(low, threshold, nni)
        second = classify_cell_year(low + bump, threshold, nni)
        high_states = (State.CH, State.DH)
        if first in high_states:
            assert second in high_states


class TestBuildStateField:
    def test_empty_event_set_is_all_nc(self):
        field = build_state_field(make_events({}))
        assert not field.codes.any()
        assert field.threshold == 0.0

    def test_single_event_dataset_is_dl(self):
        # threshold 1.0; count 1 is not > 1.0 -> LOW; lone event -> DISPERSED
        events = make_events({(CellId(2, 2), 2001): 1})
        field = build_state_field(events)
        assert field.threshold == 1.0
        assert field.state(CellId(2, 2), 2001) is State.DL
        assert field.state(CellId(2, 2), 2000) is State.NC

    def test_complete_lattice(self):
        events = make_events({(CellId(0, 0), 2000): 3})
        field = build_state_field(events)
        assert field.codes.shape == (GRID.n_rows, GRID.n_cols, 6)

    def test_roundtrip_csv(self):
        events = make_events({(CellId(0, 0), 2000): 3, (CellId(4, 5), 2003): 9})
        field = build_state_field(events)
        buf = io.StringIO()
        write_state_field_csv(field, buf)
        buf.seek(0)
        again = read_state_field_csv(buf, GRID, 2000, 2005, threshold=field.threshold)
        assert (again.codes == field.codes).all()

    def test_nc_iff_zero_events(self):
        counts = {
            (CellId(0, 0), 2000): 2,
            (CellId(3, 1), 2002): 5,
            (CellId(7, 7), 2005): 1,
        }
        events = make_events(counts)
        field = build_state_field(events)
        for cell in GRID.all_cells():
            for year in field.years:
                has_events = (cell, year) in counts
                assert (field.state(cell, year) is not State.NC) == has_events
