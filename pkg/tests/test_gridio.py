import struct
import warnings
from datetime import datetime, timezone

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from conftest import T0, make_series
from raintrack.errors import CorruptFileError, FormatError, InvalidDataError
from raintrack.gridio import (
    HEADER_SIZE,
    SENTINEL,
    FieldSeries,
    GridSpec,
    block_upscale,
    decode_series,
    encode_series,
    read_series,
    series_from_csv_grids,
    write_series,
)

T0_TEXT = b"2005-06-01T00:00:00Z"


def hand_bytes_1x1(value=3.5, valid=1, magic=b"PGRD", version=1):
    # spelled out field by field, independent of the module's struct layout
    out = bytearray()
    out += magic
    out += version.to_bytes(4, "little")
    out += (1).to_bytes(4, "little")  # nx
    out += (1).to_bytes(4, "little")  # ny
    out += (1).to_bytes(4, "little")  # nt
    out += bytes.fromhex("0000000000002840")  # 12.0 as little-endian f64
    out += bytes.fromhex("0000000000001840")  # 6.0
    out += bytes(8)  # origin lon 0.0
    out += bytes(8)  # origin lat 0.0
    out += len(T0_TEXT).to_bytes(4, "little")
    out += T0_TEXT
    out += bytes([valid])
    out += bytes.fromhex("00006040") if value == 3.5 else struct.pack("<f", value)
    return bytes(out)


class TestGridSpec:
    def test_area_and_shape(self):
        g = GridSpec(5, 3, 12.0)
        assert g.cell_area_km2 == 144.0
        assert g.shape == (3, 5)

    @pytest.mark.parametrize("args", [(0, 1, 1.0), (1, 0, 1.0), (1, 1, 0.0), (1, 1, -4.0)])
    def test_invalid(self, args):
        with pytest.raises(ValueError):
            GridSpec(*args)


class TestDecode:
    def test_minimal_hand_assembled_file(self):
        s = decode_series(hand_bytes_1x1())
        assert s.nt == 1 and s.shape == (1, 1)
        assert s.fields[0, 0, 0] == np.float32(3.5)
        assert s.mask[0, 0]
        assert s.spec.cell_km == 12.0 and s.dt_hours == 6.0
        assert s.t0 == T0

    def test_hand_assembled_file_equals_writer_output(self, tmp_path):
        s = make_series(np.full((1, 1, 1), 3.5))
        p = tmp_path / "x.pgrd"
        write_series(s, p)
        assert p.read_bytes() == hand_bytes_1x1()

    def test_header_size(self):
        assert HEADER_SIZE == 4 + 4 * 4 + 4 * 8

    def test_bad_magic(self):
        with pytest.raises(FormatError):
            decode_series(hand_bytes_1x1(magic=b"GRDP"))

    def test_bad_version(self):
        with pytest.raises(FormatError):
            decode_series(hand_bytes_1x1(version=2))

    def test_truncated_payload(self):
        with pytest.raises(CorruptFileError):
            decode_series(hand_bytes_1x1()[:-1])

    def test_trailing_garbage(self):
        with pytest.raises(CorruptFileError):
            decode_series(hand_bytes_1x1() + b"\0")

    def test_truncated_header(self):
        with pytest.raises(CorruptFileError):
            decode_series(hand_bytes_1x1()[:20])

    def test_negative_unmasked_value(self):
        with pytest.raises(InvalidDataError):
            decode_series(hand_bytes_1x1(value=-2.0))

    def test_negative_masked_value_is_fine(self):
        s = decode_series(hand_bytes_1x1(value=-1.0, valid=0))
        assert not s.mask[0, 0]

    def test_nan_unmasked_value(self):
        with pytest.raises(InvalidDataError):
            decode_series(hand_bytes_1x1(value=float("nan")))


class TestWrite:
    def test_file_length_2x2_nt2(self, tmp_path):
        s = make_series(np.ones((2, 2, 2)))
        p = tmp_path / "a.pgrd"
        write_series(s, p)
        assert p.stat().st_size == HEADER_SIZE + 4 + len(T0_TEXT) + 4 + 2 * 4 * 4

    def test_nan_rejected_before_writing(self, tmp_path):
        s = make_series(np.ones((1, 2, 2)))
        s.fields[0, 0, 0] = np.nan  # bypass construction checks
        p = tmp_path / "nan.pgrd"
        with pytest.raises(InvalidDataError):
            write_series(s, p)
        assert not p.exists()

    def test_nan_rejected_at_construction(self):
        with pytest.raises(InvalidDataError):
            make_series(np.array([[[np.nan]]]))

    def test_empty_series(self, tmp_path):
        s = FieldSeries(GridSpec(3, 2, 4.0), T0, 6.0, np.zeros((0, 2, 3), np.float32))
        p = tmp_path / "e.pgrd"
        write_series(s, p)
        back = read_series(p)
        assert back.nt == 0 and back == s

    def test_masked_cells_written_as_sentinel(self, tmp_path):
        mask = np.array([[True, False]])
        s = make_series(np.array([[[1.0, 7.0]]]), mask=mask)
        p = tmp_path / "m.pgrd"
        write_series(s, p)
        raw = p.read_bytes()
        payload = np.frombuffer(raw[-8:], "<f4")
        assert payload[1] == SENTINEL
        assert raw[-10:-8] == bytes([1, 0])

    def test_unwritable_path(self, tmp_path):
        s = make_series(np.ones((1, 1, 1)))
        with pytest.raises(OSError):
            write_series(s, tmp_path / "missing" / "x.pgrd")


series_strategy = st.builds(
    lambda fields, mask, cell, dt, hours: FieldSeries(
        GridSpec(fields.shape[2], fields.shape[1], cell),
        datetime(2005, 6, 1, hours, tzinfo=timezone.utc),
        dt,
        fields,
        mask[: fields.shape[1], : fields.shape[2]],
    ),
    hnp.arrays(
        np.float32,
        hnp.array_shapes(min_dims=3, max_dims=3, min_side=1, max_side=6),
        elements=st.floats(0, 500, width=32),
    ),
    hnp.arrays(np.bool_, (6, 6)),
    st.sampled_from([4.0, 12.0, 0.5]),
    st.sampled_from([1.0, 3.0, 6.0]),
    st.integers(0, 23),
)


@settings(max_examples=60, deadline=None)
@given(series_strategy)
def test_roundtrip_bit_exact(s):
    back = decode_series(encode_series(s))
    assert back == s
    assert back.fields.tobytes() == s.fields.tobytes()


class TestUpscale:
    def test_factor_one_identity(self):
        s = make_series(np.arange(12, dtype=float).reshape(1, 3, 4))
        assert block_upscale(s, 1) == s

    def test_mean_of_0_to_8(self):
        s = make_series(np.arange(9, dtype=float).reshape(1, 3, 3), cell_km=4.0)
        c = block_upscale(s, 3)
        assert c.shape == (1, 1)
        assert c.fields[0, 0, 0] == 4.0
        assert c.spec.cell_km == 12.0

    def test_half_valid_block_is_valid(self):
        mask = np.array([[True, True], [False, False]])
        s = make_series(np.array([[[1.0, 2.0], [0.0, 0.0]]]), mask=mask)
        c = block_upscale(s, 2)
        assert c.mask[0, 0]
        assert c.fields[0, 0, 0] == 1.5

    def test_under_half_valid_block_is_masked(self):
        mask = np.array([[True, False], [False, False]])
        s = make_series(np.array([[[1.0, 2.0], [0.0, 0.0]]]), mask=mask)
        c = block_upscale(s, 2)
        assert not c.mask[0, 0]

    def test_zero_factor(self):
        with pytest.raises(ValueError):
            block_upscale(make_series(np.ones((1, 2, 2))), 0)

    def test_non_divisible_drops_with_warning(self):
        s = make_series(np.ones((1, 5, 7)))
        with pytest.warns(UserWarning):
            c = block_upscale(s, 2)
        assert c.shape == (2, 3)

    def test_conservation_all_valid(self, rng):
        f = rng.gamma(0.5, 3.0, size=(3, 12, 18))
        s = make_series(f, cell_km=4.0)
        c = block_upscale(s, 3)
        fine = s.valid_fields().sum(axis=(1, 2)) * s.spec.cell_area_km2
        coarse = c.valid_fields().sum(axis=(1, 2)) * c.spec.cell_area_km2
        # one float32 rounding per coarse cell
        tol = c.spec.cell_area_km2 * np.abs(c.valid_fields()).sum(axis=(1, 2)) * np.finfo(np.float32).eps
        assert np.all(np.abs(fine - coarse) <= tol)

    def test_composition_exact_on_dyadic_values(self, rng):
        f = rng.integers(0, 50, size=(2, 8, 8)).astype(float)
        s = make_series(f, cell_km=1.0)
        assert block_upscale(s, 4) == block_upscale(block_upscale(s, 2), 2)

    @settings(max_examples=40, deadline=None)
    @given(hnp.arrays(np.float32, (1, 6, 6), elements=st.floats(0, 100, width=32)))
    def test_composition_within_one_ulp(self, f):
        s = make_series(f, cell_km=1.0)
        a = block_upscale(s, 6).fields
        b = block_upscale(block_upscale(s, 2), 3).fields
        assert np.all(np.abs(a - b) <= np.spacing(np.maximum(a, b)) * 2)


class TestCsv:
    def test_rows_are_south_first_and_blanks_masked(self, tmp_path):
        p1 = tmp_path / "t0.csv"
        p1.write_text("1,2,3\n4,,6\n")
        p2 = tmp_path / "t1.csv"
        p2.write_text("0,0,0\n0,-1,0\n")
        s = series_from_csv_grids([p1, p2], 12.0, T0, 6.0)
        assert s.nt == 2 and s.shape == (2, 3)
        assert s.fields[0, 0, 2] == 3.0  # first CSV row = row 0 = southernmost
        assert not s.mask[1, 1]
        assert s.mask.sum() == 5

    def test_shape_mismatch(self, tmp_path):
        p1 = tmp_path / "a.csv"
        p1.write_text("1,2\n")
        p2 = tmp_path / "b.csv"
        p2.write_text("1,2,3\n")
        with pytest.raises(ValueError):
            series_from_csv_grids([p1, p2], 12.0, T0, 6.0)


def test_time_axis():
    s = make_series(np.zeros((3, 1, 1)))
    assert s.interval_start(2) == datetime(2005, 6, 1, 12, tzinfo=timezone.utc)
    assert s.interval_center(0) == datetime(2005, 6, 1, 3, tzinfo=timezone.utc)
    assert list(s.center_hours_utc()) == [3.0, 9.0, 15.0]


def test_masked_cells_excluded_from_valid_fields():
    mask = np.array([[True, False]])
    s = make_series(np.array([[[2.0, 9.0]]]), mask=mask)
    assert s.fields[0, 0, 1] == SENTINEL
    assert s.valid_fields()[0, 0, 1] == 0.0
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        s.with_mask(np.ones((1, 2), bool))
