import math

import pytest
from hypothesis import given
from hypothesis import strategies as st

from pibearing.geometry import (
    PADERBORN_6203,
    BearingGeometry,
    InvalidGeometryError,
    InvalidInputError,
    OperatingCondition,
    bpfi,
    bpfo,
    parse_condition_label,
    shaft_frequency,
)


class TestShaftFrequency:
    @pytest.mark.parametrize("rpm, hz", [(1500, 25.0), (900, 15.0)])
    def test_unit_conversion(self, rpm, hz):
        assert shaft_frequency(OperatingCondition(rpm)) == hz

    def test_kaist_speed(self):
        assert shaft_frequency(OperatingCondition(3010)) == pytest.approx(50.1667, abs=1e-4)

    def test_nonpositive_speed(self):
        with pytest.raises(InvalidInputError):
            OperatingCondition(0)


class TestDefectFrequencies:
    # 4 * 25 * (1 - 6.75/28.55) evaluated by hand
    def test_bpfo_paderborn_1500rpm(self):
        assert bpfo(PADERBORN_6203, 25.0) == pytest.approx(76.357, abs=1e-3)

    def test_bpfo_paderborn_900rpm(self):
        assert bpfo(PADERBORN_6203, 15.0) == pytest.approx(45.814, abs=1e-3)

    def test_bpfi_paderborn_1500rpm(self):
        assert bpfi(PADERBORN_6203, 25.0) == pytest.approx(123.643, abs=1e-3)

    def test_degenerate_ratio(self):
        g = BearingGeometry(2, 1e-12, 1.0)
        assert bpfo(g, 10.0) == pytest.approx(10.0)
        assert bpfi(g, 10.0) == pytest.approx(10.0)

    def test_invalid_geometry(self):
        with pytest.raises(InvalidGeometryError):
            BearingGeometry(8, 30.0, 28.55)
        with pytest.raises(InvalidGeometryError):
            BearingGeometry(8, 6.75, 28.55, math.pi / 2)
        with pytest.raises(InvalidGeometryError):
            BearingGeometry(0, 6.75, 28.55)

    def test_nonpositive_frequency(self):
        with pytest.raises(InvalidInputError):
            bpfo(PADERBORN_6203, 0.0)


geometries = st.builds(
    lambda n, ratio, pitch, phi: BearingGeometry(n, ratio * pitch, pitch, phi),
    st.integers(1, 40),
    st.floats(0.01, 0.95),
    st.floats(1.0, 500.0),
    st.floats(0.0, 1.5),
)
freqs = st.floats(0.1, 1000.0)


@given(geometries, freqs)
def test_sum_identity(g, f):
    assert math.isclose(bpfo(g, f) + bpfi(g, f), g.rolling_element_count * f, rel_tol=1e-9)


@given(geometries, freqs)
def test_outer_below_inner(g, f):
    assert 0 < bpfo(g, f) < bpfi(g, f)


@given(geometries, freqs, st.floats(0.1, 10.0))
def test_linear_in_shaft_frequency(g, f, k):
    assert math.isclose(bpfo(g, k * f), k * bpfo(g, f), rel_tol=1e-12)
    assert math.isclose(bpfi(g, k * f), k * bpfi(g, f), rel_tol=1e-12)


def test_parse_condition_label():
    c = parse_condition_label("N09_M07_F10")
    assert (c.shaft_speed_rpm, c.load_torque_nm, c.radial_force_n) == (900.0, 0.7, 1000.0)
    with pytest.raises(InvalidInputError):
        parse_condition_label("KAIST")
