import math

import pytest
from hypothesis import given, settings, strategies as st

from radtrap.csvio import ExperimentRow, format_number, ingest_csv, ingest_text, render_csv, rows_to_csv
from radtrap.errors import DataError


def test_format_number():
    assert format_number(0.1) == "0.1"
    assert format_number(1 / 3) == "0.333333333333"
    assert format_number(5e12) == "5e+12"
    assert format_number(True) == "1"
    assert format_number(7) == "7"


def test_render_with_meta():
    text = render_csv(["a", "b"], [(1.0, 2.5)], {"mode": "fit"})
    assert text == "# mode: fit\na,b\n1,2.5\n"


def test_header_only_gives_empty_list():
    assert ingest_text("N_cm3,transmission,slope_rad_per_G\n") == []


def test_missing_header():
    with pytest.raises(DataError):
        ingest_text("# only comments\n")


@pytest.mark.parametrize(
    "body,line,needle",
    [
        ("N_cm3,transmission\n1e11,0.9\n", 1, "missing column"),
        ("N_cm3,transmission,slope_rad_per_G,colour\n", 1, "unknown column"),
        ("N_cm3,transmission,slope_rad_per_G\n1e11,0.9\n", 2, "expected 3 cells"),
        ("N_cm3,transmission,slope_rad_per_G\n1e11,0.9,1\n1e11,abc,1\n", 3, "not numeric"),
        ("N_cm3,transmission,slope_rad_per_G\n1e11,1.2,1\n", 2, "outside"),
        ("N_cm3,transmission,slope_rad_per_G\n-1,0.9,1\n", 2, "positive"),
        ("N_cm3,transmission,slope_rad_per_G\n1e11,0.9,inf\n", 2, "finite"),
        ("N_cm3,transmission,slope_rad_per_G,sigma_slope\n1e11,0.9,1,-1\n", 2, "nonnegative"),
    ],
)
def test_bad_rows_report_line(body, line, needle):
    with pytest.raises(DataError, match=needle) as info:
        ingest_text(body)
    assert info.value.line == line
    assert info.value.exit_code == 3


def test_optional_nan_cells_are_absent():
    rows = ingest_text("N_cm3,transmission,slope_rad_per_G,gamma_eff\n1e11,0.9,1,nan\n")
    assert rows[0].gamma_eff is None


def test_file_round_trip(tmp_path):
    rows = [ExperimentRow(1e11, 0.99, 0.4, 0.001, 0.01), ExperimentRow(2.5e12, 0.712345678901, 12.0, None, 0.2)]
    path = tmp_path / "data.csv"
    path.write_text(rows_to_csv(rows, {"source": "synthetic"}))
    again = ingest_csv(path)
    assert again == rows
    assert again[0].to_point().transmission == 0.99


finite = st.floats(allow_nan=False, allow_infinity=False)


@settings(max_examples=200, deadline=None)
@given(
    st.lists(
        st.tuples(
            st.floats(1e6, 1e15),
            st.floats(1e-6, 1.0),
            st.floats(-1e4, 1e4, allow_nan=False),
            st.one_of(st.none(), st.floats(0, 1)),
        ),
        max_size=8,
    )
)
def test_round_trip_property(raw):
    # values already at 12 significant digits survive exactly
    rows = [
        ExperimentRow(*(float(format_number(v)) for v in (N, T, s)), sigma_slope=None if e is None else float(format_number(e)))
        for N, T, s, e in raw
    ]
    again = ingest_text(rows_to_csv(rows))
    assert again == rows
    assert rows_to_csv(again) == rows_to_csv(rows)
