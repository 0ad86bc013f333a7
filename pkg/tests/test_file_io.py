# tests/test_file_io.py

import json
from datetime import datetime, timezone

import numpy as np
import pytest

from app.core.errors import ConfigError, DimensionError, FeasibilityError, ParseError
from app.schemas.experiment import CellStats, MonteCarloReport, RunManifest
from app.schemas.solver import Algorithm
from app.services.file_io import (
    REPORT_COLUMNS,
    file_digest,
    load_experiment_spec,
    parse_numeric_table,
    quantize_map,
    read_cube,
    read_endmember_csv,
    read_manifest,
    read_pgm,
    read_pixel_csv,
    write_abundance_csv,
    write_cube,
    write_manifest,
    write_matrix_csv,
    write_pgm,
    write_report_csv
)


def test_parse_plain_table():
    header, table = parse_numeric_table("m.csv", "1,0\n0,1\n0.5,0.5\n")
    assert header is None
    assert np.array_equal(table, [[1.0, 0.0], [0.0, 1.0], [0.5, 0.5]])


def test_parse_header_comments_and_whitespace():
    text = "# library\n\nsoil grass\n  1.5e-1   2 \n# mid\n.25 -3E0\n"
    header, table = parse_numeric_table("m.csv", text)
    assert header == ["soil", "grass"]
    assert np.array_equal(table, [[0.15, 2.0], [0.25, -3.0]])


def test_parse_reports_row_and_column_of_nan():
    with pytest.raises(ParseError) as info:
        parse_numeric_table("m.csv", "1,0\n0,NaN\n")
    assert (info.value.row, info.value.column) == (2, 2)
    assert "non-finite" in str(info.value)


def test_parse_rejects_non_finite_first_row():
    # 'inf' is a value, never a header name
    with pytest.raises(ParseError) as info:
        parse_numeric_table("m.csv", "inf,1\n0,1\n")
    assert (info.value.row, info.value.column) == (1, 1)


def test_parse_rejects_ragged_rows_and_garbage():
    with pytest.raises(ParseError) as info:
        parse_numeric_table("m.csv", "1,0\n0,1,2\n")
    assert info.value.row == 2
    with pytest.raises(ParseError) as info:
        parse_numeric_table("m.csv", "1,0\n0,0x10\n")
    assert info.value.column == 2
    with pytest.raises(ParseError):
        parse_numeric_table("m.csv", "# only comments\n")


def test_read_endmember_csv(tmp_path):
    path = tmp_path / "m.csv"
    path.write_text("a,b\n1,0\n0,1\n0.5,0.5\n")
    M = read_endmember_csv(path)
    assert M.names == ("a", "b")
    assert (M.bands, M.endmembers) == (3, 2)

    path.write_text("1,-0.5\n0,1\n")
    with pytest.raises(FeasibilityError):
        read_endmember_csv(path)
    with pytest.raises(ParseError):
        read_endmember_csv(tmp_path / "missing.csv")


def test_read_pixel_csv_checks_bands(tmp_path):
    path = tmp_path / "p.csv"
    path.write_text("1,2\n3,4\n5,6\n")
    assert read_pixel_csv(path, bands=3).shape == (3, 2)
    with pytest.raises(DimensionError):
        read_pixel_csv(path, bands=4)


def test_matrix_csv_preserves_doubles(tmp_path, rng):
    matrix = rng.uniform(0.0, 1.0, size=(7, 3))
    path = tmp_path / "m.csv"
    write_matrix_csv(path, matrix, names=("x", "y", "z"))
    assert np.array_equal(read_endmember_csv(path).data, matrix)


# -- cubes -----------------------------------------------------------------------

def test_cube_is_bit_identical(tmp_path, rng):
    cube = rng.uniform(0.0, 1.0, size=(5, 3, 4))
    header = write_cube(tmp_path / "scene.json", cube)
    assert (header.bands, header.height, header.width) == (5, 3, 4)
    assert (tmp_path / "scene.raw").stat().st_size == 5 * 3 * 4 * 8

    loaded_header, loaded = read_cube(tmp_path / "scene.raw")
    assert loaded_header == header
    assert np.array_equal(loaded, cube)


def test_cube_payload_is_band_sequential(tmp_path):
    cube = np.arange(12, dtype=np.float64).reshape(2, 2, 3)
    write_cube(tmp_path / "c.json", cube)
    payload = np.frombuffer((tmp_path / "c.raw").read_bytes(), dtype="<f8")
    assert np.array_equal(payload, np.arange(12))


def test_single_precision_cube(tmp_path):
    cube = np.full((2, 1, 1), 0.1)
    write_cube(tmp_path / "c.json", cube, dtype="f32")
    _, loaded = read_cube(tmp_path / "c.json")
    assert loaded.dtype == np.float64
    assert np.allclose(loaded, 0.1, atol=1e-7)


def test_truncated_payload_is_reported(tmp_path):
    write_cube(tmp_path / "c.json", np.ones((2, 2, 2)))
    raw = tmp_path / "c.raw"
    raw.write_bytes(raw.read_bytes()[:-8])
    with pytest.raises(ParseError) as info:
        read_cube(tmp_path / "c.json")
    assert info.value.offset == 56


def test_invalid_sidecar_is_reported(tmp_path):
    write_cube(tmp_path / "c.json", np.ones((2, 2, 2)))
    sidecar = tmp_path / "c.json"
    header = json.loads(sidecar.read_text())
    header["interleave"] = "bip"
    sidecar.write_text(json.dumps(header))
    with pytest.raises(ParseError) as info:
        read_cube(sidecar)
    assert "interleave" in str(info.value)


def test_non_finite_sample_is_reported(tmp_path):
    cube = np.ones((2, 2, 2))
    cube[1, 0, 1] = np.nan
    write_cube(tmp_path / "c.json", cube)
    with pytest.raises(ParseError) as info:
        read_cube(tmp_path / "c.json")
    assert info.value.offset == 5 * 8


# -- abundance outputs ---------------------------------------------------------------

def test_quantize_map():
    values = np.array([[0.0, 1.0], [0.5, -1.0]])
    assert np.array_equal(quantize_map(values), [[0, 255], [128, 0]])


def test_pgm_file(tmp_path):
    abundance = np.array([[0.0, 0.25, 1.0], [1.0, 0.5, -1.0]])
    write_pgm(tmp_path / "a.pgm", abundance)
    data = (tmp_path / "a.pgm").read_bytes()
    assert data.startswith(b"P5\n3 2\n255\n")
    assert np.array_equal(read_pgm(tmp_path / "a.pgm"), quantize_map(abundance))


def test_abundance_csv_uses_nine_digits(tmp_path):
    write_abundance_csv(tmp_path / "a.csv", ["soil", "grass"], np.array([[1.0 / 3.0, 2.0 / 3.0]]))
    assert (tmp_path / "a.csv").read_text() == "soil,grass\n0.333333333,0.666666667\n"


# -- reports and manifests ------------------------------------------------------------

def sample_report() -> MonteCarloReport:
    cell = CellStats(
        solver="nsgm", algorithm=Algorithm.NSGM, snr_db=10.0,
        mean=[0.25, 0.75], variance=[1e-3, 2e-3], mean_cost=0.5, mean_iters=12.0,
        mean_sum_violation=0.0, failures=0, status_counts={"converged_kkt": 2},
        estimates=[[0.2, 0.8], [0.3, 0.7]]
    )
    return MonteCarloReport(endmember_names=["a", "b"], alpha_true=[0.3, 0.7], runs=2, seed=1, cells=[cell])


def test_report_csv_layout(tmp_path):
    write_report_csv(tmp_path / "r.csv", sample_report())
    lines = (tmp_path / "r.csv").read_text().splitlines()
    assert lines[0] == ",".join(REPORT_COLUMNS)
    assert lines[1] == "nsgm,10.0,a,0.25,0.001,0.0,12.0,0"
    assert len(lines) == 3


def test_manifest_round_trip(tmp_path):
    stamp = datetime(2024, 6, 11, tzinfo=timezone.utc)
    manifest = RunManifest(
        command="unmix", run_id="abc", version="1.0.0", seed=3, config={"max_iters": 10},
        inputs={"m.csv": "0" * 64}, outputs=["abundances.csv"], started_at=stamp, finished_at=stamp
    )
    write_manifest(tmp_path / "manifest.json", manifest)
    assert read_manifest(tmp_path / "manifest.json") == manifest

    (tmp_path / "bad.json").write_text("{}")
    with pytest.raises(ParseError):
        read_manifest(tmp_path / "bad.json")


def test_file_digest(tmp_path):
    (tmp_path / "f").write_bytes(b"abc")
    assert file_digest(tmp_path / "f") == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"


# -- experiment specs -------------------------------------------------------------------

def test_load_json_spec(tmp_path):
    path = tmp_path / "spec.json"
    path.write_text(json.dumps({
        "alpha_true": [0.3, 0.6, 0.1],
        "snr_grid": [0, "inf"],
        "runs": 5,
        "solvers": [{"algorithm": "nsgm"}, {"algorithm": "fcls", "delta": 0.01}]
    }))
    spec = load_experiment_spec(path)
    assert spec.snr_grid == [0.0, float("inf")]
    assert spec.solvers[1].delta == 0.01


def test_load_toml_spec(tmp_path):
    path = tmp_path / "spec.toml"
    path.write_text(
        'alpha_true = [0.5, 0.5]\n'
        'snr_grid = [10.0]\n'
        'runs = 2\n'
        '[endmembers]\n'
        'kind = "generated"\n'
        'bands = 40\n'
        'count = 2\n'
        '[[solvers]]\n'
        'algorithm = "isra"\n'
    )
    spec = load_experiment_spec(path)
    assert spec.endmembers.bands == 40
    assert spec.solvers[0].algorithm == Algorithm.ISRA


def test_invalid_spec_names_the_field(tmp_path):
    path = tmp_path / "spec.json"
    path.write_text(json.dumps({
        "alpha_true": [0.5, 0.5],
        "snr_grid": [10.0],
        "solvers": [{"algorithm": "nsgm", "max_iters": 0}]
    }))
    with pytest.raises(ConfigError) as info:
        load_experiment_spec(path)
    assert info.value.field == "solvers.0.max_iters"

    path.write_text(json.dumps({"alpha_true": [0.5, 0.6], "snr_grid": [10.0], "solvers": [{}]}))
    with pytest.raises(ConfigError) as info:
        load_experiment_spec(path)
    assert info.value.field == "alpha_true"

    path.write_text("{not json")
    with pytest.raises(ParseError):
        load_experiment_spec(path)
