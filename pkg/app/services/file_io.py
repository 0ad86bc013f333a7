# app/services/file_io.py

"""
Readers and writers for every file the command line touches.

Numeric CSV rules: decimal floating point only, comma or whitespace
delimited, '#' comment lines and blank lines skipped, optional header row of
names, NaN / Inf rejected. Row numbers in diagnostics are physical line
numbers (1-based), columns are 1-based.
"""

import hashlib
import json
import logging
import re
try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib
from pathlib import Path
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np
from pydantic import ValidationError

from app.core.errors import ConfigError, DimensionError, ParseError
from app.schemas.experiment import CubeHeader, ExperimentSpec, MonteCarloReport, RunManifest
from app.schemas.model import EndmemberMatrix
from app.schemas.solver import SolverTrace

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]

_DECIMAL = re.compile(r"^[+-]?(\d+\.?\d*|\.\d+)([eE][+-]?\d+)?$")
ABUNDANCE_FORMAT = "{:.9g}"
PGM_MAXVAL = 255

REPORT_COLUMNS = (
    "solver", "snr_db", "component", "mean", "variance",
    "mean_sum_violation", "mean_iters", "failures"
)


def file_digest(path: PathLike) -> str:
    """SHA-256 of the file content."""
    digest = hashlib.sha256()
    with open(path, "rb") as f:
        for block in iter(lambda: f.read(1 << 20), b""):
            digest.update(block)
    return digest.hexdigest()


# -- numeric CSV ---------------------------------------------------------------

def _split(line: str) -> List[str]:
    if "," in line:
        return [token.strip() for token in line.split(",")]
    return line.split()


_NON_FINITE = ("nan", "inf", "infinity")


def _is_header(tokens: Sequence[str]) -> bool:
    return all(
        token and not _DECIMAL.match(token) and token.lower().lstrip("+-") not in _NON_FINITE
        for token in tokens
    )


def parse_numeric_table(path: PathLike, text: str) -> Tuple[Optional[List[str]], np.ndarray]:
    """Parse CSV text into (header or None, rows x columns float64 array)."""
    header: Optional[List[str]] = None
    rows: List[List[float]] = []
    width: Optional[int] = None

    for line_no, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        tokens = _split(line)

        if header is None and not rows and _is_header(tokens):
            header = tokens
            width = len(tokens)
            continue

        if width is not None and len(tokens) != width:
            raise ParseError(
                str(path), f"expected {width} fields, found {len(tokens)}", row=line_no
            )
        width = len(tokens)

        values = []
        for col_no, token in enumerate(tokens, start=1):
            if not _DECIMAL.match(token):
                reason = "non-finite value" if token.lower().lstrip("+-") in _NON_FINITE \
                    else "not a decimal number"
                raise ParseError(str(path), f"{reason} {token!r}", row=line_no, column=col_no)
            value = float(token)
            if not np.isfinite(value):
                raise ParseError(str(path), f"value {token!r} overflows", row=line_no, column=col_no)
            values.append(value)
        rows.append(values)

    if not rows:
        raise ParseError(str(path), "no numeric rows")
    return header, np.array(rows, dtype=np.float64)


def _read_text(path: PathLike) -> str:
    try:
        return Path(path).read_text(encoding="utf-8")
    except FileNotFoundError:
        raise ParseError(str(path), "file not found")
    except UnicodeDecodeError as e:
        raise ParseError(str(path), "not UTF-8 text", offset=e.start)


def read_endmember_csv(path: PathLike) -> EndmemberMatrix:
    """L rows (bands) by R columns (endmembers); header names optional."""
    header, table = parse_numeric_table(path, _read_text(path))
    names = tuple(header) if header else ()
    matrix = EndmemberMatrix(table, names=names)
    logger.info(f"Loaded {matrix.bands} x {matrix.endmembers} endmember matrix from {path}")
    return matrix


def read_pixel_csv(path: PathLike, bands: Optional[int] = None) -> np.ndarray:
    """L rows by P columns; every column is one pixel."""
    _, table = parse_numeric_table(path, _read_text(path))
    if bands is not None and table.shape[0] != bands:
        raise DimensionError(f"pixel bands in {path}", bands, table.shape[0])
    return table


def write_matrix_csv(path: PathLike, matrix: np.ndarray, names: Sequence[str] = ()) -> None:
    """Shortest round-trip decimal, so reading back gives the same doubles."""
    lines = [",".join(names)] if names else []
    lines.extend(",".join(repr(float(v)) for v in row) for row in np.atleast_2d(matrix))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


# -- cubes ---------------------------------------------------------------------

def _cube_paths(path: PathLike) -> Tuple[Path, Path]:
    path = Path(path)
    return path.with_suffix(".raw"), path.with_suffix(".json")


def write_cube(path: PathLike, cube: np.ndarray, dtype: str = "f64") -> CubeHeader:
    """Write a bands x height x width cube as BSQ little-endian plus sidecar."""
    arr = np.asarray(cube)
    if arr.ndim != 3:
        raise DimensionError("cube dimensions", 3, arr.ndim)
    bands, height, width = arr.shape
    header = CubeHeader(width=width, height=height, bands=bands, dtype=dtype)
    payload_path, header_path = _cube_paths(path)
    payload_path.write_bytes(np.ascontiguousarray(arr, dtype=header.numpy_dtype).tobytes())
    header_path.write_text(header.model_dump_json(indent=2) + "\n", encoding="utf-8")
    return header


def read_cube(path: PathLike) -> Tuple[CubeHeader, np.ndarray]:
    """Return the sidecar and a float64 bands x height x width array."""
    payload_path, header_path = _cube_paths(path)
    try:
        header = CubeHeader.model_validate_json(_read_text(header_path))
    except ValidationError as e:
        first = e.errors()[0]
        field = ".".join(str(part) for part in first["loc"]) or "header"
        raise ParseError(str(header_path), f"field '{field}': {first['msg']}")

    try:
        payload = payload_path.read_bytes()
    except FileNotFoundError:
        raise ParseError(str(payload_path), "payload not found")
    if len(payload) != header.payload_bytes:
        raise ParseError(
            str(payload_path),
            f"payload holds {len(payload)} bytes, header implies {header.payload_bytes}",
            offset=min(len(payload), header.payload_bytes)
        )

    cube = np.frombuffer(payload, dtype=header.numpy_dtype)
    if not np.all(np.isfinite(cube)):
        index = int(np.argmin(np.isfinite(cube)))
        raise ParseError(
            str(payload_path), "non-finite sample", offset=index * header.numpy_dtype.itemsize
        )
    cube = cube.reshape(header.bands, header.height, header.width).astype(np.float64)
    return header, cube


# -- abundance outputs -------------------------------------------------------------

def write_abundance_csv(path: PathLike, names: Sequence[str], rows: np.ndarray) -> None:
    """One row per pixel, 9 significant digits."""
    lines = [",".join(names)]
    lines.extend(
        ",".join(ABUNDANCE_FORMAT.format(float(v)) for v in row)
        for row in np.atleast_2d(rows)
    )
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def quantize_map(abundance_map: np.ndarray) -> np.ndarray:
    """round(255 alpha) clipped to [0, 255]; negative sentinels map to 0."""
    values = np.where(np.asarray(abundance_map) < 0.0, 0.0, abundance_map)
    return np.clip(np.rint(PGM_MAXVAL * values), 0, PGM_MAXVAL).astype(np.uint8)


def write_pgm(path: PathLike, abundance_map: np.ndarray) -> None:
    """Binary P5 greymap, black = absent, white = pure."""
    pixels = quantize_map(abundance_map)
    height, width = pixels.shape
    header = f"P5\n{width} {height}\n{PGM_MAXVAL}\n".encode("ascii")
    Path(path).write_bytes(header + pixels.tobytes())


def read_pgm(path: PathLike) -> np.ndarray:
    data = Path(path).read_bytes()
    fields: List[bytes] = []
    position = 0
    while len(fields) < 4:
        while data[position:position + 1].isspace():
            position += 1
        start = position
        while position < len(data) and not data[position:position + 1].isspace():
            position += 1
        fields.append(data[start:position])
    if fields[0] != b"P5":
        raise ParseError(str(path), "not a binary PGM", offset=0)
    width, height, maxval = (int(f) for f in fields[1:])
    if maxval != PGM_MAXVAL:
        raise ParseError(str(path), f"unsupported maxval {maxval}")
    body = data[position + 1:]
    if len(body) != width * height:
        raise ParseError(str(path), "truncated raster", offset=position + 1 + len(body))
    return np.frombuffer(body, dtype=np.uint8).reshape(height, width)


def write_trace_csv(path: PathLike, trace: SolverTrace, names: Sequence[str]) -> None:
    columns = ["iteration", "cost", "step", "gamma_max", "max_complementarity", "component_sum"]
    columns += [f"alpha_{name}" for name in names]
    lines = [",".join(columns)]
    for k, record in enumerate(trace.records):
        values = [record.cost, record.step, record.gamma_max, record.max_complementarity, record.component_sum]
        values += list(record.iterate)
        lines.append(",".join([str(k)] + [repr(float(v)) for v in values]))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


# -- reports and manifests ---------------------------------------------------------

def _number(value: float) -> str:
    return repr(float(value))


def write_report_csv(path: PathLike, report: MonteCarloReport) -> None:
    lines = [",".join(REPORT_COLUMNS)]
    for cell in report.cells:
        for r, name in enumerate(report.endmember_names):
            lines.append(",".join([
                cell.solver,
                _number(cell.snr_db),
                name,
                _number(cell.mean[r]),
                _number(cell.variance[r]),
                _number(cell.mean_sum_violation),
                _number(cell.mean_iters),
                str(cell.failures)
            ]))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def write_report_json(path: PathLike, report: MonteCarloReport) -> None:
    Path(path).write_text(report.model_dump_json(indent=2) + "\n", encoding="utf-8")


def write_manifest(path: PathLike, manifest: RunManifest) -> None:
    Path(path).write_text(manifest.model_dump_json(indent=2) + "\n", encoding="utf-8")


def read_manifest(path: PathLike) -> RunManifest:
    try:
        return RunManifest.model_validate_json(_read_text(path))
    except ValidationError as e:
        raise ParseError(str(path), f"invalid manifest: {e.errors()[0]['msg']}")


def load_experiment_spec(path: PathLike) -> ExperimentSpec:
    """Read a JSON or TOML experiment file; errors name the offending field."""
    path = Path(path)
    text = _read_text(path)
    try:
        if path.suffix.lower() == ".toml":
            raw = tomllib.loads(text)
        else:
            raw = json.loads(text)
    except json.JSONDecodeError as e:
        raise ParseError(str(path), e.msg, row=e.lineno, column=e.colno)
    except tomllib.TOMLDecodeError as e:
        raise ParseError(str(path), str(e))

    try:
        return ExperimentSpec.model_validate(raw)
    except ValidationError as e:
        first = e.errors()[0]
        field = ".".join(str(part) for part in first["loc"]) or "spec"
        raise ConfigError(field, first["msg"])
