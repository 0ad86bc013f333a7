# app/schemas/experiment.py

from dataclasses import dataclass
from datetime import datetime
from enum import Enum
from pathlib import Path
from typing import Any, Dict, List, Literal, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from app.schemas.model import SIMPLEX_INPUT_TOL
from app.schemas.solver import Algorithm, SolverConfig


class EndmemberKind(str, Enum):
    REFERENCE = "reference"
    GENERATED = "generated"
    CSV = "csv"


class EndmemberSource(BaseModel):
    """Where the endmember matrix of an experiment comes from."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    kind: EndmemberKind = EndmemberKind.REFERENCE
    path: Optional[Path] = None
    bands: int = Field(default=224, ge=1)
    count: int = Field(default=3, ge=1)
    seed: int = 0

    @model_validator(mode="after")
    def check_source(self):
        if self.kind == EndmemberKind.CSV and self.path is None:
            raise ValueError("a csv endmember source needs a path")
        if self.kind == EndmemberKind.GENERATED and self.bands < self.count:
            raise ValueError("generated spectra need bands >= count")
        return self


class ExperimentSpec(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    endmembers: EndmemberSource = EndmemberSource()
    alpha_true: List[float]
    # dB; "inf" means noise-free
    snr_grid: List[float] = Field(min_length=1)
    runs: int = Field(default=100, ge=1)
    solvers: List[SolverConfig] = Field(min_length=1)
    seed: int = 0
    # fresh uniform draw on the simplex per run instead of the 1/R start
    random_init: bool = False

    @field_validator("alpha_true")
    @classmethod
    def check_simplex(cls, value: List[float]) -> List[float]:
        arr = np.asarray(value, dtype=np.float64)
        if arr.size < 1 or not np.all(np.isfinite(arr)):
            raise ValueError("alpha_true must be a non-empty finite vector")
        if np.any(arr < 0.0):
            raise ValueError("alpha_true must be non-negative")
        if abs(arr.sum() - 1.0) > SIMPLEX_INPUT_TOL:
            raise ValueError(f"alpha_true must sum to one, sums to {arr.sum():.9g}")
        return value

    @field_validator("snr_grid")
    @classmethod
    def check_snr(cls, value: List[float]) -> List[float]:
        for snr in value:
            if np.isnan(snr) or snr == float("-inf"):
                raise ValueError(f"SNR values must be finite or +inf, got {snr}")
        return value


class CellStats(BaseModel):
    """Statistics of one (solver, SNR) cell over the Monte Carlo runs."""

    model_config = ConfigDict(ser_json_inf_nan="constants")

    solver: str
    algorithm: Algorithm
    snr_db: float
    mean: List[float]
    variance: List[float]
    mean_cost: float
    mean_iters: float
    mean_sum_violation: float
    failures: int
    status_counts: Dict[str, int]
    estimates: List[List[float]]


class MonteCarloReport(BaseModel):
    model_config = ConfigDict(ser_json_inf_nan="constants")

    endmember_names: List[str]
    alpha_true: List[float]
    runs: int
    seed: int
    cells: List[CellStats]

    def cell(self, solver: str, snr_db: float) -> CellStats:
        for cell in self.cells:
            if cell.solver == solver and cell.snr_db == snr_db:
                return cell
        raise KeyError(f"no cell for solver {solver!r} at {snr_db} dB")

    @property
    def solvers(self) -> List[str]:
        return list(dict.fromkeys(cell.solver for cell in self.cells))

    @property
    def snr_grid(self) -> List[float]:
        return list(dict.fromkeys(cell.snr_db for cell in self.cells))


class CubeHeader(BaseModel):
    """JSON sidecar of a band-sequential cube payload."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    width: int = Field(gt=0)
    height: int = Field(gt=0)
    bands: int = Field(gt=0)
    dtype: Literal["f32", "f64"] = "f64"
    interleave: Literal["bsq"] = "bsq"
    byte_order: Literal["little"] = "little"

    @property
    def numpy_dtype(self) -> np.dtype:
        return np.dtype("<f4") if self.dtype == "f32" else np.dtype("<f8")

    @property
    def payload_bytes(self) -> int:
        return self.width * self.height * self.bands * self.numpy_dtype.itemsize


class RunManifest(BaseModel):
    model_config = ConfigDict(ser_json_inf_nan="constants")

    command: str
    run_id: str
    version: str
    seed: Optional[int] = None
    config: Dict[str, Any]
    # file name -> SHA-256 of its content
    inputs: Dict[str, str] = {}
    outputs: List[str] = []
    started_at: datetime
    finished_at: datetime


@dataclass(frozen=True)
class CubeResult:
    """Abundance maps (R x H x W); failed pixels hold FAILED_PIXEL."""

    maps: np.ndarray
    failed: np.ndarray
    iterations: np.ndarray
    # pixels that stopped at max_iters before meeting the KKT tolerance
    unconverged: np.ndarray

    @property
    def failures(self) -> int:
        return int(self.failed.sum())

    @property
    def unconverged_count(self) -> int:
        return int(self.unconverged.sum())
