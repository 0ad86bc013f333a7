# app/schemas/solver.py

from dataclasses import dataclass, field
from enum import Enum
from typing import List, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from app.core.errors import InputError


class Algorithm(str, Enum):
    SGM = "sgm"
    ISRA = "isra"
    NSGM = "nsgm"
    NSGM_FIXED_STEP = "nsgm_fixed"
    EXPONENT_MULT = "expmult"
    FCLS_PENALIZED = "fcls"


class SolverStatus(str, Enum):
    CONVERGED_KKT = "converged_kkt"
    CONVERGED_STEP = "converged_step"
    MAX_ITERS = "max_iters"


class ArmijoParams(BaseModel):
    model_config = ConfigDict(frozen=True)

    beta: float = Field(default=0.5, gt=0.0, lt=1.0)
    sigma: float = Field(default=0.25, gt=0.0, lt=0.5)
    # None: estimated once per problem from the endmember matrix
    lipschitz: Optional[float] = Field(default=None, gt=0.0)
    max_backtracks: int = Field(default=50, ge=1)
    power_iterations: int = Field(default=100, ge=1)


class SolverConfig(BaseModel):
    model_config = ConfigDict(frozen=True)

    algorithm: Algorithm = Algorithm.NSGM
    # None: 1e-12 * (1 + max |negative gradient|), re-evaluated every iteration
    epsilon: Optional[float] = Field(default=None, gt=0.0)
    exponent_n: float = Field(default=1.0, gt=0.0)
    delta: float = Field(default=1e-3, gt=0.0)
    # penalty continuation starts here when delta is smaller
    delta_start: float = Field(default=1e-1, gt=0.0)
    tol_kkt: float = Field(default=1e-8, gt=0.0)
    tol_step: float = Field(default=1e-12, gt=0.0)
    max_iters: int = Field(default=10000, ge=1)
    armijo: ArmijoParams = ArmijoParams()
    # None: uniform start 1/R; otherwise a uniform draw on the simplex
    init_seed: Optional[int] = None


@dataclass(frozen=True)
class GradientSplit:
    """Negative gradient written as u_part - v_part, both strictly positive."""

    u_part: np.ndarray
    v_part: np.ndarray

    def __post_init__(self):
        u = np.array(self.u_part, dtype=np.float64)
        v = np.array(self.v_part, dtype=np.float64)
        if u.shape != v.shape or u.ndim != 1:
            raise InputError(f"split parts must be vectors of equal length, got {u.shape} and {v.shape}")
        if not (np.all(np.isfinite(u)) and np.all(np.isfinite(v))):
            raise InputError("gradient split contains non-finite entries")
        if np.any(u <= 0.0) or np.any(v <= 0.0):
            raise InputError(
                f"gradient split must be strictly positive "
                f"(min U = {u.min():.3e}, min V = {v.min():.3e})"
            )
        u.setflags(write=False)
        v.setflags(write=False)
        object.__setattr__(self, "u_part", u)
        object.__setattr__(self, "v_part", v)

    @property
    def ratio(self) -> np.ndarray:
        return self.u_part / self.v_part

    @property
    def difference(self) -> np.ndarray:
        return self.u_part - self.v_part


@dataclass(frozen=True)
class LineSearchResult:
    step: float
    backtracks: int
    new_cost: float
    initial_step: float
    point: np.ndarray


@dataclass(frozen=True)
class IterationRecord:
    iterate: np.ndarray
    cost: float
    step: float
    gamma_max: float
    max_complementarity: float
    component_sum: float


@dataclass
class SolverTrace:
    algorithm: Algorithm
    records: List[IterationRecord] = field(default_factory=list)
    status: Optional[SolverStatus] = None
    backtracks: int = 0

    def append(self, record: IterationRecord) -> None:
        self.records.append(record)

    @property
    def iterations(self) -> int:
        """Number of updates performed (the first record is the start point)."""
        return max(len(self.records) - 1, 0)

    @property
    def costs(self) -> np.ndarray:
        return np.array([r.cost for r in self.records])

    @property
    def iterates(self) -> np.ndarray:
        return np.array([r.iterate for r in self.records])

    @property
    def sums(self) -> np.ndarray:
        return np.array([r.component_sum for r in self.records])

    @property
    def final(self) -> IterationRecord:
        return self.records[-1]
