# app/services/spectra.py

import logging
from functools import lru_cache

import numpy as np

from app.core.config import get_settings
from app.schemas.experiment import EndmemberKind, EndmemberSource
from app.schemas.model import EndmemberMatrix
from app.services.file_io import read_endmember_csv

settings = get_settings()
logger = logging.getLogger(__name__)

REFLECTANCE_FLOOR = 0.01
REFLECTANCE_CEIL = 0.99


@lru_cache()
def reference_library() -> EndmemberMatrix:
    """
    Bundled 224-band library (400-2500 nm) shaped like concrete, green
    grass and loam reflectance.
    """
    return read_endmember_csv(settings.REFERENCE_SPECTRA)


def smooth_spectra(n_bands: int, n_endmembers: int, rng: np.random.Generator) -> EndmemberMatrix:
    """
    Random smooth reflectance curves: a linear baseline plus a few Gaussian
    bumps and dips, clipped to [0.01, 0.99].
    """
    grid = np.linspace(0.0, 1.0, n_bands)
    columns = []
    for _ in range(n_endmembers):
        start, end = rng.uniform(0.1, 0.6, size=2)
        curve = start + (end - start) * grid
        for _ in range(int(rng.integers(3, 7))):
            center = rng.uniform(0.0, 1.0)
            width = rng.uniform(0.03, 0.2)
            height = rng.uniform(-0.15, 0.25)
            curve = curve + height * np.exp(-0.5 * ((grid - center) / width) ** 2)
        columns.append(np.clip(curve, REFLECTANCE_FLOOR, REFLECTANCE_CEIL))
    return EndmemberMatrix(np.column_stack(columns))


def load_endmembers(source: EndmemberSource) -> EndmemberMatrix:
    if source.kind == EndmemberKind.REFERENCE:
        return reference_library()
    if source.kind == EndmemberKind.CSV:
        return read_endmember_csv(source.path)
    logger.info(f"Generating {source.count} smooth spectra over {source.bands} bands (seed {source.seed})")
    return smooth_spectra(source.bands, source.count, np.random.default_rng(source.seed))
