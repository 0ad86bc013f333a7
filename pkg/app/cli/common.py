# app/cli/common.py

import uuid
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Dict, Iterable, List, Optional

from pydantic import ValidationError

from app.core.config import get_settings
from app.core.errors import ConfigError
from app.schemas.experiment import RunManifest
from app.services.file_io import file_digest, write_manifest

settings = get_settings()

MANIFEST_NAME = "manifest.json"


def new_run_id() -> str:
    return uuid.uuid4().hex[:12]


def utc_now() -> datetime:
    return datetime.now(timezone.utc)


def config_error(e: ValidationError) -> ConfigError:
    """First pydantic error as a ConfigError naming the field path."""
    first = e.errors()[0]
    field = ".".join(str(part) for part in first["loc"]) or "config"
    return ConfigError(field, first["msg"])


def prepare_output(path: Path) -> Path:
    path.mkdir(parents=True, exist_ok=True)
    return path


def finish_manifest(
        output: Path,
        command: str,
        run_id: str,
        started_at: datetime,
        config: Dict[str, Any],
        inputs: Iterable[Path],
        outputs: List[str],
        seed: Optional[int] = None
) -> RunManifest:
    """Write the single manifest of an output directory."""
    manifest = RunManifest(
        command=command,
        run_id=run_id,
        version=settings.VERSION,
        seed=seed,
        config=config,
        inputs={str(path): file_digest(path) for path in inputs},
        outputs=sorted(outputs),
        started_at=started_at,
        finished_at=utc_now()
    )
    write_manifest(output / MANIFEST_NAME, manifest)
    return manifest
