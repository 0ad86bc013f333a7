# app/services/dispatch.py

import logging
import time
from dataclasses import dataclass
from enum import Enum
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple

from joblib import Parallel, delayed

from app.core.config import get_settings

settings = get_settings()
logger = logging.getLogger(__name__)


class TaskStatus(str, Enum):
    PENDING = "pending"
    COMPLETED = "completed"
    FAILED = "failed"


@dataclass(frozen=True)
class TaskOutcome:
    task_id: str
    status: TaskStatus
    result: Any = None
    error: Optional[str] = None
    duration: float = 0.0


Task = Tuple[str, Callable[..., Any], tuple]


def _execute(task_id: str, func: Callable[..., Any], args: tuple) -> TaskOutcome:
    start = time.perf_counter()
    try:
        result = func(*args)
        return TaskOutcome(task_id, TaskStatus.COMPLETED, result=result,
                           duration=time.perf_counter() - start)
    except Exception as e:
        return TaskOutcome(task_id, TaskStatus.FAILED, error=f"{type(e).__name__}: {e}",
                           duration=time.perf_counter() - start)


class TaskManager:
    """
    Runs independent tasks through joblib and keeps their outcomes.

    Outcomes come back in submission order whatever the worker count, and a
    failing task never stops the others. Task functions must be importable
    module-level callables so process workers can unpickle them.
    """

    def __init__(self, n_jobs: Optional[int] = None):
        self.n_jobs = n_jobs or settings.UNMIX_THREADS
        self.tasks: Dict[str, TaskOutcome] = {}

    def run(self, tasks: Sequence[Task]) -> List[TaskOutcome]:
        for task_id, _, _ in tasks:
            self.tasks[task_id] = TaskOutcome(task_id, TaskStatus.PENDING)

        logger.debug(f"Dispatching {len(tasks)} tasks on {self.n_jobs} worker(s)")
        outcomes = Parallel(n_jobs=self.n_jobs)(
            delayed(_execute)(task_id, func, args) for task_id, func, args in tasks
        )

        for outcome in outcomes:
            self.tasks[outcome.task_id] = outcome
            if outcome.status == TaskStatus.FAILED:
                logger.error(f"Task {outcome.task_id} failed: {outcome.error}")
        return outcomes

    def get_task_status(self, task_id: str) -> TaskStatus:
        outcome = self.tasks.get(task_id)
        if outcome is None:
            raise KeyError(f"unknown task {task_id}")
        return outcome.status

    def failed(self) -> List[TaskOutcome]:
        return [o for o in self.tasks.values() if o.status == TaskStatus.FAILED]
