"""The refinement loop: iterate encode-with-states and record the trajectory.

Step counting: ``steps`` is the number of refinement iterations, so
steps=0 is the plain single-pass baseline (the same code path, not a
special case). Each iteration feeds a window of past states back into the
encoder; with early stopping enabled the loop ends at the first step whose
cosine to the previous state exceeds 1 - epsilon, and that last computed
state is the ranking embedding.
"""

from __future__ import annotations

from collections.abc import Sequence
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

from .backends import EncoderBackend
from .core import Embedding, Query, StopReason, Trajectory, cosine_similarity

MAX_STEPS = 64
WINDOW_ALL = "all"


@dataclass(frozen=True)
class RefineConfig:
    steps: int = 0
    early_stop: bool = False
    epsilon: float = 1e-4
    state_window: int | str = WINDOW_ALL

    def __post_init__(self) -> None:
        if not 0 <= self.steps <= MAX_STEPS:
            raise ValueError(f"steps must be in [0, {MAX_STEPS}], got {self.steps}")
        if not 0.0 < self.epsilon < 1.0:
            raise ValueError(f"epsilon must lie in (0, 1), got {self.epsilon}")
        if self.state_window != WINDOW_ALL:
            if not isinstance(self.state_window, int) or self.state_window < 1:
                raise ValueError(
                    f"state_window must be 'all' or an int >= 1, got {self.state_window!r}"
                )

    def window(self, states: Sequence[Embedding]) -> Sequence[Embedding]:
        if self.state_window == WINDOW_ALL:
            return states
        return states[-self.state_window :]


class RefineStepError(RuntimeError):
    """A backend failure during refinement, tagged with the step index."""

    def __init__(self, step: int, cause: Exception):
        super().__init__(f"refinement step {step} failed: {cause}")
        self.step = step
        self.cause = cause


class BatchRefineError(RuntimeError):
    """Aggregate report of per-query refinement failures."""

    def __init__(self, failed: dict[str, Exception], completed: dict[str, Trajectory]):
        ids = ", ".join(sorted(failed))
        super().__init__(f"refinement failed for {len(failed)} queries: {ids}")
        self.failed = failed
        self.completed = completed


def refine(backend: EncoderBackend, query_text: str, cfg: RefineConfig) -> Trajectory:
    """Run the refinement loop and return the full trajectory."""
    try:
        states = [backend.encode(query_text, ())]
    except Exception as exc:
        raise RefineStepError(0, exc) from exc
    stop_reason = StopReason.MAX_STEPS
    for t in range(1, cfg.steps + 1):
        try:
            h_t = backend.encode(query_text, tuple(cfg.window(states)))
        except Exception as exc:
            raise RefineStepError(t, exc) from exc
        states.append(h_t)
        if cfg.early_stop and cosine_similarity(h_t, states[-2]) > 1.0 - cfg.epsilon:
            stop_reason = StopReason.CONVERGED
            break
    return Trajectory(tuple(states), steps_executed=len(states) - 1, stop_reason=stop_reason)


def refine_batch(
    backend: EncoderBackend,
    queries: Sequence[Query],
    cfg: RefineConfig,
    workers: int = 1,
) -> dict[str, Trajectory]:
    """Refine each query independently; results match sequential execution.

    Raises BatchRefineError listing failed query ids; trajectories of the
    queries that succeeded are attached to the error.
    """
    ids = [q.id for q in queries]
    if len(set(ids)) != len(ids):
        dupes = sorted({i for i in ids if ids.count(i) > 1})
        raise ValueError(f"duplicate query ids in batch: {dupes}")

    completed: dict[str, Trajectory] = {}
    failed: dict[str, Exception] = {}

    def run(query: Query) -> tuple[str, Trajectory | None, Exception | None]:
        try:
            return query.id, refine(backend, query.text, cfg), None
        except Exception as exc:
            return query.id, None, exc

    if workers > 1 and len(queries) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            outcomes = list(pool.map(run, queries))
    else:
        outcomes = [run(q) for q in queries]

    for qid, trajectory, error in outcomes:
        if error is not None:
            failed[qid] = error
        else:
            assert trajectory is not None
            completed[qid] = trajectory
    if failed:
        raise BatchRefineError(failed, completed)
    return completed
