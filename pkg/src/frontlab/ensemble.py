"""Replica orchestration.

Replica ``r`` of an ensemble always uses the noise stream ``(seed, r)``, so the
results do not depend on how replicas are spread over worker processes.
Results come back in replica order.
"""

import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Callable, List, Optional, Sequence

from .integrator import ObservationLog, SimParams, initial_state, run
from .noise import make_stream
from .nonlinearity import NonlinearitySpec


@dataclass(frozen=True)
class ReplicaResult:
    replica: int
    log: ObservationLog
    state: object
    acc: object
    extra: object = None


def default_workers() -> int:
    return os.cpu_count() or 1


def run_replica(f: NonlinearitySpec, p: SimParams, seed: int, replica: int, r0: float = 0.0,
                observer_factory: Optional[Callable] = None, keep_state: bool = True) -> ReplicaResult:
    state = initial_state(p, r0)
    observers = []
    obs = None
    if observer_factory is not None:
        obs = observer_factory()
        observers.append(obs)
    state, acc, log = run(state, f, p, make_stream(seed, replica), observers)
    extra = obs.result() if obs is not None and hasattr(obs, "result") else None
    return ReplicaResult(replica, log, state if keep_state else None, acc, extra)


def _task(args):
    return run_replica(*args)


def run_ensemble(f: NonlinearitySpec, p: SimParams, seed: int, replicas: Sequence[int], r0: float = 0.0,
                 workers: Optional[int] = None, observer_factory: Optional[Callable] = None,
                 keep_state: bool = True) -> List[ReplicaResult]:
    """Run the given replica ids; ``observer_factory`` must be picklable when ``workers > 1``."""
    replicas = [int(r) for r in replicas]
    tasks = [(f, p, seed, r, r0, observer_factory, keep_state) for r in replicas]
    workers = default_workers() if workers is None else int(workers)
    if workers <= 1 or len(tasks) <= 1:
        return [_task(t) for t in tasks]
    chunk = max(1, len(tasks) // (4 * workers))
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_task, tasks, chunksize=chunk))
