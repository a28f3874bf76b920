"""
Parallel Monte Carlo trials with per-trial random streams.

Trial k of a run draws from default_rng(SeedSequence(seed, spawn_key=key + (k,))),
so its numbers depend only on (seed, key, k). Results are stored by index and
reduced in index order, which keeps the output independent of the thread count.
"""

import logging
from concurrent.futures import ThreadPoolExecutor, as_completed
from dataclasses import dataclass, field
from typing import Any, Callable, List, Optional, Sequence, Tuple

import numpy as np

from .errors import EstimationFailure

logger = logging.getLogger("IRSLink.MonteCarlo")

TrialFn = Callable[[np.random.Generator, int], Any]


def trial_rng(seed: int, *key: int) -> np.random.Generator:
    """Independent generator for the stream named by (seed, key...)."""
    return np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=tuple(int(k) for k in key)))


@dataclass
class TrialBatch:
    """Index-ordered trial outputs; None marks an excluded trial."""
    results: List[Any] = field(default_factory=list)
    failures: List[Tuple[int, str]] = field(default_factory=list)

    @property
    def excluded(self) -> int:
        return len(self.failures)

    @property
    def valid(self) -> List[Any]:
        return [r for r in self.results if r is not None]

    def stack(self) -> np.ndarray:
        """Valid results as an array, in trial order."""
        valid = self.valid
        if not valid:
            return np.empty((0,))
        return np.asarray(valid)


def _chunks(n: int, workers: int) -> List[range]:
    size = max(1, -(-n // (workers * 4)))
    return [range(start, min(start + size, n)) for start in range(0, n, size)]


def run_trials(
    fn: TrialFn,
    n: int,
    seed: int,
    key: Sequence[int] = (),
    workers: int = 1,
    progress_callback: Optional[Callable[[int, int], None]] = None,
) -> TrialBatch:
    """
    Run fn(rng, k) for k = 0..n-1.

    Args:
        fn: Trial body; raising EstimationFailure excludes the trial
        n: Number of trials
        seed: Master seed
        key: Stream key separating this run from others under the same seed
        workers: Thread count
        progress_callback: Optional callback(completed_chunks, total_chunks)

    Returns:
        TrialBatch with results[k] for trial k
    """
    key = tuple(int(k) for k in key)
    results: List[Any] = [None] * n
    failures: List[Tuple[int, str]] = []

    def process_chunk(indices: range) -> List[Tuple[int, Any, Optional[str]]]:
        out = []
        for k in indices:
            try:
                out.append((k, fn(trial_rng(seed, *key, k), k), None))
            except EstimationFailure as e:
                logger.debug(f"Trial {k} excluded: {e}")
                out.append((k, None, str(e)))
        return out

    chunks = _chunks(n, max(1, workers))
    if workers <= 1 or len(chunks) == 1:
        outputs = [process_chunk(c) for c in chunks]
        if progress_callback:
            progress_callback(len(chunks), len(chunks))
    else:
        outputs = []
        with ThreadPoolExecutor(max_workers=workers) as executor:
            futures = [executor.submit(process_chunk, c) for c in chunks]
            for done, future in enumerate(as_completed(futures), start=1):
                outputs.append(future.result())
                if progress_callback:
                    progress_callback(done, len(chunks))

    for chunk_out in outputs:
        for k, value, error in chunk_out:
            results[k] = value
            if error is not None:
                failures.append((k, error))
    failures.sort()
    if failures:
        logger.info(f"{len(failures)} of {n} trials excluded")
    return TrialBatch(results=results, failures=failures)
