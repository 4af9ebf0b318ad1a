import sys
import logging
import queue
from dataclasses import dataclass
from enum import Enum, auto
from multiprocessing import Process, Queue
from typing import Any, Final

if sys.version_info >= (3, 11):
    from typing import Self
else:
    from typing_extensions import Self

from synthtx.config import RunConfig
from synthtx.errors import WorkerError
from synthtx.simulation.replicate import ReplicateRecord, failure_records, run_replicate

logger = logging.getLogger(__name__)

POLL_SECONDS: Final[float] = 1.0


class Request(Enum):
    EXIT = auto()
    REPLICATE = auto()


@dataclass()
class ReplicateServer:
    """
    Description
    -----------
    Worker processes pulling (size, replicate) requests from one queue and pushing
    (size, replicate, records) onto another. Results arrive in completion order.

    """

    processes: list[Process]

    requests: Queue
    results: Queue

    @classmethod
    def start(cls, config: RunConfig, workers: int) -> Self:
        requests: Queue = Queue()
        results: Queue = Queue()

        processes = [
            Process(target=cls._run, args=[config.as_dict(), requests, results], daemon=True)
            for _ in range(workers)
        ]
        for process in processes:
            process.start()

        return cls(processes=processes, requests=requests, results=results)

    def submit(self, size: int, replicate: int) -> None:
        self.requests.put((Request.REPLICATE, (size, replicate)))

    def collect(self, count: int) -> list[tuple[int, int, list[ReplicateRecord]]]:
        """
        Description
        -----------
        Wait for `count` results. Raises a WorkerError once every worker has died
        with results still outstanding.

        """
        collected: list[tuple[int, int, list[ReplicateRecord]]] = []
        while len(collected) < count:
            try:
                collected.append(self.results.get(timeout=POLL_SECONDS))
            except queue.Empty:
                if not any(process.is_alive() for process in self.processes):
                    raise WorkerError(
                        f"All workers exited with {count - len(collected)} results outstanding."
                    ) from None

        return collected

    def stop(self) -> None:
        for _ in self.processes:
            self.requests.put((Request.EXIT, None))

        for process in self.processes:
            process.join()

    def kill(self) -> None:
        for process in self.processes:
            process.kill()

    @staticmethod
    def _run(config_data: dict[str, Any], requests: Queue, results: Queue) -> None:
        config = RunConfig.from_dict(config_data)

        while True:
            match requests.get():
                case (Request.EXIT, _):
                    break
                case (Request.REPLICATE, (size, replicate)):
                    try:
                        records = run_replicate(config, size, replicate)
                    except Exception as exc:
                        logger.exception("Replicate %d (n=%d) crashed.", replicate, size)
                        error = f"{type(exc).__name__}: {exc}"
                        records = failure_records(
                            config.simulation.methods, size, replicate, error
                        )
                    results.put((size, replicate, records))
