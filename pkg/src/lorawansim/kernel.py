"""Virtual-time discrete-event kernel.

Tasks are ordinary ``async def`` coroutines driven directly by the kernel
(no asyncio event loop underneath): every ``await`` on a kernel operation
yields a request object to the scheduler, which resumes the coroutine at
the right virtual time.  Exactly one task executes at any moment; virtual
time only advances while the timer-lock counter is zero, i.e. while no
task is mid-step.  Between events the clock jumps straight to the next
scheduled wakeup, so idle gaps cost nothing.
"""

from __future__ import annotations

import heapq
import logging
import math
import random
from collections import deque
from dataclasses import dataclass
from typing import Any, Callable, Coroutine, Generator, Optional

log = logging.getLogger(__name__)


class SimulationError(Exception):
    """Base class for kernel errors."""


class SimStateError(SimulationError):
    """An operation was invoked in the wrong kernel state."""


class SimulationEnded(BaseException):
    """Thrown into tasks still blocked when the simulation run ends.

    Derives from BaseException so that ``except Exception`` blocks in
    task code do not accidentally swallow shutdown.
    """


class TaskCancelled(BaseException):
    """Thrown into a task cancelled via :meth:`Simulation.cancel_task`."""


class QueueTimeout(Exception):
    """Raised by :meth:`SimQueue.get` when the timeout elapses first."""


@dataclass(frozen=True)
class SimConfig:
    """Static per-run parameters: tick size, PRNG seed, default length."""

    tick_duration: float = 1e-6
    seed: int = 0
    length: float = 0.0

    def __post_init__(self):
        if self.tick_duration <= 0:
            raise ValueError("tick_duration must be > 0")
        if self.length < 0:
            raise ValueError("length must be >= 0")
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must fit in 64 bits")


@dataclass(frozen=True, order=True)
class SimTime:
    """A point in virtual time, counted in whole ticks since t=0."""

    ticks: int

    def __post_init__(self):
        if self.ticks < 0:
            raise ValueError("ticks must be >= 0")


# Task lifecycle states.
_NEW = "new"
_SCHEDULED = "scheduled"
_WAITING = "waiting"
_DONE = "done"
_FAILED = "failed"
_CANCELLED = "cancelled"


class Task:
    """Handle for a coroutine registered with the kernel."""

    __slots__ = ("coro", "name", "seq", "state", "root",
                 "_waiting_queue", "_pending_wake")

    def __init__(self, coro: Coroutine, name: str, seq: int, root: bool):
        self.coro = coro
        self.name = name
        self.seq = seq
        self.root = root
        self.state = _NEW
        self._waiting_queue: Optional[SimQueue] = None
        self._pending_wake = None

    @property
    def done(self) -> bool:
        return self.state in (_DONE, _FAILED, _CANCELLED)

    def __repr__(self):
        return f"<Task {self.name!r} seq={self.seq} state={self.state}>"


class _Wake:
    """Heap entry: resume `task` at `ticks`, delivering a value or exception."""

    __slots__ = ("ticks", "seq", "task", "value", "exc", "cancelled")

    def __init__(self, ticks: int, seq: int, task: Task, value=None, exc=None):
        self.ticks = ticks
        self.seq = seq
        self.task = task
        self.value = value
        self.exc = exc
        self.cancelled = False

    def __lt__(self, other: "_Wake") -> bool:
        return (self.ticks, self.seq) < (other.ticks, other.seq)


# Request kinds yielded by awaitables to the scheduler.
_REQ_SLEEP = "sleep"
_REQ_QUEUE_GET = "queue_get"


class _KernelOp:
    """Awaitable handed to ``await``; resolves to the scheduler's response."""

    __slots__ = ("kind", "arg")

    def __init__(self, kind: str, arg):
        self.kind = kind
        self.arg = arg

    def __await__(self) -> Generator["_KernelOp", Any, Any]:
        result = yield self
        return result


class SimQueue:
    """FIFO queue whose consumers block in simulated time.

    ``put`` is synchronous and never blocks; a consumer blocked on an
    empty queue is resumed at the tick of the ``put`` that serves it.
    """

    def __init__(self, sim: "Simulation"):
        self._sim = sim
        self._items: deque = deque()
        self._waiters: deque = deque()  # (task, timeout_wake or None)

    def __len__(self) -> int:
        return len(self._items)

    def put(self, item) -> None:
        while self._waiters:
            task, timeout_wake = self._waiters.popleft()
            if task.done:
                continue
            if timeout_wake is not None:
                timeout_wake.cancelled = True
            task._waiting_queue = None
            self._sim._schedule_resume(task, value=item)
            return
        self._items.append(item)

    def get(self, timeout: Optional[float] = None) -> _KernelOp:
        """Await the next item; raises QueueTimeout if `timeout` elapses.

        Items already buffered are returned without suspending, consuming
        zero virtual time.
        """
        return _KernelOp(_REQ_QUEUE_GET, (self, timeout))

    def get_nowait(self):
        """Pop an item if one is buffered, else return None."""
        if self._items:
            return self._items.popleft()
        return None


class Simulation:
    """Discrete-event executor owning the clock, tasks, and the PRNG."""

    def __init__(self, config: SimConfig = SimConfig()):
        self.config = config
        self.rng = random.Random(config.seed)
        self._now_ticks = 0
        self._end_ticks = 0
        self._seq = 0
        self._heap: list[_Wake] = []
        self._root_tasks: list[Task] = []
        self._all_tasks: list[Task] = []
        self._end_callbacks: list[Callable[[], None]] = []
        self._state = "created"
        self._timer_lock = 0
        self._current: Optional[Task] = None

    # -- clock ------------------------------------------------------------

    def now(self) -> SimTime:
        return SimTime(self._now_ticks)

    @property
    def now_ticks(self) -> int:
        return self._now_ticks

    @property
    def now_s(self) -> float:
        return self._now_ticks * self.config.tick_duration

    def seconds_to_ticks(self, seconds: float) -> int:
        """Convert a duration to ticks, rounding to nearest (ties up)."""
        return math.floor(seconds / self.config.tick_duration + 0.5)

    def ticks_to_seconds(self, ticks: int) -> float:
        return ticks * self.config.tick_duration

    def time_from_seconds(self, seconds: float) -> SimTime:
        return SimTime(self.seconds_to_ticks(seconds))

    def now_ms(self) -> int:
        """Current time in whole milliseconds (floor), for HAL-style clocks."""
        ticks_per_ms = 0.001 / self.config.tick_duration
        if abs(ticks_per_ms - round(ticks_per_ms)) < 1e-9:
            return self._now_ticks // round(ticks_per_ms)
        return math.floor(self._now_ticks * self.config.tick_duration * 1000.0)

    @property
    def timer_lock(self) -> int:
        """Number of tasks currently mid-execution (0 or 1 at task switch)."""
        return self._timer_lock

    # -- randomness -------------------------------------------------------

    def derive_rng(self, label: str) -> random.Random:
        """A PRNG stream derived deterministically from the run seed."""
        return random.Random(f"{self.config.seed}/{label}")

    # -- task management --------------------------------------------------

    def create_task(self, coro: Coroutine, name: str = "") -> Task:
        """Register a root task; only allowed before the run starts."""
        if self._state != "created":
            raise SimStateError("root tasks must be registered before run()")
        task = self._make_task(coro, name, root=True)
        self._root_tasks.append(task)
        return task

    def start_child_task(self, coro: Coroutine, name: str = "") -> Task:
        """Spawn a task during the run; runnable at the current tick."""
        if self._state != "running":
            raise SimStateError("child tasks can only start while running")
        task = self._make_task(coro, name, root=False)
        self._schedule_resume(task)
        return task

    def spawn(self, coro: Coroutine, name: str = "") -> Task:
        """create_task before the run, start_child_task during it."""
        if self._state == "created":
            return self.create_task(coro, name)
        return self.start_child_task(coro, name)

    def _make_task(self, coro, name, root) -> Task:
        seq = self._next_seq()
        task = Task(coro, name or f"task-{seq}", seq, root)
        self._all_tasks.append(task)
        return task

    def cancel_task(self, task: Task) -> None:
        """Cancel a task: TaskCancelled is thrown at the current tick."""
        if task.done:
            return
        if task._pending_wake is not None:
            task._pending_wake.cancelled = True
        self._detach_from_queue(task)
        self._schedule_resume(task, exc=TaskCancelled())

    # -- waiting primitives -----------------------------------------------

    def sleep(self, duration: float) -> _KernelOp:
        """Suspend the calling task for `duration` seconds of virtual time."""
        if duration < 0:
            raise ValueError(f"sleep duration must be >= 0, got {duration}")
        return _KernelOp(_REQ_SLEEP, self._now_ticks + self.seconds_to_ticks(duration))

    def sleep_ticks(self, ticks: int) -> _KernelOp:
        if ticks < 0:
            raise ValueError("tick count must be >= 0")
        return _KernelOp(_REQ_SLEEP, self._now_ticks + ticks)

    def sleep_until(self, when: SimTime) -> _KernelOp:
        """Suspend until the absolute virtual time `when`."""
        if when.ticks < self._now_ticks:
            raise ValueError(
                f"sleep_until target {when.ticks} is in the past "
                f"(now {self._now_ticks}); scheduling bug?"
            )
        return _KernelOp(_REQ_SLEEP, when.ticks)

    def queue(self) -> SimQueue:
        return SimQueue(self)

    # -- end-of-run hook ----------------------------------------------------

    def on_sim_end(self, callback: Callable[[], None]) -> None:
        """Register a callback invoked once, after the final event."""
        self._end_callbacks.append(callback)

    def is_running(self) -> bool:
        return self._state == "running"

    @property
    def finished(self) -> bool:
        return self._state == "finished"

    # -- scheduler ----------------------------------------------------------

    def run(self, length: Optional[float] = None) -> None:
        """Execute events until virtual time reaches `length` seconds.

        Idle stretches are skipped by jumping to the next wakeup, so the
        wall-clock cost is proportional to the number of events, not the
        simulated duration.
        """
        if self._state == "running":
            raise SimStateError("run() is not reentrant")
        if self._state == "finished":
            raise SimStateError("this simulation has already run")
        if length is None:
            length = self.config.length
        if length < 0:
            raise ValueError("length must be >= 0")
        self._end_ticks = self.seconds_to_ticks(length)
        self._state = "running"
        for task in self._root_tasks:
            self._schedule_resume(task)

        heap = self._heap
        completed = False
        try:
            while heap:
                wake = heap[0]
                if wake.cancelled or wake.task.done:
                    heapq.heappop(heap)
                    continue
                if wake.ticks > self._end_ticks:
                    break
                heapq.heappop(heap)
                if self._timer_lock != 0:
                    raise SimulationError("timer lock held across an event boundary")
                if wake.ticks < self._now_ticks:
                    raise SimulationError("scheduled wakeup lies in the past")
                self._now_ticks = wake.ticks
                self._step(wake.task, wake.value, wake.exc)
            completed = True
        finally:
            if completed:
                self._now_ticks = self._end_ticks
            self._state = "draining"
            for task in self._all_tasks:
                self._unwind(task)
            self._state = "finished"
        for callback in self._end_callbacks:
            callback()

    def _next_seq(self) -> int:
        self._seq += 1
        return self._seq

    def _schedule_resume(self, task: Task, value=None, exc=None,
                         at_ticks: Optional[int] = None) -> _Wake:
        wake = _Wake(self._now_ticks if at_ticks is None else at_ticks,
                     self._next_seq(), task, value, exc)
        task.state = _SCHEDULED
        task._pending_wake = wake
        heapq.heappush(self._heap, wake)
        return wake

    def _detach_from_queue(self, task: Task) -> None:
        q = task._waiting_queue
        if q is not None:
            q._waiters = deque(
                (t, w) for (t, w) in q._waiters if t is not task
            )
            task._waiting_queue = None

    def _step(self, task: Task, value, exc) -> None:
        task._pending_wake = None
        self._detach_from_queue(task)
        self._current = task
        self._timer_lock += 1
        try:
            if exc is not None:
                request = task.coro.throw(exc)
            else:
                request = task.coro.send(value)
        except StopIteration:
            task.state = _DONE
            return
        except (TaskCancelled, SimulationEnded):
            task.state = _CANCELLED
            return
        except BaseException:
            task.state = _FAILED
            log.exception("task %s crashed", task.name)
            raise
        finally:
            self._timer_lock -= 1
            self._current = None
        self._dispatch(task, request)

    def _dispatch(self, task: Task, request) -> None:
        if not isinstance(request, _KernelOp):
            raise SimulationError(
                f"task {task.name!r} awaited a non-kernel object: {request!r}; "
                "only kernel operations can be awaited"
            )
        if request.kind == _REQ_SLEEP:
            self._schedule_resume(task, at_ticks=request.arg)
        elif request.kind == _REQ_QUEUE_GET:
            q, timeout = request.arg
            if q._items:
                # Non-empty fast path: resume at the same tick with the item.
                self._schedule_resume(task, value=q._items.popleft())
                return
            timeout_wake = None
            if timeout is not None:
                deadline = self._now_ticks + self.seconds_to_ticks(timeout)
                timeout_wake = self._schedule_resume(
                    task, exc=QueueTimeout(), at_ticks=deadline)
            task.state = _WAITING
            task._waiting_queue = q
            q._waiters.append((task, timeout_wake))
        else:
            raise SimulationError(f"unknown kernel request {request.kind!r}")

    def _unwind(self, task: Task) -> None:
        # Throw SimulationEnded until the coroutine exits; a task may run
        # finally blocks but cannot block again during shutdown.
        for _ in range(100):
            if task.done:
                return
            self._detach_from_queue(task)
            try:
                task.coro.throw(SimulationEnded())
            except (StopIteration, SimulationEnded, TaskCancelled):
                task.state = _CANCELLED
                return
            except BaseException:
                task.state = _FAILED
                log.exception("task %s crashed during shutdown", task.name)
                return
        log.warning("task %s refused to unwind; dropping", task.name)
        task.state = _CANCELLED
