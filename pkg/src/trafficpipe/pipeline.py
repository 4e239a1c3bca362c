"""Streaming execution engine: stages joined by bounded queues.

Frames enter from a source, pass through each stage in turn and reach the
sinks strictly in source order.  A stage may run several workers; their
results are re-sequenced by a small reorder buffer before moving on.
Queues block producers when full, so memory stays bounded by the sum of
queue capacities plus what the workers have in hand.
"""

from __future__ import annotations

import logging
import threading
import time
from collections import deque
from dataclasses import dataclass, field
from typing import Any, Callable, Iterable, Iterator, Mapping, Sequence

from .geometry import Frame

LOGGER = logging.getLogger(__name__)


class PipelineConfigError(ValueError):
    pass


class PipelineAborted(Exception):
    """Raised inside workers blocked on a queue when the run is aborted."""


class StageFailure(RuntimeError):
    def __init__(self, stage: str, seq: int, cause: BaseException):
        super().__init__(f"stage {stage!r} failed on frame {seq}: {type(cause).__name__}: {cause}")
        self.stage = stage
        self.seq = seq
        self.cause = cause
        self.stats: RunStats | None = None


class SinkFailure(RuntimeError):
    def __init__(self, sink: str, seq: int, cause: BaseException):
        super().__init__(f"sink {sink!r} failed on frame {seq}: {type(cause).__name__}: {cause}")
        self.sink = sink
        self.seq = seq
        self.cause = cause
        self.stats: RunStats | None = None


class FrameEnvelope:
    """A frame in transit plus the payloads stages have attached to it."""

    __slots__ = ("frame", "payloads", "position", "incidents", "_gray")

    def __init__(self, frame: Frame, position: int | None = None):
        self.frame = frame
        self.payloads: dict[str, Any] = {}
        self.position = frame.seq if position is None else position
        self.incidents: list[str] = []
        self._gray: Frame | None = None

    @property
    def seq(self) -> int:
        return self.frame.seq

    def attach(self, key: str, value: Any) -> None:
        if key in self.payloads:
            raise KeyError(f"payload {key!r} already attached to frame {self.seq}")
        self.payloads[key] = value

    def gray(self) -> Frame:
        if self._gray is None:
            from .videoio.color import to_gray
            self._gray = to_gray(self.frame)
        return self._gray

    def __repr__(self) -> str:
        return f"FrameEnvelope(seq={self.seq}, payloads={sorted(self.payloads)})"


class Task:
    """Per-frame work unit. Subclasses override ``process`` or ``process_batch``.

    ``stateful`` tasks carry state across frames and must run single-worker.
    ``requires`` names upstream payloads the task reads.
    """

    stateful = False
    requires: tuple[str, ...] = ()

    def open(self) -> None:
        pass

    def process(self, env: FrameEnvelope) -> Any:
        raise NotImplementedError

    def process_batch(self, envs: Sequence[FrameEnvelope]) -> list[Any]:
        return [self.process(e) for e in envs]

    def close(self) -> None:
        pass


class FunctionTask(Task):
    def __init__(self, fn: Callable[[FrameEnvelope], Any], stateful: bool = False,
                 requires: Sequence[str] = ()):
        self.fn = fn
        self.stateful = stateful
        self.requires = tuple(requires)

    def process(self, env: FrameEnvelope) -> Any:
        return self.fn(env)


class IdentityTask(Task):
    def process(self, env: FrameEnvelope) -> Any:
        return None


STAGE_KINDS: dict[str, Callable[[Mapping[str, Any]], Task]] = {"identity": lambda params: IdentityTask()}


def register_stage(kind: str):
    def deco(factory):
        STAGE_KINDS[kind] = factory
        return factory
    return deco


class Sink:
    name = "sink"

    def open(self) -> None:
        pass

    def write(self, env: FrameEnvelope) -> None:
        raise NotImplementedError

    def close(self) -> None:
        pass


class CollectSink(Sink):
    name = "collect"

    def __init__(self):
        self.envelopes: list[FrameEnvelope] = []

    def write(self, env: FrameEnvelope) -> None:
        self.envelopes.append(env)

    @property
    def seqs(self) -> list[int]:
        return [e.seq for e in self.envelopes]


@dataclass
class StageSpec:
    name: str
    kind: str = "identity"
    params: Mapping[str, Any] = field(default_factory=dict)
    worker_count: int = 1
    batch_size: int = 1
    queue_capacity: int = 8
    on_error: str = "fail"
    task: Task | None = None

    def __post_init__(self):
        for attr in ("worker_count", "batch_size", "queue_capacity"):
            if getattr(self, attr) < 1:
                raise PipelineConfigError(f"stage {self.name!r}: {attr} must be >= 1")
        if self.on_error not in ("fail", "skip"):
            raise PipelineConfigError(f"stage {self.name!r}: on_error must be 'fail' or 'skip'")


@dataclass
class PipelineSpec:
    stages: Sequence[StageSpec]
    source: Iterable[Frame] | Callable[[], Iterable[Frame]]
    sinks: Sequence[Sink]
    sink_queue_capacity: int = 8


@dataclass
class RunStats:
    frames_in: int = 0
    frames_out: int = 0
    wall_time_s: float = 0.0
    stage_busy_s: dict[str, float] = field(default_factory=dict)
    queue_high_water: dict[str, int] = field(default_factory=dict)
    queue_capacity: dict[str, int] = field(default_factory=dict)
    peak_buffered: int = 0
    total_workers: int = 0
    # envelopes workers may hold at once; equals total_workers when batch_size is 1
    worker_slots: int = 0
    skipped: dict[str, int] = field(default_factory=dict)

    @property
    def buffer_bound(self) -> int:
        return sum(self.queue_capacity.values()) + max(self.worker_slots, self.total_workers)

    def summary(self) -> str:
        lines = [f"frames in={self.frames_in} out={self.frames_out} wall={self.wall_time_s:.3f}s",
                 f"peak buffered={self.peak_buffered} (bound {self.buffer_bound})"]
        for name, busy in self.stage_busy_s.items():
            lines.append(f"stage {name}: busy={busy:.3f}s skipped={self.skipped.get(name, 0)}")
        for name, hw in self.queue_high_water.items():
            lines.append(f"queue {name}: high-water={hw}/{self.queue_capacity[name]}")
        return "\n".join(lines)


class ReorderError(ValueError):
    pass


class ReorderBuffer:
    """Restores sequence order; ``accept`` returns the envelopes now releasable."""

    def __init__(self, first: int = 0, bound: int = 8, key: Callable[[Any], int] | None = None):
        self.next_expected = first
        self.bound = bound
        self.key = key or (lambda env: env.seq)
        self._held: dict[int, Any] = {}

    @property
    def buffered(self) -> int:
        return len(self._held)

    def can_accept(self, seq: int) -> bool:
        return seq == self.next_expected or len(self._held) < self.bound

    def accept(self, env) -> list:
        seq = self.key(env)
        if seq < self.next_expected or seq in self._held:
            raise ReorderError(f"duplicate sequence number {seq}")
        if not self.can_accept(seq):
            raise ReorderError(f"reorder buffer full ({self.bound}) while waiting for {self.next_expected}")
        self._held[seq] = env
        out = []
        while self.next_expected in self._held:
            out.append(self._held.pop(self.next_expected))
            self.next_expected += 1
        return out


def reorder_accept(buf: ReorderBuffer, env) -> list:
    return buf.accept(env)


def batch_window(batch_size: int, envs: Iterable) -> Iterator[list]:
    if batch_size < 1:
        raise ValueError("batch_size must be >= 1")
    batch: list = []
    for env in envs:
        batch.append(env)
        if len(batch) == batch_size:
            yield batch
            batch = []
    if batch:
        yield batch


_EOS = object()


class Channel:
    """Bounded FIFO; ``get`` returns the end-of-stream marker once closed and drained."""

    def __init__(self, name: str, capacity: int):
        self.name = name
        self.capacity = capacity
        self.high_water = 0
        self._items: deque = deque()
        self._cond = threading.Condition()
        self._closed = False
        self._aborted = False

    def __len__(self) -> int:
        return len(self._items)

    def put(self, item) -> None:
        with self._cond:
            while len(self._items) >= self.capacity and not self._aborted:
                self._cond.wait()
            if self._aborted:
                raise PipelineAborted(self.name)
            self._items.append(item)
            self.high_water = max(self.high_water, len(self._items))
            self._cond.notify_all()

    def get_batch(self, n: int):
        # a batch larger than the queue could never fill; take what fits
        need = min(n, self.capacity)
        with self._cond:
            while len(self._items) < need and not self._closed and not self._aborted:
                self._cond.wait()
            if self._aborted:
                raise PipelineAborted(self.name)
            if not self._items:
                return _EOS
            out = [self._items.popleft() for _ in range(min(n, len(self._items)))]
            self._cond.notify_all()
            return out

    def peek(self):
        with self._cond:
            while not self._items and not self._closed and not self._aborted:
                self._cond.wait()
            if self._aborted:
                raise PipelineAborted(self.name)
            return self._items[0] if self._items else _EOS

    def commit(self) -> None:
        with self._cond:
            self._items.popleft()
            self._cond.notify_all()

    def close(self) -> None:
        with self._cond:
            self._closed = True
            self._cond.notify_all()

    def abort(self) -> None:
        with self._cond:
            self._aborted = True
            self._cond.notify_all()


class _OrderGate:
    """Re-sequences a multi-worker stage's output into its downstream channel.

    A worker whose envelope is out of order parks until that envelope has been
    forwarded, so a stage never holds more envelopes than it has workers.
    """

    def __init__(self, out: Channel, workers: int):
        self.out = out
        self.buf = ReorderBuffer(first=0, bound=4 * workers, key=lambda e: e.position)
        self._cond = threading.Condition()
        self._aborted = False

    def submit(self, env: FrameEnvelope) -> None:
        with self._cond:
            while not self.buf.can_accept(env.position) and not self._aborted:
                self._cond.wait()
            if self._aborted:
                raise PipelineAborted("gate")
            ready = self.buf.accept(env)
            for item in ready:
                self.out.put(item)
            if ready:
                self._cond.notify_all()
            while self.buf.next_expected <= env.position and not self._aborted:
                self._cond.wait()
            if self._aborted:
                raise PipelineAborted("gate")

    def abort(self) -> None:
        with self._cond:
            self._aborted = True
            self._cond.notify_all()


@dataclass
class _BuiltStage:
    spec: StageSpec
    task: Task


class Pipeline:
    def __init__(self, spec: PipelineSpec, stages: list[_BuiltStage]):
        self.spec = spec
        self.stages = stages

    @property
    def worker_count(self) -> int:
        return sum(s.spec.worker_count for s in self.stages)

    @property
    def worker_slots(self) -> int:
        caps = self.queue_capacities
        return sum(st.spec.worker_count * min(st.spec.batch_size, caps[i]) for i, st in enumerate(self.stages))

    @property
    def queue_count(self) -> int:
        return len(self.stages) + 1

    @property
    def queue_capacities(self) -> list[int]:
        return [s.spec.queue_capacity for s in self.stages] + [self.spec.sink_queue_capacity]

    def _source_iter(self) -> Iterator[Frame]:
        src = self.spec.source
        if callable(src):
            src = src()
        return iter(src)

    def run(self, threaded: bool = True) -> RunStats:
        if threaded:
            return _ThreadedRun(self).execute()
        return _run_sequential(self)


def build(spec: PipelineSpec) -> Pipeline:
    if not spec.sinks:
        raise PipelineConfigError("pipeline needs at least one sink")
    if spec.sink_queue_capacity < 1:
        raise PipelineConfigError("sink_queue_capacity must be >= 1")
    seen: set[str] = set()
    built: list[_BuiltStage] = []
    for st in spec.stages:
        if st.name in seen:
            raise PipelineConfigError(f"duplicate stage name {st.name!r}")
        task = st.task
        if task is None:
            factory = STAGE_KINDS.get(st.kind)
            if factory is None:
                raise PipelineConfigError(f"stage {st.name!r}: unknown stage kind {st.kind!r}")
            task = factory(dict(st.params))
        if task.stateful and st.worker_count > 1:
            raise PipelineConfigError(f"stage {st.name!r} is stateful and must run with one worker")
        missing = [r for r in task.requires if r not in seen]
        if missing:
            raise PipelineConfigError(
                f"stage {st.name!r} needs payload(s) {missing} from an earlier stage"
            )
        seen.add(st.name)
        built.append(_BuiltStage(st, task))
    return Pipeline(spec, built)


def _process(stage: _BuiltStage, batch: list[FrameEnvelope]) -> int:
    """Run one batch through a stage; returns the number of skipped envelopes."""
    name = stage.spec.name
    try:
        payloads = stage.task.process_batch(batch)
        if len(payloads) != len(batch):
            raise RuntimeError(f"task returned {len(payloads)} payloads for {len(batch)} frames")
    except Exception as exc:
        if stage.spec.on_error == "skip":
            for env in batch:
                env.incidents.append(f"{name}: {type(exc).__name__}: {exc}")
            LOGGER.warning("stage %s skipped frames %s: %s", name, [e.seq for e in batch], exc)
            return len(batch)
        raise StageFailure(name, batch[0].seq, exc) from exc
    for env, payload in zip(batch, payloads):
        env.attach(name, payload)
    return 0


def _run_sequential(p: Pipeline) -> RunStats:
    """Single-threaded, deterministic execution for golden tests."""
    stats = RunStats(total_workers=p.worker_count, worker_slots=p.worker_slots)
    for i, cap in enumerate(p.queue_capacities):
        stats.queue_capacity[_queue_name(p, i)] = cap
        stats.queue_high_water[_queue_name(p, i)] = 0
    busy = {s.spec.name: 0.0 for s in p.stages}
    skipped = {s.spec.name: 0 for s in p.stages}
    t0 = time.perf_counter()

    def source():
        for pos, frame in enumerate(p._source_iter()):
            stats.frames_in += 1
            yield FrameEnvelope(frame, pos)

    def staged(stage: _BuiltStage, upstream):
        for batch in batch_window(stage.spec.batch_size, upstream):
            t = time.perf_counter()
            skipped[stage.spec.name] += _process(stage, batch)
            busy[stage.spec.name] += time.perf_counter() - t
            yield from batch

    stream = source()
    for stage in p.stages:
        stream = staged(stage, stream)

    opened = _open_all(p)
    try:
        last = None
        for env in stream:
            _check_order(last, env)
            last = env.seq
            for sink in p.spec.sinks:
                try:
                    sink.write(env)
                except Exception as exc:
                    raise SinkFailure(sink.name, env.seq, exc) from exc
            stats.frames_out += 1
    except (StageFailure, SinkFailure) as exc:
        exc.stats = stats
        raise
    finally:
        _close_all(p, opened)
        stats.wall_time_s = time.perf_counter() - t0
        stats.stage_busy_s = busy
        stats.skipped = skipped
    stats.peak_buffered = min(1, stats.frames_in)
    return stats


def _check_order(last: int | None, env: FrameEnvelope) -> None:
    if last is not None and env.seq <= last:
        raise RuntimeError(f"sink received seq {env.seq} after {last}")


def _queue_name(p: Pipeline, i: int) -> str:
    up = "source" if i == 0 else p.stages[i - 1].spec.name
    down = "sink" if i == len(p.stages) else p.stages[i].spec.name
    return f"{up}->{down}"


def _open_all(p: Pipeline) -> list:
    opened = []
    try:
        for stage in p.stages:
            stage.task.open()
            opened.append(stage.task)
        for sink in p.spec.sinks:
            try:
                sink.open()
            except Exception as exc:
                raise SinkFailure(sink.name, -1, exc) from exc
            opened.append(sink)
    except BaseException:
        _close_all(p, opened)
        raise
    return opened


def _close_all(p: Pipeline, opened: list) -> None:
    for obj in reversed(opened):
        try:
            obj.close()
        except Exception:
            LOGGER.exception("error while closing %r", obj)


class _ThreadedRun:
    def __init__(self, p: Pipeline):
        self.p = p
        caps = p.queue_capacities
        self.channels = [Channel(_queue_name(p, i), caps[i]) for i in range(len(caps))]
        self.gates = [_OrderGate(self.channels[i + 1], s.spec.worker_count) for i, s in enumerate(p.stages)]
        self.stats = RunStats(total_workers=p.worker_count, worker_slots=p.worker_slots)
        self._failure: BaseException | None = None
        self._fail_lock = threading.Lock()
        self._count_lock = threading.Lock()
        self._in_flight = 0
        self._live = [s.spec.worker_count for s in p.stages]
        self._live_lock = threading.Lock()
        self._busy: dict[str, list[float]] = {s.spec.name: [0.0] * s.spec.worker_count for s in p.stages}
        self._skipped: dict[str, list[int]] = {s.spec.name: [0] * s.spec.worker_count for s in p.stages}

    def _abort(self, exc: BaseException) -> None:
        with self._fail_lock:
            if self._failure is None:
                self._failure = exc
        for ch in self.channels:
            ch.abort()
        for g in self.gates:
            g.abort()

    def _source(self) -> None:
        first = self.channels[0]
        try:
            for pos, frame in enumerate(self.p._source_iter()):
                first.put(FrameEnvelope(frame, pos))
                with self._count_lock:
                    self._in_flight += 1
                    self.stats.frames_in += 1
                    self.stats.peak_buffered = max(self.stats.peak_buffered, self._in_flight)
            first.close()
        except PipelineAborted:
            pass
        except BaseException as exc:
            self._abort(exc)

    def _worker(self, idx: int, slot: int) -> None:
        stage = self.p.stages[idx]
        inp, gate = self.channels[idx], self.gates[idx]
        name = stage.spec.name
        try:
            while True:
                batch = inp.get_batch(stage.spec.batch_size)
                if batch is _EOS:
                    break
                t = time.perf_counter()
                self._skipped[name][slot] += _process(stage, batch)
                self._busy[name][slot] += time.perf_counter() - t
                for env in batch:
                    gate.submit(env)
        except PipelineAborted:
            return
        except BaseException as exc:
            self._abort(exc)
            return
        with self._live_lock:
            self._live[idx] -= 1
            last = self._live[idx] == 0
        if last:
            self.channels[idx + 1].close()

    def _sink(self) -> None:
        ch = self.channels[-1]
        last = None
        try:
            while True:
                env = ch.peek()
                if env is _EOS:
                    break
                _check_order(last, env)
                last = env.seq
                for sink in self.p.spec.sinks:
                    try:
                        sink.write(env)
                    except Exception as exc:
                        raise SinkFailure(sink.name, env.seq, exc) from exc
                with self._count_lock:
                    self._in_flight -= 1
                    self.stats.frames_out += 1
                ch.commit()
        except PipelineAborted:
            pass
        except BaseException as exc:
            self._abort(exc)

    def execute(self) -> RunStats:
        p = self.p
        t0 = time.perf_counter()
        opened = _open_all(p)
        threads = [threading.Thread(target=self._source, name="source", daemon=True)]
        for i, stage in enumerate(p.stages):
            for slot in range(stage.spec.worker_count):
                threads.append(threading.Thread(target=self._worker, args=(i, slot),
                                                name=f"{stage.spec.name}-{slot}", daemon=True))
        threads.append(threading.Thread(target=self._sink, name="sink", daemon=True))
        try:
            for t in threads:
                t.start()
            for t in threads:
                t.join()
        finally:
            _close_all(p, opened)
        st = self.stats
        st.wall_time_s = time.perf_counter() - t0
        st.stage_busy_s = {k: sum(v) for k, v in self._busy.items()}
        st.skipped = {k: sum(v) for k, v in self._skipped.items()}
        for ch in self.channels:
            st.queue_high_water[ch.name] = ch.high_water
            st.queue_capacity[ch.name] = ch.capacity
        if self._failure is not None:
            exc = self._failure
            if hasattr(exc, "stats"):
                exc.stats = st
            raise exc
        return st


def run(p: Pipeline, threaded: bool = True) -> RunStats:
    return p.run(threaded=threaded)
