"""Deterministic event queue and seeded random streams."""

from __future__ import annotations

import hashlib
import heapq
import itertools
from dataclasses import dataclass, field
from typing import Any, Callable, Iterable, Iterator

import numpy as np


@dataclass(order=True, frozen=True)
class Event:
    time: float
    source: str
    seq: int
    payload: Any = field(default=None, compare=False)

    @property
    def key(self) -> tuple[float, str, int]:
        return (self.time, self.source, self.seq)


class EventQueue:
    """Min-heap of events ordered by ``(time, source, seq)``.

    Two events with the same full key are rejected; that tie could not be
    broken deterministically.
    """

    def __init__(self, events: Iterable[Event] = ()):
        self._heap: list[Event] = []
        self._keys: set[tuple[float, str, int]] = set()
        for ev in events:
            self.push(ev)

    def push(self, ev: Event) -> None:
        if ev.key in self._keys:
            raise ValueError(f"duplicate event key {ev.key}")
        self._keys.add(ev.key)
        heapq.heappush(self._heap, ev)

    def pop(self) -> Event:
        ev = heapq.heappop(self._heap)
        self._keys.discard(ev.key)
        return ev

    def peek(self) -> Event:
        return self._heap[0]

    def __len__(self) -> int:
        return len(self._heap)

    def __bool__(self) -> bool:
        return bool(self._heap)

    def drain(self) -> Iterator[Event]:
        while self._heap:
            yield self.pop()


class Kernel:
    """Sequential simulator driven by an :class:`EventQueue`.

    Handlers may schedule further events; the clock never runs backwards.
    """

    def __init__(self) -> None:
        self.queue = EventQueue()
        self.now = 0.0
        self._seq = itertools.count()

    def schedule(self, time: float, source: str, payload: Any = None) -> Event:
        if time < self.now:
            raise ValueError(f"cannot schedule at {time} before now={self.now}")
        ev = Event(time, source, next(self._seq), payload)
        self.queue.push(ev)
        return ev

    def run(self, handler: Callable[[Kernel, Event], None], until: float = float("inf")) -> None:
        while self.queue and self.queue.peek().time <= until:
            ev = self.queue.pop()
            self.now = ev.time
            handler(self, ev)


def stream_seed(master_seed: int, *names: str) -> int:
    """Stable 64-bit seed derived from the master seed and a name path."""
    h = hashlib.sha256(str(int(master_seed)).encode())
    for name in names:
        h.update(b"/" + name.encode())
    return int.from_bytes(h.digest()[:8], "little")


def rng_for(master_seed: int, *names: str) -> np.random.Generator:
    return np.random.default_rng(stream_seed(master_seed, *names))
