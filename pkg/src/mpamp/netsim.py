"""In-process fusion-center / worker network.

Workers are plain callables; a round runs every worker (in any order, or on
a thread pool), waits for all of them (the barrier), then hands their
messages to the fusion center sorted by node id.  Because the center only
ever sees messages in node order, results do not depend on how the workers
were scheduled.  Every message carries an accounted payload size, and the
:class:`ByteLedger` keeps per-iteration, per-direction totals.
"""

from __future__ import annotations

import csv
import io
from collections import defaultdict
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Callable, Sequence

import numpy as np

__all__ = [
    "RAW_BITS_PER_ENTRY",
    "UP",
    "DOWN",
    "Message",
    "PseudoData",
    "Broadcast",
    "ResidualContribution",
    "GlobalResidualSum",
    "ByteLedger",
    "MissingMessageError",
    "Network",
]

RAW_BITS_PER_ENTRY = 32
UP = "node->center"
DOWN = "center->node"


class MissingMessageError(RuntimeError):
    def __init__(self, node: int):
        super().__init__(f"node {node} did not deliver a message this round")
        self.node = node


@dataclass
class Message:
    payload_bits: float


@dataclass
class PseudoData(Message):
    """Node -> center pseudo-data ``f_t^p``, raw or quantized.

    ``tau2_part`` (the node's share of ``||z||^2``) and ``distortion`` are
    scalar side information and are not charged to the ledger.
    """

    node: int = 0
    vector: np.ndarray = field(default=None, repr=False)
    tau2_part: float = 0.0
    distortion: float = 0.0
    rate: float | None = None


@dataclass
class Broadcast(Message):
    x: np.ndarray = field(default=None, repr=False)
    g: float = 0.0


@dataclass
class ResidualContribution(Message):
    node: int = 0
    r: np.ndarray = field(default=None, repr=False)


@dataclass
class GlobalResidualSum(Message):
    g: np.ndarray = field(default=None, repr=False)


def raw_bits(n_entries: int, bits_per_entry: int = RAW_BITS_PER_ENTRY) -> float:
    return float(n_entries * bits_per_entry)


class ByteLedger:
    """Bit totals keyed by (iteration, direction)."""

    def __init__(self):
        self._bits = defaultdict(float)
        self._messages = defaultdict(int)

    def record(self, iteration: int, direction: str, bits: float) -> None:
        if bits < 0:
            raise ValueError("payload size cannot be negative")
        self._bits[(iteration, direction)] += bits
        self._messages[(iteration, direction)] += 1

    def bits(self, iteration: int | None = None, direction: str | None = None) -> float:
        return sum(
            b
            for (it, d), b in self._bits.items()
            if (iteration is None or it == iteration) and (direction is None or d == direction)
        )

    def message_count(self, iteration: int | None = None, direction: str | None = None) -> int:
        return sum(
            n
            for (it, d), n in self._messages.items()
            if (iteration is None or it == iteration) and (direction is None or d == direction)
        )

    @property
    def total(self) -> float:
        return self.bits()

    def rows(self) -> list[tuple[int, str, float]]:
        return [(it, d, b) for (it, d), b in sorted(self._bits.items())]

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["iteration", "direction", "bits"])
        for it, d, b in self.rows():
            w.writerow([it, d, repr(float(b))])
        return buf.getvalue()


class Network:
    """``P`` workers and one fusion center sharing a ledger.

    ``order`` controls the sequence in which workers run within a round:
    ``"natural"``, ``"reversed"``, or a sequence of node ids.  With
    ``threads > 1`` workers run on a thread pool instead.
    """

    def __init__(self, P: int, order: str | Sequence[int] = "natural", threads: int = 1):
        if P < 1:
            raise ValueError(f"P must be >= 1, got {P}")
        self.P = P
        self.order = order
        self.threads = threads
        self.ledger = ByteLedger()

    def _execution_order(self) -> list[int]:
        if isinstance(self.order, str):
            if self.order == "natural":
                return list(range(self.P))
            if self.order == "reversed":
                return list(reversed(range(self.P)))
            raise ValueError(f"unknown worker order {self.order!r}")
        order = [int(p) for p in self.order]
        if sorted(order) != list(range(self.P)):
            raise ValueError(f"worker order {order} is not a permutation of 0..{self.P - 1}")
        return order

    def run_round(
        self,
        iteration: int,
        workers: Sequence[Callable[[], Any]],
        center: Callable[[list], Any] | None = None,
    ):
        """Run one round and return ``(worker_outputs, center_output)``.

        A worker returns either a :class:`Message` or a ``(Message, extra)``
        pair; ``extra`` is returned to the caller untouched.  ``center``
        receives the messages in node order and may return a downstream
        :class:`Message`, which is charged once per node.
        """
        if len(workers) != self.P:
            raise ValueError(f"expected {self.P} workers, got {len(workers)}")
        results: dict[int, Any] = {}
        order = self._execution_order()
        if self.threads > 1 and self.P > 1:
            with ThreadPoolExecutor(max_workers=self.threads) as pool:
                futures = {p: pool.submit(workers[p]) for p in order}
                for p in order:
                    results[p] = futures[p].result()
        else:
            for p in order:
                results[p] = workers[p]()

        messages, extras = [], []
        for p in range(self.P):
            out = results.get(p)
            if out is None:
                raise MissingMessageError(p)
            msg, extra = out if isinstance(out, tuple) else (out, None)
            if not isinstance(msg, Message):
                raise MissingMessageError(p)
            self.ledger.record(iteration, UP, msg.payload_bits)
            messages.append(msg)
            extras.append(extra)

        reply = None
        if center is not None:
            reply = center(messages)
            if isinstance(reply, Message):
                for _ in range(self.P):
                    self.ledger.record(iteration, DOWN, reply.payload_bits)
        return extras, reply
