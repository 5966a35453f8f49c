"""Synchronous simulated message-passing network.

Workers exchange payloads over the edges of an undirected graph in
synchronous rounds: all sends of a round are staged, then delivered at the
round barrier.  Sends over non-edges raise immediately (no silent loss),
every delivery is appended to an audit log, and message/byte counters are
kept per iteration.  Delivery order is deterministic: receivers read their
mailbox sorted by sender index.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class NetworkError(RuntimeError):
    """Illegal use of the simulated network (e.g. a non-edge send)."""


@dataclass
class MessageRecord:
    iteration: int
    round_index: int
    sender: int
    receiver: int
    nbytes: int


class SyncNetwork:
    """Round-synchronous network over a fixed undirected graph."""

    def __init__(self, adjacency: np.ndarray, audit: bool = True):
        A = np.asarray(adjacency)
        self.n = A.shape[0]
        self.edges = {(i, j) for i in range(self.n) for j in range(self.n)
                      if i != j and A[i, j] != 0}
        self._staged: list[tuple[int, int, object, int]] = []
        self._mailboxes: dict[int, dict[int, object]] = {i: {} for i in range(self.n)}
        self.audit_enabled = audit
        self.audit: list[MessageRecord] = []
        self.messages = 0
        self.bytes = 0
        self.iteration = -1
        self.rounds_in_iteration = 0
        self.rounds_per_iteration: list[int] = []

    def begin_iteration(self, iteration: int):
        if self.iteration >= 0:
            self.rounds_per_iteration.append(self.rounds_in_iteration)
        self.iteration = iteration
        self.rounds_in_iteration = 0

    def finish(self):
        if self.iteration >= 0:
            self.rounds_per_iteration.append(self.rounds_in_iteration)
            self.iteration = -1

    def send(self, sender: int, receiver: int, payload, nbytes: int):
        """Stage one payload for delivery at the next round barrier.

        Payload arrays are copied so later writes by the sender cannot leak
        through the simulation.
        """
        if (sender, receiver) not in self.edges:
            raise NetworkError(f"no edge {sender} -> {receiver}")
        self._staged.append((sender, receiver, _copy_payload(payload), nbytes))

    def deliver_round(self):
        """Round barrier: deliver all staged messages, update counters."""
        for sender, receiver, payload, nbytes in self._staged:
            self._mailboxes[receiver][sender] = payload
            if self.audit_enabled:
                self.audit.append(MessageRecord(self.iteration, self.rounds_in_iteration,
                                                sender, receiver, nbytes))
            self.messages += 1
            self.bytes += nbytes
        self._staged.clear()
        self.rounds_in_iteration += 1

    def receive_all(self, receiver: int) -> dict[int, object]:
        """Drain the mailbox; keys are sender indices."""
        box = self._mailboxes[receiver]
        out = {k: box[k] for k in sorted(box)}
        box.clear()
        return out


def _copy_payload(payload):
    if isinstance(payload, np.ndarray):
        return payload.copy()
    if isinstance(payload, tuple):
        return tuple(_copy_payload(p) for p in payload)
    if isinstance(payload, dict):
        return {k: _copy_payload(v) for k, v in payload.items()}
    return payload
