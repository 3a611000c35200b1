"""Sizing gossip fanout from a reliability target."""
from __future__ import annotations

import math
from dataclasses import dataclass


@dataclass(frozen=True)
class ReliabilityTarget:
    n: int
    e: float = 0.05
    p: float = 0.99

    def __post_init__(self):
        if self.n < 1:
            raise ValueError(f"n must be a positive integer, got {self.n}")
        if not 0.0 <= self.e < 1.0:
            raise ValueError(f"error rate e must lie in [0, 1), got {self.e}")
        if not 0.5 < self.p < 1.0:
            raise ValueError(f"delivery assurance p must lie in (0.5, 1), got {self.p}")


def compute_fanout(target: ReliabilityTarget) -> int:
    """Smallest fanout meeting ``target``.

    Atomic delivery behaves like exp(-n * exp(-f)) for an infect-and-die
    epidemic, so f = ln n + ln(1 / ln(1/p)); each transmission survives
    with probability 1 - e, which inflates the fanout by 1 / (1 - e).

    >>> compute_fanout(ReliabilityTarget(10, 0.05, 0.99))
    8
    >>> compute_fanout(ReliabilityTarget(250, 0.05, 0.99))
    11
    """
    f = (math.log(target.n) + math.log(1.0 / math.log(1.0 / target.p))) / (1.0 - target.e)
    return max(1, math.ceil(f))


@dataclass(frozen=True)
class AtomicityEstimate:
    estimate: float
    stderr: float
    runs: int
    mean_receivers: float


def expected_atomicity(n: int, f: int, r: int, runs: int = 200, loss: float = 0.0,
                       seed: int = 0) -> AtomicityEstimate:
    """Monte-Carlo fraction of single disseminations that reach all ``n`` nodes."""
    if min(n, f, r) < 1:
        raise ValueError("n, f and r must all be >= 1")
    if runs < 1:
        raise ValueError("runs must be >= 1")
    from .simnet import disseminate_once

    hits = 0
    receivers = 0.0
    for i in range(runs):
        outcome = disseminate_once(n, f, r, loss=loss, seed=seed + i)
        hits += outcome.atomic
        receivers += outcome.receiver_fraction
    p = hits / runs
    return AtomicityEstimate(p, math.sqrt(p * (1 - p) / runs), runs, receivers / runs)
