"""Gossip dissemination engine with a deterministic network simulator."""
from .envelope import Envelope, GossipHeader, ReplyEnvelope, decode, encode
from .core import GossipConfig, GossipNode
from .fanout import ReliabilityTarget, compute_fanout, expected_atomicity
from .membership import PeerEntry, PeerView, Registry
from .simnet import LatencyModel, RunMetrics, SimConfig, run

__version__ = "0.1.0"
