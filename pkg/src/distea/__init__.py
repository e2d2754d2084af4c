"""Dynamic impact analysis for message-passing programs.

Processes record method entry/return events under per-process Lamport
clocks, piggyback their clocks on every socket message, and dump compact
traces that are merged offline to answer method-level impact queries.
"""

from .clock import ClockCell, ProtocolError, RecvState, decode_frame, encode_frame, feed_bytes
from .impact import CorpusIndex, QueryNotExecutedError, effectiveness, impact_set, mcov_set
from .model import ImpactSet, InternalEvent, InternalEventKind, MethodRecord, ProcessTrace
from .probes import MonitorTable
from .tracefile import TraceCorpus, load_corpus, merge, parse_trace, serialize_trace
from .transport import PiggybackConnection, memory_pipe, readiness_wait

__version__ = "0.1.0"
