"""Guest benchmark programs and the address map they share."""

from .counters import Duration, Sync, build_counters
from .dlist import build_dlist
from .layout import Workload
from .locks import tts_acquire, tts_release
from .queue import build_queue

__all__ = ["Duration", "Sync", "Workload", "build_counters", "build_dlist", "build_queue",
           "tts_acquire", "tts_release"]
