"""Corpus management and power-schedule energy assignment.

A sequence joins the corpus when its execution covered something new. The
scheduler cycles entries round-robin and assigns each pick a mutation energy
(children per batch) according to one of six schedules:

    exploit: a
    explore: a/b
    fast:    (a/b) * 2^min(s,10) / max(f,1)
    coe:     1 if f > mean(freq) else (a/b) * 2^min(s,10)
    lin:     (a/b) * max(s,1) / max(f,1)
    quad:    (a/b) * max(s^2,1) / max(f,1)

where s counts selections of the entry, f counts observations of the entry's
coverage signature across all executions, b = 4, and the base energy
a = clamp(32 * median_exec/max(exec,1) * median_len/max(len,1), 1, 32) favours
fast, short entries. The result is clamped to [1, 64].
"""

from __future__ import annotations

import hashlib
import statistics
from dataclasses import dataclass, field

from .corpus import RequestSequence, serialize_sequence
from .coverage import CoverageSnapshot
from .errors import EmptyCorpus, UnknownSchedule

SCHEDULES = ("fast", "explore", "lin", "exploit", "quad", "coe")

ENERGY_BETA = 4.0
ENERGY_MAX = 64
ALPHA_MAX = 32.0
_MEDIAN_REFRESH = 64


def signature_of(snapshot: CoverageSnapshot) -> int:
    """64-bit stable hash of the snapshot's tagged bit-index set."""
    canon = ",".join(f"{tag}{idx}" for tag, idx in snapshot.bit_index_set())
    digest = hashlib.sha256(canon.encode()).digest()
    return int.from_bytes(digest[:8], "big")


@dataclass
class CorpusEntry:
    sequence: RequestSequence
    exec_time_ms: float
    signature: int
    serialized: bytes
    fuzz_count: int = 0
    selection_count: int = 0
    discovered_at: int = 0


@dataclass
class Corpus:
    entries: list[CorpusEntry] = field(default_factory=list)
    signature_freq: dict[int, int] = field(default_factory=dict)
    _seen_bytes: set[bytes] = field(default_factory=set)
    _cursor: int = 0
    _adds_since_medians: int = 0
    _median_exec: float = 1.0
    _median_len: float = 1.0

    def __len__(self) -> int:
        return len(self.entries)

    def add_if_interesting(
        self,
        seq: RequestSequence,
        snapshot: CoverageSnapshot,
        exec_time_ms: float,
        tick: int = 0,
    ) -> bool:
        """Admit ``seq`` when its snapshot carried novelty; always count the signature."""
        if snapshot.novelty is None:
            raise ValueError("snapshot has no novelty; run coverage.novelty first")
        sig = signature_of(snapshot)
        self.signature_freq[sig] = self.signature_freq.get(sig, 0) + 1
        if snapshot.novelty.total == 0:
            return False  # serialisation deferred: only admitted entries need it
        data = serialize_sequence(seq)
        if data in self._seen_bytes:
            return False
        self._seen_bytes.add(data)
        self.entries.append(
            CorpusEntry(
                sequence=seq,
                exec_time_ms=exec_time_ms,
                signature=sig,
                serialized=data,
                discovered_at=tick,
            )
        )
        self._adds_since_medians += 1
        return True

    def select_next(self) -> CorpusEntry:
        """Round-robin over insertion order; increments the selection count."""
        if not self.entries:
            raise EmptyCorpus("corpus is empty")
        entry = self.entries[self._cursor % len(self.entries)]
        self._cursor += 1
        entry.selection_count += 1
        return entry

    def mark_fuzzed(self, entry: CorpusEntry):
        entry.fuzz_count += 1

    def _medians(self) -> tuple[float, float]:
        if self._adds_since_medians >= _MEDIAN_REFRESH or self._median_exec <= 0:
            self._refresh_medians()
        return self._median_exec, self._median_len

    def _refresh_medians(self):
        if self.entries:
            self._median_exec = float(statistics.median(e.exec_time_ms for e in self.entries))
            self._median_len = float(statistics.median(len(e.sequence) for e in self.entries))
        else:
            self._median_exec = 1.0
            self._median_len = 1.0
        self._adds_since_medians = 0

    def refresh_medians(self):
        self._refresh_medians()


def base_energy(entry: CorpusEntry, median_exec: float, median_len: float) -> float:
    alpha = (
        ALPHA_MAX
        * (median_exec / max(entry.exec_time_ms, 1.0))
        * (median_len / max(len(entry.sequence), 1))
    )
    return min(max(alpha, 1.0), ALPHA_MAX)


def assign_energy(entry: CorpusEntry, schedule: str, corpus: Corpus) -> int:
    """Children to generate for one pick of ``entry``; always in [1, 64]."""
    if schedule not in SCHEDULES:
        raise UnknownSchedule(schedule)
    median_exec, median_len = corpus._medians()
    alpha = base_energy(entry, median_exec, median_len)
    s = entry.selection_count
    f = max(corpus.signature_freq.get(entry.signature, 0), 1)
    if schedule == "exploit":
        energy = alpha
    elif schedule == "explore":
        energy = alpha / ENERGY_BETA
    elif schedule == "fast":
        energy = (alpha / ENERGY_BETA) * (2 ** min(s, 10)) / f
    elif schedule == "coe":
        mu = statistics.fmean(corpus.signature_freq.values()) if corpus.signature_freq else 0.0
        if f > mu:
            return 1
        energy = (alpha / ENERGY_BETA) * (2 ** min(s, 10))
    elif schedule == "lin":
        energy = (alpha / ENERGY_BETA) * max(s, 1) / f
    else:  # quad
        energy = (alpha / ENERGY_BETA) * max(s * s, 1) / f
    return int(min(max(energy, 1.0), float(ENERGY_MAX)))
