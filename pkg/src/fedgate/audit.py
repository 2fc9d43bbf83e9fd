"""Centralized audit store, log aggregation, and forensic queries.

The store is append-only. On disk it is UTF-8 JSON lines with a fixed key
order and integer-second timestamps, so identical inputs produce
byte-identical files.
"""

from __future__ import annotations

import heapq
import json
import threading
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

from .errors import EmptyReport, InvalidWindow, MalformedRecord, UnorderedLocalLog

STAGES = (
    "gateway",
    "handshake",
    "certificate",
    "central-policy",
    "local-acl",
    "service-model",
    "token",
    "service",
)
DECISIONS = ("allow", "deny")

_FIELD_ORDER = (
    "timestamp",
    "clientId",
    "sourceAddr",
    "country",
    "service",
    "op",
    "path",
    "decision",
    "stage",
    "enforcerId",
)


@dataclass(frozen=True)
class AuditRecord:
    timestamp: int
    client_id: str
    source_addr: str
    country: str | None
    service: str
    op: str
    path: str | None
    decision: str
    stage: str
    enforcer_id: str

    def validate(self) -> "AuditRecord":
        if not isinstance(self.timestamp, int) or self.timestamp < 0:
            raise MalformedRecord(f"bad timestamp: {self.timestamp!r}")
        if self.decision not in DECISIONS:
            raise MalformedRecord(f"bad decision: {self.decision!r}")
        if self.stage not in STAGES:
            raise MalformedRecord(f"bad stage: {self.stage!r}")
        for name in ("client_id", "source_addr", "service", "op", "enforcer_id"):
            if not getattr(self, name):
                raise MalformedRecord(f"missing {name}")
        return self

    def to_json_line(self) -> str:
        obj = {
            "timestamp": self.timestamp,
            "clientId": self.client_id,
            "sourceAddr": self.source_addr,
            "country": self.country,
            "service": self.service,
            "op": self.op,
            "path": self.path,
            "decision": self.decision,
            "stage": self.stage,
            "enforcerId": self.enforcer_id,
        }
        return json.dumps(obj, separators=(",", ":"))

    @classmethod
    def from_json(cls, text: str) -> "AuditRecord":
        try:
            obj = json.loads(text)
        except json.JSONDecodeError as e:
            raise MalformedRecord(str(e)) from e
        if not isinstance(obj, dict):
            raise MalformedRecord("record line is not an object")
        missing = [k for k in _FIELD_ORDER if k not in obj]
        if missing:
            raise MalformedRecord(f"missing fields: {', '.join(missing)}")
        extra = [k for k in obj if k not in _FIELD_ORDER]
        if extra:
            raise MalformedRecord(f"unknown fields: {', '.join(extra)}")
        rec = cls(
            timestamp=obj["timestamp"],
            client_id=obj["clientId"],
            source_addr=obj["sourceAddr"],
            country=obj["country"],
            service=obj["service"],
            op=obj["op"],
            path=obj["path"],
            decision=obj["decision"],
            stage=obj["stage"],
            enforcer_id=obj["enforcerId"],
        )
        return rec.validate()

    def merge_key(self) -> tuple[int, str]:
        return (self.timestamp, self.enforcer_id)


class CentralAuditStore:
    """Append-only record sequence with a source-address index."""

    def __init__(self) -> None:
        self._records: list[AuditRecord] = []
        self._source_index: dict[str, list[int]] = {}
        self._lock = threading.Lock()

    @property
    def records(self) -> Sequence[AuditRecord]:
        return tuple(self._records)

    def __len__(self) -> int:
        return len(self._records)

    def append(self, record: AuditRecord) -> None:
        record.validate()
        with self._lock:
            self._source_index.setdefault(record.source_addr, []).append(len(self._records))
            self._records.append(record)

    def to_bytes(self) -> bytes:
        return "".join(r.to_json_line() + "\n" for r in self._records).encode("utf-8")

    def save(self, path: str | Path) -> None:
        Path(path).write_bytes(self.to_bytes())

    @classmethod
    def load(cls, path: str | Path) -> "CentralAuditStore":
        store = cls()
        for line in Path(path).read_text(encoding="utf-8").splitlines():
            if line.strip():
                store.append(AuditRecord.from_json(line))
        return store


def append_record(store: CentralAuditStore, record: AuditRecord) -> CentralAuditStore:
    store.append(record)
    return store


def aggregate_logs(
    store: CentralAuditStore, local_logs: Iterable[Sequence[AuditRecord]]
) -> CentralAuditStore:
    """K-way merge of the store's records and every local log into a fresh
    store, ordered by (timestamp, enforcer id). Each local log must already
    be timestamp-ordered; ties keep input order, so re-running the same
    aggregation yields byte-identical output."""
    logs = [list(log) for log in local_logs]
    for i, log in enumerate(logs):
        for a, b in zip(log, log[1:]):
            if b.timestamp < a.timestamp:
                raise UnorderedLocalLog(f"local log {i} out of order at t={b.timestamp}")
    merged = CentralAuditStore()
    for record in heapq.merge(list(store.records), *logs, key=AuditRecord.merge_key):
        merged.append(record)
    return merged


def query_window(
    store: CentralAuditStore,
    start: int,
    end: int,
    group_by: str | None = None,
) -> int | dict[str, int]:
    """Count records with start <= timestamp < end, optionally grouped by
    "source" or "decision"."""
    if start > end:
        raise InvalidWindow(f"start {start} > end {end}")
    if group_by not in (None, "source", "decision"):
        raise ValueError(f"bad group_by: {group_by!r}")
    hits = [r for r in store.records if start <= r.timestamp < end]
    if group_by is None:
        return len(hits)
    counts: dict[str, int] = {}
    for r in hits:
        key = r.source_addr if group_by == "source" else r.decision
        counts[key] = counts.get(key, 0) + 1
    return dict(sorted(counts.items()))


@dataclass(frozen=True)
class OffendingSource:
    source_addr: str
    count: int
    authorized_fraction: float


@dataclass(frozen=True)
class SpikeReport:
    window: tuple[int, int]
    baseline_rate: float
    observed_rate: float
    factor: float
    offending_sources: tuple[OffendingSource, ...]

    def to_json(self) -> str:
        return json.dumps(
            {
                "window": list(self.window),
                "baselineRate": self.baseline_rate,
                "observedRate": self.observed_rate,
                "factor": self.factor,
                "offendingSources": [
                    {
                        "sourceAddr": s.source_addr,
                        "count": s.count,
                        "authorizedFraction": s.authorized_fraction,
                    }
                    for s in self.offending_sources
                ],
            },
            indent=2,
        )

    @classmethod
    def from_json(cls, text: str) -> "SpikeReport":
        obj = json.loads(text)
        return cls(
            window=(obj["window"][0], obj["window"][1]),
            baseline_rate=obj["baselineRate"],
            observed_rate=obj["observedRate"],
            factor=obj["factor"],
            offending_sources=tuple(
                OffendingSource(s["sourceAddr"], s["count"], s["authorizedFraction"])
                for s in obj["offendingSources"]
            ),
        )


def detect_spike(
    store: CentralAuditStore,
    window: tuple[int, int],
    baseline_window: tuple[int, int],
    threshold_factor: float,
) -> SpikeReport | None:
    """Compare request rates between a window and a baseline window.

    A report is produced when observed rate >= factor * baseline rate; with
    an empty baseline, any window holding at least `threshold_factor`
    requests triggers. Offending sources are those whose window count
    reaches factor times their baseline count (or the absolute threshold
    when they are absent from the baseline), by descending count.
    """
    for name, (s, e) in (("window", window), ("baseline", baseline_window)):
        if s >= e:
            raise InvalidWindow(f"{name} must have positive duration")
    w_start, w_end = window
    b_start, b_end = baseline_window
    observed_count = query_window(store, w_start, w_end)
    baseline_count = query_window(store, b_start, b_end)
    assert isinstance(observed_count, int) and isinstance(baseline_count, int)
    observed_rate = observed_count / (w_end - w_start)
    baseline_rate = baseline_count / (b_end - b_start)

    if baseline_rate > 0:
        spiking = observed_rate >= threshold_factor * baseline_rate
    else:
        spiking = observed_count >= threshold_factor and observed_count > 0
    if not spiking:
        return None

    window_by_source = query_window(store, w_start, w_end, group_by="source")
    baseline_by_source = query_window(store, b_start, b_end, group_by="source")
    assert isinstance(window_by_source, dict) and isinstance(baseline_by_source, dict)

    offenders: list[OffendingSource] = []
    for addr, count in window_by_source.items():
        base = baseline_by_source.get(addr, 0)
        if base > 0:
            offending = count >= threshold_factor * base
        else:
            offending = count >= threshold_factor
        if not offending:
            continue
        allowed = sum(
            1
            for r in store.records
            if r.source_addr == addr and w_start <= r.timestamp < w_end and r.decision == "allow"
        )
        offenders.append(OffendingSource(addr, count, allowed / count))
    offenders.sort(key=lambda s: (-s.count, s.source_addr))
    rate_factor = observed_rate / baseline_rate if baseline_rate > 0 else float(observed_count)
    return SpikeReport(
        window=window,
        baseline_rate=baseline_rate,
        observed_rate=observed_rate,
        factor=rate_factor,
        offending_sources=tuple(offenders),
    )


def emit_denylist(report: SpikeReport, deny_unauthorized_only: bool = False) -> list[str]:
    """One "deny <addr>" line per offending source. With the flag set,
    sources whose traffic was fully authorized are spared."""
    if not report.offending_sources:
        raise EmptyReport("no offending sources")
    rules = []
    for src in report.offending_sources:
        if deny_unauthorized_only and src.authorized_fraction >= 1.0:
            continue
        rules.append(f"deny {src.source_addr}")
    return rules
