"""Discrete-time HDFS-federation simulator.

Multiple independent NameNodes (one namespace and block pool each) share a
pool of DataNodes. Every DataNode registers with every NameNode and emits
heartbeats to all of them; each NameNode keeps its own liveness view.
Replica placement is rack-aware, replica selection is proximity-ordered,
and reads/writes are charged through a simple cost model:

    elapsed = size / bandwidth
            + remote_penalty  * (blocks fetched from a remote rack)
            + auth_latency    * (authentication events in the call)

All randomness (replica spread) comes from one seeded RNG; every other
iteration is sorted, so identical seeds give identical runs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import TYPE_CHECKING

from .clock import NodeClock, SimClock
from .errors import (
    AuthenticationRequired,
    DuplicateNode,
    FileExists,
    InsufficientNodes,
    NoLiveReplica,
    NoSuchPath,
    TokenInvalid,
    Unauthorized,
    UnknownNode,
    UnknownService,
)
from .fs import FileAttrs, FileMode, NamespaceTree, inherit_acl_on_create
from .model import OpKind, PrincipalId, group, user
from .tokens import BlockToken, DelegationToken, HandshakeTicket, TokenStatus, validate_token

if TYPE_CHECKING:
    from .audit import AuditRecord

import random

DEFAULT_ROOT_MODE = "rwxrwxrwx"


@dataclass(frozen=True)
class Block:
    block_id: str
    file_id: str
    size_mb: float
    replicas: tuple[str, ...]


@dataclass
class DataNodeState:
    node_id: str
    rack_id: str
    clock: NodeClock
    stored_replicas: set[str] = field(default_factory=set)
    last_heartbeat: dict[str, int] = field(default_factory=dict)
    alive_per_nn: dict[str, bool] = field(default_factory=dict)
    heartbeat_counts: dict[str, int] = field(default_factory=dict)
    silenced: bool = False


@dataclass
class NameNodeState:
    namespace_id: str
    node_id: str
    rack_id: str
    clock: NodeClock
    tree: NamespaceTree
    block_pool: dict[str, Block] = field(default_factory=dict)
    audit_log: list["AuditRecord"] = field(default_factory=list)
    file_counter: int = 0
    block_counter: int = 0


@dataclass(frozen=True)
class WriteResult:
    file_id: str
    block_ids: tuple[str, ...]
    elapsed_s: float
    auth_events: int


@dataclass(frozen=True)
class ReadResult:
    bytes_mb: float
    elapsed_s: float
    blocks_fetched: int
    remote_blocks: int
    auth_events: int


def default_root_attrs() -> FileAttrs:
    return FileAttrs(owner=user("hdfs"), group=group("hadoop"), mode=FileMode.parse(DEFAULT_ROOT_MODE))


class Cluster:
    def __init__(
        self,
        racks: list[str],
        *,
        bandwidth_mbps: float = 40.0,
        per_call_auth_latency_s: float = 0.02,
        remote_block_penalty_s: float = 0.05,
        block_size_mb: float = 128.0,
        heartbeat_interval_s: int = 3,
        expiry_check_interval_s: int = 200,
        heartbeat_timeout_s: int = 200,
        secure_mode: bool = False,
        authority_secret: bytes = b"",
        block_secret: bytes = b"",
        clock: SimClock | None = None,
        seed: int = 0,
    ) -> None:
        if bandwidth_mbps <= 0 or block_size_mb <= 0:
            raise ValueError("bandwidth and block size must be positive")
        self.racks = list(dict.fromkeys(racks))
        self.bandwidth_mbps = bandwidth_mbps
        self.per_call_auth_latency_s = per_call_auth_latency_s
        self.remote_block_penalty_s = remote_block_penalty_s
        self.block_size_mb = block_size_mb
        self.heartbeat_interval_s = heartbeat_interval_s
        self.expiry_check_interval_s = expiry_check_interval_s
        self.heartbeat_timeout_s = heartbeat_timeout_s
        self.secure_mode = secure_mode
        self.authority_secret = authority_secret
        self.block_secret = block_secret
        self.clock = clock or SimClock()
        self.rng = random.Random(seed)

        self.nodes: dict[str, str] = {}
        self.node_clocks: dict[str, NodeClock] = {}
        self.namenodes: dict[str, NameNodeState] = {}
        self.datanodes: dict[str, DataNodeState] = {}

        # Observability used by the firewall/no-traffic properties.
        self.nn_call_counts: dict[str, int] = {}
        self.dn_serve_counts: dict[str, int] = {}
        self.auth_event_log: list[tuple[int, str, str, str]] = []
        self.auth_events_total = 0

    # --- topology ---------------------------------------------------------

    def _check_rack(self, rack_id: str) -> None:
        if rack_id not in self.racks:
            raise ValueError(f"unknown rack {rack_id!r}")

    def _add_node(self, node_id: str, rack_id: str) -> NodeClock:
        if node_id in self.nodes:
            raise DuplicateNode(node_id)
        self._check_rack(rack_id)
        self.nodes[node_id] = rack_id
        nc = NodeClock(node_id, self.clock)
        self.node_clocks[node_id] = nc
        return nc

    def add_client(self, node_id: str, rack_id: str) -> None:
        """A host that issues reads/writes but stores nothing."""
        self._add_node(node_id, rack_id)

    def add_namenode(
        self, namespace_id: str, node_id: str, rack_id: str, root_attrs: FileAttrs | None = None
    ) -> NameNodeState:
        if namespace_id in self.namenodes:
            raise DuplicateNode(f"namespace {namespace_id}")
        nc = self._add_node(node_id, rack_id)
        nn = NameNodeState(
            namespace_id=namespace_id,
            node_id=node_id,
            rack_id=rack_id,
            clock=nc,
            tree=NamespaceTree(root_attrs or default_root_attrs()),
        )
        self.namenodes[namespace_id] = nn
        self.nn_call_counts[namespace_id] = 0
        # Late-added NameNodes learn about every existing DataNode.
        for dn in self.datanodes.values():
            dn.last_heartbeat[namespace_id] = self.clock.now
            dn.alive_per_nn[namespace_id] = True
            dn.heartbeat_counts[namespace_id] = 0
        return nn

    def namenode(self, namespace_id: str) -> NameNodeState:
        nn = self.namenodes.get(namespace_id)
        if nn is None:
            raise UnknownService(namespace_id)
        return nn

    def register_datanode(
        self, node_id: str, rack_id: str, ticket: HandshakeTicket | None = None
    ) -> DataNodeState:
        """Register with every NameNode. Secure mode demands a valid ticket,
        authenticated once per NameNode (that is the federation tax)."""
        if node_id in self.datanodes or node_id in self.nodes:
            raise DuplicateNode(node_id)
        if self.secure_mode:
            if ticket is None:
                raise AuthenticationRequired(node_id)
            for ns in sorted(self.namenodes):
                status = validate_token(ticket, self.authority_secret, self.namenodes[ns].clock)
                if status is not TokenStatus.VALID:
                    raise AuthenticationRequired(f"{node_id}: ticket {status.value} at {ns}")
        nc = self._add_node(node_id, rack_id)
        dn = DataNodeState(node_id=node_id, rack_id=rack_id, clock=nc)
        now = self.clock.now
        for ns in sorted(self.namenodes):
            dn.last_heartbeat[ns] = now
            dn.alive_per_nn[ns] = True
            dn.heartbeat_counts[ns] = 0
            if self.secure_mode:
                self.auth_event_log.append((now, "dn-register", node_id, ns))
                self.auth_events_total += 1
        self.datanodes[node_id] = dn
        return dn

    def silence_datanode(self, node_id: str) -> None:
        self._datanode(node_id).silenced = True

    def restore_datanode(self, node_id: str) -> None:
        self._datanode(node_id).silenced = False

    def _datanode(self, node_id: str) -> DataNodeState:
        dn = self.datanodes.get(node_id)
        if dn is None:
            raise UnknownNode(node_id)
        return dn

    def set_node_clock_offset(self, node_id: str, offset_s: int) -> None:
        nc = self.node_clocks.get(node_id)
        if nc is None:
            raise UnknownNode(node_id)
        nc.set_offset(offset_s)

    # --- time -------------------------------------------------------------

    def tick(self, dt_seconds: int) -> None:
        """Advance simulation time, emitting heartbeats every 3 s (default)
        and running each NameNode's expiry sweep every 200 s (default). A
        DataNode is marked dead when its last heartbeat is at least the
        timeout old; a later heartbeat revives it."""
        if dt_seconds <= 0:
            raise ValueError("tick requires dt > 0")
        t0 = self.clock.now
        t1 = t0 + int(dt_seconds)
        beats = self._boundaries(t0, t1, self.heartbeat_interval_s)
        checks = self._boundaries(t0, t1, self.expiry_check_interval_s)
        events = sorted([(t, 0) for t in beats] + [(t, 1) for t in checks])
        for t, kind in events:
            if t > self.clock.now:
                self.clock.advance(t - self.clock.now)
            if kind == 0:
                self._emit_heartbeats(t)
            else:
                self._expiry_sweep(t)
        if t1 > self.clock.now:
            self.clock.advance(t1 - self.clock.now)

    @staticmethod
    def _boundaries(t0: int, t1: int, interval: int) -> list[int]:
        if interval <= 0:
            return []
        first = (t0 // interval) + 1
        last = t1 // interval
        return [k * interval for k in range(first, last + 1)]

    def _emit_heartbeats(self, t: int) -> None:
        for node_id in sorted(self.datanodes):
            dn = self.datanodes[node_id]
            if dn.silenced:
                continue
            for ns in sorted(self.namenodes):
                dn.last_heartbeat[ns] = t
                dn.alive_per_nn[ns] = True
                dn.heartbeat_counts[ns] = dn.heartbeat_counts.get(ns, 0) + 1

    def _expiry_sweep(self, t: int) -> None:
        for ns in sorted(self.namenodes):
            for node_id in sorted(self.datanodes):
                dn = self.datanodes[node_id]
                if t - dn.last_heartbeat.get(ns, t) >= self.heartbeat_timeout_s:
                    dn.alive_per_nn[ns] = False

    # --- replica placement and selection -----------------------------------

    def _live_datanodes(self, namespace_id: str | None) -> list[DataNodeState]:
        out = []
        for node_id in sorted(self.datanodes):
            dn = self.datanodes[node_id]
            if namespace_id is None:
                alive = any(dn.alive_per_nn.values())
            else:
                alive = dn.alive_per_nn.get(namespace_id, False)
            if alive:
                out.append(dn)
        return out

    def place_replicas(
        self,
        writer_node: str | None,
        replication_factor: int,
        namespace_id: str | None = None,
    ) -> list[str]:
        """First replica on the writer's node when it hosts a live DataNode,
        second on a different rack, third back on the first replica's rack;
        beyond three, round-robin across racks. Rack constraints degrade to
        plain distinct nodes when the topology cannot satisfy them."""
        if replication_factor < 1:
            raise ValueError("replication factor must be >= 1")
        live = self._live_datanodes(namespace_id)
        if len(live) < replication_factor:
            raise InsufficientNodes(f"need {replication_factor}, have {len(live)}")
        by_id = {dn.node_id: dn for dn in live}
        chosen: list[str] = []

        def pick(candidates: list[str]) -> str | None:
            pool = [c for c in candidates if c not in chosen]
            if not pool:
                return None
            return self.rng.choice(pool)

        if writer_node is not None and writer_node in by_id:
            first = writer_node
        else:
            first = pick(sorted(by_id))
        assert first is not None
        chosen.append(first)
        first_rack = by_id[first].rack_id

        if replication_factor >= 2:
            remote = sorted(n for n, dn in by_id.items() if dn.rack_id != first_rack)
            second = pick(remote) or pick(sorted(by_id))
            assert second is not None
            chosen.append(second)
        if replication_factor >= 3:
            local = sorted(n for n, dn in by_id.items() if dn.rack_id == first_rack)
            third = pick(local) or pick(sorted(by_id))
            assert third is not None
            chosen.append(third)
        if replication_factor > 3:
            rack_order = sorted({dn.rack_id for dn in live})
            i = 0
            stall = 0
            while len(chosen) < replication_factor:
                rack = rack_order[i % len(rack_order)]
                i += 1
                cand = pick(sorted(n for n, dn in by_id.items() if dn.rack_id == rack))
                if cand is not None:
                    chosen.append(cand)
                    stall = 0
                else:
                    stall += 1
                    if stall >= len(rack_order):
                        filler = pick(sorted(by_id))
                        assert filler is not None
                        chosen.append(filler)
                        stall = 0
        return chosen

    def proximity_class(self, reader_node: str, node_id: str) -> int:
        """0 local node, 1 local rack, 2 remote rack."""
        if node_id == reader_node:
            return 0
        reader_rack = self.nodes.get(reader_node)
        if reader_rack is not None and self.nodes.get(node_id) == reader_rack:
            return 1
        return 2

    def select_replica(self, reader_node: str, block: Block, namespace_id: str | None = None) -> str:
        """Closest live replica by proximity class; ties break on node id."""
        candidates = []
        for node_id in block.replicas:
            dn = self.datanodes.get(node_id)
            if dn is None:
                continue
            if namespace_id is None:
                alive = any(dn.alive_per_nn.values())
            else:
                alive = dn.alive_per_nn.get(namespace_id, False)
            if alive:
                candidates.append(node_id)
        if not candidates:
            raise NoLiveReplica(block.block_id)
        return min(candidates, key=lambda n: (self.proximity_class(reader_node, n), n))

    # --- namespace operations ----------------------------------------------

    def mkdir(self, namespace_id: str, path: str, creator: PrincipalId) -> None:
        nn = self.namenode(namespace_id)
        ancestors, name, existing = nn.tree.walk_to(path)
        if existing is not None or name == "/":
            raise FileExists(path)
        attrs = inherit_acl_on_create(ancestors[-1][1], creator)
        nn.tree.mkdir(path, attrs)

    def file_blocks(self, namespace_id: str, path: str) -> tuple[str, ...]:
        nn = self.namenode(namespace_id)
        node = nn.tree.lookup(path)
        if node is None or node.is_dir:
            raise NoSuchPath(path)
        return node.block_ids

    def _split_sizes(self, size_mb: float) -> list[float]:
        if size_mb < 0:
            raise ValueError("size must be >= 0")
        if size_mb == 0:
            return [0.0]
        n = math.ceil(size_mb / self.block_size_mb)
        sizes = [self.block_size_mb] * (n - 1)
        sizes.append(size_mb - self.block_size_mb * (n - 1))
        return sizes

    def _check_delegation(self, dt: DelegationToken | None, nn: NameNodeState) -> int:
        """Validate the delegation token at the NameNode clock. Returns the
        number of auth events this check contributed."""
        if not self.secure_mode:
            return 0
        if dt is None:
            raise Unauthorized("delegation token required in secure mode")
        status = validate_token(dt, self.authority_secret, nn.clock)
        if status is not TokenStatus.VALID:
            raise TokenInvalid(f"delegation token {status.value}")
        self.auth_events_total += 1
        return 1

    def write_file(
        self,
        namespace_id: str,
        path: str,
        size_mb: float,
        creator: PrincipalId,
        *,
        replication: int = 3,
        writer_node: str | None = None,
        dt: DelegationToken | None = None,
        tags: frozenset[str] = frozenset(),
    ) -> WriteResult:
        """Create a write-once file: split into blocks, place replicas, and
        charge transfer plus per-auth-event latency. Caller is responsible
        for running the authorization pipeline first."""
        nn = self.namenode(namespace_id)
        auth_events = self._check_delegation(dt, nn)
        ancestors, name, existing = nn.tree.walk_to(path)
        if existing is not None or name == "/":
            raise FileExists(path)
        attrs = inherit_acl_on_create(ancestors[-1][1], creator)

        sizes = self._split_sizes(size_mb)
        nn.file_counter += 1
        file_id = f"{namespace_id}-f{nn.file_counter:05d}"
        block_ids: list[str] = []
        placements: list[tuple[str, float, list[str]]] = []
        for chunk in sizes:
            replicas = self.place_replicas(writer_node, replication, namespace_id)
            nn.block_counter += 1
            bid = f"{namespace_id}-b{nn.block_counter:06d}"
            block_ids.append(bid)
            placements.append((bid, chunk, replicas))
        for bid, chunk, replicas in placements:
            nn.block_pool[bid] = Block(bid, file_id, chunk, tuple(replicas))
            for node_id in replicas:
                self.datanodes[node_id].stored_replicas.add(bid)
            self.dn_serve_counts[replicas[0]] = self.dn_serve_counts.get(replicas[0], 0) + 1
        nn.tree.create_file(
            path, attrs, file_id=file_id, size_mb=size_mb, block_ids=tuple(block_ids), tags=tags
        )
        if self.secure_mode:
            # NN-side block token issuance plus one validation at the primary
            # DataNode of each block.
            auth_events += 2 * len(block_ids)
            self.auth_events_total += 2 * len(block_ids)
        self.nn_call_counts[namespace_id] += 1
        elapsed = size_mb / self.bandwidth_mbps + self.per_call_auth_latency_s * auth_events
        return WriteResult(file_id, tuple(block_ids), elapsed, auth_events)

    def read_file(
        self,
        reader_node: str,
        namespace_id: str,
        path: str,
        *,
        block_tokens: dict[str, BlockToken] | None = None,
        dt: DelegationToken | None = None,
    ) -> ReadResult:
        """Fetch every block from its closest live replica. In secure mode a
        valid block token must cover each block; all tokens are checked
        before any byte is charged."""
        nn = self.namenode(namespace_id)
        auth_events = self._check_delegation(dt, nn)
        node = nn.tree.lookup(path)
        if node is None or node.is_dir:
            raise NoSuchPath(path)
        blocks = [nn.block_pool[bid] for bid in node.block_ids]

        chosen: list[tuple[Block, str]] = []
        for block in blocks:
            serving = self.select_replica(reader_node, block, namespace_id)
            chosen.append((block, serving))

        if self.secure_mode:
            for block, serving in chosen:
                token = (block_tokens or {}).get(block.block_id)
                if token is None:
                    raise TokenInvalid(f"no block token for {block.block_id}")
                status = validate_token(token, self.block_secret, self.datanodes[serving].clock)
                if status is not TokenStatus.VALID:
                    raise TokenInvalid(f"block token {status.value} for {block.block_id}")
                if OpKind.READ not in token.modes:
                    raise TokenInvalid(f"block token for {block.block_id} lacks read mode")
                auth_events += 1
                self.auth_events_total += 1

        bytes_mb = 0.0
        remote = 0
        for block, serving in chosen:
            bytes_mb += block.size_mb
            if self.proximity_class(reader_node, serving) == 2:
                remote += 1
            self.dn_serve_counts[serving] = self.dn_serve_counts.get(serving, 0) + 1
        self.nn_call_counts[namespace_id] += 1
        elapsed = (
            bytes_mb / self.bandwidth_mbps
            + self.remote_block_penalty_s * remote
            + self.per_call_auth_latency_s * auth_events
        )
        return ReadResult(bytes_mb, elapsed, len(chosen), remote, auth_events)

    def service_ping(self, namespace_id: str, dt: DelegationToken | None = None) -> float:
        """A pathless service call; costs only its authentication latency."""
        nn = self.namenode(namespace_id)
        auth_events = self._check_delegation(dt, nn)
        self.nn_call_counts[namespace_id] += 1
        return self.per_call_auth_latency_s * auth_events
