"""Single-entry access broker over the federation, plus the native path.

The brokered pipeline is: gateway login, handshake, delegation token,
session certificate, per-NameNode enforcer (service gate, central policy,
local ACL), block tokens, simulated service call. Every brokered data
request appends exactly one record to the central audit store, whatever
the outcome. The native (direct) path skips gateway/handshake/policy
authority entirely and logs locally at the target NameNode, mirroring a
plain deployment.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass

from .audit import AuditRecord, CentralAuditStore
from .authz import (
    AccessRequest,
    AuthzResult,
    DecisionSource,
    Policy,
    PolicyRepository,
    check_path_access,
    authorize,
    create_policy,
    set_policy_enabled,
)
from .clock import SimClock
from .cluster import Cluster
from .errors import (
    BadPassword,
    CertificateExpired,
    DuplicateEnforcer,
    FileExists,
    HandshakeFailure,
    InsufficientNodes,
    NoLiveReplica,
    NoSuchPath,
    ServiceNotPermitted,
    SessionExpired,
    SourceNotAllowed,
    TokenInvalid,
    Unauthorized,
    UnknownService,
    UnknownUser,
)
from .model import (
    ALLOW,
    OpKind,
    PermissionModel,
    PrincipalId,
    ServiceId,
    create_subject,
    effective_permissions,
    user,
)
from .tokens import (
    Credential,
    DelegationToken,
    Gateway,
    HandshakeAuthority,
    HandshakeTicket,
    Session,
    TokenService,
)


@dataclass(frozen=True)
class SessionCertificate:
    cert_id: str
    client_id: PrincipalId
    permitted_services: frozenset[ServiceId]
    issued_at: int
    lifetime_s: int


class Enforcer:
    """Per-NameNode decision point. Counts how often it is consulted."""

    def __init__(self, service_name: str, cluster: Cluster) -> None:
        self.service_name = service_name
        self._cluster = cluster
        self.authorize_calls = 0
        self.agents: dict[str, "Agent"] = {}

    @property
    def service_calls(self) -> int:
        return self._cluster.nn_call_counts.get(self.service_name, 0)


class Agent:
    """Per-DataNode (or other daemon) agent. Serve counts come straight
    from the simulator so nothing is double-booked."""

    def __init__(self, service_name: str, cluster: Cluster) -> None:
        self.service_name = service_name
        self._cluster = cluster

    @property
    def calls(self) -> int:
        return self._cluster.dn_serve_counts.get(self.service_name, 0)


class EnforcerRegistry:
    def __init__(self, cluster: Cluster) -> None:
        self._cluster = cluster
        self.enforcers: dict[str, Enforcer] = {}
        self.agents: dict[str, Agent] = {}

    def register(self, namenode_name: str, agent_names: list[str]) -> Enforcer:
        if namenode_name in self.enforcers:
            raise DuplicateEnforcer(namenode_name)
        if namenode_name not in self._cluster.namenodes:
            raise UnknownService(namenode_name)
        enforcer = Enforcer(namenode_name, self._cluster)
        for name in agent_names:
            agent = self.agents.get(name)
            if agent is None:
                agent = Agent(name, self._cluster)
                self.agents[name] = agent
            enforcer.agents[name] = agent
        self.enforcers[namenode_name] = enforcer
        return enforcer


@dataclass(frozen=True)
class ServiceCall:
    service: str
    op: OpKind
    path: str | None = None
    size_mb: float | None = None
    reader_node: str | None = None


@dataclass(frozen=True)
class ServiceResult:
    decision: str
    stage: str
    bytes_mb: float = 0.0
    elapsed_s: float = 0.0
    reason: str | None = None
    file_id: str | None = None


@dataclass
class BrokerSession:
    session_id: str
    session: Session
    subject_id: str
    ticket: HandshakeTicket
    dt: DelegationToken
    certificate: SessionCertificate


class Broker:
    def __init__(
        self,
        *,
        model: PermissionModel,
        repo: PolicyRepository,
        cluster: Cluster,
        gateway: Gateway,
        authority: HandshakeAuthority,
        token_service: TokenService,
        store: CentralAuditStore,
        clock: SimClock,
        geo: dict[str, str] | None = None,
        service_tags: dict[str, frozenset[str]] | None = None,
        default_reader_node: str | None = None,
        default_cert_lifetime_s: int = 3600,
        default_replication: int = 3,
    ) -> None:
        self.model = model
        self.repo = repo
        self.cluster = cluster
        self.gateway = gateway
        self.authority = authority
        self.token_service = token_service
        self.store = store
        self.clock = clock
        self.geo = geo or {}
        self.service_tags = service_tags or {}
        self.default_reader_node = default_reader_node
        self.default_cert_lifetime_s = default_cert_lifetime_s
        self.default_replication = default_replication
        self.registry = EnforcerRegistry(cluster)
        self.sessions: dict[str, BrokerSession] = {}
        self.handle_calls = 0
        self.direct_calls = 0
        self.failed_logins = 0
        self._cert_counter = 0
        self._lock = threading.RLock()

    # --- wiring -------------------------------------------------------------

    def register_enforcement(self, namenode_name: str, agent_names: list[str]) -> Enforcer:
        with self._lock:
            return self.registry.register(namenode_name, agent_names)

    def create_policy(self, policy: Policy) -> None:
        with self._lock:
            self.repo = create_policy(self.repo, policy)

    def set_policy_enabled(self, policy_id: str, flag: bool) -> None:
        with self._lock:
            self.repo = set_policy_enabled(self.repo, policy_id, flag)

    def make_directory(self, namespace_id: str, path: str, owner: str) -> None:
        with self._lock:
            self.cluster.mkdir(namespace_id, path, user(owner))

    # --- audit helpers ------------------------------------------------------

    def _record(
        self,
        *,
        client: str,
        source: str,
        service: str,
        op: str,
        path: str | None,
        decision: str,
        stage: str,
        enforcer_id: str,
    ) -> AuditRecord:
        return AuditRecord(
            timestamp=self.clock.now,
            client_id=client,
            source_addr=source,
            country=self.geo.get(source),
            service=service,
            op=op,
            path=path,
            decision=decision,
            stage=stage,
            enforcer_id=enforcer_id,
        )

    def _audit_central(self, **kw) -> None:
        self.store.append(self._record(**kw))

    # --- session establishment ----------------------------------------------

    def _make_certificate(self, client: PrincipalId) -> SessionCertificate:
        permitted = frozenset(p.service for p in effective_permissions(self.model, client))
        principals = frozenset({client}) | self.model.groups_of(client)
        lifetimes = [
            p.certificate_lifetime_s
            for p in self.repo.policies.values()
            if p.enabled and (p.principals & principals)
        ]
        self._cert_counter += 1
        return SessionCertificate(
            cert_id=f"cert{self._cert_counter:04d}",
            client_id=client,
            permitted_services=permitted,
            issued_at=self.clock.now,
            lifetime_s=min(lifetimes) if lifetimes else self.default_cert_lifetime_s,
        )

    def open_session(self, credential: Credential) -> tuple[str, SessionCertificate]:
        """Gateway login, handshake, delegation token, certificate. Failures
        are audited centrally and never touch an enforcer or a daemon."""
        with self._lock:
            try:
                sid = self.gateway.login(credential)
            except (UnknownUser, BadPassword, SourceNotAllowed):
                self.failed_logins += 1
                self._audit_central(
                    client=credential.username or "unknown",
                    source=credential.source_addr,
                    service="gateway",
                    op="login",
                    path=None,
                    decision="deny",
                    stage="gateway",
                    enforcer_id="gateway",
                )
                raise
            session = self.gateway.session(sid)
            try:
                ticket = self.authority.authenticate(session)
            except (HandshakeFailure, SessionExpired):
                self.failed_logins += 1
                self._audit_central(
                    client=credential.username,
                    source=credential.source_addr,
                    service="gateway",
                    op="login",
                    path=None,
                    decision="deny",
                    stage="handshake",
                    enforcer_id="gateway",
                )
                raise
            dt = self.token_service.issue_delegation_token(ticket, renewer=session.principal)
            self.model, subject_id = create_subject(self.model, session.principal)
            cert = self._make_certificate(session.principal)
            self.repo = self.repo.with_certificate(cert.cert_id, cert)
            self.sessions[sid] = BrokerSession(sid, session, subject_id, ticket, dt, cert)
            return sid, cert

    # --- brokered requests ----------------------------------------------------

    def _resource_tags(self, call: ServiceCall, tree) -> frozenset[str]:
        tags = frozenset(self.service_tags.get(call.service, frozenset()))
        if call.path is not None and tree is not None:
            node = tree.lookup(call.path)
            if node is not None:
                tags |= node.tags
        return tags

    def _issue_read_tokens(self, dt: DelegationToken, block_ids: tuple[str, ...]) -> dict:
        return {
            bid: self.token_service.issue_block_token(
                dt, bid, frozenset({OpKind.READ}), self.cluster.block_secret
            )
            for bid in block_ids
        }

    def handle_request(self, session_id: str, call: ServiceCall) -> ServiceResult:
        """Run the full brokered pipeline for one service call.

        Exactly one audit record is appended no matter where the call stops.
        Authorization denials come back as a ServiceResult with decision
        "deny"; stage failures (certificate, permitted set, token, service)
        raise, after auditing.
        """
        with self._lock:
            return self._handle_request(session_id, call)

    def _handle_request(self, session_id: str, call: ServiceCall) -> ServiceResult:
        self.handle_calls += 1
        now = self.clock.now
        bs = self.sessions.get(session_id)

        def audit(decision: str, stage: str, enforcer_id: str) -> None:
            self._audit_central(
                client=bs.session.principal.name if bs else "unknown",
                source=bs.session.source_addr if bs else "unknown",
                service=call.service,
                op=call.op.value,
                path=call.path,
                decision=decision,
                stage=stage,
                enforcer_id=enforcer_id,
            )

        if bs is None:
            audit("deny", "certificate", "broker")
            raise SessionExpired(f"unknown session {session_id}")
        cert = bs.certificate
        if now > cert.issued_at + cert.lifetime_s:
            audit("deny", "certificate", "broker")
            raise CertificateExpired(cert.cert_id)
        service = self.model.service_by_name(call.service)
        if service is None:
            audit("deny", "certificate", "broker")
            raise UnknownService(call.service)
        if service not in cert.permitted_services:
            audit("deny", "certificate", "broker")
            raise ServiceNotPermitted(call.service)

        nn_state = self.cluster.namenodes.get(call.service)
        tree = nn_state.tree if nn_state is not None else None
        enforcer_id = f"enforcer:{call.service}"
        enforcer = self.registry.enforcers.get(call.service)
        request = AccessRequest(
            subject_id=bs.subject_id,
            source_addr=bs.session.source_addr,
            service=service,
            path=call.path,
            op=call.op,
            at_time=now,
        )
        if enforcer is not None:
            enforcer.authorize_calls += 1
        try:
            result: AuthzResult = authorize(
                self.repo, self.model, tree, request, self._resource_tags(call, tree)
            )
        except NoSuchPath:
            audit("deny", "service", enforcer_id)
            raise
        if not result.decision.allowed:
            audit("deny", result.source.value, enforcer_id)
            return ServiceResult(
                decision="deny",
                stage=result.source.value,
                reason=result.decision.reason,
            )

        # Broker-side authentication work for this call: one certificate
        # check, plus block-token issuance for reads on a secure cluster.
        broker_auth_events = 1
        try:
            if call.path is None or nn_state is None:
                elapsed = self.cluster.service_ping(call.service, dt=bs.dt)
                bytes_mb, file_id = 0.0, None
            elif call.op is OpKind.WRITE:
                if call.size_mb is None:
                    raise ValueError("write call requires size_mb")
                wr = self.cluster.write_file(
                    call.service,
                    call.path,
                    call.size_mb,
                    bs.session.principal,
                    replication=self.default_replication,
                    writer_node=call.reader_node or self.default_reader_node,
                    dt=bs.dt,
                )
                elapsed, bytes_mb, file_id = wr.elapsed_s, call.size_mb, wr.file_id
            elif call.op is OpKind.READ:
                block_ids = self.cluster.file_blocks(call.service, call.path)
                tokens = None
                if self.cluster.secure_mode:
                    tokens = self._issue_read_tokens(bs.dt, block_ids)
                    broker_auth_events += len(block_ids)
                rr = self.cluster.read_file(
                    call.reader_node or self.default_reader_node or nn_state.node_id,
                    call.service,
                    call.path,
                    block_tokens=tokens,
                    dt=bs.dt,
                )
                elapsed, bytes_mb, file_id = rr.elapsed_s, rr.bytes_mb, None
            else:
                elapsed = self.cluster.service_ping(call.service, dt=bs.dt)
                bytes_mb, file_id = 0.0, None
        except TokenInvalid:
            audit("deny", "token", enforcer_id)
            raise
        except (FileExists, NoSuchPath, NoLiveReplica, InsufficientNodes):
            audit("deny", "service", enforcer_id)
            raise

        elapsed += self.cluster.per_call_auth_latency_s * broker_auth_events
        audit("allow", result.source.value, enforcer_id)
        return ServiceResult(
            decision="allow",
            stage=result.source.value,
            bytes_mb=bytes_mb,
            elapsed_s=elapsed,
            file_id=file_id,
        )

    # --- native path -----------------------------------------------------------

    def direct_request(self, call: ServiceCall, username: str) -> ServiceResult:
        """Native access: no gateway, no handshake, no central policy. The
        target NameNode still applies its local ACL and logs locally. Only
        valid on a non-secure cluster."""
        with self._lock:
            return self._direct_request(call, username)

    def _direct_request(self, call: ServiceCall, username: str) -> ServiceResult:
        if self.cluster.secure_mode:
            raise ValueError("direct access requires a non-secure cluster")
        nn = self.cluster.namenode(call.service)
        u = user(username)
        self.direct_calls += 1

        def audit_local(decision: str, stage: str) -> None:
            nn.audit_log.append(
                self._record(
                    client=username,
                    source="local",
                    service=call.service,
                    op=call.op.value,
                    path=call.path,
                    decision=decision,
                    stage=stage,
                    enforcer_id=call.service,
                )
            )

        try:
            if call.path is not None:
                d = check_path_access(self.model, nn.tree, call.path, u, call.op)
            else:
                d = ALLOW
        except NoSuchPath:
            audit_local("deny", "service")
            raise
        if not d.allowed:
            audit_local("deny", "local-acl")
            raise Unauthorized(d.reason or "denied")

        try:
            if call.path is None:
                elapsed = self.cluster.service_ping(call.service)
                bytes_mb, file_id = 0.0, None
            elif call.op is OpKind.WRITE:
                if call.size_mb is None:
                    raise ValueError("write call requires size_mb")
                wr = self.cluster.write_file(
                    call.service,
                    call.path,
                    call.size_mb,
                    u,
                    replication=self.default_replication,
                    writer_node=call.reader_node or self.default_reader_node,
                )
                elapsed, bytes_mb, file_id = wr.elapsed_s, call.size_mb, wr.file_id
            elif call.op is OpKind.READ:
                rr = self.cluster.read_file(
                    call.reader_node or self.default_reader_node or nn.node_id,
                    call.service,
                    call.path,
                )
                elapsed, bytes_mb, file_id = rr.elapsed_s, rr.bytes_mb, None
            else:
                elapsed = self.cluster.service_ping(call.service)
                bytes_mb, file_id = 0.0, None
        except (FileExists, NoSuchPath, NoLiveReplica, InsufficientNodes):
            audit_local("deny", "service")
            raise

        audit_local("allow", "local-acl")
        return ServiceResult(
            decision="allow",
            stage="local-acl",
            bytes_mb=bytes_mb,
            elapsed_s=elapsed,
            file_id=file_id,
        )
