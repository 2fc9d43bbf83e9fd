"""Authentication chain: gateway credential check, simulated three-message
handshake, delegation tokens with renewal, and per-block access tokens.

Every token serializes to a canonical byte layout (fixed field order,
length-prefixed strings, big-endian integers, MAC last) so tampering tests
are bit-reproducible. MACs are HMAC-SHA256 over the payload bytes.
"""

from __future__ import annotations

import dataclasses
import hashlib
import hmac
import random
import struct
from dataclasses import dataclass, field
from enum import Enum

from .clock import NodeClock, SimClock
from .errors import (
    BadPassword,
    HandshakeFailure,
    InvalidMac,
    MaxLifetimeExceeded,
    NotRenewer,
    SessionExpired,
    SourceNotAllowed,
    TicketExpired,
    TokenExpired,
    UnknownUser,
)
from .model import OpKind, PrincipalId, user

MAC_LEN = 32
DEFAULT_SECRET_LEN = 32


def _enc_str(s: str) -> bytes:
    raw = s.encode("utf-8")
    return struct.pack(">I", len(raw)) + raw


def _enc_int(v: int) -> bytes:
    return struct.pack(">q", int(v))


def _enc_ops(ops: frozenset[OpKind]) -> bytes:
    names = sorted(op.value for op in ops)
    return struct.pack(">I", len(names)) + b"".join(_enc_str(n) for n in names)


def compute_mac(secret: bytes, payload: bytes) -> bytes:
    return hmac.new(secret, payload, hashlib.sha256).digest()


def password_hash(password: str) -> bytes:
    return hashlib.sha256(password.encode("utf-8")).digest()


class TokenStatus(Enum):
    VALID = "valid"
    EXPIRED = "expired"
    FORGED = "forged"


@dataclass(frozen=True)
class HandshakeTicket:
    principal: PrincipalId
    issued_at: int
    lifetime_s: int
    mac: bytes

    @property
    def expires_at(self) -> int:
        return self.issued_at + self.lifetime_s

    def payload_bytes(self) -> bytes:
        return (
            _enc_str("ticket")
            + _enc_str(self.principal.name)
            + _enc_int(self.issued_at)
            + _enc_int(self.lifetime_s)
        )

    def to_bytes(self) -> bytes:
        return self.payload_bytes() + self.mac


@dataclass(frozen=True)
class DelegationToken:
    owner: PrincipalId
    renewer: PrincipalId | None
    issued_at: int
    current_expiry: int
    max_lifetime_s: int
    sequence: int
    mac: bytes

    @property
    def expires_at(self) -> int:
        return self.current_expiry

    def payload_bytes(self) -> bytes:
        return (
            _enc_str("delegation")
            + _enc_str(self.owner.name)
            + _enc_str(self.renewer.name if self.renewer else "")
            + _enc_int(self.issued_at)
            + _enc_int(self.current_expiry)
            + _enc_int(self.max_lifetime_s)
            + _enc_int(self.sequence)
        )

    def to_bytes(self) -> bytes:
        return self.payload_bytes() + self.mac


@dataclass(frozen=True)
class BlockToken:
    block_id: str
    modes: frozenset[OpKind]
    expiry: int
    mac: bytes

    @property
    def expires_at(self) -> int:
        return self.expiry

    def payload_bytes(self) -> bytes:
        return _enc_str("block") + _enc_str(self.block_id) + _enc_ops(self.modes) + _enc_int(self.expiry)

    def to_bytes(self) -> bytes:
        return self.payload_bytes() + self.mac


Token = HandshakeTicket | DelegationToken | BlockToken


def validate_token(token: Token, secret: bytes, validator_clock: NodeClock | SimClock) -> TokenStatus:
    """Forged beats expired: a bad MAC means nothing else can be trusted."""
    if not hmac.compare_digest(compute_mac(secret, token.payload_bytes()), token.mac):
        return TokenStatus.FORGED
    if validator_clock.now > token.expires_at:
        return TokenStatus.EXPIRED
    return TokenStatus.VALID


@dataclass(frozen=True)
class TokenConfig:
    ticket_lifetime_s: int = 36000          # 10 h
    renew_interval_s: int = 86400           # 24 h
    max_lifetime_s: int = 604800            # 7 d
    block_token_lifetime_s: int = 3600
    session_lifetime_s: int = 36000


@dataclass(frozen=True)
class Credential:
    username: str
    password: str
    source_addr: str


@dataclass(frozen=True)
class HostEntry:
    password_hash: bytes
    sources: frozenset[str]


class HostTable:
    """Username -> (password hash, allowed source addresses)."""

    def __init__(self) -> None:
        self.entries: dict[str, HostEntry] = {}

    def add(self, username: str, password: str, sources: list[str] | tuple[str, ...]) -> None:
        if not username:
            raise ValueError("username must be non-empty")
        self.entries[username] = HostEntry(password_hash(password), frozenset(sources))

    def verify(self, credential: Credential) -> HostEntry:
        entry = self.entries.get(credential.username)
        if entry is None:
            raise UnknownUser(credential.username)
        if not hmac.compare_digest(entry.password_hash, password_hash(credential.password)):
            raise BadPassword(credential.username)
        if credential.source_addr not in entry.sources:
            raise SourceNotAllowed(f"{credential.username} from {credential.source_addr}")
        return entry


@dataclass
class Session:
    session_id: str
    principal: PrincipalId
    source_addr: str
    opened_at: int
    lifetime_s: int
    transcript: list[tuple[str, bytes]] = field(default_factory=list)
    authenticated: bool = False

    def expired(self, now: int) -> bool:
        return now > self.opened_at + self.lifetime_s


class Gateway:
    """External entry point. Failed logins never create a session, so no
    downstream daemon sees any traffic for them."""

    def __init__(self, host_table: HostTable, clock: SimClock, config: TokenConfig) -> None:
        self.host_table = host_table
        self.clock = clock
        self.config = config
        self.sessions: dict[str, Session] = {}
        self._counter = 0

    def login(self, credential: Credential) -> str:
        self.host_table.verify(credential)
        self._counter += 1
        sid = f"sess{self._counter:04d}"
        self.sessions[sid] = Session(
            session_id=sid,
            principal=user(credential.username),
            source_addr=credential.source_addr,
            opened_at=self.clock.now,
            lifetime_s=self.config.session_lifetime_s,
        )
        return sid

    def session(self, session_id: str) -> Session:
        s = self.sessions.get(session_id)
        if s is None:
            raise SessionExpired(f"unknown session {session_id}")
        if s.expired(self.clock.now):
            raise SessionExpired(session_id)
        return s


class HandshakeAuthority:
    """Simulated three-message exchange: request, nonce challenge, keyed
    proof. The proof key is the client's password hash from the host table,
    so only the credential holder can finish."""

    def __init__(
        self,
        secret: bytes,
        host_table: HostTable,
        clock: SimClock,
        config: TokenConfig,
        rng: random.Random | None = None,
    ) -> None:
        if len(secret) < 16:
            raise ValueError("authority secret too short")
        self.secret = secret
        self.host_table = host_table
        self.clock = clock
        self.config = config
        self.rng = rng or random.Random(0)
        self._pending: dict[str, bytes] = {}

    def begin(self, session: Session) -> bytes:
        nonce = self.rng.getrandbits(128).to_bytes(16, "big")
        session.transcript.append(("auth-request", session.principal.name.encode()))
        session.transcript.append(("challenge", nonce))
        self._pending[session.session_id] = nonce
        return nonce

    def client_proof(self, session: Session, nonce: bytes) -> bytes:
        entry = self.host_table.entries.get(session.principal.name)
        if entry is None:
            raise UnknownUser(session.principal.name)
        return compute_mac(entry.password_hash, nonce)

    def complete(self, session: Session, proof: bytes) -> HandshakeTicket:
        nonce = self._pending.pop(session.session_id, None)
        if nonce is None:
            raise HandshakeFailure("no challenge outstanding")
        session.transcript.append(("proof", proof))
        expected = self.client_proof(session, nonce)
        if not hmac.compare_digest(expected, proof):
            raise HandshakeFailure(session.principal.name)
        session.authenticated = True
        now = self.clock.now
        payload_ticket = HandshakeTicket(session.principal, now, self.config.ticket_lifetime_s, b"")
        mac = compute_mac(self.secret, payload_ticket.payload_bytes())
        return dataclasses.replace(payload_ticket, mac=mac)

    def authenticate(self, session: Session) -> HandshakeTicket:
        nonce = self.begin(session)
        return self.complete(session, self.client_proof(session, nonce))


class TokenService:
    """Delegation and block token issuer for one authority (an NN)."""

    def __init__(self, issuer_id: str, secret: bytes, clock: NodeClock | SimClock, config: TokenConfig) -> None:
        self.issuer_id = issuer_id
        self.secret = secret
        self.clock = clock
        self.config = config
        self._sequence = 0

    def _mac(self, payload: bytes, secret: bytes | None = None) -> bytes:
        return compute_mac(secret if secret is not None else self.secret, payload)

    def issue_delegation_token(self, ticket: HandshakeTicket, renewer: PrincipalId | None = None) -> DelegationToken:
        status = validate_token(ticket, self.secret, self.clock)
        if status is TokenStatus.FORGED:
            raise InvalidMac("handshake ticket")
        if status is TokenStatus.EXPIRED:
            raise TicketExpired(ticket.principal.name)
        now = self.clock.now
        self._sequence += 1
        dt = DelegationToken(
            owner=ticket.principal,
            renewer=renewer,
            issued_at=now,
            current_expiry=min(now + self.config.renew_interval_s, now + self.config.max_lifetime_s),
            max_lifetime_s=self.config.max_lifetime_s,
            sequence=self._sequence,
            mac=b"",
        )
        return dataclasses.replace(dt, mac=self._mac(dt.payload_bytes()))

    def renew_delegation_token(self, dt: DelegationToken, renewer: PrincipalId) -> DelegationToken:
        if not hmac.compare_digest(self._mac(dt.payload_bytes()), dt.mac):
            raise InvalidMac("delegation token")
        if dt.renewer is None or renewer != dt.renewer:
            raise NotRenewer(renewer.name)
        now = self.clock.now
        hard_stop = dt.issued_at + dt.max_lifetime_s
        if now > hard_stop:
            raise MaxLifetimeExceeded(f"sequence {dt.sequence}")
        if now > dt.current_expiry:
            raise TokenExpired(f"sequence {dt.sequence}")
        renewed = dataclasses.replace(
            dt,
            current_expiry=min(now + self.config.renew_interval_s, hard_stop),
            mac=b"",
        )
        return dataclasses.replace(renewed, mac=self._mac(renewed.payload_bytes()))

    def issue_block_token(
        self,
        dt: DelegationToken,
        block_id: str,
        modes: frozenset[OpKind] | set[OpKind],
        shared_secret: bytes,
    ) -> BlockToken:
        if not modes:
            raise ValueError("block token modes must be non-empty")
        status = validate_token(dt, self.secret, self.clock)
        if status is TokenStatus.FORGED:
            raise InvalidMac("delegation token")
        if status is TokenStatus.EXPIRED:
            raise TokenExpired(f"sequence {dt.sequence}")
        token = BlockToken(
            block_id=block_id,
            modes=frozenset(modes),
            expiry=self.clock.now + self.config.block_token_lifetime_s,
            mac=b"",
        )
        return dataclasses.replace(token, mac=compute_mac(shared_secret, token.payload_bytes()))
