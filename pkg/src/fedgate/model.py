"""Service-level permission model.

Holds the federation's users, groups, subjects, registered services, group
memberships and direct permission assignments, and answers the service
access question: may subject s perform op on service hs?

Models are immutable snapshots. Every mutating operation returns a new
model; decisions are pure functions over a snapshot and safe to evaluate
concurrently. All iteration that can influence output is sorted so runs
are reproducible regardless of hash seeds.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from enum import Enum
from typing import Iterable, Mapping, Union

from .errors import (
    DuplicateEntry,
    MaskExceedsCreator,
    MissingEntry,
    UnknownPrincipal,
    UnknownService,
    UnknownSubject,
)


class PrincipalKind(Enum):
    USER = "user"
    GROUP = "group"


@dataclass(frozen=True)
class PrincipalId:
    """A user or group identity. Names are case-sensitive exact-match keys."""

    kind: PrincipalKind
    name: str

    def __post_init__(self) -> None:
        if not self.name:
            raise ValueError("principal name must be non-empty")

    def __str__(self) -> str:
        return f"{self.kind.value}:{self.name}"


def user(name: str) -> PrincipalId:
    return PrincipalId(PrincipalKind.USER, name)


def group(name: str) -> PrincipalId:
    return PrincipalId(PrincipalKind.GROUP, name)


def parse_principal(text: str) -> PrincipalId:
    """Parse "user:alice" / "group:analysts" notation."""
    kind, sep, name = text.partition(":")
    if not sep or kind not in ("user", "group") or not name:
        raise ValueError(f"bad principal spec: {text!r}")
    return PrincipalId(PrincipalKind(kind), name)


class ServiceKind(Enum):
    NAMENODE = "namenode"
    DATANODE = "datanode"
    RESOURCE_MANAGER = "resourcemanager"
    NODE_MANAGER = "nodemanager"
    GATEWAY = "gateway"
    OTHER = "other"


@dataclass(frozen=True)
class ServiceId:
    kind: ServiceKind
    name: str


class OpKind(Enum):
    READ = "read"
    WRITE = "write"
    EXECUTE = "execute"
    ADMIN = "admin"


# Fixed iteration order for the closed op enumeration.
OPS_ORDERED = (OpKind.READ, OpKind.WRITE, OpKind.EXECUTE, OpKind.ADMIN)


@dataclass(frozen=True)
class Permission:
    """One (service, operation) capability."""

    service: ServiceId
    op: OpKind


def principal_key(p: PrincipalId) -> tuple[str, str]:
    return (p.kind.value, p.name)


def permission_key(p: Permission) -> tuple[str, str, str]:
    return (p.service.kind.value, p.service.name, p.op.value)


@dataclass(frozen=True)
class SubjectGrant:
    """Creator and granted mask of one subject; mask None means ALL."""

    creator: PrincipalId
    granted_mask: frozenset[Permission] | None = None


@dataclass(frozen=True)
class Decision:
    allowed: bool
    reason: str | None = None


ALLOW = Decision(True)
REASON_NO_ASSIGNMENT = "no-assignment"
REASON_MASKED_OUT = "masked-out"


def deny(reason: str) -> Decision:
    return Decision(False, reason)


@dataclass(frozen=True)
class AddMembership:
    user: PrincipalId
    group: PrincipalId


@dataclass(frozen=True)
class RemoveMembership:
    user: PrincipalId
    group: PrincipalId


@dataclass(frozen=True)
class AddAssignment:
    principal: PrincipalId
    permission: Permission


@dataclass(frozen=True)
class RemoveAssignment:
    principal: PrincipalId
    permission: Permission


Edit = Union[AddMembership, RemoveMembership, AddAssignment, RemoveAssignment]


@dataclass(frozen=True)
class PermissionModel:
    users: frozenset[PrincipalId]
    groups: frozenset[PrincipalId]
    services: frozenset[ServiceId]
    memberships: frozenset[tuple[PrincipalId, PrincipalId]]
    assignments: frozenset[tuple[PrincipalId, Permission]]
    subjects: Mapping[str, SubjectGrant]

    def principal_exists(self, p: PrincipalId) -> bool:
        return p in self.users or p in self.groups

    def service_by_name(self, name: str) -> ServiceId | None:
        for s in sorted(self.services, key=lambda s: (s.kind.value, s.name)):
            if s.name == name:
                return s
        return None

    def groups_of(self, u: PrincipalId) -> frozenset[PrincipalId]:
        return frozenset(g for (m, g) in self.memberships if m == u)


def build_model(
    users: Iterable[PrincipalId] = (),
    groups: Iterable[PrincipalId] = (),
    services: Iterable[ServiceId] = (),
    memberships: Iterable[tuple[PrincipalId, PrincipalId]] = (),
    assignments: Iterable[tuple[PrincipalId, Permission]] = (),
) -> PermissionModel:
    """Construct a validated model snapshot."""
    model = PermissionModel(
        users=frozenset(users),
        groups=frozenset(groups),
        services=frozenset(services),
        memberships=frozenset(),
        assignments=frozenset(),
        subjects={},
    )
    for u in model.users:
        if u.kind is not PrincipalKind.USER:
            raise ValueError(f"{u} registered as a user")
    for g in model.groups:
        if g.kind is not PrincipalKind.GROUP:
            raise ValueError(f"{g} registered as a group")
    names = [s.name for s in model.services]
    if len(names) != len(set(names)):
        raise ValueError("service names must be unique cluster-wide")
    edits: list[Edit] = [AddMembership(u, g) for (u, g) in memberships]
    edits += [AddAssignment(p, perm) for (p, perm) in assignments]
    return update_assignments(model, edits)


def update_assignments(model: PermissionModel, edits: Iterable[Edit]) -> PermissionModel:
    """Apply membership/assignment edits atomically (all-or-nothing)."""
    memberships = set(model.memberships)
    assignments = set(model.assignments)
    for e in edits:
        if isinstance(e, (AddMembership, RemoveMembership)):
            if e.user not in model.users:
                raise UnknownPrincipal(str(e.user))
            if e.group not in model.groups:
                raise UnknownPrincipal(str(e.group))
            pair = (e.user, e.group)
            if isinstance(e, AddMembership):
                if pair in memberships:
                    raise DuplicateEntry(f"membership {e.user} in {e.group}")
                memberships.add(pair)
            else:
                if pair not in memberships:
                    raise MissingEntry(f"membership {e.user} in {e.group}")
                memberships.remove(pair)
        elif isinstance(e, (AddAssignment, RemoveAssignment)):
            if not model.principal_exists(e.principal):
                raise UnknownPrincipal(str(e.principal))
            if e.permission.service not in model.services:
                raise UnknownService(e.permission.service.name)
            pair = (e.principal, e.permission)
            if isinstance(e, AddAssignment):
                if pair in assignments:
                    raise DuplicateEntry(f"assignment {e.principal} -> {e.permission}")
                assignments.add(pair)
            else:
                if pair not in assignments:
                    raise MissingEntry(f"assignment {e.principal} -> {e.permission}")
                assignments.remove(pair)
        else:
            raise TypeError(f"not an edit: {e!r}")
    return dataclasses.replace(
        model, memberships=frozenset(memberships), assignments=frozenset(assignments)
    )


def hs_prms(model: PermissionModel, entity: PrincipalId) -> frozenset[Permission]:
    """Permissions directly assigned to a user or group. No group expansion."""
    if not model.principal_exists(entity):
        raise UnknownPrincipal(str(entity))
    return frozenset(p for (x, p) in model.assignments if x == entity)


def effective_permissions(model: PermissionModel, u: PrincipalId) -> frozenset[Permission]:
    """Direct permissions of the user plus those of every group it belongs to."""
    if u.kind is not PrincipalKind.USER or u not in model.users:
        raise UnknownPrincipal(str(u))
    effective = set(hs_prms(model, u))
    for g in model.groups_of(u):
        effective |= hs_prms(model, g)
    return frozenset(effective)


def create_subject(
    model: PermissionModel,
    creator: PrincipalId,
    granted_mask: Iterable[Permission] | None = None,
    subject_id: str | None = None,
) -> tuple[PermissionModel, str]:
    """Register a subject acting for `creator`.

    granted_mask None grants everything the creator can do; an explicit
    mask must be a subset of the creator's effective permissions right now.
    Returns the new snapshot and the subject id.
    """
    eff = effective_permissions(model, creator)
    mask: frozenset[Permission] | None
    if granted_mask is None:
        mask = None
    else:
        mask = frozenset(granted_mask)
        extra = mask - eff
        if extra:
            worst = sorted(extra, key=permission_key)[0]
            raise MaskExceedsCreator(
                f"{creator} lacks {worst.service.name}/{worst.op.value}"
            )
    sid = subject_id if subject_id is not None else f"s{len(model.subjects) + 1:04d}"
    if sid in model.subjects:
        raise DuplicateEntry(f"subject {sid}")
    subjects = dict(model.subjects)
    subjects[sid] = SubjectGrant(creator, mask)
    return dataclasses.replace(model, subjects=subjects), sid


def decide_service_access(
    model: PermissionModel, subject_id: str, service: ServiceId, op: OpKind
) -> Decision:
    """Allow iff the subject's creator effectively holds (service, op) and the
    subject's mask admits it. The mask is re-checked against the creator's
    current effective permissions, so revocation takes effect immediately.
    """
    grant = model.subjects.get(subject_id)
    if grant is None:
        raise UnknownSubject(subject_id)
    if service not in model.services:
        raise UnknownService(service.name)
    wanted = Permission(service, op)
    if wanted not in effective_permissions(model, grant.creator):
        return deny(REASON_NO_ASSIGNMENT)
    if grant.granted_mask is not None and wanted not in grant.granted_mask:
        return deny(REASON_MASKED_OUT)
    return ALLOW
