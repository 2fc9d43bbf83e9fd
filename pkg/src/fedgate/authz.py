"""Central policy authority and the combined authorization pipeline.

Decision precedence for a request: the service-level permission model is
the gate; an enabled central policy (deny-overrides) beats the local ACL;
the local ACL decides only when no central policy matches.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from enum import Enum
from typing import Mapping

from .errors import (
    DuplicatePolicyId,
    MalformedConstraint,
    NoSuchPath,
    UnknownPolicy,
    UnknownPrincipal,
)
from .fs import AclEntry, Effect, FileAttrs, NamespaceTree, TreeNode, split_path
from .model import (
    ALLOW,
    Decision,
    OpKind,
    PermissionModel,
    PrincipalId,
    PrincipalKind,
    ServiceId,
    decide_service_access,
    deny,
    principal_key,
)


@dataclass(frozen=True)
class ResourceMatcher:
    """Selects resources by exact service name, path glob, or tag.

    Path globs use '*' for one component and '**' for any depth. All
    selectors that are set must match.
    """

    service: str | None = None
    path: str | None = None
    tag: str | None = None

    def matches(self, service_name: str, path: str | None, tags: frozenset[str]) -> bool:
        if self.service is not None and self.service != service_name:
            return False
        if self.path is not None:
            if path is None or not glob_match(self.path, path):
                return False
        if self.tag is not None and self.tag not in tags:
            return False
        return True

    def specificity(self) -> int:
        """Higher wins ties among same-effect policies."""
        score = 0
        if self.service is not None:
            score += 1
        if self.tag is not None:
            score += 2
        if self.path is not None:
            score += 4
            if "*" not in self.path:
                score += 4
        return score


def glob_match(pattern: str, path: str) -> bool:
    pparts = [p for p in pattern.split("/") if p]
    parts = split_path(path)
    return _glob_parts(pparts, parts)


def _glob_parts(pat: list[str], parts: list[str]) -> bool:
    if not pat:
        return not parts
    head, rest = pat[0], pat[1:]
    if head == "**":
        # Any depth, including zero components.
        for skip in range(len(parts) + 1):
            if _glob_parts(rest, parts[skip:]):
                return True
        return False
    if not parts:
        return False
    if head == "*" or head == parts[0]:
        return _glob_parts(rest, parts[1:])
    return False


@dataclass(frozen=True)
class PolicyConstraints:
    time_window: tuple[int, int] | None = None
    source_predicate: frozenset[str] | None = None


@dataclass(frozen=True)
class Policy:
    policy_id: str
    principals: frozenset[PrincipalId]
    resources: ResourceMatcher
    ops: frozenset[OpKind]
    effect: Effect
    enabled: bool = True
    constraints: PolicyConstraints | None = None
    certificate_lifetime_s: int = 3600
    start_date: int = 0


def validate_policy(policy: Policy) -> None:
    if not policy.ops:
        raise MalformedConstraint(f"{policy.policy_id}: ops must be non-empty")
    if policy.certificate_lifetime_s <= 0:
        raise MalformedConstraint(f"{policy.policy_id}: certificateLifetime must be > 0")
    c = policy.constraints
    if c is not None and c.time_window is not None:
        start, end = c.time_window
        if start > end:
            raise MalformedConstraint(f"{policy.policy_id}: timeWindow start > end")


@dataclass(frozen=True)
class PolicyRepository:
    """Immutable snapshot of central policies plus issued certificates."""

    policies: Mapping[str, Policy]
    issued_certificates: Mapping[str, object]
    audit_sink: object | None = None

    @classmethod
    def empty(cls, audit_sink: object | None = None) -> "PolicyRepository":
        return cls(policies={}, issued_certificates={}, audit_sink=audit_sink)

    def with_certificate(self, cert_id: str, cert: object) -> "PolicyRepository":
        certs = dict(self.issued_certificates)
        certs[cert_id] = cert
        return dataclasses.replace(self, issued_certificates=certs)


def create_policy(repo: PolicyRepository, policy: Policy) -> PolicyRepository:
    if policy.policy_id in repo.policies:
        raise DuplicatePolicyId(policy.policy_id)
    validate_policy(policy)
    policies = dict(repo.policies)
    policies[policy.policy_id] = policy
    return dataclasses.replace(repo, policies=policies)


def set_policy_enabled(repo: PolicyRepository, policy_id: str, flag: bool) -> PolicyRepository:
    existing = repo.policies.get(policy_id)
    if existing is None:
        raise UnknownPolicy(policy_id)
    policies = dict(repo.policies)
    policies[policy_id] = dataclasses.replace(existing, enabled=flag)
    return dataclasses.replace(repo, policies=policies)


@dataclass(frozen=True)
class AccessRequest:
    """One access attempt flowing through the decision pipeline."""

    subject_id: str
    source_addr: str
    service: ServiceId
    path: str | None
    op: OpKind
    at_time: int

    def __post_init__(self) -> None:
        if self.path is not None:
            parts = self.path.split("/")
            if not self.path.startswith("/") or any(p in (".", "..") for p in parts):
                raise ValueError(f"request path must be absolute and normalized: {self.path!r}")


@dataclass(frozen=True)
class CentralVerdict:
    decision: Decision
    policy_id: str


def _policy_matches(
    policy: Policy,
    principals: frozenset[PrincipalId],
    request: AccessRequest,
    resource_tags: frozenset[str],
) -> bool:
    if not policy.enabled:
        return False
    if request.at_time < policy.start_date:
        return False
    if not (policy.principals & principals):
        return False
    if request.op not in policy.ops:
        return False
    if not policy.resources.matches(request.service.name, request.path, resource_tags):
        return False
    c = policy.constraints
    if c is not None:
        if c.time_window is not None:
            start, end = c.time_window
            if not (start <= request.at_time <= end):
                return False
        if c.source_predicate is not None and request.source_addr not in c.source_predicate:
            return False
    return True


def evaluate_central(
    repo: PolicyRepository,
    model: PermissionModel,
    request: AccessRequest,
    resource_tags: frozenset[str] = frozenset(),
) -> CentralVerdict | None:
    """Match enabled policies against the request; None when nothing matches.

    The requesting principal set is the subject's creator plus that user's
    groups. Deny-effect matches dominate; ties break on matcher specificity
    then smallest policy id.
    """
    grant = model.subjects.get(request.subject_id)
    if grant is None:
        raise UnknownPrincipal(f"subject {request.subject_id}")
    principals = frozenset({grant.creator}) | model.groups_of(grant.creator)

    matching = [
        p
        for _, p in sorted(repo.policies.items())
        if _policy_matches(p, principals, request, resource_tags)
    ]
    if not matching:
        return None
    denies = [p for p in matching if p.effect is Effect.DENY]
    pool = denies if denies else matching
    winner = min(pool, key=lambda p: (-p.resources.specificity(), p.policy_id))
    if denies:
        return CentralVerdict(deny(f"policy:{winner.policy_id}"), winner.policy_id)
    return CentralVerdict(ALLOW, winner.policy_id)


def _triple_decides(triple: frozenset[OpKind], op: OpKind, who: str, path: str | None) -> Decision:
    if op in triple:
        return ALLOW
    return deny(f"{who}-mode denies {op.value}" + (f" on {path}" if path else ""))


def evaluate_acl(
    model: PermissionModel,
    attrs: FileAttrs,
    u: PrincipalId,
    op: OpKind,
    path: str | None = None,
) -> Decision:
    """POSIX-style evaluation: owner triple, then group triple, then extra
    ACL entries (deny-overrides), then the other triple."""
    if u.kind is not PrincipalKind.USER or u not in model.users:
        raise UnknownPrincipal(str(u))
    if u == attrs.owner:
        return _triple_decides(attrs.mode.owner, op, "owner", path)
    user_groups = model.groups_of(u)
    if attrs.group in user_groups:
        return _triple_decides(attrs.mode.group, op, "group", path)

    def entry_applies(entry: AclEntry) -> bool:
        return entry.principal == u or entry.principal in user_groups

    applicable = [e for e in attrs.extra_acl if entry_applies(e) and op in e.ops]
    if any(e.effect is Effect.DENY for e in applicable):
        return deny(f"acl denies {op.value}" + (f" on {path}" if path else ""))
    if any(e.effect is Effect.ALLOW for e in applicable):
        return ALLOW
    return _triple_decides(attrs.mode.other, op, "other", path)


def check_path_access(
    model: PermissionModel,
    tree: NamespaceTree,
    path: str,
    u: PrincipalId,
    op: OpKind,
) -> Decision:
    """Traversal rule: Execute on every ancestor directory, op on the final
    component. A missing final component is tolerated for Write (checked
    against the parent directory: creation); otherwise NoSuchPath.
    """
    ancestors, final_name, final_node = tree.walk_to(path)
    for abs_path, node in ancestors:
        d = evaluate_acl(model, node.attrs, u, OpKind.EXECUTE, abs_path)
        if not d.allowed:
            return deny(f"traversal denied at {abs_path}: {d.reason}")
    if final_name == "/":
        return evaluate_acl(model, tree.root.attrs, u, op, "/")
    if final_node is None:
        if op is OpKind.WRITE:
            parent_path, parent = ancestors[-1]
            return evaluate_acl(model, parent.attrs, u, OpKind.WRITE, parent_path)
        raise NoSuchPath(path)
    return evaluate_acl(model, final_node.attrs, u, op, path)


class DecisionSource(Enum):
    SERVICE_MODEL = "service-model"
    CENTRAL_POLICY = "central-policy"
    LOCAL_ACL = "local-acl"


@dataclass(frozen=True)
class AuthzResult:
    decision: Decision
    source: DecisionSource
    policy_id: str | None = None


def authorize(
    repo: PolicyRepository,
    model: PermissionModel,
    tree: NamespaceTree | None,
    request: AccessRequest,
    resource_tags: frozenset[str] = frozenset(),
) -> AuthzResult:
    """Full pipeline: service-model gate, then central policies, then ACL.

    A pathless request that passes the gate and matches no central policy
    is allowed (service-level authorization is exactly the gate).
    """
    gate = decide_service_access(model, request.subject_id, request.service, request.op)
    if not gate.allowed:
        return AuthzResult(gate, DecisionSource.SERVICE_MODEL)
    central = evaluate_central(repo, model, request, resource_tags)
    if central is not None:
        return AuthzResult(central.decision, DecisionSource.CENTRAL_POLICY, central.policy_id)
    if request.path is not None:
        if tree is None:
            raise ValueError("path request requires a namespace tree")
        creator = model.subjects[request.subject_id].creator
        local = check_path_access(model, tree, request.path, creator, request.op)
        return AuthzResult(local, DecisionSource.LOCAL_ACL)
    return AuthzResult(ALLOW, DecisionSource.LOCAL_ACL)
