import random

import pytest

from fedgate.model import (
    OPS_ORDERED,
    OpKind,
    Permission,
    PermissionModel,
    ServiceId,
    ServiceKind,
    build_model,
    create_subject,
    group,
    user,
)


def make_services(n: int) -> list[ServiceId]:
    kinds = [ServiceKind.NAMENODE, ServiceKind.DATANODE, ServiceKind.OTHER]
    return [ServiceId(kinds[i % len(kinds)], f"svc{i}") for i in range(n)]


def random_model(rng: random.Random, *, max_users=10, max_groups=5, max_services=6):
    """Random instance within the exhaustive-check bound, subjects included."""
    users = [user(f"u{i}") for i in range(rng.randint(1, max_users))]
    groups = [group(f"g{i}") for i in range(rng.randint(0, max_groups))]
    services = make_services(rng.randint(1, max_services))
    memberships = [
        (u, g) for u in users for g in groups if rng.random() < 0.4
    ]
    all_perms = [Permission(s, op) for s in services for op in OPS_ORDERED]
    assignments = [
        (p, perm)
        for p in users + groups
        for perm in all_perms
        if rng.random() < 0.15
    ]
    m = build_model(users, groups, services, memberships, assignments)
    subject_ids = []
    for u in users:
        if rng.random() < 0.8:
            m, sid = create_subject(m, u)
            subject_ids.append(sid)
        if rng.random() < 0.4:
            from fedgate.model import effective_permissions

            eff = sorted(
                effective_permissions(m, u),
                key=lambda p: (p.service.name, p.op.value),
            )
            mask = [perm for perm in eff if rng.random() < 0.5]
            m, sid = create_subject(m, u, mask)
            subject_ids.append(sid)
    return m, subject_ids


@pytest.fixture
def rng():
    return random.Random(20260810)
