import random

import pytest

from fedgate.authz import (
    AccessRequest,
    DecisionSource,
    Policy,
    PolicyConstraints,
    PolicyRepository,
    ResourceMatcher,
    authorize,
    check_path_access,
    create_policy,
    evaluate_acl,
    evaluate_central,
    glob_match,
    set_policy_enabled,
)
from fedgate.errors import (
    DuplicatePolicyId,
    MalformedConstraint,
    NoSuchPath,
    UnknownPolicy,
)
from fedgate.fs import (
    AclEntry,
    Effect,
    FileAttrs,
    FileMode,
    NamespaceTree,
    TreeNode,
    inherit_acl_on_create,
)
from fedgate.model import (
    OpKind,
    Permission,
    ServiceId,
    ServiceKind,
    build_model,
    create_subject,
    group,
    update_assignments,
    user,
    AddAssignment,
)

NN1 = ServiceId(ServiceKind.NAMENODE, "nn1")


def model_with_subject(extra_assignments=()):
    m = build_model(
        users=[user("alice"), user("bob")],
        groups=[group("staff")],
        services=[NN1],
        memberships=[(user("alice"), group("staff"))],
        assignments=[(user("alice"), Permission(NN1, op)) for op in OpKind]
        + list(extra_assignments),
    )
    m, sid = create_subject(m, user("alice"))
    return m, sid


def make_request(sid, *, path=None, op=OpKind.READ, at_time=100, source="10.0.0.1"):
    return AccessRequest(
        subject_id=sid,
        source_addr=source,
        service=NN1,
        path=path,
        op=op,
        at_time=at_time,
    )


def allow_policy(pid="p1", **kw):
    defaults = dict(
        policy_id=pid,
        principals=frozenset({user("alice")}),
        resources=ResourceMatcher(service="nn1"),
        ops=frozenset({OpKind.READ}),
        effect=Effect.ALLOW,
    )
    defaults.update(kw)
    return Policy(**defaults)


class TestPolicyCrud:
    def test_duplicate_id(self):
        repo = create_policy(PolicyRepository.empty(), allow_policy())
        with pytest.raises(DuplicatePolicyId):
            create_policy(repo, allow_policy())

    def test_enabled_by_default(self):
        repo = create_policy(PolicyRepository.empty(), allow_policy())
        assert repo.policies["p1"].enabled is True

    def test_malformed_constraints(self):
        with pytest.raises(MalformedConstraint):
            create_policy(
                PolicyRepository.empty(),
                allow_policy(constraints=PolicyConstraints(time_window=(10, 5))),
            )
        with pytest.raises(MalformedConstraint):
            create_policy(PolicyRepository.empty(), allow_policy(ops=frozenset()))
        with pytest.raises(MalformedConstraint):
            create_policy(PolicyRepository.empty(), allow_policy(certificate_lifetime_s=0))

    def test_set_enabled(self):
        repo = create_policy(PolicyRepository.empty(), allow_policy())
        repo = set_policy_enabled(repo, "p1", False)
        assert repo.policies["p1"].enabled is False
        # idempotent re-enable/enable
        repo = set_policy_enabled(repo, "p1", True)
        repo = set_policy_enabled(repo, "p1", True)
        assert repo.policies["p1"].enabled is True
        with pytest.raises(UnknownPolicy):
            set_policy_enabled(repo, "zzz", True)


class TestEvaluateCentral:
    def test_empty_repo_returns_none(self):
        m, sid = model_with_subject()
        assert evaluate_central(PolicyRepository.empty(), m, make_request(sid)) is None

    def test_group_principal_matches_creator_groups(self):
        m, sid = model_with_subject()
        repo = create_policy(
            PolicyRepository.empty(),
            allow_policy(principals=frozenset({group("staff")})),
        )
        verdict = evaluate_central(repo, m, make_request(sid))
        assert verdict is not None and verdict.decision.allowed

    def test_deny_overrides_allow(self):
        m, sid = model_with_subject()
        repo = create_policy(PolicyRepository.empty(), allow_policy("p-allow"))
        repo = create_policy(repo, allow_policy("p-deny", effect=Effect.DENY))
        verdict = evaluate_central(repo, m, make_request(sid))
        assert verdict is not None
        assert not verdict.decision.allowed
        assert verdict.policy_id == "p-deny"

    def test_disabled_policy_never_matches(self):
        m, sid = model_with_subject()
        repo = create_policy(PolicyRepository.empty(), allow_policy(enabled=False))
        assert evaluate_central(repo, m, make_request(sid)) is None

    def test_time_window_inclusive_bounds(self):
        m, sid = model_with_subject()
        repo = create_policy(
            PolicyRepository.empty(),
            allow_policy(constraints=PolicyConstraints(time_window=(50, 150))),
        )
        for t, expected in [(49, False), (50, True), (150, True), (151, False)]:
            verdict = evaluate_central(repo, m, make_request(sid, at_time=t))
            assert (verdict is not None) == expected, t

    def test_source_predicate(self):
        m, sid = model_with_subject()
        repo = create_policy(
            PolicyRepository.empty(),
            allow_policy(constraints=PolicyConstraints(source_predicate=frozenset({"10.0.0.9"}))),
        )
        assert evaluate_central(repo, m, make_request(sid)) is None
        verdict = evaluate_central(repo, m, make_request(sid, source="10.0.0.9"))
        assert verdict is not None

    def test_start_date_gates_matching(self):
        m, sid = model_with_subject()
        repo = create_policy(PolicyRepository.empty(), allow_policy(start_date=500))
        assert evaluate_central(repo, m, make_request(sid, at_time=499)) is None
        assert evaluate_central(repo, m, make_request(sid, at_time=500)) is not None

    def test_oracle_scan_matches(self):
        # Oracle: scan every policy with a literal match predicate.
        rng = random.Random(3)
        m, sid = model_with_subject()
        creator_principals = {user("alice"), group("staff")}
        repo = PolicyRepository.empty()
        candidates = []
        for i in range(40):
            pol = allow_policy(
                pid=f"p{i:02d}",
                principals=frozenset({rng.choice([user("alice"), user("bob"), group("staff")])}),
                ops=frozenset({rng.choice(list(OpKind))}),
                effect=rng.choice([Effect.ALLOW, Effect.DENY]),
                enabled=rng.random() < 0.8,
                constraints=PolicyConstraints(
                    time_window=(0, rng.randint(50, 200)) if rng.random() < 0.5 else None
                ),
            )
            repo = create_policy(repo, pol)
            candidates.append(pol)
        for t in (0, 60, 120, 210):
            for op in OpKind:
                req = make_request(sid, op=op, at_time=t)
                matching = [
                    p
                    for p in candidates
                    if p.enabled
                    and (p.principals & creator_principals)
                    and op in p.ops
                    and (
                        p.constraints is None
                        or p.constraints.time_window is None
                        or p.constraints.time_window[0] <= t <= p.constraints.time_window[1]
                    )
                ]
                verdict = evaluate_central(repo, m, req)
                if not matching:
                    assert verdict is None
                else:
                    expect_deny = any(p.effect is Effect.DENY for p in matching)
                    assert verdict is not None
                    assert verdict.decision.allowed == (not expect_deny)


RWX = FileMode.parse("rwx------")


def attrs(owner="alice", grp="staff", mode="rwx------", extra=()):
    return FileAttrs(user(owner), group(grp), FileMode.parse(mode), tuple(extra))


class TestEvaluateAcl:
    # Oracle: triple lookup table per POSIX class.
    def test_owner_full_access(self):
        m, _ = model_with_subject()
        assert evaluate_acl(m, attrs(), user("alice"), OpKind.WRITE).allowed

    def test_group_readonly_denies_write(self):
        m, _ = model_with_subject()
        a = attrs(owner="bob", mode="rwxr-----")
        assert evaluate_acl(m, a, user("alice"), OpKind.READ).allowed
        assert not evaluate_acl(m, a, user("alice"), OpKind.WRITE).allowed

    def test_extra_acl_entry(self):
        m, _ = model_with_subject()
        a = attrs(
            owner="alice",
            grp="staff",
            mode="---------",
            extra=[AclEntry(user("bob"), frozenset({OpKind.READ}), Effect.ALLOW)],
        )
        assert evaluate_acl(m, a, user("bob"), OpKind.READ).allowed
        assert not evaluate_acl(m, a, user("bob"), OpKind.WRITE).allowed

    def test_extra_acl_deny_overrides(self):
        m, _ = model_with_subject()
        a = attrs(
            owner="alice",
            mode="------rwx",
            extra=[
                AclEntry(user("bob"), frozenset({OpKind.READ}), Effect.ALLOW),
                AclEntry(user("bob"), frozenset({OpKind.READ}), Effect.DENY),
            ],
        )
        assert not evaluate_acl(m, a, user("bob"), OpKind.READ).allowed

    def test_other_triple_fallback(self):
        m, _ = model_with_subject()
        a = attrs(owner="alice", grp="staff", mode="------r-x")
        assert evaluate_acl(m, a, user("bob"), OpKind.READ).allowed
        assert not evaluate_acl(m, a, user("bob"), OpKind.WRITE).allowed

    def test_admin_has_no_mode_bit(self):
        m, _ = model_with_subject()
        assert not evaluate_acl(m, attrs(mode="rwxrwxrwx"), user("alice"), OpKind.ADMIN).allowed

    def test_oracle_triple_table(self):
        m, _ = model_with_subject()
        modes = ["rwx------", "r-x-w---x", "---rwx---", "------rwx", "rw-r--r--"]
        for mode_text in modes:
            mode = FileMode.parse(mode_text)
            for who, u in [("owner", "alice"), ("group", "alice"), ("other", "bob")]:
                if who == "owner":
                    a = attrs(owner="alice", mode=mode_text)
                    triple = mode.owner
                elif who == "group":
                    a = attrs(owner="bob", grp="staff", mode=mode_text)
                    triple = mode.group
                else:
                    a = attrs(owner="alice", grp="staff", mode=mode_text)
                    triple = mode.other
                for op in (OpKind.READ, OpKind.WRITE, OpKind.EXECUTE):
                    expected = op in triple
                    assert evaluate_acl(m, a, user(u), op).allowed == expected, (mode_text, who, op)


def build_tree():
    tree = NamespaceTree(attrs(owner="hdfs", grp="staff", mode="rwxrwxrwx"))
    return tree


class TestPathAccess:
    def test_traversal_denied_at_first_component(self):
        m, _ = model_with_subject()
        tree = build_tree()
        tree.mkdir("/a", attrs(owner="bob", grp="staff", mode="rw-------"))
        tree.mkdir("/a/b", attrs(owner="alice", mode="rwxrwxrwx"))
        # alice hits the group triple of /a (staff), which lacks execute
        d = check_path_access(m, tree, "/a/b/f", user("alice"), OpKind.WRITE)
        assert not d.allowed
        assert "/a" in d.reason and "/a/b" not in d.reason

    def test_owner_rwx_everywhere_allows(self):
        m, _ = model_with_subject()
        tree = build_tree()
        tree.mkdir("/a", attrs(owner="alice"))
        tree.mkdir("/a/b", attrs(owner="alice"))
        d = check_path_access(m, tree, "/a/b/f", user("alice"), OpKind.WRITE)
        assert d.allowed

    def test_final_read_needs_execute_on_ancestors(self):
        m, _ = model_with_subject()
        tree = build_tree()
        tree.mkdir("/a", attrs(owner="alice"))
        tree.mkdir("/a/b", attrs(owner="alice", mode="rw-------"))
        tree.create_file(
            "/a/b/f", attrs(owner="alice", mode="rwx------"),
            file_id="f1", size_mb=1, block_ids=("b1",),
        )
        d = check_path_access(m, tree, "/a/b/f", user("alice"), OpKind.READ)
        assert not d.allowed
        assert "/a/b" in d.reason

    def test_missing_intermediate_raises(self):
        m, _ = model_with_subject()
        with pytest.raises(NoSuchPath):
            check_path_access(m, build_tree(), "/no/such/file", user("alice"), OpKind.READ)

    def test_missing_final_read_raises_but_write_checks_parent(self):
        m, _ = model_with_subject()
        tree = build_tree()
        tree.mkdir("/data", attrs(owner="alice"))
        with pytest.raises(NoSuchPath):
            check_path_access(m, tree, "/data/new", user("alice"), OpKind.READ)
        assert check_path_access(m, tree, "/data/new", user("alice"), OpKind.WRITE).allowed

    def test_component_wise_oracle(self):
        # Oracle: explicit loop over components with the triple table.
        m, _ = model_with_subject()
        rng = random.Random(11)
        mode_choices = ["rwx------", "r-x------", "rw-------", "rwxr-x---", "---------"]
        for _ in range(40):
            tree = build_tree()
            dirs = ["/d0", "/d0/d1", "/d0/d1/d2"]
            dir_modes = [rng.choice(mode_choices) for _ in dirs]
            for p, mo in zip(dirs, dir_modes):
                tree.mkdir(p, attrs(owner="alice", mode=mo))
            file_mode = rng.choice(mode_choices)
            tree.create_file(
                "/d0/d1/d2/f", attrs(owner="alice", mode=file_mode),
                file_id="f", size_mb=1, block_ids=(),
            )
            op = rng.choice([OpKind.READ, OpKind.WRITE])
            exec_ok = all(OpKind.EXECUTE in FileMode.parse(mo).owner for mo in dir_modes)
            final_ok = op in FileMode.parse(file_mode).owner
            expected = exec_ok and final_ok
            got = check_path_access(m, tree, "/d0/d1/d2/f", user("alice"), op)
            assert got.allowed == expected, (dir_modes, file_mode, op)


class TestInheritance:
    def test_child_carries_parent_acl(self):
        extra = (AclEntry(user("bob"), frozenset({OpKind.READ}), Effect.ALLOW),)
        parent = TreeNode("d", True, attrs(owner="bob", grp="staff", extra=extra))
        child = inherit_acl_on_create(parent, user("alice"))
        assert child.extra_acl == extra
        assert child.owner == user("alice")
        assert child.group == group("staff")
        assert child.mode == parent.attrs.mode

    def test_empty_parent_acl(self):
        parent = TreeNode("d", True, attrs())
        assert inherit_acl_on_create(parent, user("alice")).extra_acl == ()

    def test_parent_not_directory(self):
        from fedgate.errors import ParentNotDirectory

        parent = TreeNode("f", False, attrs())
        with pytest.raises(ParentNotDirectory):
            inherit_acl_on_create(parent, user("alice"))


class TestAuthorizePipeline:
    def test_central_deny_beats_permissive_acl(self):
        m, sid = model_with_subject()
        tree = build_tree()
        tree.mkdir("/open", attrs(owner="alice", mode="rwxrwxrwx"))
        tree.create_file("/open/f", attrs(owner="alice", mode="rwxrwxrwx"),
                         file_id="f", size_mb=1, block_ids=())
        repo = create_policy(
            PolicyRepository.empty(),
            allow_policy(effect=Effect.DENY, resources=ResourceMatcher(path="/open/**")),
        )
        res = authorize(repo, m, tree, make_request(sid, path="/open/f"))
        assert not res.decision.allowed
        assert res.source is DecisionSource.CENTRAL_POLICY
        assert res.policy_id == "p1"

    def test_no_policy_falls_through_to_acl(self):
        m, sid = model_with_subject()
        tree = build_tree()
        tree.create_file("/f", attrs(owner="alice"), file_id="f", size_mb=1, block_ids=())
        res = authorize(PolicyRepository.empty(), m, tree, make_request(sid, path="/f"))
        assert res.decision.allowed
        assert res.source is DecisionSource.LOCAL_ACL

    def test_service_gate_deny_ignores_policies(self):
        m = build_model(users=[user("carol")], services=[NN1])
        m, sid = create_subject(m, user("carol"))
        repo = create_policy(
            PolicyRepository.empty(), allow_policy(principals=frozenset({user("carol")}))
        )
        res = authorize(repo, m, build_tree(), make_request(sid))
        assert not res.decision.allowed
        assert res.source is DecisionSource.SERVICE_MODEL

    def test_pathless_allow_after_gate(self):
        m, sid = model_with_subject()
        res = authorize(PolicyRepository.empty(), m, None, make_request(sid))
        assert res.decision.allowed
        assert res.source is DecisionSource.LOCAL_ACL

    def test_disabled_policy_transparency(self):
        m, sid = model_with_subject()
        tree = build_tree()
        tree.create_file("/f", attrs(owner="alice"), file_id="f", size_mb=1, block_ids=())
        req = make_request(sid, path="/f")
        absent = authorize(PolicyRepository.empty(), m, tree, req)
        repo = create_policy(
            PolicyRepository.empty(), allow_policy(effect=Effect.DENY, enabled=False)
        )
        present = authorize(repo, m, tree, req)
        assert absent == present

    def test_precedence_property_randomized(self):
        rng = random.Random(21)
        m, sid = model_with_subject()
        tree = build_tree()
        tree.create_file("/f", attrs(owner="alice"), file_id="f", size_mb=1, block_ids=())
        for i in range(200):
            repo = PolicyRepository.empty()
            n = rng.randint(0, 4)
            for j in range(n):
                repo = create_policy(
                    repo,
                    allow_policy(
                        pid=f"p{j}",
                        effect=rng.choice([Effect.ALLOW, Effect.DENY]),
                        enabled=rng.random() < 0.7,
                        ops=frozenset({rng.choice(list(OpKind))}),
                    ),
                )
            op = rng.choice(list(OpKind))
            req = make_request(sid, path="/f" if rng.random() < 0.5 else None, op=op)
            central = evaluate_central(repo, m, req)
            res = authorize(repo, m, tree, req)
            if central is not None:
                assert res.source is DecisionSource.CENTRAL_POLICY
                assert res.decision == central.decision


class TestGlobMatch:
    @pytest.mark.parametrize(
        "pattern,path,expected",
        [
            ("/data/*", "/data/f", True),
            ("/data/*", "/data/d/f", False),
            ("/data/**", "/data/d/f", True),
            ("/data/**", "/data", True),
            ("/**", "/anything/at/all", True),
            ("/a/*/c", "/a/b/c", True),
            ("/a/*/c", "/a/b/d", False),
            ("/exact", "/exact", True),
            ("/exact", "/exact/child", False),
        ],
    )
    def test_patterns(self, pattern, path, expected):
        assert glob_match(pattern, path) == expected
