import itertools
import random

import pytest
from hypothesis import given, strategies as st

from bola_guard import (
    AccessControlEntry,
    AclStore,
    Action,
    AuthToken,
    AuthzEngine,
    DecisionReason,
    DuplicateObjectError,
    GroupRuleSet,
    NoSuchObjectError,
    NotOwnerError,
    default_rule_set,
)
from bola_guard.acl import apply_grant

from oracle import default_rule_rows, oracle_access, oracle_create


def claims(user_id, groups):
    return AuthToken(user_id=user_id, user_name=user_id, groups=frozenset(groups),
                     expiry=2_000_000_000.0)


@pytest.fixture
def engine(tmp_path):
    store = AclStore.open(tmp_path / "acl.ndjson")
    yield AuthzEngine(default_rule_set(), store)
    store.close()


class TestAuthorizeCreate:
    def test_group_with_create_action_is_allowed(self, engine):
        decision = engine.authorize_create(claims("123", {"G11"}), "/user")
        assert decision.allowed
        assert decision.reason is DecisionReason.GROUP_GRANT
        assert decision.matched_rule.group == "G11"

    def test_read_only_group_cannot_create(self, engine):
        decision = engine.authorize_create(claims("123", {"G22"}), "/pet")
        assert not decision.allowed
        assert decision.reason is DecisionReason.NO_GROUP_RULE

    def test_empty_groups_are_denied(self, engine):
        assert not engine.authorize_create(claims("123", set()), "/pet").allowed


class TestRecordCreation:
    def test_entry_matches_creator(self, engine):
        ace = engine.record_creation(claims("123", {"G21"}), "/pets", 152)
        assert ace == AccessControlEntry(
            id=152, path="/pets", owner="123", users_ro=(), users_rw=("123",))

    def test_duplicate_key_is_rejected(self, engine):
        engine.record_creation(claims("123", {"G21"}), "/pet", 1)
        with pytest.raises(DuplicateObjectError):
            engine.record_creation(claims("456", {"G21"}), "/pet", 1)

    def test_two_objects_same_owner(self, engine):
        first = engine.record_creation(claims("123", {"G21"}), "/pet", 1)
        second = engine.record_creation(claims("123", {"G21"}), "/pet", 2)
        assert first.owner == second.owner == "123"
        assert len(engine.store.entries()) == 2


class TestAuthorizeAccess:
    def test_owner_updates_own_object(self, engine):
        engine.record_creation(claims("123", {"G11"}), "/user", 7)
        decision = engine.authorize_access(claims("123", {"G11"}), "/user",
                                           Action.UPDATE, 7)
        assert decision.allowed
        assert decision.reason is DecisionReason.OWNERSHIP_GRANT

    def test_delete_anything_group_skips_the_acl(self, engine):
        engine.record_creation(claims("123", {"G21"}), "/pet", 7)
        decision = engine.authorize_access(claims("999", {"G23"}), "/pet",
                                           Action.DELETE, 7)
        assert decision.allowed
        assert decision.reason is DecisionReason.GROUP_GRANT

    def test_non_owner_without_listing_is_denied(self, engine):
        engine.record_creation(claims("123", {"G21"}), "/pet", 7)
        decision = engine.authorize_access(claims("999", {"G21"}), "/pet",
                                           Action.READ, 7)
        assert not decision.allowed
        assert decision.reason is DecisionReason.NOT_OWNER

    def test_missing_entry_under_ownership_requirement_denies(self, engine):
        decision = engine.authorize_access(claims("123", {"G21"}), "/pet",
                                           Action.READ, 404)
        assert not decision.allowed
        assert decision.reason is DecisionReason.NO_SUCH_OBJECT

    def test_missing_entry_under_waiver_still_allows(self, engine):
        decision = engine.authorize_access(claims("123", {"G22"}), "/pet",
                                           Action.READ, 404)
        assert decision.allowed
        assert decision.reason is DecisionReason.GROUP_GRANT

    def test_ro_listing_grants_read_but_not_update(self, engine):
        engine.record_creation(claims("123", {"G21"}), "/pet", 7)
        engine.grant(claims("123", {"G21"}), 7, "/pet", "456", "ro")
        read = engine.authorize_access(claims("456", {"G21"}), "/pet",
                                       Action.READ, 7)
        assert read.allowed and read.reason is DecisionReason.ACL_GRANT
        update = engine.authorize_access(claims("456", {"G21"}), "/pet",
                                         Action.UPDATE, 7)
        assert not update.allowed and update.reason is DecisionReason.NOT_OWNER

    def test_rw_listing_grants_update(self, engine):
        engine.record_creation(claims("123", {"G21"}), "/pet", 7)
        engine.grant(claims("123", {"G21"}), 7, "/pet", "456", "rw")
        update = engine.authorize_access(claims("456", {"G21"}), "/pet",
                                         Action.UPDATE, 7)
        assert update.allowed and update.reason is DecisionReason.ACL_GRANT

    def test_create_action_is_refused_here(self, engine):
        with pytest.raises(ValueError):
            engine.authorize_access(claims("1", {"G21"}), "/pet",
                                    Action.CREATE, 1)


class TestGrant:
    def test_owner_grants_ro(self, engine):
        engine.record_creation(claims("123", {"G21"}), "/pet", 152)
        ace = engine.grant(claims("123", {"G21"}), 152, "/pet", "456", "ro")
        assert ace.users_ro == ("456",)
        assert engine.store.get("/pet", 152).users_ro == ("456",)

    def test_non_owner_cannot_grant(self, engine):
        engine.record_creation(claims("123", {"G21"}), "/pet", 152)
        with pytest.raises(NotOwnerError):
            engine.grant(claims("456", {"G21"}), 152, "/pet", "789", "ro")

    def test_grant_to_self_is_idempotent(self, engine):
        before = engine.record_creation(claims("123", {"G21"}), "/pet", 152)
        after = engine.grant(claims("123", {"G21"}), 152, "/pet", "123", "rw")
        assert after == before

    def test_owner_cannot_be_downgraded(self, engine):
        before = engine.record_creation(claims("123", {"G21"}), "/pet", 152)
        after = engine.grant(claims("123", {"G21"}), 152, "/pet", "123", "ro")
        assert after == before
        assert after.owner in after.users_rw

    def test_ro_to_rw_moves_between_lists(self, engine):
        engine.record_creation(claims("123", {"G21"}), "/pet", 152)
        engine.grant(claims("123", {"G21"}), 152, "/pet", "456", "ro")
        ace = engine.grant(claims("123", {"G21"}), 152, "/pet", "456", "rw")
        assert "456" not in ace.users_ro
        assert "456" in ace.users_rw

    def test_grant_on_missing_object(self, engine):
        with pytest.raises(NoSuchObjectError):
            engine.grant(claims("123", {"G21"}), 999, "/pet", "456", "ro")

    def test_bad_level_rejected(self, engine):
        engine.record_creation(claims("123", {"G21"}), "/pet", 152)
        with pytest.raises(ValueError):
            engine.grant(claims("123", {"G21"}), 152, "/pet", "456", "admin")


class TestCreationLinkage:
    def test_owner_can_update_what_they_created(self, engine):
        for group, path in (("G11", "/user"), ("G21", "/pet")):
            token = claims("123", {group})
            assert engine.authorize_create(token, path).allowed
            ace = engine.record_creation(token, path, 5)
            decision = engine.authorize_access(token, path, Action.UPDATE, ace.id)
            assert decision.allowed


class TestOracleEquivalence:
    """Every decision over a small universe must agree with the naive oracle."""

    GROUPS = ["G11", "G21", "G22", "G23"]
    PATHS = ["/pet", "/user"]
    USERS = ["u1", "u2", "u3"]

    def test_exhaustive_agreement(self, engine):
        rows = default_rule_rows()
        subsets = [set(c) for r in (0, 1, 2)
                   for c in itertools.combinations(self.GROUPS, r)]
        checked = 0
        for groups, path, user in itertools.product(subsets, self.PATHS,
                                                    self.USERS):
            token = claims(user, groups)
            expected = oracle_create(rows, groups, path)
            assert engine.authorize_create(token, path).allowed == expected
            checked += 1

            for action, owner_is_requester, membership, present in \
                    itertools.product(
                        [Action.READ, Action.UPDATE, Action.DELETE],
                        [True, False], ["none", "ro", "rw"], [True, False]):
                owner = user if owner_is_requester else "someone-else"
                object_id = 1 if present else 2
                store = engine.store
                existing = store.get(path, 1)
                if existing is not None:
                    store.delete(path, 1)
                ace = AccessControlEntry.for_new_object(1, path, owner)
                if membership != "none" and user != owner:
                    ace = apply_grant(ace, owner, user, membership)
                store.put(ace)

                got = engine.authorize_access(token, path, action, object_id)
                record = ace.to_record() if present else None
                expected = oracle_access(rows, groups, path, action.value,
                                         user, record)
                assert got.allowed == expected, (
                    groups, path, action, user, owner, membership, present)
                checked += 1
        assert checked > 2000


class TestDenyByDefault:
    def test_random_probes_on_empty_rules_never_allow(self, tmp_path):
        store = AclStore.open(tmp_path / "empty.ndjson")
        engine = AuthzEngine(GroupRuleSet(), store)
        rng = random.Random(20240811)
        for _ in range(2000):
            user = f"u{rng.randrange(50)}"
            groups = {f"G{rng.randrange(9)}" for _ in range(rng.randrange(4))}
            path = rng.choice(["/pet", "/user", "/order"])
            token = claims(user, groups)
            if rng.random() < 0.25:
                assert not engine.authorize_create(token, path).allowed
            else:
                action = rng.choice([Action.READ, Action.UPDATE, Action.DELETE])
                decision = engine.authorize_access(token, path, action,
                                                   rng.randrange(5))
                assert not decision.allowed
        store.close()


class TestAceIntegrity:
    @given(st.lists(st.tuples(st.sampled_from(["o", "a", "b", "c"]),
                              st.sampled_from(["ro", "rw"])), max_size=30))
    def test_invariants_survive_any_grant_sequence(self, grants):
        ace = AccessControlEntry.for_new_object(1, "/pet", "o")
        for grantee, level in grants:
            ace = apply_grant(ace, "o", grantee, level)
            assert ace.owner == "o"
            assert ace.owner in ace.users_rw
            assert not set(ace.users_ro) & set(ace.users_rw)
