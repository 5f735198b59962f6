import pytest
from hypothesis import given, strategies as st

from bola_guard import (
    Action,
    GroupRule,
    GroupRuleSet,
    Permission,
    RuleSetError,
    default_rule_set,
    effective_permission,
    load_rules,
)
from bola_guard.rules import dump_rules, matching_rule

CRUD = frozenset(Action)


class TestEffectivePermission:
    def test_own_only_when_every_match_requires_ownership(self):
        rules = default_rule_set()
        assert effective_permission(rules, {"G21"}, "/pet", Action.READ) \
            is Permission.ALLOW_OWN_ONLY

    def test_ownership_waiver_overrides_own_only(self):
        rules = default_rule_set()
        assert effective_permission(rules, {"G21", "G22"}, "/pet", Action.READ) \
            is Permission.ALLOW_ANY

    def test_no_matching_rule_denies(self):
        rules = default_rule_set()
        assert effective_permission(rules, {"G23"}, "/pet", Action.UPDATE) \
            is Permission.DENY

    def test_empty_groups_deny(self):
        assert effective_permission(default_rule_set(), set(), "/pet",
                                    Action.READ) is Permission.DENY

    def test_override_is_per_action(self):
        # The read waiver of G22 must not widen update.
        rules = default_rule_set()
        assert effective_permission(rules, {"G21", "G22"}, "/pet",
                                    Action.UPDATE) is Permission.ALLOW_OWN_ONLY

    def test_matching_rule_prefers_the_waiving_rule(self):
        rules = default_rule_set()
        rule = matching_rule(rules, {"G21", "G22"}, "/pet", Action.READ)
        assert rule.group == "G22"
        assert not rule.ownership_required


class TestRuleSet:
    def test_duplicate_path_group_pair_rejected(self):
        rules = GroupRuleSet([GroupRule("/pet", "G21", CRUD, True)])
        with pytest.raises(RuleSetError):
            rules.add(GroupRule("/pet", "G21", frozenset({Action.READ}), False))

    def test_empty_actions_rejected(self):
        with pytest.raises(RuleSetError):
            GroupRule("/pet", "G21", frozenset(), True)

    def test_path_must_start_with_slash(self):
        with pytest.raises(RuleSetError):
            GroupRule("pet", "G21", CRUD, True)

    def test_default_rule_set_is_the_documented_table(self):
        rules = default_rule_set()
        assert len(rules) == 4
        table = {(r.path, r.group): (set(a.value for a in r.actions),
                                     r.ownership_required) for r in rules}
        assert table[("/user", "G11")] == (
            {"create", "read", "update", "delete"}, True)
        assert table[("/pet", "G21")] == (
            {"create", "read", "update", "delete"}, True)
        assert table[("/pet", "G22")] == ({"read"}, False)
        assert table[("/pet", "G23")] == ({"delete"}, False)


class TestRuleFiles:
    def test_load_dump_round_trip(self, tmp_path):
        path = tmp_path / "rules.yaml"
        path.write_text(dump_rules(default_rule_set()), encoding="utf-8")
        loaded = load_rules(path)
        assert {(r.path, r.group, r.actions, r.ownership_required)
                for r in loaded} == \
               {(r.path, r.group, r.actions, r.ownership_required)
                for r in default_rule_set()}

    def test_load_json_list_works(self, tmp_path):
        path = tmp_path / "rules.json"
        path.write_text('[{"path": "/pet", "group": "G21", '
                        '"actions": ["read"], "ownership": false}]',
                        encoding="utf-8")
        rules = load_rules(path)
        assert effective_permission(rules, {"G21"}, "/pet", Action.READ) \
            is Permission.ALLOW_ANY

    def test_unknown_action_name_rejected(self, tmp_path):
        path = tmp_path / "rules.yaml"
        path.write_text("- path: /pet\n  group: G21\n  actions: [browse]\n",
                        encoding="utf-8")
        with pytest.raises(RuleSetError, match="browse"):
            load_rules(path)

    def test_missing_key_rejected(self, tmp_path):
        path = tmp_path / "rules.yaml"
        path.write_text("- path: /pet\n  actions: [read]\n", encoding="utf-8")
        with pytest.raises(RuleSetError, match="group"):
            load_rules(path)

    def test_non_list_rejected(self, tmp_path):
        path = tmp_path / "rules.yaml"
        path.write_text("path: /pet\n", encoding="utf-8")
        with pytest.raises(RuleSetError):
            load_rules(path)


_WIDTH = {Permission.DENY: 0, Permission.ALLOW_OWN_ONLY: 1, Permission.ALLOW_ANY: 2}

rule_strategy = st.builds(
    GroupRule,
    path=st.sampled_from(["/pet", "/user"]),
    group=st.sampled_from(["G11", "G21", "G22", "G23", "G31"]),
    actions=st.frozensets(st.sampled_from(list(Action)), min_size=1),
    ownership_required=st.booleans(),
)


@st.composite
def rule_sets(draw):
    rules = draw(st.lists(rule_strategy, max_size=8))
    unique = {}
    for rule in rules:
        unique.setdefault((rule.path, rule.group), rule)
    return GroupRuleSet(unique.values())


class TestMonotonicity:
    @given(rule_sets(),
           st.frozensets(st.sampled_from(["G11", "G21", "G22", "G23", "G31"]),
                         max_size=3),
           st.sampled_from(["G11", "G21", "G22", "G23", "G31"]),
           st.sampled_from(["/pet", "/user"]),
           st.sampled_from(list(Action)))
    def test_adding_a_group_never_narrows_permission(self, rules, groups, extra,
                                                     path, action):
        before = effective_permission(rules, groups, path, action)
        after = effective_permission(rules, groups | {extra}, path, action)
        assert _WIDTH[after] >= _WIDTH[before]
