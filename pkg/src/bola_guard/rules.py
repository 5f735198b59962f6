"""Path-based group rules and the permission they yield for a request.

Each rule grants a group a set of CRUD actions on one path template, with an
ownership flag: when ownership is required, group membership alone only grants
access to objects the requester owns or is listed on. When several of the
requester's groups match the same (path, action) with different ownership
flags, the rule *not* requiring ownership wins: permissions only ever widen.
Everything else is deny-by-default.

Rule files are YAML/JSON lists of ``{path, group, actions, ownership}``.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Iterable

import yaml

from .actions import Action, parse_action
from .errors import RuleSetError


class Permission(Enum):
    DENY = "deny"
    ALLOW_OWN_ONLY = "allow_own_only"
    ALLOW_ANY = "allow_any"


@dataclass(frozen=True)
class GroupRule:
    path: str
    group: str
    actions: frozenset[Action]
    ownership_required: bool

    def __post_init__(self):
        if not self.actions:
            raise RuleSetError(f"rule ({self.path}, {self.group}) has no actions")
        if not self.path.startswith("/"):
            raise RuleSetError(f"rule path {self.path!r} must begin with '/'")


class GroupRuleSet:
    """Rules indexed by (path, group); at most one rule per pair."""

    def __init__(self, rules: Iterable[GroupRule] = ()):
        self.rules: list[GroupRule] = []
        self._index: dict[tuple[str, str], GroupRule] = {}
        for rule in rules:
            self.add(rule)

    def add(self, rule: GroupRule) -> None:
        key = (rule.path, rule.group)
        if key in self._index:
            raise RuleSetError(f"duplicate rule for path={rule.path!r} "
                               f"group={rule.group!r}")
        self._index[key] = rule
        self.rules.append(rule)

    def lookup(self, path: str, group: str) -> GroupRule | None:
        return self._index.get((path, group))

    def paths(self) -> set[str]:
        return {rule.path for rule in self.rules}

    def __len__(self) -> int:
        return len(self.rules)

    def __iter__(self):
        return iter(self.rules)


def effective_permission(rules: GroupRuleSet, groups: Iterable[str], path: str,
                         action: Action) -> Permission:
    """Widest permission any of the groups grants for (path, action)."""
    matched = [rule for group in groups
               for rule in (rules.lookup(path, group),)
               if rule is not None and action in rule.actions]
    if not matched:
        return Permission.DENY
    if any(not rule.ownership_required for rule in matched):
        return Permission.ALLOW_ANY
    return Permission.ALLOW_OWN_ONLY


def matching_rule(rules: GroupRuleSet, groups: Iterable[str], path: str,
                  action: Action) -> GroupRule | None:
    """The rule backing the effective permission (widest first, rule-set order)."""
    matched = [rule for rule in rules
               if rule.group in set(groups) and rule.path == path
               and action in rule.actions]
    if not matched:
        return None
    for rule in matched:
        if not rule.ownership_required:
            return rule
    return matched[0]


def load_rules(path: str | Path) -> GroupRuleSet:
    """Load a rule file (YAML or JSON list of rule objects)."""
    text = Path(path).read_text(encoding="utf-8")
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise RuleSetError(f"malformed rule file {path}: {exc}") from exc
    if data is None:
        data = []
    if not isinstance(data, list):
        raise RuleSetError(f"rule file {path} must contain a list of rules")
    rules = []
    for i, entry in enumerate(data):
        if not isinstance(entry, dict):
            raise RuleSetError(f"rule #{i} must be a mapping")
        try:
            rules.append(GroupRule(
                path=entry["path"],
                group=entry["group"],
                actions=frozenset(parse_action(a) for a in entry["actions"]),
                ownership_required=bool(entry.get("ownership", True)),
            ))
        except KeyError as exc:
            raise RuleSetError(f"rule #{i} is missing key {exc}") from exc
        except ValueError as exc:
            raise RuleSetError(f"rule #{i}: {exc}") from exc
    return GroupRuleSet(rules)


def dump_rules(rules: GroupRuleSet) -> str:
    data = [{
        "path": rule.path,
        "group": rule.group,
        "actions": sorted(a.value for a in rule.actions),
        "ownership": rule.ownership_required,
    } for rule in rules]
    return yaml.safe_dump(data, sort_keys=False)


def default_rule_set() -> GroupRuleSet:
    """The stock two-directory rule table.

    G11 owns its /user objects end to end; G21 likewise on /pet; G22 may read
    any /pet object; G23 may delete any /pet object.
    """
    crud = frozenset(Action)
    return GroupRuleSet([
        GroupRule("/user", "G11", crud, ownership_required=True),
        GroupRule("/pet", "G21", crud, ownership_required=True),
        GroupRule("/pet", "G22", frozenset({Action.READ}), ownership_required=False),
        GroupRule("/pet", "G23", frozenset({Action.DELETE}), ownership_required=False),
    ])
