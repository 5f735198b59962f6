"""Access control entries: one record per object, owner plus RO/RW user lists."""

from __future__ import annotations

import json
from dataclasses import dataclass, replace

from .errors import NotOwnerError

# Wire key order is part of the format.
ACE_KEYS = ("id", "path", "owner", "users_ro", "users_rw")


@dataclass(frozen=True)
class AccessControlEntry:
    id: int
    path: str
    owner: str
    users_ro: tuple[str, ...] = ()
    users_rw: tuple[str, ...] = ()

    def __post_init__(self):
        if self.id < 0:
            raise ValueError("object id must be non-negative")
        if self.owner not in self.users_rw:
            object.__setattr__(self, "users_rw", (self.owner,) + tuple(self.users_rw))
        if set(self.users_ro) & set(self.users_rw):
            raise ValueError("users_ro and users_rw must be disjoint")

    @classmethod
    def for_new_object(cls, object_id: int, path: str, owner: str) -> AccessControlEntry:
        """Entry created at object creation: the creator is the owner with RW."""
        return cls(id=object_id, path=path, owner=owner,
                   users_ro=(), users_rw=(owner,))

    def can_read(self, user_id: str) -> bool:
        return (user_id == self.owner or user_id in self.users_rw
                or user_id in self.users_ro)

    def can_write(self, user_id: str) -> bool:
        return user_id == self.owner or user_id in self.users_rw

    def to_record(self) -> dict:
        """Wire shape, keys in canonical order."""
        return {
            "id": self.id,
            "path": self.path,
            "owner": self.owner,
            "users_ro": list(self.users_ro),
            "users_rw": list(self.users_rw),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_record())

    @classmethod
    def from_record(cls, record: dict) -> AccessControlEntry:
        return cls(
            id=int(record["id"]),
            path=record["path"],
            owner=record["owner"],
            users_ro=tuple(record.get("users_ro", ())),
            users_rw=tuple(record.get("users_rw", ())),
        )


def apply_grant(ace: AccessControlEntry, actor_user_id: str, grantee: str,
                level: str) -> AccessControlEntry:
    """Owner-only grant of ``ro``/``rw`` to ``grantee``.

    Moving a user between lists removes them from the other first; the owner
    can never be downgraded or removed, so granting to the owner is a no-op.
    """
    if level not in ("ro", "rw"):
        raise ValueError(f"level must be 'ro' or 'rw', got {level!r}")
    if actor_user_id != ace.owner:
        raise NotOwnerError(f"user {actor_user_id!r} does not own object "
                            f"{ace.id} at {ace.path}")
    if grantee == ace.owner:
        return ace
    ro = [u for u in ace.users_ro if u != grantee]
    rw = [u for u in ace.users_rw if u != grantee]
    if level == "ro":
        ro.append(grantee)
    else:
        rw.append(grantee)
    return replace(ace, users_ro=tuple(ro), users_rw=tuple(rw))
