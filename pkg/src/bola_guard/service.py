"""Reference petstore-shaped HTTP service enforcing object-level authorization.

Request pipeline: verify the ``api_key`` header token, then

* ``POST /<dir>``: group check, create the object, record its ACL entry;
* ``GET/PUT/DELETE /<dir>/{id}``: per-object decision, then act;
* ``GET /<dir>``: listing filtered to objects the caller may read;
* ``GET /admin/acl``: ACL inspection, ``admin`` group required.

Status codes: 401 token failures, 403 denied decisions (body
``{"code", "reason"}`` echoing the decision reason), 404 authorized but
object missing, 201/200/204 for create/read-update/delete, 500 storage
failures. Rule lookups use the directory template (``/pet``), never the
concrete URL.

The core is transport-neutral (:meth:`ReferenceService.handle_request`); a
thin stdlib HTTP adapter serves it. Handlers never touch business state
before an allowed decision; an observer hook exposes the event order so
tests can assert it.
"""

from __future__ import annotations

import json
import logging
import threading
import time
from dataclasses import dataclass
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path
from typing import Any, Callable
from urllib.parse import urlsplit

import yaml

from .actions import Action
from .engine import AuthzEngine, DecisionReason
from .errors import DuplicateObjectError, StorageError, TokenError
from .rules import (
    GroupRuleSet,
    Permission,
    default_rule_set,
    effective_permission,
    load_rules,
)
from .store import AclStore, ObjectStore
from .tokens import verify_token

logger = logging.getLogger(__name__)

TOKEN_HEADER = "api_key"
ADMIN_GROUP = "admin"

_VERB_ACTIONS = {"get": Action.READ, "put": Action.UPDATE, "delete": Action.DELETE}


@dataclass
class Response:
    status: int
    body: Any = None

    def payload(self) -> bytes:
        if self.body is None:
            return b""
        return json.dumps(self.body).encode("utf-8")


def _denial(status: int, reason: str) -> Response:
    return Response(status, {"code": status, "reason": reason})


@dataclass
class ServiceConfig:
    port: int = 8080
    host: str = "127.0.0.1"
    key_path: str = ""
    rules_path: str | None = None
    journal_path: str = "acl.ndjson"
    objects_path: str | None = None

    @classmethod
    def load(cls, path: str | Path) -> "ServiceConfig":
        data = yaml.safe_load(Path(path).read_text(encoding="utf-8")) or {}
        return cls(
            port=int(data.get("port", 8080)),
            host=data.get("host", "127.0.0.1"),
            key_path=data.get("key_path", ""),
            rules_path=data.get("rules_path"),
            journal_path=data.get("journal_path", "acl.ndjson"),
            objects_path=data.get("objects_path"),
        )


class ReferenceService:
    """Framework-neutral request handler around the authorization engine."""

    def __init__(self, rules: GroupRuleSet, key: bytes, acl_store: AclStore,
                 object_store: ObjectStore,
                 clock: Callable[[], float] | None = None,
                 observer: Callable[[str, dict], None] | None = None):
        self.engine = AuthzEngine(rules, acl_store)
        self.objects = object_store
        self.key = key
        self.clock = clock if clock is not None else _wall_clock
        self.observer = observer
        self.templates = sorted(rules.paths() | {"/pet", "/user"})
        self._create_lock = threading.Lock()
        self._seq = 0
        self._seq_lock = threading.Lock()

    @classmethod
    def from_config(cls, config: ServiceConfig, **kwargs) -> "ReferenceService":
        key = Path(config.key_path).read_bytes().strip()
        rules = (load_rules(config.rules_path) if config.rules_path
                 else default_rule_set())
        acl_store = AclStore.open(config.journal_path)
        objects_path = config.objects_path or f"{config.journal_path}.objects"
        object_store = ObjectStore.open(objects_path)
        return cls(rules, key, acl_store, object_store, **kwargs)

    def close(self) -> None:
        self.engine.store.close()
        self.objects.close()

    # ------------------------------------------------------------------

    def _emit(self, seq: int, event: str, **payload) -> None:
        if self.observer is not None:
            self.observer(event, {"seq": seq, **payload})

    def _next_seq(self) -> int:
        with self._seq_lock:
            self._seq += 1
            return self._seq

    def handle_request(self, method: str, url: str, headers: dict[str, str],
                       body: bytes | None = None) -> Response:
        seq = self._next_seq()
        try:
            return self._dispatch(seq, method.lower(), url, headers, body)
        except StorageError:
            logger.exception("storage failure")
            return Response(500, {"code": 500, "reason": "storage_failure"})

    def _dispatch(self, seq: int, method: str, url: str,
                  headers: dict[str, str], body: bytes | None) -> Response:
        path = urlsplit(url).path.rstrip("/") or "/"
        lowered = {k.lower(): v for k, v in headers.items()}

        raw_token = lowered.get(TOKEN_HEADER)
        if raw_token is None:
            return _denial(401, DecisionReason.TOKEN_INVALID.value)
        try:
            token = verify_token(raw_token, self.key, now=self.clock())
        except TokenError:
            return _denial(401, DecisionReason.TOKEN_INVALID.value)

        if path == "/admin/acl":
            return self._admin_list_acl(token, method)

        template, object_id = self._route(path)
        if template is None:
            return Response(404, {"code": 404, "reason": "unknown_route"})

        if method == "post" and object_id is None:
            return self._create(seq, token, template, body)
        if method == "get" and object_id is None:
            return self._list(seq, token, template)
        if object_id is not None and method in _VERB_ACTIONS:
            return self._object_access(seq, token, template, object_id,
                                       _VERB_ACTIONS[method], body)
        return Response(405, {"code": 405, "reason": "method_not_allowed"})

    def _route(self, path: str) -> tuple[str | None, int | None]:
        if path in self.templates:
            return path, None
        head, _, tail = path.rpartition("/")
        if head in self.templates and tail:
            try:
                return head, int(tail)
            except ValueError:
                return None, None
        return None, None

    # ------------------------------------------------------------------

    def _create(self, seq: int, token, template: str,
                body: bytes | None) -> Response:
        decision = self.engine.authorize_create(token, template)
        self._emit(seq, "decision", path=template, action="create",
                   allowed=decision.allowed, reason=decision.reason.value)
        if not decision.allowed:
            return _denial(403, decision.reason.value)
        document = _parse_body(body)
        if document is None:
            return Response(400, {"code": 400, "reason": "invalid_body"})
        with self._create_lock:
            object_id = self.engine.store.next_id(template)
            try:
                ace = self.engine.record_creation(token, template, object_id)
            except DuplicateObjectError:
                return Response(500, {"code": 500, "reason": "id_collision"})
            self._emit(seq, "ace_created", path=template, id=object_id,
                       owner=ace.owner)
            stored = {"id": object_id, "path": template, "body": document}
            self.objects.put(stored)
            self._emit(seq, "object_created", path=template, id=object_id)
        return Response(201, {"id": object_id, **document})

    def _object_access(self, seq: int, token, template: str, object_id: int,
                       action: Action, body: bytes | None) -> Response:
        decision = self.engine.authorize_access(token, template, action, object_id)
        self._emit(seq, "decision", path=template, action=action.value,
                   allowed=decision.allowed, reason=decision.reason.value,
                   id=object_id)
        if not decision.allowed:
            return _denial(403, decision.reason.value)

        stored = self.objects.get(template, object_id)
        if action is Action.READ:
            if stored is None:
                return Response(404, {"code": 404, "reason": "no_such_object"})
            return Response(200, {"id": object_id, **stored["body"]})
        if action is Action.UPDATE:
            if stored is None:
                return Response(404, {"code": 404, "reason": "no_such_object"})
            document = _parse_body(body)
            if document is None:
                return Response(400, {"code": 400, "reason": "invalid_body"})
            self.objects.put({"id": object_id, "path": template, "body": document})
            self._emit(seq, "object_updated", path=template, id=object_id)
            return Response(200, {"id": object_id, **document})
        # delete
        if stored is None:
            return Response(404, {"code": 404, "reason": "no_such_object"})
        self.objects.delete(template, object_id)
        if self.engine.store.get(template, object_id) is not None:
            self.engine.store.delete(template, object_id)
        self._emit(seq, "object_deleted", path=template, id=object_id)
        return Response(204)

    def _list(self, seq: int, token, template: str) -> Response:
        permission = effective_permission(self.engine.rules, token.groups,
                                          template, Action.READ)
        allowed = permission is not Permission.DENY
        self._emit(seq, "decision", path=template, action="read",
                   allowed=allowed, reason="group_grant" if allowed
                   else "no_group_rule")
        if not allowed:
            return _denial(403, DecisionReason.NO_GROUP_RULE.value)
        visible = []
        for stored in self.objects.entries():
            if stored["path"] != template:
                continue
            verdict = self.engine.authorize_access(
                token, template, Action.READ, stored["id"])
            if verdict.allowed:
                visible.append({"id": stored["id"], **stored["body"]})
        return Response(200, visible)

    def _admin_list_acl(self, token, method: str) -> Response:
        if method != "get":
            return Response(405, {"code": 405, "reason": "method_not_allowed"})
        if ADMIN_GROUP not in token.groups:
            return _denial(403, DecisionReason.NO_GROUP_RULE.value)
        return Response(200, [ace.to_record() for ace in self.engine.store.entries()])


def _wall_clock() -> float:
    return time.time()


def _parse_body(body: bytes | None) -> dict | None:
    if body is None or not body.strip():
        return {}
    try:
        parsed = json.loads(body.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError):
        return None
    return parsed if isinstance(parsed, dict) else None


# ---------------------------------------------------------------------------
# Stdlib HTTP adapter


class _Handler(BaseHTTPRequestHandler):
    service: ReferenceService  # set per server

    def _respond(self) -> None:
        length = int(self.headers.get("Content-Length") or 0)
        body = self.rfile.read(length) if length else b""
        response = self.service.handle_request(
            self.command, self.path, dict(self.headers.items()), body)
        payload = response.payload()
        self.send_response(response.status)
        if payload:
            self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(payload)))
        self.end_headers()
        if payload:
            self.wfile.write(payload)

    do_GET = do_POST = do_PUT = do_DELETE = _respond

    def log_message(self, format, *args):  # noqa: A002 - stdlib signature
        logger.debug("%s - %s", self.address_string(), format % args)


def make_server(service: ReferenceService, host: str = "127.0.0.1",
                port: int = 0) -> ThreadingHTTPServer:
    """Bind a threaded HTTP server; ``port=0`` picks an ephemeral port."""
    handler = type("BoundHandler", (_Handler,), {"service": service})
    return ThreadingHTTPServer((host, port), handler)


def serve(config: ServiceConfig) -> None:
    """Run the service until interrupted."""
    service = ReferenceService.from_config(config)
    server = make_server(service, config.host, config.port)
    logger.info("serving on %s:%s", *server.server_address)
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        server.server_close()
        service.close()
