import json
import threading
from pathlib import Path

import pytest
import requests

from bola_guard import (
    AclStore,
    ObjectStore,
    ReferenceService,
    ServiceConfig,
    default_rule_set,
    issue_token,
)
from bola_guard.service import make_server

KEY = b"service-test-key"
NOW = 1_700_000_000.0

MUTATION_EVENTS = {"ace_created", "object_created", "object_updated",
                   "object_deleted"}


def token(user_id, groups, now=NOW, ttl=3600):
    return issue_token(user_id, user_id, set(groups), ttl, KEY, now=now).raw


@pytest.fixture
def events():
    return []


@pytest.fixture
def service(tmp_path, events):
    svc = build_service(tmp_path, events)
    yield svc
    svc.close()


def build_service(tmp_path, events=None, clock=lambda: NOW):
    acl = AclStore.open(tmp_path / "acl.ndjson")
    objects = ObjectStore.open(tmp_path / "objects.ndjson")
    observer = (lambda event, payload: events.append((event, payload))) \
        if events is not None else None
    return ReferenceService(default_rule_set(), KEY, acl, objects,
                            clock=clock, observer=observer)


def request(service, method, url, tok=None, body=None):
    headers = {} if tok is None else {"api_key": tok}
    payload = None if body is None else json.dumps(body).encode()
    return service.handle_request(method, url, headers, payload)


class TestTokenGate:
    def test_missing_token_is_401(self, service):
        response = request(service, "GET", "/pet/1")
        assert response.status == 401
        assert response.body["reason"] == "token_invalid"

    def test_garbage_token_is_401(self, service):
        response = request(service, "GET", "/pet/1", tok="not.a.token")
        assert response.status == 401

    def test_expired_token_is_401(self, service):
        stale = token("123", {"G21"}, now=NOW - 7200, ttl=60)
        assert request(service, "GET", "/pet/1", tok=stale).status == 401

    def test_token_signed_with_other_key_is_401(self, service):
        forged = issue_token("123", "123", {"G21"}, 3600, b"other-key",
                             now=NOW).raw
        assert request(service, "GET", "/pet/1", tok=forged).status == 401


class TestCreateFlow:
    def test_create_returns_201_with_id_and_records_entry(self, service):
        response = request(service, "POST", "/pet", token("123", {"G21"}),
                           {"name": "lucky"})
        assert response.status == 201
        assert response.body == {"id": 1, "name": "lucky"}
        ace = service.engine.store.get("/pet", 1)
        assert ace.owner == "123"
        assert ace.users_rw == ("123",)
        assert ace.users_ro == ()

    def test_each_201_creates_exactly_one_entry(self, service):
        before = len(service.engine.store.entries())
        for i in range(3):
            assert request(service, "POST", "/pet", token("123", {"G21"}),
                           {"n": i}).status == 201
        assert len(service.engine.store.entries()) == before + 3

    def test_read_only_group_cannot_create(self, service):
        response = request(service, "POST", "/pet", token("123", {"G22"}), {})
        assert response.status == 403
        assert response.body == {"code": 403, "reason": "no_group_rule"}
        assert service.engine.store.entries() == []

    def test_ids_are_monotonic_per_path(self, service):
        a = request(service, "POST", "/pet", token("1", {"G21"}), {}).body["id"]
        b = request(service, "POST", "/user", token("2", {"G11"}), {}).body["id"]
        c = request(service, "POST", "/pet", token("1", {"G21"}), {}).body["id"]
        assert (a, b, c) == (1, 1, 2)

    def test_invalid_json_body_is_400(self, service):
        response = service.handle_request(
            "POST", "/pet", {"api_key": token("1", {"G21"})}, b"{broken")
        assert response.status == 400


class TestObjectAccess:
    def test_owner_update_and_read(self, service):
        tok = token("123", {"G21"})
        pid = request(service, "POST", "/pet", tok, {"name": "lucky"}).body["id"]
        updated = request(service, "PUT", f"/pet/{pid}", tok, {"name": "rex"})
        assert updated.status == 200
        got = request(service, "GET", f"/pet/{pid}", tok)
        assert got.status == 200
        assert got.body == {"id": pid, "name": "rex"}

    def test_non_owner_update_is_403_not_owner(self, service):
        pid = request(service, "POST", "/pet", token("123", {"G21"}),
                      {}).body["id"]
        response = request(service, "PUT", f"/pet/{pid}",
                           token("456", {"G21"}), {"name": "x"})
        assert response.status == 403
        assert response.body == {"code": 403, "reason": "not_owner"}

    def test_any_reader_group_reads_foreign_object(self, service):
        pid = request(service, "POST", "/pet", token("123", {"G21"}),
                      {"name": "lucky"}).body["id"]
        response = request(service, "GET", f"/pet/{pid}", token("9", {"G22"}))
        assert response.status == 200

    def test_any_deleter_group_deletes_foreign_object(self, service):
        pid = request(service, "POST", "/pet", token("123", {"G21"}),
                      {}).body["id"]
        response = request(service, "DELETE", f"/pet/{pid}",
                           token("9", {"G23"}))
        assert response.status == 204
        assert service.engine.store.get("/pet", pid) is None
        assert service.objects.get("/pet", pid) is None

    def test_missing_object_when_authorized_is_404(self, service):
        response = request(service, "GET", "/pet/42", token("9", {"G22"}))
        assert response.status == 404

    def test_missing_object_under_ownership_rule_is_403(self, service):
        response = request(service, "GET", "/pet/42", token("9", {"G21"}))
        assert response.status == 403
        assert response.body["reason"] == "no_such_object"

    def test_unknown_route_is_404(self, service):
        assert request(service, "GET", "/stock/1",
                       token("9", {"G21"})).status == 404

    def test_unmapped_method_is_405(self, service):
        assert service.handle_request(
            "PATCH", "/pet/1", {"api_key": token("9", {"G21"})}, None
        ).status == 405

    def test_collection_listing_filters_to_readable_objects(self, service):
        mine = token("123", {"G21"})
        other = token("456", {"G21"})
        request(service, "POST", "/pet", mine, {"name": "a"})
        request(service, "POST", "/pet", other, {"name": "b"})
        me = request(service, "GET", "/pet", mine)
        assert me.status == 200
        assert [o["name"] for o in me.body] == ["a"]
        reader = request(service, "GET", "/pet", token("9", {"G22"}))
        assert [o["name"] for o in reader.body] == ["a", "b"]
        assert request(service, "GET", "/pet", token("9", {"G23"})).status == 403


class TestAdminEndpoint:
    def test_admin_sees_full_acl(self, service):
        request(service, "POST", "/pet", token("123", {"G21"}), {})
        response = request(service, "GET", "/admin/acl", token("0", {"admin"}))
        assert response.status == 200
        assert response.body == [{"id": 1, "path": "/pet", "owner": "123",
                                  "users_ro": [], "users_rw": ["123"]}]

    def test_non_admin_is_403(self, service):
        assert request(service, "GET", "/admin/acl",
                       token("123", {"G21"})).status == 403

    def test_empty_store_lists_empty(self, service):
        response = request(service, "GET", "/admin/acl", token("0", {"admin"}))
        assert response.status == 200
        assert response.body == []


class TestDecisionOrdering:
    def test_every_mutation_follows_an_allow_in_the_same_request(self, service,
                                                                 events):
        owner = token("123", {"G21"})
        pid = request(service, "POST", "/pet", owner, {"n": 1}).body["id"]
        request(service, "PUT", f"/pet/{pid}", owner, {"n": 2})
        request(service, "PUT", f"/pet/{pid}", token("456", {"G21"}), {"n": 3})
        request(service, "DELETE", f"/pet/{pid}", token("9", {"G23"}))

        allowed_seqs = set()
        for event, payload in events:
            if event == "decision" and payload["allowed"]:
                allowed_seqs.add(payload["seq"])
            if event in MUTATION_EVENTS:
                assert payload["seq"] in allowed_seqs, \
                    f"{event} happened without a prior allow"

    def test_denied_requests_mutate_nothing(self, service, events):
        request(service, "POST", "/pet", token("123", {"G22"}), {})
        assert not [e for e, _ in events if e in MUTATION_EVENTS]


class TestRestart:
    def test_outcomes_survive_a_restart_on_the_same_journals(self, tmp_path):
        first = build_service(tmp_path)
        owner = token("123", {"G21"})
        pid = request(first, "POST", "/pet", owner, {"name": "lucky"}).body["id"]
        request(first, "POST", "/pet", token("456", {"G21"}), {"name": "rex"})
        first.close()

        second = build_service(tmp_path)
        try:
            assert request(second, "GET", f"/pet/{pid}",
                           token("9", {"G22"})).status == 200
            assert request(second, "PUT", f"/pet/{pid}", owner,
                           {"name": "l2"}).status == 200
            assert request(second, "PUT", f"/pet/{pid}",
                           token("456", {"G21"}), {}).status == 403
            fresh = request(second, "POST", "/pet", owner, {}).body["id"]
            assert fresh == 3
        finally:
            second.close()


class TestHttpAdapter:
    def test_real_http_round_trip(self, tmp_path):
        service = build_service(tmp_path)
        server = make_server(service)
        thread = threading.Thread(target=server.serve_forever, daemon=True)
        thread.start()
        port = server.server_address[1]
        base = f"http://127.0.0.1:{port}"
        try:
            created = requests.post(f"{base}/pet",
                                    headers={"api_key": token("123", {"G21"})},
                                    json={"name": "lucky"}, timeout=5)
            assert created.status_code == 201
            pid = created.json()["id"]
            got = requests.get(f"{base}/pet/{pid}",
                               headers={"api_key": token("9", {"G22"})},
                               timeout=5)
            assert got.status_code == 200
            assert got.json()["name"] == "lucky"
            denied = requests.get(f"{base}/pet/{pid}", timeout=5)
            assert denied.status_code == 401
        finally:
            server.shutdown()
            server.server_close()
            service.close()
            thread.join(timeout=5)


class TestConfig:
    def test_from_config_wires_everything(self, tmp_path):
        (tmp_path / "service.key").write_bytes(KEY)
        config_file = tmp_path / "config.yaml"
        config_file.write_text(
            f"port: 0\n"
            f"key_path: {tmp_path / 'service.key'}\n"
            f"journal_path: {tmp_path / 'acl.ndjson'}\n",
            encoding="utf-8")
        config = ServiceConfig.load(config_file)
        assert config.port == 0
        service = ReferenceService.from_config(config, clock=lambda: NOW)
        try:
            response = request(service, "POST", "/pet", token("123", {"G21"}),
                               {"name": "lucky"})
            assert response.status == 201
            assert Path(f"{tmp_path}/acl.ndjson.objects").exists()
        finally:
            service.close()
