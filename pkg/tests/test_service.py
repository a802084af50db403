"""Curation service tests: endpoint contract, locking, publish safety."""

from __future__ import annotations

import json
import shutil
import threading
from pathlib import Path

import httpx
import pytest

from draft_factory import draft_from_pool
from newsloom.assemble import ArticleManifest, SentencePool, manifest_verdicts
from newsloom.pipeline import PipelineConfig
from newsloom.service import make_server

TOPIC = "Asia Now: North Korea"
TOPIC_SLUG = "asia-now-north-korea"


@pytest.fixture()
def workspace(completed_toy, tmp_path) -> Path:
    work = tmp_path / "toy"
    shutil.copytree(completed_toy, work)
    return work


def start_server(workspace: Path):
    config = PipelineConfig.load(workspace / "pipeline.json")
    server = make_server(config, port=0)
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    return server, thread


@pytest.fixture()
def server(workspace):
    server, thread = start_server(workspace)
    yield server
    server.shutdown()
    server.server_close()
    thread.join(timeout=5)


@pytest.fixture()
def client(server):
    port = server.server_address[1]
    with httpx.Client(base_url=f"http://127.0.0.1:{port}", timeout=30) as c:
        yield c


def load_kept_pool(workspace: Path, topic: str = TOPIC) -> SentencePool:
    from newsloom.site import slugify

    path = workspace / "work/pools" / f"{slugify(topic)}.kept.jsonl"
    return SentencePool.load(path, topic=topic)


def valid_payload(workspace: Path, topic: str = TOPIC) -> dict:
    pool = load_kept_pool(workspace, topic)
    manifest = draft_from_pool(pool, "placeholder", topic)
    assert manifest is not None, "toy pool cannot support a draft"
    record = manifest.to_json()
    del record["id"]
    del record["status"]
    return record


class TestTopics:
    def test_lists_configured_topics_with_pools(self, client):
        r = client.get("/api/topics")
        assert r.status_code == 200
        topics = r.json()["topics"]
        assert [t["name"] for t in topics] == [
            "Asia Now: North Korea",
            "America Now: Politics",
            "Fake News and Journalism",
        ]
        assert all(t["pool"] for t in topics)
        assert topics[0]["slug"] == TOPIC_SLUG
        assert "pyongyang" in topics[0]["keywords"]


class TestPools:
    def test_pagination_walk_sees_each_sentence_once(self, client, workspace):
        expected = [s.sid for s in load_kept_pool(workspace)]
        seen: list[str] = []
        offset = 0
        while True:
            r = client.get(f"/api/pools/{TOPIC_SLUG}", params={"offset": offset, "limit": 7})
            assert r.status_code == 200
            page = r.json()
            assert page["total"] == len(expected)
            if not page["sentences"]:
                break
            seen.extend(s["sid"] for s in page["sentences"])
            offset += 7
        assert seen == expected

    def test_sentences_carry_novelty_metadata(self, client):
        r = client.get(f"/api/pools/{TOPIC_SLUG}", params={"limit": 50})
        sentences = r.json()["sentences"]
        for s in sentences:
            assert set(s) == {"sid", "text", "distance", "dissimilarity", "closest"}
            # fast mode may keep without pinning a closest match
            assert s["dissimilarity"] is None or s["dissimilarity"] > 0.3

    def test_unknown_slug_and_bad_params(self, client):
        assert client.get("/api/pools/no-such-topic").status_code == 404
        r = client.get(f"/api/pools/{TOPIC_SLUG}", params={"offset": -1})
        assert r.status_code == 400
        r = client.get(f"/api/pools/{TOPIC_SLUG}", params={"limit": "x"})
        assert r.status_code == 400
        body = r.json()
        assert body["code"] == "validation_error" and body["message"]


class TestDraftLifecycle:
    def test_create_edit_validate_publish(self, client, workspace):
        payload = valid_payload(workspace)
        r = client.post("/api/drafts", json=payload)
        assert r.status_code == 201
        draft = r.json()
        assert draft["id"] == "draft-0001"
        assert draft["revision"] == 1
        assert draft["status"] == "draft"
        assert draft["verdicts"] is None

        r = client.get(f"/api/drafts/{draft['id']}")
        assert r.status_code == 200 and r.json() == draft

        manifest = draft["manifest"]
        manifest["title"] = payload["title"]
        r = client.put(
            f"/api/drafts/{draft['id']}",
            json={"revision": 1, "manifest": manifest},
        )
        assert r.status_code == 200
        assert r.json()["revision"] == 2

        r = client.post(f"/api/drafts/{draft['id']}/validate")
        assert r.status_code == 200
        verdict = r.json()
        assert verdict["valid"] is True
        assert set(verdict["verdicts"]) == {"title", "excerpt", "body"}

        r = client.post(f"/api/drafts/{draft['id']}/publish")
        assert r.status_code == 200
        pub = r.json()
        assert pub["slug"] and pub["tags"]
        page = workspace / "work/site" / pub["page"]
        assert page.is_file()
        manifest_file = workspace / "work/manifests" / f"{draft['id']}.json"
        assert ArticleManifest.load(manifest_file).status == "published"

        r = client.get("/api/articles")
        listed = r.json()["articles"]
        assert [a["manifest_id"] for a in listed] == [draft["id"]]
        assert listed[0]["page"] == pub["page"]

    def test_validate_matches_direct_validators(self, client, workspace):
        payload = valid_payload(workspace)
        payload["excerpt"] = payload["excerpt"][:1]  # word count now under 50
        draft = client.post("/api/drafts", json=payload).json()
        server_verdicts = client.post(f"/api/drafts/{draft['id']}/validate").json()["verdicts"]

        manifest = ArticleManifest.from_json(draft["manifest"])
        pool = load_kept_pool(workspace)
        direct = {k: v.to_json() for k, v in manifest_verdicts(manifest, pool).items()}
        assert server_verdicts == direct
        assert not server_verdicts["excerpt"]["valid"]

    def test_invalid_draft_publish_refused_with_verdicts(self, client, workspace):
        payload = valid_payload(workspace)
        payload["title"] = "totally invented headline"
        draft = client.post("/api/drafts", json=payload).json()
        r = client.post(f"/api/drafts/{draft['id']}/publish")
        assert r.status_code == 409
        body = r.json()
        assert body["code"] == "invalid_draft"
        assert any(v["section"] == "title" for v in body["violations"])
        assert not (workspace / "work/manifests" / f"{draft['id']}.json").exists()
        assert client.get("/api/articles").json()["articles"] == []

    def test_republish_is_idempotent(self, client, workspace):
        payload = valid_payload(workspace)
        draft = client.post("/api/drafts", json=payload).json()
        first = client.post(f"/api/drafts/{draft['id']}/publish")
        assert first.status_code == 200
        index = (workspace / "work/site/index.html").read_bytes()
        second = client.post(f"/api/drafts/{draft['id']}/publish")
        assert second.status_code == 200
        assert second.json()["slug"] == first.json()["slug"]
        assert (workspace / "work/site/index.html").read_bytes() == index

    def test_unknown_topic_rejected(self, client, workspace):
        payload = valid_payload(workspace)
        payload["topic"] = "Weather"
        r = client.post("/api/drafts", json=payload)
        assert r.status_code == 400
        assert r.json()["code"] == "validation_error"

    def test_missing_draft_404(self, client):
        assert client.get("/api/drafts/draft-9999").status_code == 404
        assert client.post("/api/drafts/draft-9999/validate").status_code == 404
        assert client.get("/api/drafts/weird..id").status_code == 404


class TestConcurrencyControl:
    def test_stale_revision_conflict(self, client, workspace):
        payload = valid_payload(workspace)
        draft = client.post("/api/drafts", json=payload).json()
        manifest = draft["manifest"]
        ok = client.put(f"/api/drafts/{draft['id']}", json={"revision": 1, "manifest": manifest})
        assert ok.status_code == 200
        stale = client.put(
            f"/api/drafts/{draft['id']}", json={"revision": 1, "manifest": manifest}
        )
        assert stale.status_code == 409
        assert stale.json()["code"] == "revision_conflict"
        current = client.get(f"/api/drafts/{draft['id']}").json()
        assert current["revision"] == 2

    def test_concurrent_updates_one_winner(self, client, workspace):
        payload = valid_payload(workspace)
        draft = client.post("/api/drafts", json=payload).json()
        port = client.base_url.port
        results = []

        def push(title):
            with httpx.Client(base_url=f"http://127.0.0.1:{port}", timeout=30) as c:
                manifest = dict(draft["manifest"])
                manifest["title"] = title
                results.append(
                    c.put(
                        f"/api/drafts/{draft['id']}",
                        json={"revision": 1, "manifest": manifest},
                    ).status_code
                )

        threads = [threading.Thread(target=push, args=(t,)) for t in ("a b", "c d")]
        for t in threads:
            t.start()
        for t in threads:
            t.join()
        assert sorted(results) == [200, 409]

    def test_published_draft_is_frozen(self, client, workspace):
        payload = valid_payload(workspace)
        draft = client.post("/api/drafts", json=payload).json()
        assert client.post(f"/api/drafts/{draft['id']}/publish").status_code == 200
        r = client.put(
            f"/api/drafts/{draft['id']}",
            json={"revision": 1, "manifest": draft["manifest"]},
        )
        assert r.status_code == 409
        assert r.json()["code"] == "published_frozen"


class TestPersistence:
    def test_restart_loses_nothing(self, workspace):
        server, thread = start_server(workspace)
        port = server.server_address[1]
        with httpx.Client(base_url=f"http://127.0.0.1:{port}", timeout=30) as c:
            payload = valid_payload(workspace)
            draft = c.post("/api/drafts", json=payload).json()
            c.post(f"/api/drafts/{draft['id']}/validate")
            before = c.get(f"/api/drafts/{draft['id']}").json()
        server.shutdown()
        server.server_close()
        thread.join(timeout=5)

        server, thread = start_server(workspace)
        port = server.server_address[1]
        try:
            with httpx.Client(base_url=f"http://127.0.0.1:{port}", timeout=30) as c:
                after = c.get(f"/api/drafts/{draft['id']}").json()
                assert after == before
                ids = [d["id"] for d in c.get("/api/drafts").json()["drafts"]]
                assert ids == [draft["id"]]
                fresh = c.post("/api/drafts", json=payload).json()
                assert fresh["id"] == "draft-0002"  # counter resumes past existing files
        finally:
            server.shutdown()
            server.server_close()
            thread.join(timeout=5)


MANGLE_KINDS = (
    "keep",
    "short_excerpt",
    "fake_title",
    "two_word_edit",
    "dup_sentence",
    "unknown_sid",
    "body_edit",
)


def mangle(payload: dict, kind: str) -> tuple[dict, bool]:
    """Return (mutated payload, still_expected_valid)."""
    p = json.loads(json.dumps(payload))
    if kind == "keep":
        return p, True
    if kind == "short_excerpt":
        p["excerpt"] = p["excerpt"][:1]
    elif kind == "fake_title":
        p["title"] = "breaking news tonight special"
    elif kind == "two_word_edit":
        p["excerpt"][0]["op"] = {"kind": "replace_word", "position": 0, "replacement": "two words"}
    elif kind == "dup_sentence":
        p["excerpt"].append(dict(p["excerpt"][0]))
    elif kind == "unknown_sid":
        p["body"][0]["sentence_id"] = "999.9"
    elif kind == "body_edit":
        p["body"][0]["op"] = {"kind": "replace_char", "position": 0, "replacement": "x"}
    return p, False


class TestPublishSafety:
    def test_fuzzed_drafts_never_publish_invalid(self, client, workspace):
        topics = (
            "Asia Now: North Korea",
            "America Now: Politics",
            "Fake News and Journalism",
        )
        bases = [valid_payload(workspace, t) for t in topics]
        pools = {t: load_kept_pool(workspace, t) for t in topics}
        published_ids = []
        for i in range(21):
            # distinct topic per repeat of a kind, so valid publishes never
            # collide on the same title slug
            base = bases[i % len(bases)]
            payload, expect_valid = mangle(base, MANGLE_KINDS[i % len(MANGLE_KINDS)])
            draft = client.post("/api/drafts", json=payload).json()
            r = client.post(f"/api/drafts/{draft['id']}/publish")
            if r.status_code == 200:
                manifest_file = workspace / "work/manifests" / f"{draft['id']}.json"
                manifest = ArticleManifest.load(manifest_file)
                verdicts = manifest_verdicts(manifest, pools[manifest.topic])
                assert all(v.valid for v in verdicts.values())
                assert expect_valid
                published_ids.append(draft["id"])
            else:
                assert r.status_code == 409
                assert not expect_valid
                assert r.json()["violations"]
                assert not (workspace / "work/manifests" / f"{draft['id']}.json").exists()
        listed = client.get("/api/articles").json()["articles"]
        assert sorted(a["manifest_id"] for a in listed) == sorted(published_ids)
        assert len(published_ids) == 3  # one valid draft per topic


class TestStaticUi:
    def test_serves_ui_assets_when_configured(self, workspace, tmp_path):
        ui = tmp_path / "dist"
        ui.mkdir()
        (ui / "index.html").write_text("<!doctype html><title>studio</title>")
        (ui / "app.js").write_text("console.log('hi')")
        config = PipelineConfig.load(workspace / "pipeline.json")
        server = make_server(config, port=0, ui_dir=ui)
        thread = threading.Thread(target=server.serve_forever, daemon=True)
        thread.start()
        try:
            port = server.server_address[1]
            with httpx.Client(base_url=f"http://127.0.0.1:{port}", timeout=30) as c:
                r = c.get("/")
                assert r.status_code == 200 and "studio" in r.text
                assert c.get("/app.js").status_code == 200
                assert c.get("/../pipeline.json").status_code == 404
                assert c.get("/missing.css").status_code == 404
        finally:
            server.shutdown()
            server.server_close()
            thread.join(timeout=5)

    def test_info_json_without_ui(self, client):
        r = client.get("/")
        assert r.status_code == 200
        assert r.json()["ui"] is False
