"""Local HTTP curation service.

Exposes kept-sentence pools and draft manifests over JSON endpoints so a
human (via the browser UI or plain curl) can assemble articles, validate
them against the edit rules, and publish to the static site. Drafts are
plain JSON files under the workspace, one per draft, with an optimistic
revision counter; the server holds no state a restart would lose.

No authentication: this is a localhost-only desk tool by design.
"""

from __future__ import annotations

import json
import re
import threading
from dataclasses import dataclass
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path
from urllib.parse import parse_qs, unquote, urlsplit

from .assemble import ArticleManifest, AssembleError, SentencePool, manifest_verdicts
from .pipeline import PipelineConfig, run
from .site import load_articles, slugify
from .tagging import load_topics

__all__ = ["ServiceError", "DraftRecord", "DraftStore", "CurationService", "make_server", "serve"]

_MAX_BODY = 1 << 20
_ID_RE = re.compile(r"^draft-\d{4,}$")

_CONTENT_TYPES = {
    ".html": "text/html; charset=utf-8",
    ".js": "text/javascript; charset=utf-8",
    ".css": "text/css; charset=utf-8",
    ".json": "application/json; charset=utf-8",
    ".svg": "image/svg+xml",
    ".png": "image/png",
    ".ico": "image/x-icon",
    ".map": "application/json; charset=utf-8",
    ".txt": "text/plain; charset=utf-8",
}


class ServiceError(Exception):
    """Maps to one JSON error response: {code, message, violations?}."""

    def __init__(self, status: int, code: str, message: str, violations: list | None = None):
        super().__init__(message)
        self.status = status
        self.code = code
        self.message = message
        self.violations = violations

    def body(self) -> dict:
        out = {"code": self.code, "message": self.message}
        if self.violations is not None:
            out["violations"] = self.violations
        return out


@dataclass
class DraftRecord:
    manifest: ArticleManifest
    revision: int
    verdicts: dict | None = None

    @property
    def valid(self) -> bool | None:
        if self.verdicts is None:
            return None
        return all(v.get("valid") for v in self.verdicts.values())

    def resource(self) -> dict:
        return {
            "id": self.manifest.id,
            "revision": self.revision,
            "status": self.manifest.status,
            "manifest": self.manifest.to_json(),
            "verdicts": self.verdicts,
            "valid": self.valid,
        }

    def to_json(self) -> dict:
        return {
            "revision": self.revision,
            "verdicts": self.verdicts,
            "manifest": self.manifest.to_json(),
        }

    @classmethod
    def from_json(cls, record: dict) -> "DraftRecord":
        return cls(
            manifest=ArticleManifest.from_json(record["manifest"]),
            revision=int(record["revision"]),
            verdicts=record.get("verdicts"),
        )


class DraftStore:
    """One JSON file per draft; ids are assigned sequentially."""

    def __init__(self, directory: str | Path):
        self.directory = Path(directory)
        self.directory.mkdir(parents=True, exist_ok=True)

    def _path(self, draft_id: str) -> Path:
        return self.directory / f"{draft_id}.json"

    def ids(self) -> list[str]:
        return sorted(p.stem for p in self.directory.glob("draft-*.json"))

    def next_id(self) -> str:
        highest = 0
        for did in self.ids():
            try:
                highest = max(highest, int(did.split("-", 1)[1]))
            except ValueError:
                continue
        return f"draft-{highest + 1:04d}"

    def load(self, draft_id: str) -> DraftRecord:
        if not _ID_RE.match(draft_id):
            raise ServiceError(404, "not_found", f"no draft {draft_id!r}")
        path = self._path(draft_id)
        if not path.is_file():
            raise ServiceError(404, "not_found", f"no draft {draft_id!r}")
        return DraftRecord.from_json(json.loads(path.read_text(encoding="utf-8")))

    def save(self, record: DraftRecord) -> None:
        path = self._path(record.manifest.id)
        tmp = path.with_name(path.name + ".tmp")
        tmp.write_text(
            json.dumps(record.to_json(), ensure_ascii=False, indent=2) + "\n",
            encoding="utf-8",
        )
        tmp.replace(path)


def _manifest_from_payload(payload: dict, draft_id: str, status: str) -> ArticleManifest:
    record = dict(payload)
    record["id"] = draft_id
    record["status"] = status
    try:
        return ArticleManifest.from_json(record)
    except (AssembleError, KeyError, TypeError, ValueError) as exc:
        raise ServiceError(400, "validation_error", f"bad manifest: {exc}") from exc


class CurationService(ThreadingHTTPServer):
    """HTTP server plus the workspace state the handlers need."""

    daemon_threads = True

    def __init__(self, config: PipelineConfig, address, ui_dir: str | Path | None = None):
        self.config = config
        self.topics = list(load_topics(config.topics))
        self.slug_to_topic = {slugify(t.name): t.name for t in self.topics}
        self.drafts = DraftStore(config.drafts_dir())
        self.ui_dir = Path(ui_dir).resolve() if ui_dir else None
        self.mutation_lock = threading.Lock()
        self.rebuild_lock = threading.Lock()
        super().__init__(address, _Handler)

    def pool_path(self, topic: str) -> Path:
        return self.config.pools / f"{slugify(topic)}.kept.jsonl"

    def load_pool(self, topic: str) -> SentencePool:
        path = self.pool_path(topic)
        if not path.is_file():
            raise ServiceError(
                404,
                "not_found",
                f"no kept pool for topic {topic!r}; run the filter stage first",
            )
        return SentencePool.load(path, topic=topic)

    def rebuild_site(self) -> None:
        with self.rebuild_lock:
            run("site", self.config)


class _Handler(BaseHTTPRequestHandler):
    protocol_version = "HTTP/1.1"
    server: CurationService

    # ---- plumbing -------------------------------------------------------

    def log_message(self, fmt: str, *args) -> None:
        pass  # quiet by default; this is a local tool driven by tests and the UI

    def _send_json(self, status: int, payload: dict) -> None:
        body = json.dumps(payload, ensure_ascii=False).encode("utf-8")
        self.send_response(status)
        self.send_header("Content-Type", "application/json; charset=utf-8")
        self.send_header("Content-Length", str(len(body)))
        self.end_headers()
        self.wfile.write(body)

    def _read_json(self) -> dict:
        length = int(self.headers.get("Content-Length") or 0)
        if length > _MAX_BODY:
            raise ServiceError(413, "too_large", "request body exceeds 1 MiB")
        raw = self.rfile.read(length) if length else b""
        if not raw:
            raise ServiceError(400, "validation_error", "request body must be JSON")
        try:
            payload = json.loads(raw.decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as exc:
            raise ServiceError(400, "validation_error", f"invalid JSON body: {exc}") from exc
        if not isinstance(payload, dict):
            raise ServiceError(400, "validation_error", "JSON body must be an object")
        return payload

    def _dispatch(self, method: str) -> None:
        parts = urlsplit(self.path)
        segments = [unquote(s) for s in parts.path.split("/") if s]
        query = {k: v[-1] for k, v in parse_qs(parts.query).items()}
        try:
            if segments[:1] == ["api"]:
                payload = self._route_api(method, segments[1:], query)
                status = 201 if (method == "POST" and segments[1:] == ["drafts"]) else 200
                self._send_json(status, payload)
            elif method == "GET":
                self._serve_static(segments)
            else:
                raise ServiceError(404, "not_found", f"no route for {method} {parts.path}")
        except ServiceError as exc:
            self._send_json(exc.status, exc.body())
        except BrokenPipeError:
            pass
        except Exception as exc:  # pragma: no cover - defensive 500
            self._send_json(500, {"code": "internal_error", "message": str(exc)})

    def do_GET(self) -> None:
        self._dispatch("GET")

    def do_POST(self) -> None:
        self._dispatch("POST")

    def do_PUT(self) -> None:
        self._dispatch("PUT")

    # ---- API routes -----------------------------------------------------

    def _route_api(self, method: str, seg: list[str], query: dict) -> dict:
        srv = self.server
        if method == "GET" and seg == ["topics"]:
            return self._get_topics()
        if method == "GET" and len(seg) == 2 and seg[0] == "pools":
            return self._get_pool(seg[1], query)
        if seg[:1] == ["drafts"]:
            if method == "GET" and len(seg) == 1:
                return self._list_drafts()
            if method == "POST" and len(seg) == 1:
                return self._create_draft()
            if method == "GET" and len(seg) == 2:
                with srv.mutation_lock:
                    return srv.drafts.load(seg[1]).resource()
            if method == "PUT" and len(seg) == 2:
                return self._update_draft(seg[1])
            if method == "POST" and len(seg) == 3 and seg[2] == "validate":
                return self._validate_draft(seg[1])
            if method == "POST" and len(seg) == 3 and seg[2] == "publish":
                return self._publish_draft(seg[1])
        if method == "GET" and seg == ["articles"]:
            return self._get_articles()
        raise ServiceError(404, "not_found", f"no route for {method} /api/{'/'.join(seg)}")

    def _get_topics(self) -> dict:
        srv = self.server
        out = []
        for spec in srv.topics:
            out.append(
                {
                    "name": spec.name,
                    "slug": slugify(spec.name),
                    "keywords": sorted(spec.keywords),
                    "pool": srv.pool_path(spec.name).is_file(),
                }
            )
        return {"topics": out}

    def _get_pool(self, slug: str, query: dict) -> dict:
        srv = self.server
        topic = srv.slug_to_topic.get(slug)
        if topic is None:
            raise ServiceError(404, "not_found", f"no topic with slug {slug!r}")
        pool = srv.load_pool(topic)
        try:
            offset = int(query.get("offset", 0))
            limit = int(query.get("limit", 50))
        except ValueError as exc:
            raise ServiceError(400, "validation_error", "offset and limit must be integers") from exc
        if offset < 0 or limit < 1:
            raise ServiceError(400, "validation_error", "offset must be >= 0 and limit >= 1")
        sentences = list(pool)
        page = sentences[offset : offset + limit]
        return {
            "topic": topic,
            "slug": slug,
            "total": len(sentences),
            "offset": offset,
            "limit": limit,
            "sentences": [s.to_json() for s in page],
        }

    def _list_drafts(self) -> dict:
        srv = self.server
        with srv.mutation_lock:
            records = [srv.drafts.load(did).resource() for did in srv.drafts.ids()]
        return {"drafts": records}

    def _create_draft(self) -> dict:
        srv = self.server
        payload = self._read_json()
        topic = payload.get("topic")
        if topic not in {t.name for t in srv.topics}:
            raise ServiceError(400, "validation_error", f"unknown topic {topic!r}")
        with srv.mutation_lock:
            draft_id = srv.drafts.next_id()
            manifest = _manifest_from_payload(payload, draft_id, status="draft")
            record = DraftRecord(manifest=manifest, revision=1)
            srv.drafts.save(record)
        return record.resource()

    def _update_draft(self, draft_id: str) -> dict:
        srv = self.server
        payload = self._read_json()
        if set(payload) != {"revision", "manifest"}:
            raise ServiceError(
                400, "validation_error", "PUT body must be {revision, manifest}"
            )
        if not isinstance(payload["manifest"], dict):
            raise ServiceError(400, "validation_error", "manifest must be an object")
        with srv.mutation_lock:
            current = srv.drafts.load(draft_id)
            if current.manifest.status == "published":
                raise ServiceError(
                    409, "published_frozen", f"draft {draft_id!r} is published and frozen"
                )
            if payload["revision"] != current.revision:
                raise ServiceError(
                    409,
                    "revision_conflict",
                    f"draft {draft_id!r} is at revision {current.revision}, "
                    f"not {payload['revision']}; reload and retry",
                )
            sent = payload["manifest"]
            if sent.get("id", draft_id) != draft_id:
                raise ServiceError(400, "validation_error", "manifest id must match the URL")
            if sent.get("topic") not in {t.name for t in srv.topics}:
                raise ServiceError(400, "validation_error", f"unknown topic {sent.get('topic')!r}")
            manifest = _manifest_from_payload(sent, draft_id, status="draft")
            record = DraftRecord(manifest=manifest, revision=current.revision + 1, verdicts=None)
            srv.drafts.save(record)
        return record.resource()

    def _validate_draft(self, draft_id: str) -> dict:
        srv = self.server
        with srv.mutation_lock:
            record = srv.drafts.load(draft_id)
            pool = srv.load_pool(record.manifest.topic)
            verdicts = manifest_verdicts(record.manifest, pool)
            record.verdicts = {name: v.to_json() for name, v in verdicts.items()}
            if record.manifest.status != "published":
                record.manifest.status = "validated" if record.valid else "draft"
            srv.drafts.save(record)
        return {"id": draft_id, "revision": record.revision, "valid": record.valid,
                "verdicts": record.verdicts}

    def _publish_draft(self, draft_id: str) -> dict:
        srv = self.server
        with srv.mutation_lock:
            record = srv.drafts.load(draft_id)
            pool = srv.load_pool(record.manifest.topic)
            verdicts = manifest_verdicts(record.manifest, pool)
            record.verdicts = {name: v.to_json() for name, v in verdicts.items()}
            if not record.valid:
                violations = [
                    {"section": name, **verdict}
                    for name, verdict in record.verdicts.items()
                    if not verdict["valid"]
                ]
                srv.drafts.save(record)
                raise ServiceError(
                    409, "invalid_draft", "draft fails validation; fix and retry", violations
                )
            record.manifest.status = "published"
            srv.drafts.save(record)
            srv.config.manifests.mkdir(parents=True, exist_ok=True)
            manifest_file = srv.config.manifests / f"{draft_id}.json"
            record.manifest.save(manifest_file)
        try:
            srv.rebuild_site()
        except Exception as exc:
            with srv.mutation_lock:
                manifest_file.unlink(missing_ok=True)
                record.manifest.status = "validated"
                srv.drafts.save(record)
            raise ServiceError(500, "rebuild_failed", f"site rebuild failed: {exc}") from exc
        for article in load_articles(srv.config.articles):
            if article.article.manifest_id == draft_id:
                return {
                    "id": draft_id,
                    "revision": record.revision,
                    "slug": article.slug,
                    "published_at": article.published_at,
                    "tags": list(article.tags),
                    "page": f"article/{article.slug}.html",
                }
        raise ServiceError(500, "internal_error", "published article missing from site output")

    def _get_articles(self) -> dict:
        srv = self.server
        if not srv.config.articles.is_dir():
            return {"articles": []}
        out = []
        for article in load_articles(srv.config.articles):
            out.append(
                {
                    "manifest_id": article.article.manifest_id,
                    "slug": article.slug,
                    "title": article.article.title,
                    "topic": article.article.topic,
                    "published_at": article.published_at,
                    "tags": list(article.tags),
                    "page": f"article/{article.slug}.html",
                }
            )
        return {"articles": out}

    # ---- static UI ------------------------------------------------------

    def _serve_static(self, segments: list[str]) -> None:
        srv = self.server
        if srv.ui_dir is None:
            if not segments:
                self._send_json(200, {"service": "newsloom-curation", "ui": False})
                return
            raise ServiceError(404, "not_found", "no UI assets configured")
        target = srv.ui_dir.joinpath(*segments) if segments else srv.ui_dir / "index.html"
        if target.is_dir():
            target = target / "index.html"
        resolved = target.resolve()
        if not str(resolved).startswith(str(srv.ui_dir) + "/") and resolved != srv.ui_dir:
            raise ServiceError(404, "not_found", "path escapes the UI directory")
        if not resolved.is_file():
            raise ServiceError(404, "not_found", f"no such asset: /{'/'.join(segments)}")
        body = resolved.read_bytes()
        ctype = _CONTENT_TYPES.get(resolved.suffix.lower(), "application/octet-stream")
        self.send_response(200)
        self.send_header("Content-Type", ctype)
        self.send_header("Content-Length", str(len(body)))
        self.end_headers()
        self.wfile.write(body)


def make_server(
    config: PipelineConfig,
    host: str = "127.0.0.1",
    port: int = 8642,
    ui_dir: str | Path | None = None,
) -> CurationService:
    """Bind and return the server without starting its loop (port 0 = ephemeral)."""
    return CurationService(config, (host, port), ui_dir=ui_dir)


def serve(
    config: PipelineConfig,
    host: str = "127.0.0.1",
    port: int = 8642,
    ui_dir: str | Path | None = None,
) -> None:
    server = make_server(config, host, port, ui_dir)
    addr = f"http://{server.server_address[0]}:{server.server_address[1]}/"
    print(f"curation service listening on {addr}", flush=True)
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        server.server_close()
