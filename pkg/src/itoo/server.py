"""JSON-over-HTTP service surface for the engine.

Every response carries the snapshot version it was served from. Mutations
are serialized by the engine and durably logged before the response goes
out; reads run against one immutable snapshot reference. The handler also
serves the demo UI's static files when a directory is configured.
"""

from __future__ import annotations

import base64
import json
import mimetypes
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path
from urllib.parse import parse_qs, urlparse

import numpy as np

from . import demo
from .engine import Engine
from .errors import ContractViolation, ItooError, ParseError, SchemaError, UnknownEntityError
from .imaging import RasterImage
from .records import EmbeddingBlock, ItemRecord


class ApiError(Exception):
    def __init__(self, status: int, message: str, field: str | None = None):
        super().__init__(message)
        self.status = status
        self.payload = {"error": message}
        if field is not None:
            self.payload["field"] = field


def _require(body: dict, field: str):
    if field not in body:
        raise ApiError(400, f"missing field {field!r}", field)
    return body[field]


def _ootd_card(engine: Engine, ootd_id: str, score: float, source: str) -> dict:
    post = engine.ootds[ootd_id]
    items = [engine.items[i] for i in post.item_ids if i in engine.items]
    first = items[0] if items else None
    return {
        "ootd_id": post.ootd_id,
        "uploader_id": post.uploader_id,
        "hashtags": sorted(post.hashtags),
        "image_ref": f"placeholder:{first.sub_category}:{first.color_tag}" if first else "placeholder:none:none",
        "items": [
            {"item_id": it.item_id, "sub_category": it.sub_category, "color_tag": it.color_tag}
            for it in items
        ],
        "score": score,
        "source": source,
    }


class EngineHandler(BaseHTTPRequestHandler):
    engine: Engine = None  # set by serve()
    static_dir: Path | None = None
    protocol_version = "HTTP/1.1"

    # --------------------------- plumbing ---------------------------

    def log_message(self, fmt, *args):  # quiet by default
        pass

    def _send(self, status: int, payload: dict | bytes, content_type: str = "application/json"):
        body = payload if isinstance(payload, bytes) else json.dumps(payload).encode()
        self.send_response(status)
        self.send_header("Content-Type", content_type)
        self.send_header("Content-Length", str(len(body)))
        self.send_header("Access-Control-Allow-Origin", "*")
        self.send_header("Access-Control-Allow-Headers", "Content-Type")
        self.send_header("Access-Control-Allow-Methods", "GET, POST, OPTIONS")
        self.end_headers()
        self.wfile.write(body)

    def _json_body(self) -> dict:
        length = int(self.headers.get("Content-Length") or 0)
        raw = self.rfile.read(length) if length else b"{}"
        try:
            body = json.loads(raw or b"{}")
        except json.JSONDecodeError as exc:
            raise ApiError(400, f"malformed JSON body: {exc.msg}")
        if not isinstance(body, dict):
            raise ApiError(400, "body must be a JSON object")
        return body

    def _query(self) -> dict[str, str]:
        return {k: v[0] for k, v in parse_qs(urlparse(self.path).query).items()}

    def _int_param(self, params: dict, name: str, default: int | None = None) -> int:
        if name not in params:
            if default is None:
                raise ApiError(400, f"missing query parameter {name!r}", name)
            return default
        try:
            return int(params[name])
        except ValueError:
            raise ApiError(400, f"query parameter {name!r} must be an integer", name)

    def _dispatch(self, handler) -> None:
        try:
            handler()
        except ApiError as exc:
            self._send(exc.status, exc.payload)
        except UnknownEntityError as exc:
            self._send(404, {"error": str(exc).strip("'\"")})
        except (ContractViolation, SchemaError, ParseError) as exc:
            self._send(400, {"error": str(exc)})
        except ItooError as exc:
            self._send(400, {"error": str(exc)})
        except Exception as exc:  # internal failure, state untouched
            self._send(500, {"error": f"internal error: {exc}"})

    def do_OPTIONS(self):
        self._send(204, b"", "text/plain")

    # --------------------------- routes ---------------------------

    def do_GET(self):
        self._dispatch(self._get)

    def do_POST(self):
        self._dispatch(self._post)

    def _get(self):
        path = urlparse(self.path).path
        params = self._query()
        engine = self.engine

        if path == "/health":
            snap = engine.require_snapshot()
            self._send(200, {"status": "ok", "snapshot_version": snap.version})
        elif path == "/feed":
            user_id = params.get("user_id") or _raise_param("user_id")
            k = self._int_param(params, "k", 10)
            entries, version = engine.feed(user_id, k)
            self._send(200, {
                "snapshot_version": version,
                "user_id": user_id,
                "results": [_ootd_card(engine, e.id, e.score, e.source) for e in entries],
            })
        elif path == "/similar-items":
            item_id = self._int_param(params, "item_id")
            k = self._int_param(params, "k", 10)
            hits, version = engine.similar_items(item_id, k)
            self._send(200, {
                "snapshot_version": version,
                "item_id": item_id,
                "results": [
                    {
                        "item_id": i,
                        "score": s,
                        "sub_category": engine.items[i].sub_category,
                        "color_tag": engine.items[i].color_tag,
                    }
                    for i, s in hits
                ],
            })
        elif path == "/similar-ootds":
            ootd_id = params.get("ootd_id") or _raise_param("ootd_id")
            k = self._int_param(params, "k", 10)
            entries, version = engine.similar_ootds(ootd_id, k)
            self._send(200, {
                "snapshot_version": version,
                "ootd_id": ootd_id,
                "results": [_ootd_card(engine, e.id, e.score, e.source) for e in entries],
            })
        elif path == "/leaders":
            user_id = params.get("user_id") or _raise_param("user_id")
            k = self._int_param(params, "k", 5)
            entries, version = engine.style_leaders(user_id, k)
            self._send(200, {
                "snapshot_version": version,
                "user_id": user_id,
                "results": [
                    {"user_id": e.id, "score": e.score, "source": e.source} for e in entries
                ],
            })
        elif path.startswith("/ootds/"):
            ootd_id = path.removeprefix("/ootds/")
            if ootd_id not in engine.ootds:
                raise UnknownEntityError(f"unknown OOTD {ootd_id!r}")
            snap = engine.require_snapshot()
            card = _ootd_card(engine, ootd_id, 0.0, "detail")
            similar_products = {}
            for item_id in engine.ootds[ootd_id].item_ids:
                if item_id in engine.items:
                    hits, _ = engine.similar_items(item_id, 5)
                    similar_products[str(item_id)] = [
                        {
                            "item_id": i,
                            "score": s,
                            "sub_category": engine.items[i].sub_category,
                            "color_tag": engine.items[i].color_tag,
                        }
                        for i, s in hits
                    ]
            self._send(200, {
                "snapshot_version": snap.version,
                "ootd": card,
                "similar_products": similar_products,
            })
        elif path.startswith("/users/"):
            user_id = path.removeprefix("/users/")
            if user_id not in engine.users:
                raise UnknownEntityError(f"unknown user {user_id!r}")
            snap = engine.require_snapshot()
            profile = engine.users[user_id]
            self._send(200, {
                "snapshot_version": snap.version,
                "user_id": profile.user_id,
                "gender": profile.gender,
                "birth_year": profile.birth_year,
                "preference_tags": sorted(profile.preference_tags),
                "follows": sorted(profile.follows),
            })
        else:
            # anything that is not an API route falls through to the demo
            # UI's static files
            self._serve_static(path)

    def _post(self):
        path = urlparse(self.path).path
        engine = self.engine
        body = self._json_body()

        if path == "/interactions":
            user_id = str(_require(body, "user_id"))
            kind = str(_require(body, "kind"))
            target_id = str(_require(body, "target_id"))
            engine.record_interaction(user_id, kind, target_id)
            snap = engine.require_snapshot()
            self._send(200, {"recorded": True, "snapshot_version": snap.version})
        elif path == "/ootds":
            uploader = str(_require(body, "uploader_id"))
            hashtags = [str(t) for t in body.get("hashtags", [])]
            if "items" in body:
                outfit = [(str(i["sub_category"]), str(i.get("color_tag", "gray"))) for i in body["items"]]
                if not outfit:
                    raise ApiError(400, "items must be non-empty", "items")
                image = demo.register_outfit(engine, outfit, variant=len(engine.ootds))
            elif "image" in body:
                spec = body["image"]
                image = RasterImage.from_buffer(
                    int(spec["width"]), int(spec["height"]), base64.b64decode(spec["pixels_b64"])
                )
            else:
                raise ApiError(400, "provide either 'items' or 'image'", "items")
            post, analysis = engine.upload_ootd(uploader, image, hashtags)
            snap = engine.require_snapshot()
            self._send(200, {
                "snapshot_version": snap.version,
                "ootd": _ootd_card(engine, post.ootd_id, 0.0, "upload"),
                "crops": [
                    {
                        "index": c.index,
                        "sub_category": c.sub_category,
                        "box": {"x": c.box.x, "y": c.box.y, "w": c.box.w, "h": c.box.h},
                        "error": c.error,
                    }
                    for c in analysis.crops
                ],
                "errors": list(analysis.errors),
            })
        elif path == "/items":
            embeddings = None
            if "embeddings" in body and body["embeddings"] is not None:
                e = body["embeddings"]
                embeddings = EmbeddingBlock(
                    np.asarray(_require(e, "classifier"), dtype=np.float64),
                    np.asarray(_require(e, "tagger"), dtype=np.float64),
                    np.asarray(_require(e, "search"), dtype=np.float64),
                )
            item = ItemRecord(
                item_id=int(_require(body, "item_id")),
                sub_category=str(_require(body, "sub_category")),
                color_tag=body.get("color_tag"),
                attribute_tags=frozenset((g, v) for g, v in body.get("attribute_tags", [])),
                embeddings=embeddings,
            )
            engine.add_item(item)
            snap = engine.require_snapshot()
            self._send(200, {"ingested": item.item_id, "snapshot_version": snap.version})
        elif path == "/rebuild":
            engine.rebuild()
            snap = engine.require_snapshot()
            self._send(200, {"rebuilt": True, "snapshot_version": snap.version,
                             "indexed_items": engine.catalog.item_count()})
        else:
            self._send(404, {"error": f"no route {path}"})

    def _serve_static(self, path: str):
        if self.static_dir is None:
            self._send(404, {"error": f"no route {path}"})
            return
        rel = "index.html" if path in ("/", "/index.html") else path.lstrip("/")
        root = self.static_dir.resolve()
        target = (root / rel).resolve()
        if not target.is_relative_to(root) or not target.is_file():
            self._send(404, {"error": f"no route {path}"})
            return
        ctype = mimetypes.guess_type(str(target))[0] or "application/octet-stream"
        self._send(200, target.read_bytes(), ctype)


def _raise_param(name: str):
    raise ApiError(400, f"missing query parameter {name!r}", name)


def start_server(
    engine: Engine, host: str = "127.0.0.1", port: int = 0, static_dir: str | Path | None = None
) -> tuple[ThreadingHTTPServer, threading.Thread]:
    """Start the service on a background thread; port 0 picks a free port."""
    handler = type(
        "BoundEngineHandler",
        (EngineHandler,),
        {"engine": engine, "static_dir": Path(static_dir) if static_dir else None},
    )
    server = ThreadingHTTPServer((host, port), handler)
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    return server, thread


def serve_forever(engine: Engine, host: str, port: int, static_dir: str | Path | None = None) -> None:
    server, thread = start_server(engine, host, port, static_dir)
    try:
        thread.join()
    except KeyboardInterrupt:
        server.shutdown()
