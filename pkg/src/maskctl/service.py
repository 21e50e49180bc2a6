"""HTTP review service: serve candidate masks, record picks, export supervision.

Annotators fetch an image with its candidate masks, click the best one, and
the pick lands in an append-only JSONL log (one CRC32-protected line per
record). Export copies each image's chosen candidate into a training layout
plus elapsed-time statistics. Re-submissions are kept in the log; the
latest record per (image, annotator) wins, and a candidate index of -1
means "none acceptable" and is excluded from export.

Data directory layout (as written by `maskctl candidates`):

    <data_dir>/order.json                  optional id ordering
    <data_dir>/<image_id>/image.png
    <data_dir>/<image_id>/candidate_<m>.png
    <data_dir>/<image_id>/meta.json
"""

from __future__ import annotations

import argparse
import io
import json
import os
import shutil
import statistics
import tarfile
import threading
import zlib
from dataclasses import asdict, dataclass
from datetime import datetime, timezone
from pathlib import Path

from fastapi import FastAPI, HTTPException
from fastapi.responses import Response
from fastapi.staticfiles import StaticFiles
from pydantic import BaseModel


class ServiceError(Exception):
    """Base class for review-service failures."""


class UnknownImageError(ServiceError):
    """Requested image id is not in the data directory."""


class CandidatesMissingError(ServiceError):
    """Image directory exists but holds no candidate masks."""


class IndexOutOfRangeError(ServiceError):
    """candidate_index is not in {-1, 0, .., M-1} for the image."""


class LogCorruptError(ServiceError):
    """A non-final log line failed its checksum or did not parse."""


@dataclass(frozen=True)
class SelectionRecord:
    """One annotator decision; timestamp is the server receipt time (UTC)."""

    image_id: str
    candidate_index: int
    annotator_id: str
    elapsed_ms: int
    timestamp: str


class SelectionLog:
    """Append-only JSONL log; every line carries a CRC32 suffix.

    A torn final line (crash between write and flush) is discarded on load;
    a defective line anywhere else means real corruption and raises.
    Appends are serialized through a lock and fsynced so an acknowledged
    record survives a crash.
    """

    def __init__(self, path):
        self.path = Path(path)
        self._lock = threading.Lock()
        self._records: list[SelectionRecord] = []
        if self.path.exists():
            self._records = self._load()

    @staticmethod
    def _encode(rec: SelectionRecord) -> str:
        payload = json.dumps(asdict(rec), sort_keys=True, separators=(",", ":"))
        return f"{payload}\t{zlib.crc32(payload.encode()):08x}\n"

    @staticmethod
    def _decode(line: str) -> SelectionRecord:
        payload, _, crc = line.rpartition("\t")
        if not payload or f"{zlib.crc32(payload.encode()):08x}" != crc:
            raise ValueError("checksum mismatch")
        return SelectionRecord(**json.loads(payload))

    def _load(self) -> list[SelectionRecord]:
        text = self.path.read_text()
        lines = text.split("\n")
        complete = lines[:-1]  # text after the final newline is torn by definition
        torn_tail = lines[-1] != ""
        records = []
        for i, line in enumerate(complete):
            try:
                records.append(self._decode(line))
            except (ValueError, TypeError, KeyError) as exc:
                if i == len(complete) - 1 and not torn_tail:
                    break  # interrupted final write; the line never got acked
                raise LogCorruptError(f"{self.path}:{i + 1}: {exc}") from exc
        return records

    def append(self, rec: SelectionRecord) -> None:
        with self._lock:
            with open(self.path, "a") as fh:
                fh.write(self._encode(rec))
                fh.flush()
                os.fsync(fh.fileno())
            self._records.append(rec)

    def records(self) -> list[SelectionRecord]:
        return list(self._records)

    def latest_by_pair(self) -> dict[tuple[str, str], SelectionRecord]:
        out: dict[tuple[str, str], SelectionRecord] = {}
        for rec in self._records:
            out[(rec.image_id, rec.annotator_id)] = rec
        return out

    def latest_by_image(self) -> dict[str, SelectionRecord]:
        out: dict[str, SelectionRecord] = {}
        for rec in self._records:
            out[rec.image_id] = rec
        return out


class CandidateStore:
    """Read-only view of the candidate directories under data_dir."""

    def __init__(self, data_dir):
        self.root = Path(data_dir)
        if not self.root.is_dir():
            raise ServiceError(f"data directory {self.root} does not exist")
        order_file = self.root / "order.json"
        if order_file.exists():
            self.ids = [str(x) for x in json.loads(order_file.read_text())]
        else:
            self.ids = sorted(p.name for p in self.root.iterdir() if p.is_dir())

    def _dir(self, image_id: str) -> Path:
        d = self.root / image_id
        if image_id not in self.ids or not d.is_dir():
            raise UnknownImageError(f"unknown image {image_id!r}")
        return d

    def candidate_paths(self, image_id: str) -> list[Path]:
        d = self._dir(image_id)
        paths = []
        while (p := d / f"candidate_{len(paths)}.png").exists():
            paths.append(p)
        if not paths:
            raise CandidatesMissingError(f"no candidate masks for image {image_id!r}")
        return paths

    def image_path(self, image_id: str) -> Path:
        return self._dir(image_id) / "image.png"

    def meta(self, image_id: str) -> dict:
        meta_file = self._dir(image_id) / "meta.json"
        return json.loads(meta_file.read_text()) if meta_file.exists() else {}


def _utc_now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="milliseconds")


def effective_selections(store: CandidateStore, log: SelectionLog) -> list[tuple[str, SelectionRecord]]:
    """Exportable (image_id, record) pairs in store order.

    The newest record per image wins regardless of annotator; images whose
    newest record is the "none acceptable" index -1 are dropped.
    """
    latest = log.latest_by_image()
    out = []
    for image_id in store.ids:
        rec = latest.get(image_id)
        if rec is not None and rec.candidate_index >= 0:
            out.append((image_id, rec))
    return out


def _stats_payload(records: list[SelectionRecord]) -> bytes:
    elapsed = [r.elapsed_ms for r in records]
    doc = {
        "count": len(elapsed),
        "mean_elapsed_ms": statistics.fmean(elapsed) if elapsed else None,
        "median_elapsed_ms": statistics.median(elapsed) if elapsed else None,
    }
    return (json.dumps(doc, indent=2, sort_keys=True) + "\n").encode()


def export_selected(store: CandidateStore, log: SelectionLog, out_dir) -> int:
    """Copy each chosen candidate to <out>/<id>/mask.png; write stats.json.

    Pure function of the log and candidate files: re-running it reproduces
    byte-identical output. Returns the number of masks exported.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    chosen = effective_selections(store, log)
    for image_id, rec in chosen:
        src = store.candidate_paths(image_id)[rec.candidate_index]
        dest = out / image_id
        dest.mkdir(parents=True, exist_ok=True)
        shutil.copyfile(src, dest / "mask.png")
    (out / "stats.json").write_bytes(_stats_payload([rec for _, rec in chosen]))
    return len(chosen)


def export_tar_bytes(store: CandidateStore, log: SelectionLog) -> bytes:
    """The export layout as a deterministic in-memory tar archive."""
    chosen = effective_selections(store, log)
    buf = io.BytesIO()

    def add(tar: tarfile.TarFile, name: str, data: bytes) -> None:
        info = tarfile.TarInfo(name=name)
        info.size = len(data)
        info.mtime = 0
        info.mode = 0o644
        tar.addfile(info, io.BytesIO(data))

    with tarfile.open(fileobj=buf, mode="w", format=tarfile.USTAR_FORMAT) as tar:
        for image_id, rec in chosen:
            data = store.candidate_paths(image_id)[rec.candidate_index].read_bytes()
            add(tar, f"{image_id}/mask.png", data)
        add(tar, "stats.json", _stats_payload([rec for _, rec in chosen]))
    return buf.getvalue()


class SelectionIn(BaseModel):
    candidate_index: int
    annotator_id: str
    elapsed_ms: int


def create_app(data_dir, log_path, ui_dir=None) -> FastAPI:
    store = CandidateStore(data_dir)
    log = SelectionLog(log_path)
    app = FastAPI(title="checkmask review service")
    app.state.store = store
    app.state.log = log

    @app.get("/api/queue")
    def queue(annotator: str):
        seen = {img for (img, ann) in log.latest_by_pair() if ann == annotator}
        return {"pending": [i for i in store.ids if i not in seen]}

    @app.get("/api/images/{image_id}")
    def image_detail(image_id: str):
        try:
            candidates = store.candidate_paths(image_id)
        except UnknownImageError as exc:
            raise HTTPException(status_code=404, detail=str(exc)) from exc
        except CandidatesMissingError as exc:
            raise HTTPException(status_code=404, detail=str(exc)) from exc
        return {
            "image_url": f"/files/{image_id}/image.png",
            "candidates": [f"/files/{image_id}/{p.name}" for p in candidates],
            "meta": store.meta(image_id),
        }

    @app.post("/api/images/{image_id}/selection")
    def submit(image_id: str, body: SelectionIn):
        try:
            count = len(store.candidate_paths(image_id))
        except UnknownImageError as exc:
            raise HTTPException(status_code=404, detail=str(exc)) from exc
        except CandidatesMissingError as exc:
            raise HTTPException(status_code=404, detail=str(exc)) from exc
        if not -1 <= body.candidate_index < count:
            raise HTTPException(
                status_code=400,
                detail=f"candidate_index {body.candidate_index} out of range for {count} candidates",
            )
        if body.elapsed_ms < 0:
            raise HTTPException(status_code=400, detail="elapsed_ms must be >= 0")
        if not body.annotator_id:
            raise HTTPException(status_code=400, detail="annotator_id must be non-empty")
        rec = SelectionRecord(
            image_id=image_id,
            candidate_index=body.candidate_index,
            annotator_id=body.annotator_id,
            elapsed_ms=body.elapsed_ms,
            timestamp=_utc_now(),
        )
        log.append(rec)
        return asdict(rec)

    @app.get("/api/export")
    def export():
        return Response(
            content=export_tar_bytes(store, log),
            media_type="application/x-tar",
            headers={"Content-Disposition": 'attachment; filename="selected_masks.tar"'},
        )

    app.mount("/files", StaticFiles(directory=str(store.root)), name="files")
    if ui_dir is not None:
        # Mounted last so /api and /files keep precedence over UI assets.
        app.mount("/", StaticFiles(directory=str(ui_dir), html=True), name="ui")
    return app


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="checkmask-serve", description=__doc__.splitlines()[0])
    parser.add_argument("--port", type=int, default=8090)
    parser.add_argument("--host", default="127.0.0.1")
    parser.add_argument("--data-dir", required=True)
    parser.add_argument("--log-path", help="defaults to <data-dir>/selections.log")
    parser.add_argument("--ui-dir", help="optional static frontend served at /")
    args = parser.parse_args(argv)
    log_path = args.log_path or str(Path(args.data_dir) / "selections.log")

    import uvicorn

    uvicorn.run(
        create_app(args.data_dir, log_path, ui_dir=args.ui_dir),
        host=args.host,
        port=args.port,
    )
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
