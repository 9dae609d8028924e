"""HTTP inference service: top-3 habitat predictions plus feedback capture.

Uploads are classified with the loaded checkpoint and answered with the three
most probable classes, their definitions and probabilities. Uploaded bytes are
held in an in-memory session store (TTL-bounded) so a later feedback call can
reference them; they are persisted to the retention store only with explicit
consent, and dropped otherwise. Feedback is appended to paired CSV and
line-delimited JSON logs through a single writer lock.
"""

from __future__ import annotations

import csv
import datetime as dt
import io
import json
import threading
import time
import uuid
from dataclasses import dataclass
from pathlib import Path
from typing import Literal

import torch
from fastapi import FastAPI, File, Header, HTTPException, UploadFile
from PIL import Image, UnidentifiedImageError
from pydantic import BaseModel

from .evaluation import top_k_entries
from .model import Checkpoint, load_checkpoint, predict_logits
from .preprocessing import PreprocessConfig, preprocess_eval
from .taxonomy import ClassTaxonomy, default_taxonomy, load_taxonomy

ACCEPTED_EXTENSIONS = (".jpg", ".jpeg", ".png")

FEEDBACK_CSV_HEADER = [
    "timestamp", "image_id", "predicted_label", "verdict",
    "corrected_label", "custom_label", "confidence_shown", "consent",
]


@dataclass
class ServiceConfig:
    checkpoint_path: str | Path | None = None
    taxonomy_path: str | Path | None = None
    data_dir: str | Path = "service_data"
    max_upload_bytes: int = 20 * 1024 * 1024
    session_ttl_seconds: float = 3600.0
    log_rotate_bytes: int = 50 * 1024 * 1024
    auth_token: str | None = None


class TopEntry(BaseModel):
    abbreviation: str
    name: str
    definition: str
    probability: float


class PredictionResponse(BaseModel):
    image_id: str
    top3: list[TopEntry]
    model_version: str


class FeedbackPayload(BaseModel):
    image_id: str
    predicted_label: str
    user_verdict: Literal["confirm", "correct", "custom"]
    corrected_label: str | None = None
    custom_label: str | None = None
    confidence_shown: float
    consent_to_store: bool
    # Clients may supply their own instant; the server stamps receipt time
    # otherwise so offline queued submissions keep their original ordering.
    timestamp: dt.datetime | None = None


class ClassInfo(BaseModel):
    abbreviation: str
    name: str
    definition: str


@dataclass
class _SessionEntry:
    data: bytes
    suffix: str
    predicted_label: str
    created_at: float


class _FeedbackLog:
    """Size-rotated CSV + JSONL feedback logs behind one writer lock."""

    def __init__(self, directory: Path, rotate_bytes: int):
        self.csv_path = directory / "feedback.csv"
        self.json_path = directory / "feedback.jsonl"
        self.rotate_bytes = rotate_bytes
        self.lock = threading.Lock()

    def _rotate_if_needed(self, path: Path) -> None:
        if not path.exists() or path.stat().st_size < self.rotate_bytes:
            return
        n = 1
        while path.with_name(f"{path.name}.{n}").exists():
            n += 1
        path.rename(path.with_name(f"{path.name}.{n}"))

    def append(self, row: dict) -> None:
        with self.lock:
            self._rotate_if_needed(self.csv_path)
            self._rotate_if_needed(self.json_path)
            new_csv = not self.csv_path.exists()
            with self.csv_path.open("a", newline="", encoding="utf-8") as f:
                writer = csv.writer(f)
                if new_csv:
                    writer.writerow(FEEDBACK_CSV_HEADER)
                writer.writerow([row[k] for k in FEEDBACK_CSV_HEADER])
            with self.json_path.open("a", encoding="utf-8") as f:
                f.write(json.dumps(row, sort_keys=True) + "\n")


class ServiceState:
    """Shared state: read-only model + taxonomy, session store, logs."""

    def __init__(self, config: ServiceConfig):
        self.config = config
        self.started_at = time.monotonic()
        data_dir = Path(config.data_dir)
        self.retention_dir = data_dir / "retained"
        self.retention_dir.mkdir(parents=True, exist_ok=True)
        self.feedback_log = _FeedbackLog(data_dir, config.log_rotate_bytes)
        self.sessions: dict[str, _SessionEntry] = {}
        self.session_lock = threading.Lock()

        self.checkpoint: Checkpoint | None = None
        if config.checkpoint_path is not None:
            taxonomy = (
                load_taxonomy(config.taxonomy_path) if config.taxonomy_path else None
            )
            self.checkpoint = load_checkpoint(config.checkpoint_path, taxonomy=taxonomy)
        if config.taxonomy_path:
            self.taxonomy = load_taxonomy(config.taxonomy_path)
        elif self.checkpoint is not None:
            self.taxonomy = _taxonomy_from_checkpoint(self.checkpoint)
        else:
            self.taxonomy = default_taxonomy()
        self.pre_config = PreprocessConfig(
            target_size=self.checkpoint.config.input_size if self.checkpoint else 224
        )

    @property
    def model_version(self) -> str:
        return self.checkpoint.model_version if self.checkpoint else "none"

    def purge_expired(self) -> None:
        deadline = time.monotonic() - self.config.session_ttl_seconds
        with self.session_lock:
            expired = [k for k, v in self.sessions.items() if v.created_at < deadline]
            for k in expired:
                del self.sessions[k]

    def store_session(self, entry: _SessionEntry) -> str:
        image_id = uuid.uuid4().hex
        with self.session_lock:
            self.sessions[image_id] = entry
        return image_id

    def pop_session(self, image_id: str) -> _SessionEntry | None:
        with self.session_lock:
            return self.sessions.pop(image_id, None)


def _taxonomy_from_checkpoint(checkpoint: Checkpoint) -> ClassTaxonomy:
    """Reconstruct the class list from checkpoint metadata, borrowing names and
    definitions from the default taxonomy where abbreviations match."""
    default = {c.abbreviation: c for c in default_taxonomy()}
    entries = []
    for abbr in checkpoint.class_abbreviations:
        known = default.get(abbr)
        if known:
            entries.append((known.name, abbr, known.definition))
        else:
            entries.append((abbr, abbr, ""))
    return ClassTaxonomy.from_entries(entries, checkpoint.taxonomy_version)


def create_app(config: ServiceConfig | None = None) -> FastAPI:
    state = ServiceState(config or ServiceConfig())
    app = FastAPI(title="habclass inference service")
    app.state.service = state

    def check_token(authorization: str | None) -> None:
        token = state.config.auth_token
        if token and authorization != f"Bearer {token}":
            raise HTTPException(status_code=401, detail="missing or invalid token")

    @app.get("/health")
    def health():
        if state.checkpoint is None:
            raise HTTPException(status_code=503, detail="no model loaded")
        return {
            "status": "ok",
            "model_version": state.model_version,
            "uptime_seconds": round(time.monotonic() - state.started_at, 3),
        }

    @app.get("/classes", response_model=list[ClassInfo])
    def classes():
        return [
            ClassInfo(abbreviation=c.abbreviation, name=c.name, definition=c.definition)
            for c in state.taxonomy
        ]

    @app.post("/predict", response_model=list[PredictionResponse])
    async def predict(
        files: list[UploadFile] = File(...),
        authorization: str | None = Header(default=None),
    ):
        check_token(authorization)
        if state.checkpoint is None:
            raise HTTPException(status_code=503, detail="no model loaded")
        state.purge_expired()

        uploads: list[tuple[str, bytes]] = []
        for file in files:
            name = file.filename or "upload"
            suffix = Path(name).suffix.lower()
            if suffix not in ACCEPTED_EXTENSIONS:
                raise HTTPException(
                    status_code=415,
                    detail=f"unsupported format {suffix or '(none)'} for {name!r}; "
                           f"accepted: {', '.join(ACCEPTED_EXTENSIONS)}",
                )
            data = await file.read()
            if len(data) > state.config.max_upload_bytes:
                raise HTTPException(
                    status_code=413,
                    detail=f"{name!r} exceeds the "
                           f"{state.config.max_upload_bytes} byte limit",
                )
            uploads.append((name, data))

        responses: list[PredictionResponse] = []
        classifier = state.checkpoint.classifier
        for name, data in uploads:
            try:
                with Image.open(io.BytesIO(data)) as im:
                    image = im.convert("RGB")
            except (UnidentifiedImageError, OSError):
                raise HTTPException(
                    status_code=422, detail=f"cannot decode image file {name!r}"
                )
            tensor = preprocess_eval(image, state.pre_config)
            logits = predict_logits(classifier, tensor.unsqueeze(0))
            probs = torch.softmax(logits[0], dim=0).tolist()
            top3 = top_k_entries(probs, state.taxonomy)
            image_id = state.store_session(
                _SessionEntry(
                    data=data,
                    suffix=Path(name).suffix.lower(),
                    predicted_label=top3[0][0],
                    created_at=time.monotonic(),
                )
            )
            responses.append(
                PredictionResponse(
                    image_id=image_id,
                    top3=[
                        TopEntry(
                            abbreviation=abbr,
                            name=state.taxonomy.get(abbr).name,
                            definition=state.taxonomy.get(abbr).definition,
                            probability=prob,
                        )
                        for abbr, prob in top3
                    ],
                    model_version=state.model_version,
                )
            )
        return responses

    @app.post("/feedback")
    def feedback(
        payload: FeedbackPayload,
        authorization: str | None = Header(default=None),
    ):
        check_token(authorization)
        state.purge_expired()
        if payload.user_verdict == "correct":
            if not payload.corrected_label:
                raise HTTPException(
                    status_code=400, detail="verdict 'correct' requires corrected_label"
                )
            if payload.corrected_label not in state.taxonomy:
                raise HTTPException(
                    status_code=400,
                    detail=f"corrected_label {payload.corrected_label!r} "
                           f"not in taxonomy {state.taxonomy.version}",
                )
        if payload.user_verdict == "custom" and not (payload.custom_label or "").strip():
            raise HTTPException(
                status_code=400, detail="verdict 'custom' requires a nonempty custom_label"
            )

        entry = state.pop_session(payload.image_id)
        if entry is None:
            raise HTTPException(
                status_code=404, detail=f"unknown or expired image_id {payload.image_id!r}"
            )

        stamp = payload.timestamp or dt.datetime.now(dt.timezone.utc)
        if stamp.tzinfo is None:
            stamp = stamp.replace(tzinfo=dt.timezone.utc)
        timestamp = stamp.astimezone(dt.timezone.utc).isoformat()
        state.feedback_log.append(
            {
                "timestamp": timestamp,
                "image_id": payload.image_id,
                "predicted_label": payload.predicted_label,
                "verdict": payload.user_verdict,
                "corrected_label": payload.corrected_label or "",
                "custom_label": payload.custom_label or "",
                "confidence_shown": payload.confidence_shown,
                "consent": payload.consent_to_store,
            }
        )

        retained = False
        if payload.consent_to_store:
            target = state.retention_dir / f"{payload.image_id}{entry.suffix}"
            target.write_bytes(entry.data)
            retained = True
        # Without consent the bytes die with the popped session entry.
        return {"status": "recorded", "image_id": payload.image_id, "retained": retained}

    return app


def run_service(config: ServiceConfig, host: str = "127.0.0.1", port: int = 8000) -> None:
    import uvicorn

    uvicorn.run(create_app(config), host=host, port=port)
