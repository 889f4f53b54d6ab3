import base64
import mimetypes
from pathlib import Path
from typing import Protocol

import httpx

from analogflow.core.config import LLMSettings
from analogflow.core.exceptions import LLMHttpError, LLMTimeout
from analogflow.core.logging import get_logger
from analogflow.src.llm.repository import FixtureRepository, request_digest, request_hash
from analogflow.src.llm.schemas import ChatMessage, ChatRequest, ReplayFixture

logger = get_logger(__name__)


class ChatBackend(Protocol):
    async def complete(self, req: ChatRequest) -> str: ...


def _data_url(path: Path) -> str:
    mime = mimetypes.guess_type(str(path))[0] or "image/png"
    payload = base64.b64encode(Path(path).read_bytes()).decode("ascii")
    return f"data:{mime};base64,{payload}"


def _wire_message(message: ChatMessage) -> dict:
    # The chat wire format has no free-form tool role without function calling.
    role = "user" if message.role == "tool" else message.role
    text = f"Observation:\n{message.text}" if message.role == "tool" else message.text
    if not message.images:
        return {"role": role, "content": text}
    parts = [{"type": "text", "text": text}] if text else []
    parts += [{"type": "image_url", "image_url": {"url": _data_url(image)}} for image in message.images]
    return {"role": role, "content": parts}


class LiveBackend:
    """OpenAI-compatible ``/chat/completions`` over httpx."""

    def __init__(
        self,
        settings: LLMSettings,
        timeout_s: float = 120.0,
        transport: httpx.AsyncBaseTransport | None = None,
    ):
        self.settings = settings
        self.timeout_s = timeout_s
        self.transport = transport

    def build_body(self, req: ChatRequest) -> dict:
        return {
            "model": req.model,
            "temperature": req.temperature,
            "messages": [_wire_message(m) for m in req.messages],
        }

    async def complete(self, req: ChatRequest) -> str:
        headers = {}
        if self.settings.LLM_API_KEY:
            headers["Authorization"] = f"Bearer {self.settings.LLM_API_KEY}"
        url = f"{self.settings.LLM_API_BASE.rstrip('/')}/chat/completions"
        try:
            async with httpx.AsyncClient(timeout=self.timeout_s, transport=self.transport) as client:
                response = await client.post(url, json=self.build_body(req), headers=headers)
        except httpx.TimeoutException as e:
            raise LLMTimeout(f"Chat request {req.tag or req.model} timed out after {self.timeout_s}s") from e
        if response.status_code >= 400:
            raise LLMHttpError(response.status_code, response.text[:200])
        return response.json()["choices"][0]["message"]["content"] or ""


class ReplayBackend:
    """Read-only lookup of recorded responses by request hash."""

    def __init__(self, repository: FixtureRepository):
        self.repository = repository

    async def complete(self, req: ChatRequest) -> str:
        return self.repository.get(request_hash(req)).response


class RecordingBackend:
    """Serve known requests from fixtures; forward and record the rest."""

    def __init__(self, inner: ChatBackend, repository: FixtureRepository):
        self.inner = inner
        self.repository = repository

    async def complete(self, req: ChatRequest) -> str:
        key = request_hash(req)
        if self.repository.contains(key):
            return self.repository.get(key).response
        response = await self.inner.complete(req)
        self.repository.save(ReplayFixture(hash=key, request_digest=request_digest(req), response=response))
        return response
