import asyncio

from analogflow.core.config import LLMSettings, PipelineConfig, llm_settings
from analogflow.core.exceptions import ConfigError
from analogflow.core.logging import get_logger
from analogflow.prompts import load_prompt
from analogflow.src.llm.backends import ChatBackend, LiveBackend, RecordingBackend, ReplayBackend
from analogflow.src.llm.repository import FixtureRepository, request_hash
from analogflow.src.llm.schemas import (
    ChatMessage,
    ChatRequest,
    Transcript,
    TruncationPolicy,
    estimate_tokens,
)

logger = get_logger(__name__)


class LLMGateway:
    """Chat completion front end with a bounded number of requests in flight."""

    def __init__(self, backend: ChatBackend, model: str, max_in_flight: int = 3):
        self.backend = backend
        self.model = model
        self.max_in_flight = max_in_flight
        self._semaphore: asyncio.Semaphore | None = None
        self.calls = 0

    def request(self, messages: list[ChatMessage], tag: str, temperature: float = 0.0) -> ChatRequest:
        return ChatRequest(messages=messages, model=self.model, temperature=temperature, tag=tag)

    async def complete(self, req: ChatRequest) -> str:
        # Semaphores bind to the running loop, so create lazily.
        if self._semaphore is None:
            self._semaphore = asyncio.Semaphore(self.max_in_flight)
        async with self._semaphore:
            self.calls += 1
            logger.debug(f"Chat request {req.tag} ({request_hash(req)[:12]})")
            text = await self.backend.complete(req)
        logger.debug(f"Chat response {req.tag}: {estimate_tokens(text)} tokens")
        return text


def build_gateway(config: PipelineConfig, settings: LLMSettings = llm_settings) -> LLMGateway:
    """Gateway for the configured mode (live, replay or record)."""
    model = config.llm.model or settings.LLM_MODEL
    if config.mode == "live":
        backend: ChatBackend = LiveBackend(settings, config.llm.timeout_s)
    else:
        if config.fixtures_dir is None:
            raise ConfigError(f"mode={config.mode} requires a fixtures directory")
        repository = FixtureRepository(config.fixtures_dir)
        if config.mode == "replay":
            backend = ReplayBackend(repository)
        else:
            backend = RecordingBackend(LiveBackend(settings, config.llm.timeout_s), repository)
    logger.info(f"LLM gateway in {config.mode} mode with model {model}")
    return LLMGateway(backend, model=model, max_in_flight=config.llm.max_in_flight)


def truncate_context(t: Transcript, policy: TruncationPolicy = TruncationPolicy()) -> Transcript:
    """Drop stale tool feedback.

    Keeps plan and todo entries, the newest tool_result and the last
    ``policy.keep_thoughts`` thought and action entries, in order.
    """
    keep: set[int] = set()
    newest = {"thought": [], "action": [], "tool_result": []}
    for index, entry in enumerate(t.entries):
        if entry.kind in ("plan", "todo"):
            keep.add(index)
        else:
            newest[entry.kind].append(index)
    keep.update(newest["tool_result"][-1:])
    if policy.keep_thoughts:
        keep.update(newest["thought"][-policy.keep_thoughts :])
        keep.update(newest["action"][-policy.keep_thoughts :])
    return Transcript(entries=[entry for index, entry in enumerate(t.entries) if index in keep])


async def compress_context(
    gw: LLMGateway,
    traces: list[str],
    tag: str = "compress",
    temperature: float = 0.0,
    prompt_version: str = "v1",
) -> str:
    """Summarize branch reasoning traces with one chat request."""
    if not traces:
        raise ValueError("compress_context needs at least one trace")
    body = "\n\n".join(f"Transcript {i}:\n{trace}" for i, trace in enumerate(traces, start=1))
    req = gw.request(
        [
            ChatMessage(role="system", text=load_prompt("compress_system", prompt_version)),
            ChatMessage(role="user", text=body),
        ],
        tag=tag,
        temperature=temperature,
    )
    summary = await gw.complete(req)
    logger.info(
        f"Compressed {len(traces)} traces: {sum(estimate_tokens(x) for x in traces)} -> {estimate_tokens(summary)} tokens"
    )
    return summary
