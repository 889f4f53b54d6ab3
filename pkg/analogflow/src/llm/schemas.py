import math
from pathlib import Path
from typing import Literal

from pydantic import BaseModel, ConfigDict, Field, model_validator

Role = Literal["system", "user", "assistant", "tool"]
EntryKind = Literal["plan", "todo", "thought", "action", "tool_result"]


def estimate_tokens(text: str) -> int:
    return math.ceil(len(text) / 4)


class ChatMessage(BaseModel):
    model_config = ConfigDict(frozen=True)

    role: Role
    text: str = ""
    images: tuple[Path, ...] = ()


class ChatRequest(BaseModel):
    """One chat-completion call; ``tag`` only keys replay fixtures."""

    messages: list[ChatMessage] = Field(min_length=1)
    model: str
    temperature: float = Field(0.0, ge=0.0, le=2.0)
    tag: str = ""

    @model_validator(mode="after")
    def _check_images(self) -> "ChatRequest":
        for message in self.messages:
            for image in message.images:
                if not Path(image).is_file():
                    raise ValueError(f"image reference does not exist: {image}")
        return self


class ReplayFixture(BaseModel):
    """Stored response keyed by request hash."""

    hash: str
    request_digest: dict
    response: str


class TranscriptEntry(BaseModel):
    model_config = ConfigDict(frozen=True)

    kind: EntryKind
    role: Role
    text: str

    @property
    def token_estimate(self) -> int:
        return estimate_tokens(self.text)


class Transcript(BaseModel):
    """Agent working memory: plan, one current TODO list and the T-A-O cycle."""

    entries: list[TranscriptEntry] = Field(default_factory=list)

    @model_validator(mode="after")
    def _check_todo(self) -> "Transcript":
        todos = sum(1 for entry in self.entries if entry.kind == "todo")
        if self.entries and todos != 1:
            raise ValueError(f"transcript must hold exactly one todo entry, found {todos}")
        return self

    @property
    def token_estimate(self) -> int:
        return sum(entry.token_estimate for entry in self.entries)

    def append(self, kind: EntryKind, role: Role, text: str) -> "Transcript":
        return Transcript(entries=[*self.entries, TranscriptEntry(kind=kind, role=role, text=text)])

    def with_todo(self, text: str) -> "Transcript":
        """Replace the current todo entry in place."""
        entries = [
            TranscriptEntry(kind="todo", role=e.role, text=text) if e.kind == "todo" else e for e in self.entries
        ]
        return Transcript(entries=entries)

    def to_messages(self) -> list[ChatMessage]:
        return [ChatMessage(role=entry.role, text=entry.text) for entry in self.entries]


class TruncationPolicy(BaseModel):
    keep_thoughts: int = Field(2, ge=0)
