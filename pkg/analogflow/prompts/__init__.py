"""Versioned prompt templates shipped with the package."""

from functools import lru_cache
from pathlib import Path

from analogflow.core.exceptions import MissingArtifact

PROMPTS_DIR = Path(__file__).parent
EXEMPLAR_DIR = PROMPTS_DIR / "exemplar"


@lru_cache
def load_prompt(name: str, version: str = "v1") -> str:
    path = PROMPTS_DIR / version / f"{name}.txt"
    if not path.is_file():
        raise MissingArtifact(f"Prompt template not found: {path}")
    return path.read_text(encoding="utf-8").strip()
