import hashlib
import json
from pathlib import Path

from analogflow.core.exceptions import ReplayMiss
from analogflow.core.logging import get_logger
from analogflow.core.raster import file_digest
from analogflow.src.llm.schemas import ChatRequest, ReplayFixture

logger = get_logger(__name__)


def request_digest(req: ChatRequest) -> dict:
    """Canonical view of a request: images by content digest, temperature excluded."""
    return {
        "model": req.model,
        "tag": req.tag,
        "messages": [
            {"role": m.role, "text": m.text, "images": [file_digest(image) for image in m.images]}
            for m in req.messages
        ],
    }


def request_hash(req: ChatRequest) -> str:
    canonical = json.dumps(request_digest(req), sort_keys=True, separators=(",", ":"), ensure_ascii=False)
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


class FixtureRepository:
    """Directory of replay fixtures, one ``<hash>.json`` file per request."""

    def __init__(self, root: Path):
        self.root = Path(root)
        self._fixtures: dict[str, ReplayFixture] | None = None

    def _load(self) -> dict[str, ReplayFixture]:
        if self._fixtures is None:
            self._fixtures = {}
            if self.root.is_dir():
                for path in sorted(self.root.glob("*.json")):
                    fixture = ReplayFixture.model_validate_json(path.read_text(encoding="utf-8"))
                    self._fixtures[fixture.hash] = fixture
            logger.debug(f"Loaded {len(self._fixtures)} replay fixtures from {self.root}")
        return self._fixtures

    def get(self, request_hash: str) -> ReplayFixture:
        """Get a fixture by request hash.

        Raises:
            ReplayMiss: If no fixture is stored for the hash
        """
        fixture = self._load().get(request_hash)
        if fixture is None:
            raise ReplayMiss(request_hash)
        return fixture

    def contains(self, request_hash: str) -> bool:
        return request_hash in self._load()

    def save(self, fixture: ReplayFixture) -> Path:
        """Write a fixture; an existing file for the same hash is replaced."""
        self.root.mkdir(parents=True, exist_ok=True)
        path = self.root / f"{fixture.hash}.json"
        path.write_text(fixture.model_dump_json(indent=2), encoding="utf-8")
        self._load()[fixture.hash] = fixture
        logger.info(f"Recorded fixture {fixture.hash[:12]}")
        return path

    def __len__(self) -> int:
        return len(self._load())
