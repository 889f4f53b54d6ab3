import json
from pathlib import Path

from pydantic import ValidationError

from analogflow.core.exceptions import MissingFixture
from analogflow.core.logging import get_logger
from analogflow.src.evaluation.schemas import BenchmarkCase, CaseInfo

logger = get_logger(__name__)


class CaseRepository:
    """Benchmark corpus on disk: one directory per case holding ``case.json``."""

    def __init__(self, root: Path):
        self.root = Path(root)

    def get(self, case_dir: Path) -> BenchmarkCase:
        """Load one case directory.

        Raises:
            MissingFixture: If case.json or a file it names is absent
        """
        case_dir = Path(case_dir)
        meta = case_dir / "case.json"
        if not meta.is_file():
            raise MissingFixture(case_dir.name, "(no case.json)")
        try:
            info = CaseInfo.model_validate(json.loads(meta.read_text(encoding="utf-8")))
        except (ValueError, ValidationError) as e:
            raise MissingFixture(case_dir.name, f"(unreadable case.json: {e})")

        paths = {name: case_dir / getattr(info, name) for name in ("image", "detections", "golden")}
        for name, path in paths.items():
            if not path.is_file():
                raise MissingFixture(info.id, f"(missing {name}: {path.name})")
        spec = case_dir / info.spec if info.spec else None
        if spec is not None and not spec.is_file():
            logger.debug(f"Case {info.id} has no spec file; default targets apply")
            spec = None
        return BenchmarkCase(id=info.id, difficulty=info.difficulty, spec=spec, **paths)

    def all(self) -> list[BenchmarkCase]:
        """Every case under the root, in directory-name order."""
        if not self.root.is_dir():
            raise MissingFixture(self.root.name, "(corpus directory not found)")
        cases = [self.get(d) for d in sorted(self.root.iterdir()) if d.is_dir()]
        logger.info(f"Loaded {len(cases)} benchmark cases from {self.root}")
        return cases
