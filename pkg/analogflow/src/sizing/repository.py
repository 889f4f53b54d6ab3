from pathlib import Path

from sqlalchemy import delete, select

from analogflow.core.database import create_session_factory, get_session
from analogflow.core.logging import get_logger
from analogflow.src.sizing.models import TrialRecord
from analogflow.src.sizing.schemas import Trial

logger = get_logger(__name__)


class StudyRepository:
    """Trial storage: always a JSON-lines file, optionally mirrored to a SQL table."""

    def __init__(self, jsonl_path: Path, study: str = "study", storage_url: str | None = None):
        self.jsonl_path = Path(jsonl_path)
        self.study = study
        self.session_factory = create_session_factory(storage_url) if storage_url else None

    def add(self, trial: Trial) -> None:
        """Persist a finished trial."""
        self.jsonl_path.parent.mkdir(parents=True, exist_ok=True)
        with self.jsonl_path.open("a", encoding="utf-8") as fp:
            fp.write(trial.model_dump_json() + "\n")
        if self.session_factory is not None:
            with get_session(self.session_factory) as session:
                session.add(
                    TrialRecord(
                        study=self.study,
                        number=trial.number,
                        state=trial.state.value,
                        fom=trial.fom,
                        x=trial.x,
                        metrics=trial.metrics,
                        steps=trial.steps,
                        error=trial.error,
                    )
                )
                session.commit()

    def clear(self) -> None:
        """Drop every stored trial of this study."""
        self.jsonl_path.unlink(missing_ok=True)
        if self.session_factory is not None:
            with get_session(self.session_factory) as session:
                session.execute(delete(TrialRecord).where(TrialRecord.study == self.study))
                session.commit()
        logger.info(f"Cleared stored trials of study {self.study}")

    def load(self) -> list[Trial]:
        """Trials persisted so far, ordered by number.

        The SQL table wins when configured; otherwise the JSON-lines file.
        """
        if self.session_factory is not None:
            with get_session(self.session_factory) as session:
                query = select(TrialRecord).where(TrialRecord.study == self.study).order_by(TrialRecord.number)
                records = session.execute(query).scalars().all()
            trials = [
                Trial(
                    number=r.number,
                    x=r.x,
                    metrics=r.metrics,
                    fom=r.fom,
                    state=r.state,
                    steps=r.steps,
                    error=r.error,
                )
                for r in records
            ]
        elif self.jsonl_path.is_file():
            lines = self.jsonl_path.read_text(encoding="utf-8").splitlines()
            trials = sorted((Trial.model_validate_json(line) for line in lines if line.strip()), key=lambda t: t.number)
        else:
            trials = []
        if trials:
            logger.info(f"Resuming study {self.study} with {len(trials)} stored trials")
        return trials
