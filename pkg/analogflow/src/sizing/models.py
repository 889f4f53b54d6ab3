from sqlalchemy import JSON, Column, Float, Integer, String, UniqueConstraint

from analogflow.core.database import Base


class TrialRecord(Base):
    """One sizing trial of a named study."""

    __tablename__ = "trials"
    __table_args__ = (UniqueConstraint("study", "number"),)

    id = Column(Integer, primary_key=True, autoincrement=True)
    study = Column(String, index=True, nullable=False)
    number = Column(Integer, nullable=False)
    state = Column(String, nullable=False)
    fom = Column(Float, nullable=True)
    x = Column(JSON, nullable=False)
    metrics = Column(JSON, nullable=False)
    steps = Column(JSON, nullable=False)
    error = Column(String, nullable=True)
