from collections.abc import Iterator
from contextlib import contextmanager

from sqlalchemy import create_engine
from sqlalchemy.orm import Session, declarative_base, sessionmaker

# Create declarative base for models
Base = declarative_base()


def create_session_factory(url: str) -> sessionmaker:
    """Create a session factory for ``url`` and make sure all tables exist.

    Args:
        url: SQLAlchemy database URL, e.g. ``sqlite:///out/study.db``

    Returns:
        sessionmaker: Factory bound to a fresh engine
    """
    engine = create_engine(url, echo=False, future=True)
    Base.metadata.create_all(engine)
    return sessionmaker(engine, expire_on_commit=False)


@contextmanager
def get_session(factory: sessionmaker) -> Iterator[Session]:
    """Open a database session.

    Yields:
        Session: Database session, closed on exit
    """
    session = factory()
    try:
        yield session
    finally:
        session.close()
