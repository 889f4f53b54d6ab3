import logging
import sys

# Every module logs under this name; setup_logging sets its level.
LOGGER_NAME = "analogflow"

# Third-party loggers kept at WARNING even in debug runs.
QUIET_LOGGERS = ("httpx", "httpcore", "sqlalchemy.engine", "PIL")


def setup_logging(debug: bool = False) -> None:
    """Route records to stdout: analogflow at INFO (DEBUG with ``debug``), everything else at WARNING."""
    logging.basicConfig(
        level=logging.WARNING,
        format="[%(asctime)s] [%(levelname)s] [%(name)s] %(message)s",
        datefmt="%H:%M:%S",
        stream=sys.stdout,
        force=True,
    )
    logging.getLogger(LOGGER_NAME).setLevel(logging.DEBUG if debug else logging.INFO)
    for name in QUIET_LOGGERS:
        logging.getLogger(name).setLevel(logging.WARNING)


def get_logger(name: str) -> logging.Logger:
    """Logger inside the analogflow hierarchy; outside names (``__main__``) are nested under it."""
    if name != LOGGER_NAME and not name.startswith(LOGGER_NAME + "."):
        name = f"{LOGGER_NAME}.{name}"
    return logging.getLogger(name)
