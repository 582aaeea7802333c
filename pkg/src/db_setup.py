""" Database initialization module """
from typing import Optional

from sqlalchemy import inspect

from .data_persistence import models
from .data_persistence.database import engine, make_engine, test_engine, Base

from .log_config import LOGGER

RUNS_TABLE = models.ExperimentRun.__tablename__


def setup_db(url: Optional[str] = None):
    """
    Database initialization.
    Creates the database if it doesnt exist and the tables required.
    `url` defaults to the application registry.
    """
    bind = engine if url is None else make_engine(url)
    if not inspect(bind).has_table(RUNS_TABLE):
        Base.metadata.create_all(bind=bind)
        LOGGER.info("Run registry initialized at %s", bind.url)
    else:
        LOGGER.info("Run registry already initialized")
    return bind


def setup_test_db():
    """Database initialization for tests"""
    if not inspect(test_engine).has_table(RUNS_TABLE):
        Base.metadata.create_all(bind=test_engine)


def teardown_test_db():
    """Database teardown for tests"""
    if inspect(test_engine).has_table(RUNS_TABLE):
        Base.metadata.drop_all(bind=test_engine)


if __name__ == "__main__":
    setup_db()
