""" Database setup base module """
from sqlalchemy import create_engine

from sqlalchemy.orm import sessionmaker, declarative_base

APP_DATABASE_URL = "sqlite:///runs.db"
TEST_DATABASE_URL = "sqlite:///test_runs.db"


def make_engine(url: str):
    """SQLite engine usable from the API's worker threads"""
    return create_engine(url, connect_args={"check_same_thread": False})


def make_session_factory(bind):
    return sessionmaker(autocommit=False, autoflush=False, bind=bind)


engine = make_engine(APP_DATABASE_URL)

test_engine = make_engine(TEST_DATABASE_URL)

SessionLocal = make_session_factory(engine)
SessionTest = make_session_factory(test_engine)

Base = declarative_base()
