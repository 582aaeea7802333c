"""
Repository module for performing database operations
"""
from sqlalchemy.orm import Session
from . import models, schemas


def get_run_by_id(db_session: Session, run_id: int):
    """Returns a single run based on its ID"""
    return (
        db_session.query(models.ExperimentRun)
        .filter(models.ExperimentRun.id == run_id)
        .first()
    )


def get_runs_by_variant(db_session: Session, variant: str):
    """Returns all runs of one ablation variant, oldest first"""
    return (
        db_session.query(models.ExperimentRun)
        .filter(models.ExperimentRun.variant == variant)
        .order_by(models.ExperimentRun.id)
        .all()
    )


def get_all_runs(db_session: Session, skip: int = 0, limit: int = 100):
    """Returns all runs"""
    return (
        db_session.query(models.ExperimentRun)
        .order_by(models.ExperimentRun.id)
        .offset(skip)
        .limit(limit)
        .all()
    )


def add_run(db_session: Session, run: schemas.ExperimentRunCreate):
    """Adds a single run"""
    new_run = models.ExperimentRun(**run.dict())
    db_session.add(new_run)
    db_session.commit()
    db_session.refresh(new_run)
    return new_run


def remove_run(db_session: Session, run_id: int):
    """Removes a single run based on its ID"""
    removed = (
        db_session.query(models.ExperimentRun)
        .filter(models.ExperimentRun.id == run_id)
        .delete()
    )
    db_session.commit()
    return removed
