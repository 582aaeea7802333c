"""SQLALchemy model to represent table in the Database"""
from datetime import datetime

from sqlalchemy import Column, DateTime, Float, Integer, String

from .database import Base


class ExperimentRun(Base):
    """One trained and evaluated variant on one dataset"""

    __tablename__ = "experiment_runs"
    id = Column(Integer, primary_key=True, index=True)
    variant = Column(String, index=True)
    dataset = Column(String)
    oa = Column(Float)
    aa = Column(Float)
    kappa = Column(Float)
    params = Column(Integer)
    seed = Column(Integer)
    epochs = Column(Integer)
    best_epoch = Column(Integer)
    created_at = Column(DateTime, default=datetime.utcnow)
