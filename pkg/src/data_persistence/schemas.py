# pylint: disable=no-self-argument,too-few-public-methods
"Pydantic Schemas module for serialization and input validation"
import datetime as dt
from typing import Optional

from pydantic import BaseModel, validator

from ..schemas import VARIANTS


class ExperimentRunBase(BaseModel):
    """Base Model schema for an experiment run"""

    variant: str
    dataset: str
    oa: float
    aa: float
    kappa: float
    params: int
    seed: int = 0
    epochs: int = 0
    best_epoch: int = 0


class ExperimentRunCreate(ExperimentRunBase):
    """Creation schema for an experiment run"""

    @validator("variant")
    def known_variant(cls, value):
        if value not in VARIANTS:
            raise ValueError(f"Unknown variant. Allowed values: {', '.join(VARIANTS)}.")
        return value

    @validator("oa", "aa", "kappa")
    def percentage(cls, value, field):
        if not -100.0 <= value <= 100.0:
            raise ValueError(f"{field.name} must be a percentage, got {value}.")
        return value


class ExperimentRun(ExperimentRunBase):
    """Presentation schema for an experiment run"""

    id: int
    created_at: Optional[dt.datetime] = None

    class Config:
        orm_mode = True
