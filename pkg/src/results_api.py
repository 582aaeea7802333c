"""
Results API
---------
Read-only HTTP access to the run registry and the analytic complexity counter.

Endpoints
-----
- `/runs` : Returns all recorded ablation / evaluation runs (paged)
- `/runs/{run_id}` : Returns a single run based on its ID
- `/runs/variant/{variant}` : Returns every run of one ablation variant
- `/complexity` : Returns per-module params / MACs / FLOPs for a posted model config

"""
from typing import List

from fastapi import Depends, FastAPI, HTTPException, status
from sqlalchemy.orm import Session
from sqlalchemy.exc import OperationalError

from .complexity import count_complexity
from .data_persistence import repo, schemas
from .data_persistence.database import SessionLocal
from .errors import GdsMambaError

from .log_config import LOGGER
from .schemas import ComplexityReport, ModelConfig, canonical_variant

api = FastAPI()


def get_db_session():
    """Generates a new SQLAlchemy database session everytime requested"""
    db_session = SessionLocal()
    try:
        yield db_session
    finally:
        db_session.close()


@api.get("/", status_code=status.HTTP_200_OK)
def welcome():
    """
    Welcome endpoint to the GDS-Mamba results API
    """
    return {"message": "Welcome to GDS-Mamba results API"}


@api.get(
    "/runs",
    response_model=List[schemas.ExperimentRun],
    status_code=status.HTTP_200_OK,
)
def get_all_runs(
    skip: int = 0, limit: int = 100, db_session: Session = Depends(get_db_session)
):
    """
    Get all runs, with all the information for each run:
    - **id**: Id of the run
    - **variant**: Ablation variant (e.g., "full" or "wo-temporal")
    - **dataset**: Dataset the variant was trained and evaluated on
    - **oa** / **aa** / **kappa**: Held-out metrics in percent
    - **params**: Learnable parameter count of the variant
    - **seed**, **epochs**, **best_epoch**: Training recipe and outcome
    \f
    Args:
        skip (int): number of results to skip before fetching data from db.
        limit (int): maximum number of results to fetch from db.
        db_session (sqlalchemy.orm.Session): SQLAlchemy database session object.

    Returns:
        On Success: List[schemas.ExperimentRun] with status code 200
        On Failure: HTTPException with status code 404
    """
    try:
        return repo.get_all_runs(db_session, skip, limit)
    except OperationalError as op_error:
        raise HTTPException(status_code=404, detail=str(op_error)) from op_error


@api.get(
    "/runs/{run_id}",
    response_model=schemas.ExperimentRun,
    status_code=status.HTTP_200_OK,
)
def get_single_run(run_id: int, db_session: Session = Depends(get_db_session)):
    """
    Get a single run with all the information.
    \f
    :param run_id: Id of the run.
    :db_session: SQLAlchemy database session object.
    """
    run = repo.get_run_by_id(db_session, run_id)
    if run is None:
        raise HTTPException(
            status_code=status.HTTP_404_NOT_FOUND, detail="Run not found"
        )
    return run


@api.get(
    "/runs/variant/{variant}",
    response_model=List[schemas.ExperimentRun],
    status_code=status.HTTP_200_OK,
)
def get_variant_runs(variant: str, db_session: Session = Depends(get_db_session)):
    """
    Get every run of one ablation variant. Display names such as
    "w/o Temporal" are accepted.
    """
    try:
        name = canonical_variant(variant)
    except GdsMambaError as config_error:
        raise HTTPException(
            status_code=status.HTTP_422_UNPROCESSABLE_ENTITY, detail=str(config_error)
        ) from config_error
    runs = repo.get_runs_by_variant(db_session, name)
    if not runs:
        LOGGER.warning("No runs recorded for variant %s.", name)
        raise HTTPException(
            status_code=status.HTTP_404_NOT_FOUND, detail="No runs recorded for this variant"
        )
    return runs


@api.post(
    "/complexity",
    response_model=ComplexityReport,
    status_code=status.HTTP_200_OK,
)
def get_complexity(model_config: ModelConfig, batch_size: int = 64):
    """
    Analytic parameter, MAC and FLOP counts per module for one batch element.
    \f
    Args:
        model_config (ModelConfig): architecture to count.
        batch_size (int): mini-batch size the graph stream is counted for.

    Returns:
        On Success: ComplexityReport with status code 200
        On Failure: HTTPException with status code 422
    """
    try:
        return count_complexity(model_config, batch_size)
    except GdsMambaError as config_error:
        LOGGER.warning(
            "Error occured when counting complexity. Details: %s", str(config_error)
        )
        raise HTTPException(
            status_code=status.HTTP_422_UNPROCESSABLE_ENTITY, detail=str(config_error)
        ) from config_error
