# pylint: disable=missing-function-docstring,missing-module-docstring
from unittest.mock import patch
from fastapi.testclient import TestClient
from fastapi import status
from sqlalchemy.exc import OperationalError
from src.results_api import api, get_db_session
from src.data_persistence import repo, schemas
from src.data_persistence.database import SessionTest

from src.db_setup import setup_test_db, teardown_test_db


def get_test_db_session():
    db_session = SessionTest()
    try:
        yield db_session
    finally:
        db_session.close()


api.dependency_overrides[get_db_session] = get_test_db_session


client = TestClient(app=api)


def setup_module():
    teardown_test_db()
    setup_test_db()
    db_session = SessionTest()
    for variant, oa in (("full", 92.5), ("wo-temporal", 80.0), ("full", 91.0)):
        repo.add_run(
            db_session,
            schemas.ExperimentRunCreate(
                variant=variant, dataset="bench", oa=oa, aa=oa - 1.0, kappa=oa - 5.0, params=1200000
            ),
        )
    db_session.close()


def teardown_module():
    teardown_test_db()


def mock_get_runs_raise_db_op_error(db_session, skip, limit):
    raise OperationalError("Test DB Connection Failed", None, None)


def test_welcome_endpoint():
    response = client.get("/")
    assert response.status_code == status.HTTP_200_OK
    assert response.json() == {"message": "Welcome to GDS-Mamba results API"}


def test_get_all_runs_success():
    response = client.get("/runs")
    assert response.status_code == status.HTTP_200_OK
    assert response.json() is not None and len(response.json()) == 3


def test_get_all_runs_paging():
    response = client.get("/runs?skip=1&limit=1")
    assert response.status_code == status.HTTP_200_OK
    assert [run["variant"] for run in response.json()] == ["wo-temporal"]


@patch("src.results_api.repo.get_all_runs")
def test_get_all_runs_failure(mock_get_runs):
    mock_get_runs.side_effect = mock_get_runs_raise_db_op_error
    response = client.get("/runs")
    assert response.status_code == status.HTTP_404_NOT_FOUND
    assert response.json() is not None


def test_get_single_run_found():
    response = client.get("/runs/1")
    assert response.status_code == status.HTTP_200_OK
    assert response.json() is not None and int(response.json()["id"]) == 1
    assert response.json()["oa"] == 92.5


def test_get_single_run_not_found():
    response = client.get("/runs/10")
    assert response.status_code == status.HTTP_404_NOT_FOUND
    assert (
        response.json() is not None
        and (response.json()["detail"]) == "Run not found"
    )


def test_get_variant_runs_accepts_display_names():
    response = client.get("/runs/variant/Full")
    assert response.status_code == status.HTTP_200_OK
    assert [run["oa"] for run in response.json()] == [92.5, 91.0]


def test_get_variant_runs_none_recorded():
    response = client.get("/runs/variant/wo-graph")
    assert response.status_code == status.HTTP_404_NOT_FOUND
    assert response.json()["detail"] == "No runs recorded for this variant"


def test_get_variant_runs_unknown_variant():
    response = client.get("/runs/variant/without-everything")
    assert response.status_code == status.HTTP_422_UNPROCESSABLE_ENTITY


def test_complexity_success():
    response = client.post("/complexity?batch_size=8", json={"C": 8, "d": 16})
    assert response.status_code == status.HTTP_200_OK
    body = response.json()
    assert body["total"]["params"] == sum(row["params"] for row in body["rows"])
    assert body["total"]["flops"] == 2 * body["total"]["macs"]


def test_complexity_invalid_config():
    response = client.post("/complexity", json={"H": 12})
    assert response.status_code == status.HTTP_422_UNPROCESSABLE_ENTITY
    response = client.post("/complexity", json={"colour": "red"})
    assert response.status_code == status.HTTP_422_UNPROCESSABLE_ENTITY
