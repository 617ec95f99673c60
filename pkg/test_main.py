# test_main.py
import pytest
from fastapi.testclient import TestClient

from main import app
from workload import taskset_to_dict

client = TestClient(app)

IDEAL_CONFIG = {
    "horizon_s": 120,
    "capacitor": {"capacitance_f": 0.1},
    "harvest": {"mode": "ideal", "segments": [{"start_s": 0, "rate_w": 1.0}]},
}


@pytest.fixture
def payload(reference):
    return taskset_to_dict(reference)


def late_taskset():
    return {"chains": [{"id": 1, "name": "late", "period_s": 10, "deadline_s": 12, "priority": 1,
                        "tasks": [{"id": "a", "wcet_s": 1.0, "power_w": 0.01}]}]}


def test_health_check():
    """Test du point de contrôle de santé"""
    response = client.get("/health")
    assert response.status_code == 200
    assert response.json()["status"] == "OK"
    assert response.json()["version"] == "1.0.0"


def test_validate_taskset(payload):
    """Test de validation du jeu de référence"""
    response = client.post("/tasksets/validate", json=payload)
    assert response.status_code == 200
    assert response.json() == {"valid": True, "violations": []}


def test_validate_invalid_taskset():
    response = client.post("/tasksets/validate", json=late_taskset())
    assert response.status_code == 200
    assert response.json()["valid"] is False
    assert response.json()["violations"] == ["chain late: deadline 12.0 exceeds period 10.0"]


def test_generate_tasksets():
    """Test de génération de jeux de tâches"""
    response = client.post("/tasksets/generate?count=2", json={"n_tasks_range": [4, 4], "seed": 3})
    assert response.status_code == 201
    body = response.json()
    assert len(body) == 2
    assert len(body[0]["chains"]) == 4
    assert "period_s" in body[0]["chains"][0]


def test_generate_rejects_bad_count():
    response = client.post("/tasksets/generate?count=0", json={})
    assert response.status_code == 422


def test_min_capacitor(payload):
    response = client.post("/energy/min-capacitor", json={"taskset": payload})
    assert response.status_code == 200
    assert response.json()["min_capacitance_f"] == pytest.approx(0.0305, abs=2e-4)


def test_thresholds(payload):
    response = client.post("/energy/threshold", json={
        "taskset": payload, "capacitor": {"capacitance_f": 0.1}, "harvest_rate_w": 0.015,
    })
    assert response.status_code == 200
    rows = {row["task"]: row for row in response.json()}
    assert rows["Camera"]["threshold_v"] == pytest.approx(3.9122, abs=1e-4)


def test_analysis(payload):
    """Test de l'analyse du jeu de référence à 15 mW (demandes de recharge bornées à 0)"""
    response = client.post("/analysis", json={"taskset": payload, "harvest_rate_w": 0.015})
    assert response.status_code == 200
    body = response.json()
    assert body["schedulable"] is False
    assert body["utilization"] == pytest.approx(1.1675, abs=1e-3)
    assert body["raw_utilization"] == pytest.approx(0.979, abs=0.01)
    assert [chain["chain"] for chain in body["chains"]][0] == "CRC"


def test_analysis_raw_demand_on_request(payload):
    response = client.post("/analysis", json={"taskset": payload, "harvest_rate_w": 0.015, "clamp": False})
    assert response.status_code == 200
    assert response.json()["schedulable"] is True


def test_analysis_rejects_invalid_taskset():
    response = client.post("/analysis", json={"taskset": late_taskset(), "harvest_rate_w": 0.015})
    assert response.status_code == 422
    assert response.json()["detail"] == ["chain late: deadline 12.0 exceeds period 10.0"]


def test_analysis_requires_positive_rate(payload):
    response = client.post("/analysis", json={"taskset": payload, "harvest_rate_w": 0})
    assert response.status_code == 422


def test_simulation(payload):
    """Test d'une simulation en récolte idéale"""
    response = client.post("/simulations", json={"taskset": payload, "config": IDEAL_CONFIG,
                                                 "include_trace": True})
    assert response.status_code == 200
    body = response.json()
    assert body["success_ratios"]["CRC"] == 1.0
    assert body["metrics"]["policy"] == "cartos"
    assert body["trace"][0]["event"] == "Release"


def test_simulation_without_trace(payload):
    response = client.post("/simulations", json={"taskset": payload, "config": IDEAL_CONFIG})
    assert response.status_code == 200
    assert response.json()["trace"] is None


def test_list_policies():
    response = client.get("/policies")
    assert response.status_code == 200
    assert response.json() == ["cartos", "best_effort_jit", "atomic_restart", "atomic_charge_aware",
                               "event_first"]


def test_read_policy():
    response = client.get("/policies/event_first")
    assert response.status_code == 200
    assert response.json()["atomic_band"] is True


def test_read_unknown_policy():
    response = client.get("/policies/edf")
    assert response.status_code == 404


def test_root_redirects_to_docs():
    response = client.get("/", follow_redirects=False)
    assert response.status_code == 307
    assert response.headers["location"] == "/docs"
