# main.py
import logging
from contextlib import asynccontextmanager
from dataclasses import asdict
from datetime import datetime
from typing import List

from fastapi import FastAPI, Query, Request, status
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse, RedirectResponse

import schemas
from analysis import analyze
from config import settings
from energy_model import min_capacitor, min_capacitor_best_effort, task_thresholds
from exceptions import InvalidTasksetRequest, IpdSimError, UnknownPolicy
from logging_config import setup_logging
from sim_kernel import POLICIES
from sim_kernel import run as run_simulation
from workload import generate_tasksets as generate_batch
from workload import validate

logger = logging.getLogger(__name__)


@asynccontextmanager
async def lifespan(app: FastAPI):
    setup_logging()
    logger.info(f"{settings.project_name} {settings.version} started")
    yield


app = FastAPI(
    title=settings.project_name,
    description=settings.description,
    version=settings.version,
    openapi_url="/openapi.json",
    docs_url="/docs",
    redoc_url="/redoc",
    lifespan=lifespan,
)
app.add_middleware(
    CORSMiddleware,
    allow_origins=["*"],  # En production, spécifier les domaines autorisés
    allow_credentials=True,
    allow_methods=["*"],
    allow_headers=["*"],
)


@app.exception_handler(IpdSimError)
async def domain_error_handler(request: Request, exc: IpdSimError):
    """Les erreurs du domaine levées pendant une requête deviennent des 422"""
    logger.warning(f"{request.url.path}: {exc.message}")
    return JSONResponse(status_code=status.HTTP_422_UNPROCESSABLE_ENTITY,
                        content={"detail": exc.message})


# ============================================================================
# ENDPOINTS DE SANTÉ
# ============================================================================

@app.get("/health", tags=["Health"], summary="Vérifie l'état de santé de l'API")
def health_check():
    return {
        "status": "OK",
        "version": settings.version,
        "timestamp": datetime.now().isoformat()
    }


# ============================================================================
# ENDPOINTS POUR LES JEUX DE TÂCHES
# ============================================================================

@app.post("/tasksets/validate",
          response_model=schemas.ValidationResponse,
          tags=["Tasksets"],
          summary="Valider un jeu de tâches")
def validate_taskset(taskset: schemas.Taskset):
    """Retourne la liste des violations du modèle de tâches"""
    violations = validate(taskset)
    return schemas.ValidationResponse(valid=not violations, violations=violations)


@app.post("/tasksets/generate",
          response_model=List[schemas.Taskset],
          status_code=status.HTTP_201_CREATED,
          tags=["Tasksets"],
          summary="Générer des jeux de tâches aléatoires")
def generate_tasksets(
    cfg: schemas.GenConfig,
    count: int = Query(1, ge=1, le=100, description="Nombre de jeux à générer"),
):
    """Jeux reproductibles : la graine du jeu i est seed XOR i"""
    return generate_batch(cfg, count)


# ============================================================================
# ENDPOINTS ÉNERGIE
# ============================================================================

@app.post("/energy/min-capacitor",
          response_model=schemas.MinCapacitorResponse,
          tags=["Energy"],
          summary="Capacité minimale du condensateur")
def get_min_capacitor(request: schemas.MinCapacitorRequest):
    capacitor = request.capacitor or schemas.CapacitorConfig(capacitance=0.1)
    tasks = request.taskset.tasks
    return schemas.MinCapacitorResponse(
        min_capacitance_f=min_capacitor(tasks, capacitor),
        best_effort_capacitance_f=min_capacitor_best_effort(tasks, capacitor, request.harvest_rate_w or 0.0),
    )


@app.post("/energy/threshold",
          response_model=List[schemas.TaskThreshold],
          tags=["Energy"],
          summary="Tensions seuil des tâches atomiques")
def get_thresholds(request: schemas.ThresholdRequest):
    return task_thresholds(request.taskset, request.harvest_rate_w, request.capacitor)


# ============================================================================
# ENDPOINTS ANALYSE ET SIMULATION
# ============================================================================

@app.post("/analysis",
          response_model=schemas.AnalysisReport,
          tags=["Analysis"],
          summary="Analyse d'ordonnançabilité")
def run_analysis(request: schemas.AnalysisRequest):
    """Pire temps de réponse de chaque chaîne au taux de récolte donné"""
    violations = validate(request.taskset) if request.taskset.chains else []
    if violations:
        raise InvalidTasksetRequest(violations)
    return analyze(request.taskset, request.harvest_rate_w, clamp=request.clamp)


@app.post("/simulations",
          response_model=schemas.SimulationResponse,
          tags=["Simulation"],
          summary="Simuler un jeu de tâches")
def run_simulation_endpoint(request: schemas.SimulationRequest):
    violations = validate(request.taskset) if request.taskset.chains else []
    if violations:
        raise InvalidTasksetRequest(violations)
    result = run_simulation(request.taskset, request.config)
    trace = None
    if request.include_trace:
        trace = [
            schemas.TraceEventOut(time_s=event.time_s, event=event.kind.value, chain=event.chain,
                                  task=event.task, voltage_v=event.voltage, detail=event.detail)
            for event in result.trace
        ]
    return schemas.SimulationResponse(metrics=result.metrics, success_ratios=result.success_ratios(),
                                      trace=trace)


@app.get("/policies", tags=["Simulation"], summary="Lister les politiques d'ordonnancement")
def list_policies():
    return [policy.value for policy in POLICIES]


@app.get("/policies/{policy}", tags=["Simulation"], summary="Paramétrage d'une politique")
def read_policy(policy: str):
    try:
        kind = schemas.PolicyKind(policy)
    except ValueError:
        raise UnknownPolicy(policy)
    return asdict(POLICIES[kind])


# ============================================================================
# DOCUMENTATION ALTERNATIVE
# ============================================================================

@app.get("/", include_in_schema=False)
async def redirect_to_docs():
    return RedirectResponse(url="/docs")
