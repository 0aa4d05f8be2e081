"""Urban UAV third-party risk maps and risk-aware 3D path planning."""

__version__ = "0.1.0"

from .eda import EdaParams, eda_fra_star, eda_ra_star
from .errors import NoPath, UavRiskError, ValidationError
from .grid import CellIndex, GridSpec, default_grid
from .planning import FlightPath, HeuristicInfo, dijkstra_distance, dijkstra_risk, risk_a_star, validate_path
from .risk import RiskMap, RiskWeights, UavModel, build_risk_map
from .scenario import ScenarioGenConfig, UrbanScenario, generate_scenario, load_scenario, save_scenario

__all__ = [
    "CellIndex",
    "EdaParams",
    "FlightPath",
    "GridSpec",
    "HeuristicInfo",
    "NoPath",
    "RiskMap",
    "RiskWeights",
    "ScenarioGenConfig",
    "UavModel",
    "UavRiskError",
    "UrbanScenario",
    "ValidationError",
    "build_risk_map",
    "default_grid",
    "dijkstra_distance",
    "dijkstra_risk",
    "eda_fra_star",
    "eda_ra_star",
    "generate_scenario",
    "load_scenario",
    "risk_a_star",
    "save_scenario",
    "validate_path",
]
