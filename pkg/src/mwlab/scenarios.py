"""Built-in networks and scenario presets."""
from __future__ import annotations

import json
import math
from pathlib import Path

import numpy as np

from .arrivals import PARETO, POISSON, ArrivalPlan, ArrivalSpec
from .network import Network, network_from_dict

INF = math.inf

# up to two of the three queues served per slot, each at rate one
PAIR_VECTORS = [(1, 1, 0), (1, 0, 1), (0, 1, 1)]

# a service set reproducing the breakpoints (27,0,0,0) -> (6,6,0,0) -> (0,2,2,0) -> 0
# at times 0, 3, 5, 9 under lambda* = (1, 2, 1, 1)
FOUR_QUEUE_VECTORS = [(8, 0, 1, 1), (4, 4, 0, 2), (6, 0, 4, 0)]

THREE_QUEUE_CASES = {
    1: {"gamma": [0.6, 0.6, INF], "lambda": [0.5, 0.5, 0.75]},
    2: {"gamma": [0.8, 0.8, INF], "lambda": [0.5, 0.5, 0.25]},
    3: {"gamma": [0.4, 0.4, INF], "lambda": [0.5, 0.5, 0.25]},
}


def three_queue() -> Network:
    return Network.from_vectors(PAIR_VECTORS, name="three-queue")


def four_queue_timing(vectors=None) -> Network:
    return Network.from_vectors(FOUR_QUEUE_VECTORS if vectors is None else vectors, name="four-queue-timing")


def builtin(name: str) -> dict:
    """Scenario dictionary for a built-in name."""
    if name == "three-queue":
        return {"name": name, "network": three_queue().to_json(), "lambda": [0.5, 0.5, 0.25],
                "gamma": [0.8, 0.8, INF], "epsilon": 0.05, "queue": 3, "init": [1.0, 0.0, 0.0], "t_end": 10.0}
    if name == "four-queue-timing":
        return {"name": name, "network": four_queue_timing().to_json(), "lambda": [1.0, 2.0, 1.0, 1.0],
                "gamma": [0.5, INF, INF, INF], "epsilon": 0.05, "queue": 4, "init": [27.0, 0.0, 0.0, 0.0],
                "t_end": 12.0}
    raise KeyError(f"unknown scenario {name!r}")


def parse_gamma(values) -> list:
    out = []
    for v in values:
        g = INF if isinstance(v, str) and v.strip().lower() in ("inf", "infinity") else float(v)
        if not g > 0:
            raise ValueError("tail exponents must be positive")
        out.append(g)
    return out


def load_scenario(ref: str) -> dict:
    """Built-in name or path to a JSON scenario file."""
    try:
        return builtin(ref)
    except KeyError:
        pass
    path = Path(ref)
    if not path.exists():
        raise FileNotFoundError(f"no built-in scenario or file named {ref!r}")
    data = json.loads(path.read_text())
    data.setdefault("name", path.stem)
    if "gamma" in data:
        data["gamma"] = parse_gamma(data["gamma"])
    return data


def scenario_network(sc: dict) -> Network:
    return network_from_dict(sc["network"], name=sc.get("name", ""))


def stationary_plan(sc: dict, T: int) -> ArrivalPlan:
    """Per-queue laws from ``sc["arrivals"]`` or, by default, Pareto mixtures
    (x_min = 1) for finite exponents and Poisson for infinite ones."""
    lam = [float(v) for v in sc["lambda"]]
    if "arrivals" in sc:
        specs = [ArrivalSpec.from_dict(d) for d in sc["arrivals"]]
    else:
        specs = [ArrivalSpec(POISSON) if math.isinf(g) else ArrivalSpec(PARETO, gamma=g, x_min=1.0)
                 for g in parse_gamma(sc["gamma"])]
    return ArrivalPlan.stationary(T, specs, lam)


def jsonable(sc: dict) -> dict:
    out = dict(sc)
    if "gamma" in out:
        out["gamma"] = ["inf" if isinstance(g, float) and math.isinf(g) else g for g in out["gamma"]]
    return out


def as_array(values) -> np.ndarray:
    return np.asarray([float(v) for v in values])
