"""Replicated simulation study: sweep one generator setting at a time, fit every method
with validation tuning and collect test metrics in long format."""
from __future__ import annotations
import logging
from typing import Dict, List, Sequence

import numpy as np
import pandas as pd
from joblib import Parallel, delayed
from tqdm import tqdm

from eqtlkit.BaseModel import BaseModel
from eqtlkit.config import SolverConfig
from eqtlkit.metrics import evaluate
from eqtlkit.simulation.config import SimConfig
from eqtlkit.simulation.generate import simulate
from eqtlkit.tuning import METHODS, GridSearchError, TuningGrid, grid_search

LOGGER = logging.getLogger(__name__)

LONG_COLUMNS = ["method", "setting", "setting_value", "replication", "metric", "value"]
SETTING_FIELDS = ("rho", "r2", "s")


class StudySetting(BaseModel):
    name: str
    value: float

    def apply(self, base: SimConfig) -> SimConfig:
        if self.name not in SETTING_FIELDS:
            raise ValueError(f"Unknown study setting {self.name!r}, expected one of {SETTING_FIELDS}")
        value = int(self.value) if self.name == "s" else self.value
        return SimConfig.parse_obj(dict(base.dict(), **{self.name: value}))


def default_settings() -> List[StudySetting]:
    """One-at-a-time sweeps around rho = 0.5, R2 = 0.1, s = 15."""
    sweeps: Dict[str, Sequence[float]] = {
        "rho": (0.0, 0.1, 0.3, 0.5, 0.7),
        "r2": (0.01, 0.05, 0.1, 0.2, 0.4),
        "s": (5, 10, 15, 18, 20),
    }
    return [StudySetting(name=name, value=v) for name, values in sweeps.items() for v in values]


def replication_seed(base_seed: int, setting_index: int, replication: int) -> int:
    return int(np.random.SeedSequence([base_seed, setting_index, replication]).generate_state(1)[0])


def run_replication(
    setting: StudySetting,
    setting_index: int,
    replication: int,
    base: SimConfig,
    methods: Sequence[str],
    grid: TuningGrid,
    cfg: SolverConfig,
) -> List[dict]:
    sim_cfg = setting.apply(base).copy(update=dict(seed=replication_seed(base.seed, setting_index, replication)))
    sim = simulate(sim_cfg)
    train_means = sim.train.observed_column_means()
    rows: List[dict] = []
    for method in methods:
        try:
            search = grid_search(sim.train, sim.valid, method, grid, cfg, Y_complete=sim.Y_train_complete)
        except GridSearchError as exc:
            LOGGER.warning("%s failed in replication %d of %s=%g: %s", method, replication, setting.name, setting.value, exc)
            continue
        report = evaluate(search.beta, sim.test, train_means, method=method, support_star=sim.truth.support, X_cor=sim.X)
        rows.extend(report.long_rows(setting=setting.name, setting_value=setting.value, replication=replication))
    return rows


def run_study(
    settings: Sequence[StudySetting],
    methods: Sequence[str] = METHODS,
    replications: int = 50,
    base: SimConfig = SimConfig(),
    grid: TuningGrid = TuningGrid(),
    cfg: SolverConfig = SolverConfig(),
    progress: bool = False,
) -> pd.DataFrame:
    """Long-format results, one row per method, setting, replication and metric.

    Replications run concurrently on `cfg.n_jobs` threads; each fit inside runs single-threaded.
    """
    unknown = set(methods) - set(METHODS)
    if unknown:
        raise ValueError(f"Unknown methods {sorted(unknown)}")
    inner = cfg.copy(update=dict(n_jobs=1))
    jobs = [(i, setting, r) for i, setting in enumerate(settings) for r in range(replications)]
    results = Parallel(n_jobs=cfg.n_jobs, prefer="threads")(
        delayed(run_replication)(setting, i, r, base, methods, grid, inner)
        for i, setting, r in tqdm(jobs, desc="study", disable=not progress)
    )
    frame = pd.DataFrame([row for rows in results for row in rows], columns=LONG_COLUMNS)
    LOGGER.info("Study finished: %d settings x %d replications, %d result rows", len(settings), replications, len(frame))
    return frame
