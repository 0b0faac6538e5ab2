"""Scenario descriptions: cells, trajectory, radio parameters, presets.

A scenario file is a single JSON document (schema_version 1) that pins
everything a run needs, so identical files and seeds reproduce identical
runs.  The bundled reference scenario walks one UE back and forth across
the midpoint between two gNBs while the boundary region is crossed
repeatedly between ~25 s and ~60 s.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

from .pipeline import BatchPolicy
from .sim import A3Config, CellConfig, InvalidScenario, UETrajectory

SCENARIO_SCHEMA_VERSION = 1

# A3 presets used by the two-phase experiment: the deliberately
# oversensitive values and the stabilized ones.
MISCONFIGURED_A3 = A3Config(offset_db=2.0, hysteresis_db=2.0, ttt_ms=100)
CORRECTED_A3 = A3Config(offset_db=4.0, hysteresis_db=4.0, ttt_ms=320)


@dataclass(frozen=True)
class RadioParams:
    path_loss_exponent: float = 3.0
    shadowing_sigma_db: float = 4.0
    shadowing_decorrelation_m: float = 5.0


@dataclass(frozen=True)
class ScenarioSpec:
    scenario_id: str
    cells: tuple[CellConfig, ...]
    trajectory: UETrajectory
    radio: RadioParams
    seed: int
    nominal_fps: float = 30.0
    misconfigured_a3: A3Config = MISCONFIGURED_A3
    corrected_a3: A3Config = CORRECTED_A3
    batch_policy: BatchPolicy = field(default_factory=BatchPolicy)
    iteration_cap: int = 5
    tick_s: float = 0.01
    ho_execution_delay_s: float = 0.05
    interruption_ms_per_ho: float = 500.0
    # analysis window where the trajectory hugs the cell boundary
    crossing_interval_s: tuple[float, float] | None = None

    def validate(self) -> None:
        if len(self.cells) != 2:
            raise InvalidScenario("cells", f"simulator is two-cell, got {len(self.cells)}")
        ids = [c.cell_id for c in self.cells]
        if len(set(ids)) != len(ids):
            raise InvalidScenario("cells", f"cell_id values not unique: {ids}")
        gnbs = [c.gnb_id for c in self.cells]
        if len(set(gnbs)) != len(gnbs):
            raise InvalidScenario("cells", f"gnb_id values not unique: {gnbs}")
        if self.tick_s <= 0 or self.tick_s > 0.01:
            raise InvalidScenario("tick_s", "must be in (0, 0.01] so TTT windows resolve")
        if self.nominal_fps <= 0:
            raise InvalidScenario("nominal_fps", "must be > 0")
        if self.iteration_cap < 0:
            raise InvalidScenario("iteration_cap", "must be >= 0")
        if self.ho_execution_delay_s < 0:
            raise InvalidScenario("ho_execution_delay_s", "must be >= 0")
        if self.radio.shadowing_sigma_db < 0:
            raise InvalidScenario("radio.shadowing_sigma_db", "must be >= 0")
        if self.radio.shadowing_decorrelation_m <= 0:
            raise InvalidScenario("radio.shadowing_decorrelation_m", "must be > 0")
        if self.crossing_interval_s is not None and self.crossing_interval_s[0] >= self.crossing_interval_s[1]:
            raise InvalidScenario("crossing_interval_s", "from must be < to")

    def to_dict(self) -> dict:
        doc = {
            "schema_version": SCENARIO_SCHEMA_VERSION,
            "scenario_id": self.scenario_id,
            "cells": [
                {
                    "cell_id": c.cell_id,
                    "gnb_id": c.gnb_id,
                    "position_m": list(c.position),
                    "tx_power_ref_dbm": c.tx_power_ref_dbm,
                    "a3": _a3_to_dict(c.a3),
                }
                for c in self.cells
            ],
            "trajectory": {
                "ue_id": self.trajectory.ue_id,
                "waypoints": [list(w) for w in self.trajectory.waypoints],
            },
            "radio": {
                "path_loss_exponent": self.radio.path_loss_exponent,
                "shadowing_sigma_db": self.radio.shadowing_sigma_db,
                "shadowing_decorrelation_m": self.radio.shadowing_decorrelation_m,
            },
            "seed": self.seed,
            "nominal_fps": self.nominal_fps,
            "presets": {
                "misconfigured": _a3_to_dict(self.misconfigured_a3),
                "corrected": _a3_to_dict(self.corrected_a3),
            },
            "batch_policy": {
                "quiescence_ms": self.batch_policy.quiescence_ms,
                "max_count": self.batch_policy.max_count,
            },
            "iteration_cap": self.iteration_cap,
            "tick_s": self.tick_s,
            "ho_execution_delay_s": self.ho_execution_delay_s,
            "interruption_ms_per_ho": self.interruption_ms_per_ho,
        }
        if self.crossing_interval_s is not None:
            doc["crossing_interval_s"] = list(self.crossing_interval_s)
        return doc

    @classmethod
    def from_dict(cls, doc: dict) -> "ScenarioSpec":
        version = doc.get("schema_version")
        if version != SCENARIO_SCHEMA_VERSION:
            raise InvalidScenario("schema_version", f"expected {SCENARIO_SCHEMA_VERSION}, got {version}")
        try:
            cells = tuple(
                CellConfig(
                    cell_id=int(c["cell_id"]),
                    gnb_id=int(c["gnb_id"]),
                    position=(float(c["position_m"][0]), float(c["position_m"][1])),
                    tx_power_ref_dbm=float(c["tx_power_ref_dbm"]),
                    a3=_a3_from_dict(c["a3"]),
                )
                for c in doc["cells"]
            )
            trajectory = UETrajectory(
                ue_id=int(doc["trajectory"]["ue_id"]),
                waypoints=tuple(
                    (float(w[0]), float(w[1]), float(w[2]))
                    for w in doc["trajectory"]["waypoints"]
                ),
            )
            radio = RadioParams(
                path_loss_exponent=float(doc["radio"]["path_loss_exponent"]),
                shadowing_sigma_db=float(doc["radio"]["shadowing_sigma_db"]),
                shadowing_decorrelation_m=float(doc["radio"]["shadowing_decorrelation_m"]),
            )
            presets = doc.get("presets", {})
            policy = doc.get("batch_policy", {})
            interval = doc.get("crossing_interval_s")
            spec = cls(
                scenario_id=str(doc["scenario_id"]),
                cells=cells,
                trajectory=trajectory,
                radio=radio,
                seed=int(doc["seed"]),
                nominal_fps=float(doc.get("nominal_fps", 30.0)),
                misconfigured_a3=_a3_from_dict(presets["misconfigured"]) if "misconfigured" in presets else MISCONFIGURED_A3,
                corrected_a3=_a3_from_dict(presets["corrected"]) if "corrected" in presets else CORRECTED_A3,
                batch_policy=BatchPolicy(
                    quiescence_ms=int(policy.get("quiescence_ms", 2000)),
                    max_count=int(policy.get("max_count", 50)),
                ),
                iteration_cap=int(doc.get("iteration_cap", 5)),
                tick_s=float(doc.get("tick_s", 0.01)),
                ho_execution_delay_s=float(doc.get("ho_execution_delay_s", 0.05)),
                interruption_ms_per_ho=float(doc.get("interruption_ms_per_ho", 500.0)),
                crossing_interval_s=(float(interval[0]), float(interval[1])) if interval else None,
            )
        except InvalidScenario:
            raise
        except (KeyError, IndexError, TypeError, ValueError) as exc:
            raise InvalidScenario(str(exc), "missing or malformed") from exc
        spec.validate()
        return spec


def _a3_to_dict(a3: A3Config) -> dict:
    return {"offset_db": a3.offset_db, "hysteresis_db": a3.hysteresis_db, "ttt_ms": a3.ttt_ms}


def _a3_from_dict(doc: dict) -> A3Config:
    return A3Config(
        offset_db=float(doc["offset_db"]),
        hysteresis_db=float(doc["hysteresis_db"]),
        ttt_ms=int(doc["ttt_ms"]),
    )


def load_scenario(path: str | Path) -> ScenarioSpec:
    with open(path, encoding="utf-8") as fh:
        return ScenarioSpec.from_dict(json.load(fh))


def save_scenario(spec: ScenarioSpec, path: str | Path) -> None:
    Path(path).write_text(json.dumps(spec.to_dict(), indent=2) + "\n", encoding="utf-8")


def reference_scenario(seed: int = 42) -> ScenarioSpec:
    """The canonical two-gNB ping-pong scenario.

    gNB-30 and gNB-31 sit 40 m apart; UE 17 weaves across the midpoint
    every 3 s between t~24s and t~60s, then commits to gNB-31's side.
    The weave swings the neighbor-minus-serving delta about +-6 dB, so
    with the misconfigured preset (4 dB entering threshold, 100 ms hold)
    every pass flips the A3 decision, while the corrected preset (8 dB,
    320 ms) rides the weave out.  Shadowing here is mild and slowly
    varying so triggers land with sub-1-dB margins.
    """
    weave_near, weave_far = 15.5, 24.5
    waypoints = [(0.0, 6.0, 0.0), (20.0, weave_near, 0.0)]
    t = 24.0
    x = weave_far
    while t <= 60.0:
        waypoints.append((t, x, 0.0))
        x = weave_near if x == weave_far else weave_far
        t += 3.0
    waypoints += [(t + 4.0, 33.0, 0.0), (t + 11.0, 36.0, 0.0)]
    return ScenarioSpec(
        scenario_id=f"reference-seed{seed}",
        cells=(
            CellConfig(cell_id=1, gnb_id=30, position=(0.0, 0.0), tx_power_ref_dbm=-40.0, a3=MISCONFIGURED_A3),
            CellConfig(cell_id=2, gnb_id=31, position=(40.0, 0.0), tx_power_ref_dbm=-40.0, a3=MISCONFIGURED_A3),
        ),
        trajectory=UETrajectory(ue_id=17, waypoints=tuple(waypoints)),
        radio=RadioParams(path_loss_exponent=3.0, shadowing_sigma_db=0.75, shadowing_decorrelation_m=25.0),
        seed=seed,
        # handover bursts arrive ~3 s apart; a 5 s quiescence window folds
        # the whole episode into one batch
        batch_policy=BatchPolicy(quiescence_ms=5000, max_count=50),
        crossing_interval_s=(25.0, 60.0),
    )
