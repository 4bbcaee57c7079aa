"""
Simulation study for the renewal-state test.

Simulates datasets from the two binary models, runs the intrinsic Bayes
factor test for every scenario of a preset and reports AIBF/GIBF with
bootstrap confidence intervals over the partial Bayes factors.

Usage (from the repository root):
    python -m evaluation.simulation_study --preset model1-sign --iters 2000
"""

import argparse
import json
import time
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Any, Dict, List

import numpy as np
import pandas as pd
from loguru import logger
from tqdm import tqdm

from renewal.core.config import settings
from renewal.core.logging import setup_logging
from renewal.models.schemas import RenewalReport
from renewal.services.bayes_factor import run_renewal_test
from renewal.services.inference import DirichletHyper
from renewal.services.simulation import model1, model2, simulate

MODELS = {"model1": model1, "model2": model2}


@dataclass(frozen=True)
class Scenario:
    model: str
    n_sequences: int
    length: int
    state: int
    v: int
    depth_bound: int = 6

    @property
    def expected_sign(self) -> int:
        """+1 when ``state`` is a renewal state of the generating model, -1 otherwise."""
        return 1 if self.model == "model1" and self.state == 0 else -1


def _grid(model: str, sizes, lengths, states, vs) -> List[Scenario]:
    return [
        Scenario(model, n, length, state, v)
        for n in sizes for length in lengths for state in states for v in vs
        if v < n
    ]


PRESETS: Dict[str, List[Scenario]] = {
    "model1-sign": _grid("model1", [3, 10], [1000], [0, 1], [1]),
    "model2-long-range": _grid("model2", [10], [1000, 5000], [0], [1, 2]),
    "model1-grid": _grid("model1", [3, 10, 25], [1000, 2500, 5000], [0, 1], [1, 2]),
    "model2-grid": _grid("model2", [3, 10, 25], [1000, 2500, 5000], [0], [1, 2]),
}


class SimulationStudy:
    """Runs the renewal test across scenarios and summarises the outcomes."""

    def __init__(self, n_iter: int, seed: int, jobs: int = 1, alpha: float = settings.default_alpha,
                 trim: float = settings.default_trim):
        self.n_iter = n_iter
        self.seed = seed
        self.jobs = jobs
        self.hyper = DirichletHyper(2, alpha)
        self.trim = trim

    def bootstrap_confidence_intervals(self, values: List[float], confidence_level: float = 0.95,
                                       n_bootstrap: int = 1000) -> Dict[str, float]:
        """Percentile bootstrap interval for the mean log10 PBF (the GIBF)."""
        values = np.asarray(values, dtype=np.float64)
        rng = np.random.Generator(np.random.Philox(self.seed))
        samples = rng.choice(values, size=(n_bootstrap, len(values)), replace=True).mean(axis=1)
        lower_percentile = (1 - confidence_level) / 2 * 100
        upper_percentile = (1 + confidence_level) / 2 * 100
        return {
            "mean": float(np.mean(values)),
            "std": float(np.std(values)),
            "ci_lower": float(np.percentile(samples, lower_percentile)),
            "ci_upper": float(np.percentile(samples, upper_percentile)),
            "median": float(np.median(values)),
            "min": float(np.min(values)),
            "max": float(np.max(values)),
        }

    def run_scenario(self, scenario: Scenario, index: int) -> Dict[str, Any]:
        dataset_seed = int(np.random.SeedSequence(self.seed, spawn_key=(index,)).generate_state(1, np.uint64)[0])
        dataset = simulate(MODELS[scenario.model](), scenario.n_sequences, scenario.length, dataset_seed,
                           depth_bound=scenario.depth_bound)

        start = time.time()
        report: RenewalReport = run_renewal_test(
            dataset, scenario.state, scenario.v, self.n_iter, self.hyper,
            trim_fraction=self.trim, seed=self.seed, parallelism=self.jobs,
        )
        elapsed = time.time() - start

        pbfs = [record.log10_pbf for record in report.records]
        gibf_ci = self.bootstrap_confidence_intervals(pbfs) if len(pbfs) > 1 else {}
        aggregates = report.aggregates
        return {
            **asdict(scenario),
            "AIBF": aggregates.aibf,
            "GIBF": aggregates.gibf,
            "AIBF_trimmed": aggregates.aibf_trimmed,
            "GIBF_trimmed": aggregates.gibf_trimmed,
            "GIBF_ci_lower": gibf_ci.get("ci_lower"),
            "GIBF_ci_upper": gibf_ci.get("ci_upper"),
            "label": str(aggregates.labels["gibf"]),
            "sign_correct": bool(np.sign(aggregates.gibf) == scenario.expected_sign),
            "dataset_seed": str(dataset_seed),
            "seconds": round(elapsed, 2),
        }

    def run(self, scenarios: List[Scenario]) -> pd.DataFrame:
        rows = []
        for index, scenario in enumerate(tqdm(scenarios, desc="Scenarios")):
            logger.info(f"Scenario {index + 1}/{len(scenarios)}: {scenario}")
            rows.append(self.run_scenario(scenario, index))
        return pd.DataFrame(rows)


def main():
    parser = argparse.ArgumentParser(description="Simulation study for the renewal-state test")
    parser.add_argument("--preset", choices=sorted(PRESETS), default="model1-sign")
    parser.add_argument("--iters", type=int, default=settings.mh_default_iters, help="MH iterations per chain")
    parser.add_argument("--seed", type=int, default=settings.seed if settings.seed is not None else 2024)
    parser.add_argument("--jobs", type=int, default=settings.default_jobs)
    parser.add_argument("--output-dir", type=Path, default=Path("evaluation/results"))
    args = parser.parse_args()

    setup_logging()
    scenarios = PRESETS[args.preset]
    print(f"--- Renewal-state simulation study | preset {args.preset}: {len(scenarios)} scenarios ---")

    study = SimulationStudy(args.iters, args.seed, jobs=args.jobs)
    results = study.run(scenarios)

    args.output_dir.mkdir(parents=True, exist_ok=True)
    csv_path = args.output_dir / f"{args.preset}.csv"
    results.to_csv(csv_path, index=False)
    summary = {
        "preset": args.preset,
        "iters": args.iters,
        "seed": args.seed,
        "scenarios": len(results),
        "sign_correct": int(results["sign_correct"].sum()),
    }
    (args.output_dir / f"{args.preset}_summary.json").write_text(json.dumps(summary, indent=2), encoding="utf-8")

    columns = ["model", "state", "n_sequences", "v", "length", "AIBF", "GIBF", "AIBF_trimmed", "GIBF_trimmed", "label"]
    print(results[columns].round(2).to_string(index=False))
    print(f"\nSign correct in {summary['sign_correct']}/{summary['scenarios']} scenarios; results in {csv_path}")


if __name__ == "__main__":
    main()
