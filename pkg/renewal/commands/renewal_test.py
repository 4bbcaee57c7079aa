"""`renewal`: intrinsic Bayes factor test of whether a state is a renewal state."""

import argparse
from pathlib import Path

import pandas as pd

from renewal.commands.common import add_model_arguments, add_output_arguments, load_inputs, write_json, write_manifest
from renewal.core.config import settings
from renewal.models.schemas import RenewalReport, RunConfig
from renewal.services.bayes_factor import run_renewal_test


def add_parser(subparsers) -> argparse.ArgumentParser:
    parser = subparsers.add_parser("renewal", help="Test whether a state is a renewal state")
    parser.add_argument("dataset_path", type=Path, help="Dataset file, one sequence per line")
    add_model_arguments(parser)
    parser.add_argument("--state", type=int, required=True, help="Candidate renewal state a")
    parser.add_argument("--v", type=int, default=1, help="Training sequences per partial Bayes factor")
    parser.add_argument("--iters", type=int, default=settings.mh_default_iters, help="Iterations per chain")
    parser.add_argument("--burn-in", type=int, default=0, help="Discarded iterations per chain")
    parser.add_argument("--trim", type=float, default=settings.default_trim,
                        help="Total fraction of PBFs trimmed, split between the tails")
    parser.add_argument("--trim-count", type=int, help="Exact number of PBFs trimmed from each tail")
    parser.add_argument("--jobs", type=int, default=settings.default_jobs, help="Worker processes")
    parser.add_argument("--dump-chain", action="store_true", help="Write every chain trace")
    add_output_arguments(parser)
    return parser


def records_frame(report: RenewalReport) -> pd.DataFrame:
    return pd.DataFrame([
        {
            "subset": "-".join(map(str, record.subset)),
            "log10_pbf": record.log10_pbf,
            "log10_num": record.log10_num,
            "log10_den": record.log10_den,
            "seed_renewing": str(record.seed_renewing),
            "seed_not_renewing": str(record.seed_not_renewing),
            "acceptance_renewing": record.acceptance_renewing,
            "acceptance_not_renewing": record.acceptance_not_renewing,
        }
        for record in report.records
    ])


def summary_line(report: RenewalReport) -> str:
    row = report.summary_row()
    label = report.aggregates.labels["gibf"]
    return (
        f"a={row['a']} I={row['I']} v={row['v']} "
        f"AIBF={row['AIBF']:.2f} GIBF={row['GIBF']:.2f} "
        f"AIBF_trimmed={row['AIBF_trimmed']:.2f} GIBF_trimmed={row['GIBF_trimmed']:.2f} "
        f"[{label}]"
    )


def run(config: RunConfig) -> Path:
    dataset, hyper = load_inputs(config)
    output_dir = Path(config.output_dir)
    report = run_renewal_test(
        dataset,
        config.state,
        config.v,
        config.iters,
        hyper,
        trim_fraction=config.trim,
        seed=config.seed,
        parallelism=config.jobs,
        trim_count=config.trim_count,
        burn_in=config.burn_in,
        chain_dir=output_dir / "chains" if config.dump_chain else None,
        show_progress=True,
    )

    output_dir.mkdir(parents=True, exist_ok=True)
    report_path = write_json(output_dir / "report.json", report.model_dump_json(indent=2))
    pbf_path = output_dir / "pbf.csv"
    records_frame(report).to_csv(pbf_path, index=False)
    summary_path = output_dir / "summary.csv"
    pd.DataFrame([report.summary_row()]).to_csv(summary_path, index=False)

    print(summary_line(report))
    return write_manifest(config, [report_path, pbf_path, summary_path])
