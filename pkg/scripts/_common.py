"""Shared argument parsing and output helpers for the experiment scripts."""
import argparse
import logging
from pathlib import Path

from cempc import cli
from cempc.experiments import SweepResult


def parser(description: str, scenarios: int) -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(description=description)
    p.add_argument("--out", default="results", help="output directory")
    p.add_argument("--seed", type=int, default=0, help="master seed")
    p.add_argument("--scenarios", type=int, default=scenarios, help="scenarios per axis value")
    p.add_argument("--workers", type=int, default=1, help="threads (results do not depend on this)")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def setup_logging(verbose: bool) -> None:
    logging.basicConfig(level=logging.INFO if verbose else logging.WARNING, format="%(levelname)s %(message)s")


def out_dir(path: str) -> Path:
    p = Path(path)
    p.mkdir(parents=True, exist_ok=True)
    return p


def write_sweep(res: SweepResult, out: Path, stem: str, header: list, xlabel: str, ylabel: str) -> None:
    """Raw records, per-axis aggregates and a matplotlib script for the aggregates."""
    (out / f"{stem}.csv").write_text(res.records_csv(header))
    agg = out / f"{stem}_aggregates.csv"
    agg.write_text(res.aggregates_csv(header))
    cli.write_plot_script(agg, "axis_value", xlabel, ylabel)
    print(f"wrote {out / (stem + '.csv')}, {agg.name} and plot_{agg.stem}.py")
