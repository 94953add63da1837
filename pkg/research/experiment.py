#!/usr/bin/env python3
"""
Reproducible experiment runner (smoke test) for the short-pulse justification.

This script runs a small epsilon sweep end to end:
- Tune the pulse amplitude until the short-pulse run satisfies the delta cap
- Co-evolve Klein-Gordon partners for four values of epsilon
- Fit the error exponent and the Gronwall constants
- Write convergence.csv and index.json to research_output/

The box is smaller than the production default so that it runs in CI as a
smoke experiment; use ``shortpulse converge`` for the full study.
"""
import json
import logging
import math
import os
import sys
from pathlib import Path

# Ensure local SDK import works
ROOT = Path(__file__).resolve().parents[1]
sys.path.insert(0, str(ROOT / "sdk"))

from shortpulse.justification import StudyConfig, convergence_study
from shortpulse.reports import write_table

# Configure logging
logging.basicConfig(level=logging.INFO, format='%(asctime)s %(levelname)s %(message)s')
logger = logging.getLogger('research.experiment')


def smoke_config() -> StudyConfig:
    """Sweep parameters, overridable through SMOKE_* environment variables."""
    return StudyConfig(
        length=64 * math.pi,
        n=int(os.getenv('SMOKE_N', '512')),
        width=2.0,
        amplitude=float(os.getenv('SMOKE_AMPLITUDE', '0.1')),
        epsilons=(0.2, 0.1, 0.05, 0.025),
        T=float(os.getenv('SMOKE_T', '0.5')),
        samples=int(os.getenv('SMOKE_SAMPLES', '50')),
        seed=int(os.getenv('SMOKE_SEED', '0')),
        threads=int(os.getenv('SMOKE_THREADS', '1')),
    )


def run_smoke():
    config = smoke_config()
    logger.info(f"Running sweep on n={config.n}, T={config.T}, epsilons={list(config.epsilons)}")

    report = convergence_study(config)
    for run in report.runs:
        if run.ok:
            logger.info(f"eps={run.epsilon:g}: sup H2 error {run.sup_h2_error:.3e} "
                        f"(error/eps {run.sup_h2_error / run.epsilon:.3f}) in {run.elapsed:.1f}s")
        else:
            logger.error(f"eps={run.epsilon:g} aborted: {run.error}")

    if len(report.successful) < 3:
        logger.error("Fewer than three epsilons completed, no exponent can be fitted")
        raise SystemExit(3)

    out_dir = Path.cwd() / 'research_output'
    out_dir.mkdir(exist_ok=True)
    write_table(report.summary_table(), out_dir / 'convergence.csv')

    index = {
        'amplitude': report.amplitude,
        'delta': report.delta.delta if report.delta else None,
        'slope': report.slope,
        'unscaled_slope': report.unscaled_slope,
        'leading_u_slope': report.leading_u_slope,
        'epsilons': report.epsilons,
    }
    index_path = out_dir / 'index.json'
    index_path.write_text(json.dumps(index, indent=2))
    logger.info(f"Wrote index to {index_path}")

    if report.slope is None or report.slope < 0.8:
        logger.error(f"Error exponent {report.slope} below 0.8")
        return 1

    logger.info(f"Smoke experiment completed successfully (exponent {report.slope:.3f})")
    return 0


if __name__ == '__main__':
    rc = run_smoke()
    sys.exit(rc)
