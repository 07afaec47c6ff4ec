"""Command-line front end.

Usage:
    taloha analyze --n 2 --gamma 4 --tau 0.5
    taloha roots --r 2.21 --alpha 4.69
    taloha optimize --regime any
    taloha simulate --n 200 --gamma 434 --tau 0.02215 --slots 1e7
    taloha sweep --policy ta --n 50:1000:50 --slots 1e7 --seeds 0:4 --jobs 8
    taloha summarize results/sweep_20260101_120000.csv
    taloha oracle --n 2 --gamma 4 --tau 0.5
    taloha curve --r 2.5 --alpha 5
    taloha concentration --r 1.5 --alpha 2 --n-list 100,300,1000
"""

from taloha.cli import analysis, experiments  # noqa: F401  (register commands)
from taloha.cli.app import app

if __name__ == "__main__":
    app()
