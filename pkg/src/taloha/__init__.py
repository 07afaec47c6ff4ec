"""Threshold-ALOHA analysis and simulation toolkit.

Structure:
- taloha/core/: analysis and simulation
  - model.py: shared domain types and validation
  - exact.py: finite-n steady state of the truncated age chain
  - asymptotics.py: large-network roots, regimes, limiting AoI, optimizer
  - sim.py: slot-level Monte Carlo simulator, baselines and replications
  - config.py: configuration via pydantic-settings
  - errors.py: exception hierarchy

- taloha/lib/: infrastructure that rarely changes
  - paths.py: output locations
  - results.py: CSV/JSON persistence
  - metrics.py: operation timing

- taloha/cli/: command-line front end
"""

from taloha.version import PACKAGE_VERSION

__version__ = PACKAGE_VERSION
