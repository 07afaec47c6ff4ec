"""Infrastructure shared by the CLI and the core modules.

- metrics: operation timing with the @tracked decorator
- paths: output directory and timestamped file names
- results: CSV columns, row builders and JSON report envelopes
"""
