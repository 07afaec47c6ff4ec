"""Package and output-schema version tracking.

SCHEMA_VERSION tracks the layout of the JSON reports and CSV files the CLI
writes. Bump it when a field or column is renamed, removed or changes
meaning, NOT when the analysis itself changes.

Bump rules:
- Minor (x.y+1): new optional fields or columns
- Major (x+1.0): renamed/removed fields, changed units or semantics
"""

PACKAGE_VERSION = "0.1.0"
SCHEMA_VERSION = "1.0"
