"""Typer command-line interface; the entry point is taloha.cli.__main__:app."""
