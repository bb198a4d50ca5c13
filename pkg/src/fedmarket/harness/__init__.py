"""Experiment harness: configs, presets, studies, CSV ledgers and the CLI."""
