"""Bundled demo and evaluation fixtures (data files only)."""
