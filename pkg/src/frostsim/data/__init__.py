"""Bundled reference data: pore size distributions, winter climate, schema."""
