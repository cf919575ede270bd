"""Corrector, homogenization and rate-study services."""
