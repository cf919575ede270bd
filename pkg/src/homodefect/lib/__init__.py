"""Grid, solver, storage and configuration building blocks."""
