"""Scenario harness: vehicle plant, mock algorithm cores, stack wiring,
fault-injection scenarios, latency analysis, CLI, and the basestation
bridge."""
