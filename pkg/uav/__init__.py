"""Simulated two-node drone system: bus, plant, servo, detectors, reporting."""
