"""Multi-source calibration engine with GaSP and scaled-GaSP model discrepancy."""

__version__ = "1.0.0"
