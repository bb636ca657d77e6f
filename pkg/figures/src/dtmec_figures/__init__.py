"""Offline figure rendering for dtmec CSV bundles.

Coupled to the simulation/optimization suite only through its documented
CSV schemas: every renderer reads files, never the producing code.
"""

__version__ = "0.1.0"
