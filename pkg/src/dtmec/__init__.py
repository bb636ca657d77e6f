"""Digital-twin MEC toolkit: placement optimization, AoCI-aware update
scheduling, and a slotted Monte-Carlo simulator with exact MDP solvers."""

__version__ = "0.1.0"
