"""navsim: a deterministic 2.5D indoor navigation simulator and stack.

Modules: world (scene + actuation), sensors (depth camera), mapping
(occupancy grids), pose (episode frames + fusion), nav (planning +
control), episode (per-episode engine), evaluation (runner + metrics),
report (rendering), service (teleoperation server), config (profiles,
scenarios, seeds), cli (entry points).
"""

__version__ = "0.1.0"
