"""buscover: pick the minimum set of bus trips to sensor-equip so that every
monitored street is scanned at least once per refresh period, and solve the
resulting uni-cost set-covering problem fast.

Modules
-------
city        streets, routes, trips; synthetic grid cities and scenario files
trajectory  time grid, traversal kinematics, coverage sets
scp         covering instances, greedy and brute-force reference solvers
kernels     compiled/NumPy covering primitives (backend selected at import)
bnb         exact branch and bound with injectable cardinality cuts
rowgen      row-generation pre-training of a reference solution
cardinality spectral variable clustering and the derived cut pair
evaluate    undetected-street comparisons and time-to-objective speedups
cli         file-based batch pipeline (gen / build / solve / evaluate)
"""

__version__ = "0.1.0"
