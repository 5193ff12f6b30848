# Default run settings
#
# Every uppercase name below can be set in a run configuration file (JSON or
# TOML, keys in any case) or on the command line with `--set KEY=VALUE`.
# Use `python -m stochflow options` for the full manual.

__version__ = '0.4.0'

MANIFOLD = 'torus2'

NU = 0.1
T = 0.1

# Spectral truncation: K for the torus, L for the sphere.
# None picks the acceptance grid (K = 7, i.e. 16x16 nodes; L = 3)
RESOLUTION = None

PATHS = 20000
DT = 1e-3
SEED = 7
SCHEME = 'exact-geodesic-heun'

# Threads for grid-point ensembles (1 = inline)
WORKERS = 1

PICARD_MAX_ITERS = 8
PICARD_TOL = 1e-3
SOBOLEV_P = 4.0
LAPLACIAN = 'bochner'
TIME_NODES = 3

# Coefficient of the linear-in-Y driver exercised by `heat`
DRIVER_C = 1.0

GEOMETRY_SAMPLES = 1000
FD_EPSILON = 1e-3
PROBE_HORIZONS = [0.05, 0.2, 0.8]
SPECTRAL_DT = 1e-3

# Compare against the spectral reference solver (torus only)
REFERENCE = True

# None: on for ns-validate, off elsewhere
DETERMINISTIC_ARTIFACTS = None

# Defaults to $STOCHFLOW_OUTPUT, then ./runs/<subcommand>-<timestamp>
OUTPUT = None

LOG_LEVEL = 20
LOG_FILE = None
