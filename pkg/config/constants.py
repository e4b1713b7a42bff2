"""Numerical constants shared across the toolkit."""

# Admissible subcubes: indices divisible by this modulus, level from 8*sqrt(d).
SPACING_MODULUS = 8
LEVEL_FACTOR = 8.0

# Dyadic corners stay exact in binary floating point up to this level.
MAX_DYADIC_LEVEL = 50

# Morton keys are packed into 64-bit integers.
MORTON_MAX_BITS = 60

ROTATION_TOLERANCE = 1e-12
STOCHASTIC_TOLERANCE = 1e-12
STATIONARY_TOLERANCE = 1e-13
CONSERVATION_TOLERANCE = 1e-12

DEFAULT_CELL_BUDGET = 2**27
DEFAULT_MAX_SUBCUBES = 2**20
DEFAULT_SAMPLE_DEPTH = 40

CONFIG_SCHEMA_VERSION = 1

EXIT_OK = 0
EXIT_INVALID = 2
EXIT_CERTIFICATE_FAILED = 3
EXIT_BUDGET = 4

BISECTION_ITERATIONS = 30
