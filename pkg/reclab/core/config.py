import os


class Config:
    # Output
    OUTPUT_DIR: str = os.getenv("RECLAB_OUTPUT_DIR", "runs")
    SCHEMA_VERSION: str = "1"
    TOOL_VERSION: str = "0.3.0"

    # Seeds (RECLAB_SEED is also re-read at CLI resolution time)
    SEED_ENV_VAR: str = "RECLAB_SEED"
    DEFAULT_SEED: int = int(os.getenv("RECLAB_SEED", "0"))

    LOG_LEVEL: str = os.getenv("RECLAB_LOG_LEVEL", "WARNING")

    # Numerical tolerances
    FLOAT_TOL: float = 1e-12
    STEIN_TOL: float = 1e-10

    # Budgets: exceeding any of these raises BudgetExceededError
    DP_BUDGET: int = int(os.getenv("RECLAB_DP_BUDGET", "2000000000"))  # windows * m * (K + 2)
    CLUSTER_BUDGET: int = int(os.getenv("RECLAB_CLUSTER_BUDGET", "2000000"))  # candidate words
    WORD_BUDGET: int = int(os.getenv("RECLAB_WORD_BUDGET", "100000"))  # materialized cylinder words
    MIXING_EXACT_CELLS: int = 12  # subset enumeration up to this many cells per side
    MIXING_CELL_BUDGET: int = int(os.getenv("RECLAB_MIXING_CELL_BUDGET", "4096"))
    ORBIT_BUDGET: int = int(os.getenv("RECLAB_ORBIT_BUDGET", "200000000"))  # sampled orbit points per experiment

    # Chen-Stein scan: full scan up to this many gaps, envelope early exit above
    CHEN_STEIN_FULL_SCAN: int = 1_000_000

    # Dyadic precision budget for the exact doubling backend
    MAX_DYADIC_DEPTH: int = 48
    MANTISSA_BITS: int = 53

    # Monte Carlo
    MC_SAMPLES: int = int(os.getenv("RECLAB_MC_SAMPLES", "1000000"))
    MC_CHUNK: int = int(os.getenv("RECLAB_MC_CHUNK", "262144"))  # samples per vectorized block
    RECURRENCE_CHUNK: int = 1 << 18  # orbit points scanned per block
    TRIAL_BLOCK: int = 256  # trials per seeded block, independent of worker count
    EXACT_DP_LIMIT: int = int(os.getenv("RECLAB_EXACT_DP_LIMIT", "500000"))  # rational DP in reports up to this work

    # Count cap K = max(MIN_COUNT_CAP, ceil(COUNT_CAP_FACTOR * t))
    MIN_COUNT_CAP: int = 32
    COUNT_CAP_FACTOR: float = 8.0


config = Config()
