"""Application configuration management."""
import os
from pathlib import Path

from dotenv import load_dotenv

# Load environment variables
load_dotenv()


def _default_threads() -> int:
    return min(os.cpu_count() or 1, 8)


class Config:
    """Engine configuration."""

    # Logging
    LOG_LEVEL: str = os.getenv("LOG_LEVEL", "INFO")

    # Storage Configuration
    STORAGE_MODE: str = os.getenv("STORAGE_MODE", "file")  # file or memory
    RESULTS_DIR: str = os.getenv("RESULTS_DIR", "./results")

    # Reproducibility
    DEFAULT_SEED: int = int(os.getenv("DEFAULT_SEED", "20240101"))
    CONFIG_SCHEMA_VERSION: int = int(os.getenv("CONFIG_SCHEMA_VERSION", "1"))

    # Parallelism
    THREADS: int = int(os.getenv("THREADS", str(_default_threads())))

    # Scaled discrepancy: lambda_z = SGASP_C * sqrt(n)
    SGASP_C: float = float(os.getenv("SGASP_C", "100.0"))

    # Optimizer
    MLE_STARTS: int = int(os.getenv("MLE_STARTS", "10"))

    # Sampler
    MCMC_SAMPLES: int = int(os.getenv("MCMC_SAMPLES", "5000"))
    MCMC_BURN_IN: int = int(os.getenv("MCMC_BURN_IN", "1000"))
    MCMC_THIN: int = int(os.getenv("MCMC_THIN", "10"))
    ADAPT_TARGET: float = float(os.getenv("ADAPT_TARGET", "0.3"))

    # Tests
    RUN_SLOW_TESTS: bool = os.getenv("RUN_SLOW_TESTS", "false").lower() == "true"

    @classmethod
    def validate(cls) -> None:
        """Validate configuration values."""
        if cls.STORAGE_MODE not in ("file", "memory"):
            raise ValueError(f"STORAGE_MODE must be 'file' or 'memory', got {cls.STORAGE_MODE!r}")
        if cls.THREADS < 1:
            raise ValueError("THREADS must be at least 1")
        if cls.MLE_STARTS < 1:
            raise ValueError("MLE_STARTS must be at least 1")
        if cls.MCMC_BURN_IN >= cls.MCMC_SAMPLES:
            raise ValueError("MCMC_BURN_IN must be smaller than MCMC_SAMPLES")
        if cls.MCMC_THIN < 1:
            raise ValueError("MCMC_THIN must be at least 1")
        if not 0.0 < cls.ADAPT_TARGET < 1.0:
            raise ValueError("ADAPT_TARGET must lie in (0, 1)")
        if cls.SGASP_C <= 0:
            raise ValueError("SGASP_C must be positive")

        # Ensure results directory exists for file storage
        if cls.STORAGE_MODE == "file":
            Path(cls.RESULTS_DIR).mkdir(parents=True, exist_ok=True)


config = Config()
