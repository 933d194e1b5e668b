"""Configuration management using environment variables."""

from pathlib import Path

from pydantic import field_validator
from pydantic_settings import BaseSettings

# Hard ceiling for BRIDGE_MAX_SPINS; 2**28 configurations is the most we enumerate.
ENUMERATION_CEILING = 28


class Settings(BaseSettings):
    """Application settings loaded from environment variables.

    All settings are prefixed with BRIDGE_ in environment variables.
    Example: BRIDGE_MAX_SPINS
    """

    # Size caps
    max_sites: int = 10  # dense quantum matrices stay <= 1024 x 1024
    max_spins: int = 24  # exhaustive enumeration
    max_transfer_columns: int = 12  # row transfer matrix is 2^M x 2^M

    # Numerics
    degeneracy_tol: float = 1e-10
    enum_chunk_bits: int = 16

    # Monte Carlo chains are fanned out to a process pool when > 1
    workers: int = 1

    # Paths
    data_dir: Path | None = None  # Default: $CWD/data

    log_level: str = "WARNING"

    model_config = {
        "env_prefix": "BRIDGE_",
        "env_file": ".env",
        "env_file_encoding": "utf-8",
    }

    @field_validator("max_spins")
    @classmethod
    def clamp_max_spins(cls, value: int) -> int:
        """Clamp the enumeration cap to the hard ceiling."""
        return max(1, min(value, ENUMERATION_CEILING))

    @field_validator("workers")
    @classmethod
    def at_least_one_worker(cls, value: int) -> int:
        return max(1, value)

    @property
    def resolved_data_dir(self) -> Path:
        """Get the data directory, defaulting to $CWD/data if not set."""
        if self.data_dir:
            return self.data_dir
        return Path.cwd() / "data"


# Global settings instance
settings = Settings()
