"""
Configuration management for tvflow using Pydantic.
Loads settings from environment variables (prefix TVFLOW_) and provides type-safe access.
"""

from pathlib import Path
from typing import Literal, Optional
from pydantic import Field, field_validator
from pydantic_settings import BaseSettings, SettingsConfigDict


class Settings(BaseSettings):
    """Main settings class for tvflow."""

    model_config = SettingsConfigDict(
        env_prefix="TVFLOW_",
        env_file=".env",
        env_file_encoding="utf-8",
        case_sensitive=False,
        extra="ignore"
    )

    # ==================== Application Settings ====================
    app_name: str = Field(
        default="tvflow",
        description="Application name"
    )

    log_level: Literal["DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL"] = Field(
        default="INFO",
        description="Logging level"
    )

    log_dir: str = Field(
        default="data/logs",
        description="Directory for rotating log files"
    )

    output_dir: str = Field(
        default="data/runs",
        description="Default directory for experiment artifacts"
    )

    no_color: bool = Field(
        default=False,
        description="Disable ANSI colours on the console (TVFLOW_NO_COLOR)"
    )

    # ==================== Reproducibility / Parallelism ====================
    seed: int = Field(
        default=0,
        ge=0,
        lt=2**64,
        description="Seed for noise initial data and randomized subset search"
    )

    threads: int = Field(
        default=1,
        gt=0,
        le=64,
        description="Worker threads for batch runs and subset enumeration (never affects results)"
    )

    # ==================== Resolvent Solver ====================
    solver_tol: float = Field(
        default=1e-10,
        gt=0.0,
        description="Relative duality-gap tolerance of the resolvent solver"
    )

    solver_max_iters: int = Field(
        default=200000,
        gt=0,
        description="Maximum accelerated projected gradient iterations per resolvent"
    )

    power_iterations: int = Field(
        default=50,
        gt=0,
        description="Power-method iterations for the divergence operator norm"
    )

    lipschitz_safety: float = Field(
        default=1.01,
        ge=1.0,
        description="Safety factor applied to the power-method Lipschitz estimate"
    )

    # ==================== Certificates ====================
    certificate_tol: float = Field(
        default=1e-6,
        gt=0.0,
        description="Residual tolerance for verify_certificate"
    )

    sign_zero_tol: float = Field(
        default=1e-9,
        ge=0.0,
        description="|T u - f| below this is treated as 0 when evaluating the set-valued sign"
    )

    entropy_grid_size: int = Field(
        default=5,
        gt=0,
        description="Number of truncation levels k in the entropy-mode grid"
    )

    # ==================== Flow Checks ====================
    extinction_tol: float = Field(
        default=1e-6,
        gt=0.0,
        description="L2 distance to the steady state below which the flow counts as extinct"
    )

    comparison_slack_factor: float = Field(
        default=10.0,
        gt=0.0,
        description="Comparison and contraction slack, in multiples of the check tolerance"
    )

    regularity_min_steps: int = Field(
        default=5,
        ge=1,
        description="Regularity estimates are enforced from step index t_n >= n*tau onwards"
    )

    variational_slack_factor: float = Field(
        default=5.0,
        gt=0.0,
        description="Quadrature slack of the variational-solution check, in multiples of tau"
    )

    # ==================== Asymptotics ====================
    profile_min_denominator: float = Field(
        default=0.05,
        gt=0.0,
        lt=1.0,
        description="Smallest 1 - t/T_ex used when rescaling to the asymptotic profile"
    )

    lambda1_budget: int = Field(
        default=65536,
        gt=0,
        description="Subset evaluations allowed when estimating lambda_1"
    )

    fixtures_path: str = Field(
        default="config/fixtures.yaml",
        description="YAML file with the analytic fixtures used by selftest"
    )

    # ==================== Validators ====================
    @field_validator("log_dir")
    @classmethod
    def validate_log_dir(cls, v: str) -> str:
        """Ensure the log directory exists or can be created."""
        path = Path(v)
        path.mkdir(parents=True, exist_ok=True)
        return str(path)

    # ==================== Helper Methods ====================
    def get_output_path(self) -> Path:
        """Get the default artifact directory."""
        return Path(self.output_dir)

    def get_fixtures_path(self) -> Path:
        """Get the fixture catalogue path, resolved against the project root if relative."""
        path = Path(self.fixtures_path)
        if not path.is_absolute() and not path.exists():
            path = Path(__file__).resolve().parent.parent / path
        return path


# Global settings instance
settings = Settings()


# Convenience function to reload settings
def reload_settings() -> Settings:
    """Reload settings from environment variables."""
    global settings
    settings = Settings()
    return settings


# Convenience function to get settings
def get_settings() -> Settings:
    """Get the current settings instance."""
    return settings


def positive_setting(value, field: str, name: Optional[str] = None):
    """``value`` if given, else the configured ``field``; explicit values must be positive.

    Raises:
        ValueError: If an explicit value is zero or negative.
    """
    if value is None:
        return getattr(settings, field)
    if not value > 0:
        raise ValueError(f"{name or field} must be positive, got {value!r}")
    return value
