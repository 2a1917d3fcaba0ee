"""
Environment configuration for polytomo
"""
from pydantic_settings import BaseSettings, SettingsConfigDict


class Settings(BaseSettings):
    # Application
    app_name: str = "polytomo"
    app_version: str = "1.0.0"
    debug: bool = False

    # Parallelism (POLYTOMO_THREADS)
    threads: int = 1

    # Linear programming
    lp_backend: str = "simplex"  # Options: 'simplex', 'highs'
    lp_tolerance: float = 1e-9
    lp_max_iterations: int = 50000

    # Experiments
    default_trials: int = 1000
    max_qst_qubits: int = 3
    max_qpt_qubits: int = 2
    show_progress: bool = False

    # Observability
    enable_logging: bool = True
    log_level: str = "INFO"

    model_config = SettingsConfigDict(
        env_prefix="POLYTOMO_",
        env_file=".env",
        case_sensitive=False,
        extra="ignore",
    )


settings = Settings()
