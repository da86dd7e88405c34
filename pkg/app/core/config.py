from pydantic_settings import BaseSettings, SettingsConfigDict


class Settings(BaseSettings):
    CONSTANTS_SUM_RADIUS: int = 40
    CONSTANTS_SUP_RADIUS: int = 20
    CONSTANTS_TAIL_MARGIN: float = 1.1
    CONSTANTS_CACHE_DIR: str = "media/constants"

    RICCATI_RTOL: float = 1e-10
    RICCATI_ATOL: float = 1e-14
    BLOWUP_CAP: float = 1e12
    STEP_COLLAPSE_RATIO: float = 1e-14

    QUADRATURE_RTOL: float = 1e-10
    QUADRATURE_LIMIT: int = 200

    GALERKIN_RTOL: float = 1e-10
    GALERKIN_ATOL: float = 1e-14
    REFERENCE_RTOL: float = 1e-11
    REFERENCE_ATOL: float = 1e-15
    VALIDATION_SLACK: float = 1e-6

    FIELD_TOLERANCE: float = 1e-12
    DEFAULT_T_MAX: float = 10.0
    DEFAULT_SAMPLES: int = 101
    THREADS: int = 1

    CERTIFICATES_DIR: str = "media/certificates"
    LOGS_DIR: str = "logs"
    BASE_URL: str = "http://localhost:8000"

    model_config = SettingsConfigDict(
        env_file=".env",
        env_file_encoding='utf-8',
        extra='ignore'
    )

settings = Settings()
