"""
Environment variables and configuration settings for this application
These variables can be defined in .env.local or .env files

Parameter descriptions:
- GHOST_OPTICS_THREADS: worker threads for parallel sampling/bootstrap, 0 means os.cpu_count()
- GHOST_OPTICS_LOG_LEVEL: logging level name, default is info
- GHOST_OPTICS_OUT_DIR: default directory for run artifacts, default is ./results
- GHOST_OPTICS_GRID_N: default number of transverse samples, default is 4096
- GHOST_OPTICS_GRID_EXTENT_MM: default slit-plane grid extent in millimeters, default is 20
- GHOST_OPTICS_BOOTSTRAP: Poisson bootstrap resamples for fit error bars, default is 100
- GHOST_OPTICS_FIT_STARTS: multi-start branches per fit, default is 3
- GHOST_OPTICS_FIT_MAX_NFEV: function-evaluation cap per least-squares branch, default is 2000
"""

import os
from dotenv import load_dotenv
from pydantic.v1 import BaseSettings

# Load environment variables: .env.local first, then .env (which overrides .env.local)
load_dotenv(".env.local", override=False)
load_dotenv(".env", override=True)


class Settings(BaseSettings):
    """
    Settings for the application, loaded from environment variables or a .env file.
    """
    GHOST_OPTICS_THREADS: int = int(os.getenv("GHOST_OPTICS_THREADS", 0))
    GHOST_OPTICS_LOG_LEVEL: str = os.getenv("GHOST_OPTICS_LOG_LEVEL", "info")
    GHOST_OPTICS_OUT_DIR: str = os.getenv("GHOST_OPTICS_OUT_DIR", "./results")

    GHOST_OPTICS_GRID_N: int = int(os.getenv("GHOST_OPTICS_GRID_N", 4096))
    GHOST_OPTICS_GRID_EXTENT_MM: float = float(os.getenv("GHOST_OPTICS_GRID_EXTENT_MM", 20.0))

    GHOST_OPTICS_BOOTSTRAP: int = int(os.getenv("GHOST_OPTICS_BOOTSTRAP", 100))
    GHOST_OPTICS_FIT_STARTS: int = int(os.getenv("GHOST_OPTICS_FIT_STARTS", 3))
    GHOST_OPTICS_FIT_MAX_NFEV: int = int(os.getenv("GHOST_OPTICS_FIT_MAX_NFEV", 2000))

    def worker_count(self) -> int:
        """Resolved thread cap (0 = auto)."""
        if self.GHOST_OPTICS_THREADS > 0:
            return self.GHOST_OPTICS_THREADS
        return os.cpu_count() or 1


# Initialize settings
setting = Settings()
