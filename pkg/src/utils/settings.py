"""
Runtime settings
Reads process-wide options from the environment (and a .env file)
"""

import os
from dataclasses import dataclass
from dotenv import load_dotenv

# Load environment variables
load_dotenv()


@dataclass(frozen=True)
class Settings:
    """Process-wide options that are not part of an experiment's configuration"""

    log_level: str = "INFO"
    log_dir: str = "logs"
    threads: int = 1
    debug_checks: bool = False

    @classmethod
    def from_env(cls) -> "Settings":
        threads = os.getenv('NNDEP_THREADS')
        return cls(
            log_level=os.getenv('NNDEP_LOG_LEVEL', 'INFO'),
            log_dir=os.getenv('NNDEP_LOG_DIR', 'logs'),
            threads=int(threads) if threads else (os.cpu_count() or 1),
            debug_checks=os.getenv('NNDEP_DEBUG_CHECKS', 'False').lower() == 'true',
        )


# Singleton instance
_settings_instance = None


def get_settings() -> Settings:
    """
    Get the settings instance (singleton)

    Returns:
        Settings read from the environment on first use
    """
    global _settings_instance

    if _settings_instance is None:
        _settings_instance = Settings.from_env()

    return _settings_instance
