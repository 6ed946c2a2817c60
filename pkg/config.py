import os
from pathlib import Path
from dotenv import load_dotenv

# Load environment variables from .env file
load_dotenv()

class Config:
    """Application configuration class"""

    # Environment Configuration
    ENVIRONMENT = os.getenv('ENVIRONMENT', 'development')  # development, production
    DEBUG = os.getenv('DEBUG', 'true' if ENVIRONMENT == 'development' else 'false').lower() == 'true'

    # Logging Configuration
    LOG_LEVEL = os.getenv('LOG_LEVEL', 'INFO')
    LOG_FORMAT = os.getenv('LOG_FORMAT', 'console')  # console, json

    # Model file format
    FORMAT_VERSION = 1
    FIXTURES_DIR = Path(os.getenv('FIXTURES_DIR', str(Path(__file__).parent / 'fixtures')))

    # Http hook transport
    HOOK_HTTP_TIMEOUT = float(os.getenv('HOOK_HTTP_TIMEOUT', '5'))
    HOOK_HTTP_RETRIES = int(os.getenv('HOOK_HTTP_RETRIES', '3'))  # connection errors only
    HOOK_HTTP_RETRY_WAIT_MS = int(os.getenv('HOOK_HTTP_RETRY_WAIT_MS', '200'))

    # Exec hook transport
    HOOK_EXEC_TIMEOUT = float(os.getenv('HOOK_EXEC_TIMEOUT', '10'))

    # Bundled reference Http hook server
    HOOK_SERVER_HOST = os.getenv('HOOK_SERVER_HOST', '127.0.0.1')
    HOOK_SERVER_PORT = int(os.getenv('HOOK_SERVER_PORT', '5080'))

    @classmethod
    def fixture_path(cls, name: str) -> Path:
        """Path of a bundled fixture file"""
        return cls.FIXTURES_DIR / name

    @classmethod
    def get_hook_retry_config(cls):
        """Get retrying keyword arguments for Http hook requests"""
        return {
            'stop_max_attempt_number': max(1, cls.HOOK_HTTP_RETRIES),
            'wait_fixed': cls.HOOK_HTTP_RETRY_WAIT_MS
        }
