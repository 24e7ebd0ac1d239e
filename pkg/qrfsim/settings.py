"""
Django settings for the QRF gravity simulator project.
"""

from pathlib import Path
import os
from dotenv import load_dotenv

# Build paths inside the project like this: BASE_DIR / 'subdir'.
BASE_DIR = Path(__file__).resolve().parent.parent
load_dotenv(BASE_DIR / ".env")


def _env_bool(name, default):
    value = os.environ.get(name)
    if value is None:
        return default
    return value.strip().lower() in ('1', 'true', 'yes', 'on')


# The simulator runs as a command-line tool; the key only satisfies Django.
SECRET_KEY = os.environ.get("SECRET_KEY", "qrfsim-local-only")

DEBUG = _env_bool("DEBUG", False)

ALLOWED_HOSTS = []


# Application definition

INSTALLED_APPS = [
    # Local apps
    'simulator',
]

# No database: every simulator type is an immutable in-memory value.
DATABASES = {}


# Internationalization
# https://docs.djangoproject.com/en/5.0/topics/i18n/

LANGUAGE_CODE = 'en-us'

TIME_ZONE = 'UTC'

USE_I18N = True

USE_TZ = True


# =============================================================================
# SIMULATION SETTINGS
# =============================================================================

# Worker cap for branch-parallel evolution
QRF_SIM_THREADS = int(os.environ.get("QRF_SIM_THREADS", os.cpu_count() or 1))

# Branches closer than this (meters, componentwise) are the same position eigenstate
QRF_POSITION_TOLERANCE = float(os.environ.get("QRF_POSITION_TOLERANCE", "1e-9"))

# Max relative deviation of an inter-mass distance across branches
QRF_RIGIDITY_TOLERANCE = float(os.environ.get("QRF_RIGIDITY_TOLERANCE", "1e-9"))

# Singularity guard radius as a fraction of the initial probe-mass distance
QRF_R_MIN_FACTOR = float(os.environ.get("QRF_R_MIN_FACTOR", "1e-3"))

# Allowed relative energy drift per RK4 step
QRF_ENERGY_TOLERANCE = float(os.environ.get("QRF_ENERGY_TOLERANCE", "1e-6"))

# Spectral weight allowed beyond a quarter of the Nyquist wavenumber
QRF_SPECTRAL_TOLERANCE = float(os.environ.get("QRF_SPECTRAL_TOLERANCE", "1e-10"))

# Keep the branch-common rest phase m c^2 t / hbar in reported phases
QRF_RETAIN_REST_PHASE = _env_bool("QRF_RETAIN_REST_PHASE", True)


# =============================================================================
# VALIDITY SETTINGS (far-frame conditions)
# =============================================================================

# |dr_R| must stay below |dr_S| / ratio
QRF_TRACKING_RATIO = float(os.environ.get("QRF_TRACKING_RATIO", "100"))

# Clock overlap must stay above 1 - epsilon
QRF_OVERLAP_EPSILON = float(os.environ.get("QRF_OVERLAP_EPSILON", "1e-6"))

# Displacement formula for R: rest | closed_form | closed_form_printed
QRF_FAR_FRAME_FORMULA = os.environ.get("QRF_FAR_FRAME_FORMULA", "rest")

# Abort the pipeline (exit code 2) when a validity condition fails
QRF_STRICT = _env_bool("QRF_STRICT", False)

# Log validity verdicts through the signal receiver
QRF_VALIDITY_LOGGING = _env_bool("QRF_VALIDITY_LOGGING", True)


# =============================================================================
# LOGGING CONFIGURATION
# =============================================================================

LOGGING = {
    'version': 1,
    'disable_existing_loggers': False,
    'formatters': {
        'verbose': {
            'format': '{levelname} {asctime} {module} {message}',
            'style': '{',
        },
    },
    'handlers': {
        'console': {
            'class': 'logging.StreamHandler',
            'formatter': 'verbose',
        },
    },
    'loggers': {
        'simulator': {
            'handlers': ['console'],
            'level': os.environ.get("QRF_LOG_LEVEL", "INFO"),
            'propagate': True,
        },
    },
}
