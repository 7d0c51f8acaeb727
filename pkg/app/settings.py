"""
Django settings for the decoupling field project.

For more information on this file, see
https://docs.djangoproject.com/en/3.2/topics/settings/

For the full list of settings and their values, see
https://docs.djangoproject.com/en/3.2/ref/settings/
"""

import os


# Build paths inside the project like this: os.path.join(BASE_DIR, ...)
BASE_DIR = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))

DEBUG = False

ALLOWED_HOSTS = []

# Application definition

INSTALLED_APPS = (
    'django.contrib.contenttypes',
    'ordered_model',
    'storages',
    'app',
    'dfield',
)

# Database
# https://docs.djangoproject.com/en/3.2/ref/settings/#databases

# Note: Override with a real database (e.g. postgres) in local_settings.py
# Only `dfield_solve --record` touches the database.
DATABASES = {
    'default': {
        'ENGINE': 'django.db.backends.sqlite3',
        'NAME': os.path.join(BASE_DIR, 'dfield.sqlite'),
    }
}

DEFAULT_AUTO_FIELD = 'django.db.models.AutoField'

# Internationalization
# https://docs.djangoproject.com/en/3.2/topics/i18n/

LANGUAGE_CODE = 'en-us'
TIME_ZONE = 'UTC'
USE_I18N = False
USE_L10N = False
USE_TZ = True

# Media files

USE_REMOTE_STORAGE = os.environ.get('USE_REMOTE_STORAGE', False)

if USE_REMOTE_STORAGE:
    AWS_ACCESS_KEY_ID = os.getenv('AWS_ACCESS_KEY_ID', 'SET-ME')
    AWS_SECRET_ACCESS_KEY = os.getenv('AWS_SECRET_ACCESS_KEY', 'SET-ME')
    AWS_STORAGE_BUCKET_NAME = os.getenv('AWS_STORAGE_BUCKET_NAME', 'SET-ME')
    AWS_DEFAULT_ACL = None
    AWS_S3_ENCRYPTION = True
    AWS_S3_FILE_OVERWRITE = False
    AWS_S3_REGION_NAME = os.getenv('AWS_S3_REGION_NAME', 'us-east-2')
else:
    MEDIA_ROOT = os.path.join(BASE_DIR, 'media')

# Logging

LOGGING = {
    'version': 1,
    'disable_existing_loggers': False,
    'formatters': {
        'timestamp_formatter': {
            'format': '[%(asctime)s] [%(levelname)s] [%(name)s] %(message)s',
        },
    },
    'handlers': {
        'stream_info_log': {
            'level': 'INFO',
            'class': 'logging.StreamHandler',
            'formatter': 'timestamp_formatter',
        },
        'stream_warning_log': {
            'level': 'WARNING',
            'class': 'logging.StreamHandler',
            'formatter': 'timestamp_formatter',
        },
        'file_debug_log_default': {
            'level': 'DEBUG',
            'class': 'logging.FileHandler',
            'formatter': 'timestamp_formatter',
            'filename': os.path.join(BASE_DIR, 'default.log'),
            'delay': True,
        },
        'file_debug_log_test': {
            'level': 'DEBUG',
            'class': 'logging.FileHandler',
            'formatter': 'timestamp_formatter',
            'filename': os.path.join(BASE_DIR, 'test.log'),
            'delay': True,
        },
    },
    'loggers': {
        'dfield': {
            'handlers': ['stream_warning_log', 'file_debug_log_default'],
            'level': 'DEBUG',
            'propagate': False,
        },
        'dfield.buildlog': {
            'handlers': [],
            'level': 'INFO',
            'propagate': False,
        },
        'dfield.management': {
            'handlers': ['stream_info_log'],
            'level': 'INFO',
            'propagate': True,
        },
        'dfield.tests': {
            'handlers': ['file_debug_log_test'],
            'level': 'DEBUG',
            'propagate': True,
        },
    },
}

# Sensitive settings
# These are sensitive settings, and should be overridden in local_settings.py
SECRET_KEY = os.environ.get('SECRET_KEY', 'SET-ME')

# Decoupling field settings

# Worker threads for grid nodes and paths; results do not depend on this value
DFLD_THREADS = int(os.environ.get('DFLD_THREADS', 0)) or os.cpu_count() or 1
# Fixed number of grid nodes or paths per work unit
DFLD_CHUNK_SIZE = int(os.environ.get('DFLD_CHUNK_SIZE', 2048))
DFLD_GRID_NODE_CAP = 10 ** 6
DFLD_MAX_SPATIAL_DIM = 3
DFLD_QUADRATURE_NODE_CAP = 10 ** 5

DFLD_DEFAULT_MARGIN = 0.1
DFLD_DEFAULT_QUAD_ORDER = 5
DFLD_DEFAULT_PICARD_TOL = 1e-12
DFLD_DEFAULT_PICARD_MAX_ITER = 200
DFLD_DEFAULT_LIP_CAP = 1e6
DFLD_DEFAULT_VALUE_CAP = 1e6
DFLD_CUTOFF_GROWTH = 2.0
DFLD_CUTOFF_MAX_ESCALATIONS = 20

# Verification tolerances
DFLD_AGREEMENT_RTOL = 5e-3
DFLD_Z_BOUND_SLACK = 0.05
DFLD_VARIATIONAL_SLACK = 0.05
DFLD_RESIDUAL_TOL = 2e-2

# pylint: disable=wildcard-import
try:
    from .local_settings import *  # NOQA
except ImportError:
    pass
