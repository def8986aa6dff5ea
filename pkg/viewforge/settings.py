import os
from pathlib import Path
from dotenv import load_dotenv

load_dotenv()

BASE_DIR = Path(__file__).resolve().parent.parent

SECRET_KEY = os.getenv('SECRET_KEY', 'viewforge-local-only')
DEBUG = os.getenv('DEBUG', 'False') == 'True'
ALLOWED_HOSTS = []

INSTALLED_APPS = [
    'django.contrib.contenttypes',

    # Third party
    'rest_framework',

    # Local apps
    'core.geometry',
    'core.labelgen',
    'core.confidence',
    'core.planner',
    'core.harness',
]

DATABASES = {
    'default': {
        'ENGINE': os.getenv('DB_ENGINE', 'django.db.backends.sqlite3'),
        'NAME': os.getenv('DB_NAME', str(BASE_DIR / 'viewforge.sqlite3')),
        'USER': os.getenv('DB_USER', ''),
        'PASSWORD': os.getenv('DB_PASSWORD', ''),
        'HOST': os.getenv('DB_HOST', ''),
        'PORT': os.getenv('DB_PORT', ''),
    }
}

LANGUAGE_CODE = 'en-us'
TIME_ZONE = 'UTC'
USE_I18N = False
USE_TZ = True

DEFAULT_AUTO_FIELD = 'django.db.models.BigAutoField'


# Celery Configuration
# Without a broker URL every task runs inline in the calling process.
CELERY_BROKER_URL = os.environ.get('REDIS_URL', 'memory://')
CELERY_RESULT_BACKEND = os.environ.get('CELERY_RESULT_BACKEND', 'cache+memory://')
CELERY_TASK_ALWAYS_EAGER = os.getenv('CELERY_TASK_ALWAYS_EAGER', 'True') == 'True'
CELERY_TASK_EAGER_PROPAGATES = True

CELERY_ACCEPT_CONTENT = ['application/json']
CELERY_TASK_SERIALIZER = 'json'
CELERY_RESULT_SERIALIZER = 'json'
CELERY_TIMEZONE = 'UTC'

CELERY_TASK_TRACK_STARTED = True
CELERY_TASK_TIME_LIMIT = 60 * 60  # a full simulation run at full sampling counts
CELERY_TASK_SOFT_TIME_LIMIT = 55 * 60
CELERY_TASK_ACKS_LATE = True
CELERY_WORKER_PREFETCH_MULTIPLIER = 1


# Geometry kernel
VIEWFORGE_GEOMETRY = {
    'PIXEL_NOISE_STD': float(os.getenv('VIEWFORGE_PIXEL_NOISE_STD', 1.0)),
    'DEPTH_AGREEMENT': 0.01,  # relative depth tolerance for visibility
    'OVERLAP_GRID': 32,
    'CAMERA_MODEL': {
        'focal': float(os.getenv('VIEWFORGE_FOCAL', 120.0)),
        'width': int(os.getenv('VIEWFORGE_WIDTH', 160)),
        'height': int(os.getenv('VIEWFORGE_HEIGHT', 120)),
    },
}

# Self-supervised label generation
VIEWFORGE_LABELGEN = {
    'BINS': 5,
    'ALPHA0': 4.0,
    'PER_BIN': int(os.getenv('VIEWFORGE_TRIPLETS_PER_BIN', 6)),
    'MIN_OVERLAP': 0.3,
    'ALPHA_MIN': 10.0,
    'S_MIN': 1.5,
    'POSITIVE_SIGMA': 1.0,
    'BLOCKING_SIGMA': 3.0,
    'REPROJECTION_TOLERANCE': 1.5,
    'AUGMENT_WINDOW': 9,
    'AUGMENT_MIN_VALID': 0.25,
    'AUGMENT_SPREAD_SIGMA': 3.0,
    'REQUIRE_DISJOINT': True,
    'ACCURACY_SIGMA': 3.0,
    'SEED': int(os.getenv('VIEWFORGE_SEED', 0)),
}

# Confidence forest
VIEWFORGE_CONFIDENCE = {
    'TREES': int(os.getenv('VIEWFORGE_TREES', 20)),
    'MAX_DEPTH': 20,
    'MIN_LEAF': 50,
    # desk-scale node search; the full regime is 5000 tests x 100 thresholds
    'NODE_TESTS': int(os.getenv('VIEWFORGE_NODE_TESTS', 400)),
    'THRESHOLDS': int(os.getenv('VIEWFORGE_THRESHOLDS', 24)),
    'NODE_SAMPLES': 1000,
    'PATCH_SIZE': 27,
    'PER_CLASS_CAP': int(os.getenv('VIEWFORGE_PER_CLASS_CAP', 5000)),
    'BINS': 9,
    'GAMMA_MAX': 45.0,
    'GRID_STEP': 8,
}

# View planner
VIEWFORGE_PLANNER = {
    'C': 3,
    'R_D': 10000.0,  # px/m^2, i.e. 1 cm ground sampling
    'A_D': 0.01,
    'ALPHA': 0.5,
    'N_T': int(os.getenv('VIEWFORGE_N_T', 2000)),
    'N_P': int(os.getenv('VIEWFORGE_N_P', 5000)),
    'N_V': int(os.getenv('VIEWFORGE_N_V', 200)),
    'PHI': 120.0,
    'BINS': 9,
    'GAMMA_MAX': 45.0,
    'K': 4,
    'O_MIN': 0.5,
    'SAFETY_DISTANCE': float(os.getenv('VIEWFORGE_SAFETY_DISTANCE', 0.3)),
    'VOXEL_RESOLUTION': 0.05,
    'VIRTUAL_RESOLUTION': 48,
    'AIM_DISTANCE': None,
    'MAX_INSERTIONS': 8,
    'MAX_TRIPLET_CAMERAS': 12,  # nearest observers enumerated per triangle; None = all
    'RENDER_DOWNSCALE': 2,
    'SURROGATE_MARGIN': 1.5,
    'SURROGATE_RETRIES': 20,
    'MIN_OPENING_ANGLE': None,  # degrees; None = half the smaller field of view
    'SEED': int(os.getenv('VIEWFORGE_SEED', 0)),
}

# Simulation harness
VIEWFORGE_HARNESS = {
    'GAMMA_CUT': {'smooth': 60.0, 'rough': 15.0},
    'NOISE_MULTIPLIER': 1.0,
    'OUTLIER_RATE': 0.0,
    'SOFTNESS_DEG': None,
    'ACCEPTANCE_TOLERANCE': 0.03,
    'EVAL_MAX_EDGE': 0.08,
    'GRID_OVERLAP': 0.8,
    'GRID_HEIGHT': 1.6,
    'INIT_HEIGHT': 2.2,
    'INIT_RADIUS': 1.8,
    'INIT_VIEWS': 6,
    'TRAINING_VIEWS': 12,
    # lighter sampling for the closed loop
    'PLANNER': {'N_T': 600, 'N_P': 1500, 'N_V': 80},
    'HISTOGRAM_BINS': 40,
    'OUTPUT_DIR': os.getenv('VIEWFORGE_OUTPUT_DIR', str(BASE_DIR / 'runs')),
}


LOGGING = {
    'version': 1,
    'disable_existing_loggers': False,
    'formatters': {
        'verbose': {
            'format': '{levelname} {asctime} {module} {process:d} {thread:d} {message}',
            'style': '{',
        },
    },
    'handlers': {
        'console': {
            'class': 'logging.StreamHandler',
            'formatter': 'verbose',
        },
    },
    'root': {
        'handlers': ['console'],
        'level': os.getenv('LOG_LEVEL', 'WARNING'),
    },
    'loggers': {
        'celery': {
            'handlers': ['console'],
            'level': 'INFO',
            'propagate': False,
        },
        'core': {
            'handlers': ['console'],
            'level': os.getenv('LOG_LEVEL', 'INFO'),
            'propagate': False,
        },
    },
}
