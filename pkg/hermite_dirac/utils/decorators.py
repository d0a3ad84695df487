import logging
import time
from functools import wraps

logger = logging.getLogger(__name__)


def timed(label):
    """Log the wall time of the wrapped call at INFO level."""
    def decorator(f):
        @wraps(f)
        def decorated_function(*args, **kwargs):
            start = time.perf_counter()
            try:
                return f(*args, **kwargs)
            finally:
                logger.info(f"{label} finished in {time.perf_counter() - start:.2f} s")
        return decorated_function
    return decorator
