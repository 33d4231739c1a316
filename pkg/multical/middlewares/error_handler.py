"""Error handler middleware: exceptions to exit codes."""
import logging
from typing import Any, Callable

from pydantic import ValidationError

from multical.exceptions import (
    EXIT_DOMAIN,
    EXIT_OK,
    CalibrationError,
    OptimizationError,
)

logger = logging.getLogger(__name__)


def run_guarded(handler: Callable[..., Any], *args: Any, **kwargs: Any) -> int:
    """Run a command handler and map failures to exit codes.

    Engine errors carry their own exit code; pydantic validation errors count
    as domain errors. Anything else is logged with its traceback and re-raised.
    """
    try:
        result = handler(*args, **kwargs)
    except OptimizationError as e:
        logger.error(f"❌ {e}")
        for record in e.diagnostics:
            logger.debug(f"Start diagnostics: {record}")
        return e.exit_code
    except CalibrationError as e:
        logger.error(f"❌ {type(e).__name__}: {e}")
        return e.exit_code
    except ValidationError as e:
        logger.error(f"❌ Invalid input: {e}")
        return EXIT_DOMAIN
    except Exception as e:
        logger.error(f"Unhandled error in handler: {e}", exc_info=True)
        raise
    return EXIT_OK if result is None else int(result)
