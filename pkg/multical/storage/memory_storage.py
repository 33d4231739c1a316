"""In-memory result storage (ephemeral, for tests and dry runs)."""
import logging
from typing import Dict, List

from multical.exceptions import DomainError
from multical.storage import ResultStore

logger = logging.getLogger(__name__)


class MemoryStorage(ResultStore):
    """Artifacts kept in a dict; lost when the process exits."""

    def __init__(self):
        self._items: Dict[str, str] = {}
        logger.warning("Using memory storage - results will be lost on exit!")

    def exists(self, name: str) -> bool:
        return name in self._items

    def _put(self, name: str, text: str) -> None:
        self._items[name] = text
        logger.debug(f"Stored {name} ({len(text)} chars)")

    def read_text(self, name: str) -> str:
        try:
            return self._items[name]
        except KeyError:
            raise DomainError(f"no stored artifact named {name!r}")

    def list_names(self) -> List[str]:
        return sorted(self._items)
