"""Result storage abstraction for run outputs."""
from abc import ABC, abstractmethod
from pathlib import PurePosixPath
from typing import TYPE_CHECKING, List, Optional

if TYPE_CHECKING:
    from multical.storage.file_storage import FileStorage
    from multical.storage.memory_storage import MemoryStorage

from multical.config import config


def versioned_name(name: str, attempt: int) -> str:
    """``name`` for the first write, then ``stem.1.ext``, ``stem.2.ext``, ..."""
    if attempt == 0:
        return name
    path = PurePosixPath(name)
    return str(path.with_name(f"{path.stem}.{attempt}{path.suffix}"))


class ResultStore(ABC):
    """Append-only store of text artifacts keyed by relative name."""

    @abstractmethod
    def exists(self, name: str) -> bool:
        """Check whether an artifact is stored under ``name``."""
        pass

    @abstractmethod
    def _put(self, name: str, text: str) -> None:
        """Store ``text`` under a name known to be free."""
        pass

    @abstractmethod
    def read_text(self, name: str) -> str:
        """Read a stored artifact."""
        pass

    @abstractmethod
    def list_names(self) -> List[str]:
        """All stored names, sorted."""
        pass

    def free_name(self, name: str) -> str:
        """First name in the ``versioned_name`` sequence not yet taken."""
        attempt = 0
        while self.exists(versioned_name(name, attempt)):
            attempt += 1
        return versioned_name(name, attempt)

    def write_text(self, name: str, text: str) -> str:
        """Store ``text`` without overwriting; returns the name actually used."""
        target = self.free_name(name)
        self._put(target, text)
        return target

    def location(self, name: str) -> Optional[str]:
        """Where an artifact lives outside the process, if anywhere."""
        return None


def get_storage(mode: Optional[str] = None, root: Optional[str] = None) -> ResultStore:
    """Get storage instance based on configuration."""
    # Import here to avoid circular import
    from multical.storage.file_storage import FileStorage
    from multical.storage.memory_storage import MemoryStorage

    mode = mode or config.STORAGE_MODE
    if mode == "file":
        return FileStorage(root or config.RESULTS_DIR)
    return MemoryStorage()
