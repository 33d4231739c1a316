"""Directory-backed result storage."""
import logging
from pathlib import Path
from typing import List

from multical.exceptions import DomainError
from multical.storage import ResultStore

logger = logging.getLogger(__name__)


class FileStorage(ResultStore):
    """UTF-8 text files under a results directory; existing files are never replaced."""

    def __init__(self, root: str):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)

    def _path(self, name: str) -> Path:
        path = (self.root / name).resolve()
        if self.root.resolve() not in path.parents:
            raise DomainError(f"output name {name!r} escapes the results directory")
        return path

    def exists(self, name: str) -> bool:
        return self._path(name).exists()

    def _put(self, name: str, text: str) -> None:
        path = self._path(name)
        path.parent.mkdir(parents=True, exist_ok=True)
        # "x" mode fails instead of truncating if another process got there first
        with open(path, "x", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
        logger.info(f"💾 Wrote {path}")

    def read_text(self, name: str) -> str:
        path = self._path(name)
        if not path.exists():
            raise DomainError(f"no stored artifact named {name!r}")
        return path.read_text(encoding="utf-8")

    def list_names(self) -> List[str]:
        return sorted(
            str(p.relative_to(self.root)).replace("\\", "/")
            for p in self.root.rglob("*")
            if p.is_file()
        )

    def location(self, name: str) -> str:
        return str(self._path(name))
