"""Tests for result storage."""
import pytest

from multical.exceptions import DomainError
from multical.storage import get_storage, versioned_name
from multical.storage.file_storage import FileStorage
from multical.storage.memory_storage import MemoryStorage


def test_versioned_name():
    assert versioned_name("run/chain.csv", 0) == "run/chain.csv"
    assert versioned_name("run/chain.csv", 2) == "run/chain.2.csv"
    assert versioned_name("notes", 1) == "notes.1"


def test_memory_storage_never_overwrites(storage):
    assert storage.write_text("a/b.csv", "first") == "a/b.csv"
    assert storage.write_text("a/b.csv", "second") == "a/b.1.csv"
    assert storage.read_text("a/b.csv") == "first"
    assert storage.read_text("a/b.1.csv") == "second"
    assert storage.list_names() == ["a/b.1.csv", "a/b.csv"]
    assert storage.location("a/b.csv") is None


def test_memory_storage_missing(storage):
    with pytest.raises(DomainError):
        storage.read_text("nothing")


def test_file_storage_round_trip(tmp_path):
    store = FileStorage(str(tmp_path / "results"))
    name = store.write_text("run/out.csv", "x1,y\n0.5,1.0\n")
    assert name == "run/out.csv"
    assert store.write_text("run/out.csv", "again\n") == "run/out.1.csv"
    assert (tmp_path / "results" / "run" / "out.csv").read_bytes() == b"x1,y\n0.5,1.0\n"
    assert store.list_names() == ["run/out.1.csv", "run/out.csv"]
    assert store.location(name).endswith("out.csv")


def test_file_storage_rejects_escaping_names(tmp_path):
    store = FileStorage(str(tmp_path))
    with pytest.raises(DomainError):
        store.write_text("../outside.txt", "no")


def test_file_storage_missing(tmp_path):
    with pytest.raises(DomainError):
        FileStorage(str(tmp_path)).read_text("absent.json")


def test_get_storage(tmp_path):
    assert isinstance(get_storage("memory"), MemoryStorage)
    store = get_storage("file", str(tmp_path))
    assert isinstance(store, FileStorage)
    assert store.root == tmp_path
