"""Tests for the command-line surface."""
import json

import numpy as np
import pytest

from multical.cli import main
from multical.config import Config
from multical.exceptions import EXIT_OK, EXIT_USAGE
from multical.schemas.models import GridImage
from multical.utils.io import csv_to_frame, grid_to_csv, observations_to_csv


@pytest.fixture(autouse=True)
def cli_config(monkeypatch, storage, mocker):
    """Memory storage and restored class settings for every CLI call."""
    for name in ("THREADS", "STORAGE_MODE", "RESULTS_DIR"):
        monkeypatch.setattr(Config, name, getattr(Config, name))
    monkeypatch.setattr(Config, "STORAGE_MODE", "memory")
    mocker.patch("multical.cli.get_storage", return_value=storage)


def test_missing_required_flag():
    with pytest.raises(SystemExit) as exc:
        main(["simulate"])
    assert exc.value.code == EXIT_USAGE


def test_unknown_command():
    with pytest.raises(SystemExit) as exc:
        main(["explode"])
    assert exc.value.code == EXIT_USAGE


def test_bad_thread_count():
    assert main(["--threads", "0", "verify", "--cases", "2"]) == EXIT_USAGE


def test_threads_flag_sets_config(storage):
    assert main(["--threads", "2", "verify", "--cases", "2", "--out", "v"]) == EXIT_OK
    assert Config.THREADS == 2


def test_verify(storage):
    assert main(["verify", "--cases", "2", "--seed", "4"]) == EXIT_OK
    frame, meta = csv_to_frame(storage.read_text("verify/verify.csv"))
    assert frame["passed"].all()
    assert meta["manifest"]["seed"] == 4


def test_stack(tmp_path, storage, aligned_dataset):
    paths = []
    for src in aligned_dataset.sources:
        path = tmp_path / f"{src.label}.csv"
        path.write_text(observations_to_csv(src), encoding="utf-8")
        paths.append(str(path))
    assert main(["stack", "--data", *paths, "--out", "st"]) == EXIT_OK
    frame, _ = csv_to_frame(storage.read_text("st/stack.csv"))
    expected = np.mean([s.outputs for s in aligned_dataset.sources], axis=0)
    np.testing.assert_allclose(frame["y"].to_numpy(), expected)


def test_stack_missing_file(tmp_path):
    assert main(["stack", "--data", str(tmp_path / "absent.csv")]) == 1


def test_downsample_uniform(tmp_path, storage):
    img = GridImage(values=np.arange(16.0).reshape(4, 4), label="img")
    csv_text, sidecar = grid_to_csv(img)
    (tmp_path / "img.csv").write_text(csv_text, encoding="utf-8")
    (tmp_path / "img.json").write_text(sidecar, encoding="utf-8")
    code = main(
        ["downsample", "--image", str(tmp_path / "img.csv"), "--method", "uniform",
         "--m", "5", "--seed", "1", "--out", "ds"]
    )
    assert code == EXIT_OK
    frame, meta = csv_to_frame(storage.read_text("ds/img.csv"))
    assert len(frame) == 5
    assert meta["label"] == "img"


def test_downsample_needs_sidecar(tmp_path):
    (tmp_path / "lonely.csv").write_text("row,col,easting_m,northing_m,value\n", encoding="utf-8")
    code = main(["downsample", "--image", str(tmp_path / "lonely.csv"), "--method", "uniform",
                 "--m", "2"])
    assert code == 1


def test_calibrate_then_predict(tmp_path, storage, aligned_dataset):
    data = tmp_path / "s0.csv"
    data.write_text(observations_to_csv(aligned_dataset.sources[0]), encoding="utf-8")
    code = main(
        ["calibrate", "--data", str(data), "--forward", "toy_sine", "--model", "gasp",
         "--model-type", "nobias", "--mode", "mle", "--starts", "1", "--seed", "3",
         "--out", "cal"]
    )
    assert code == EXIT_OK
    mle = json.loads(storage.read_text("cal/mle.json"))
    assert np.isfinite(mle["log_likelihood"])
    fit = json.loads(storage.read_text("cal/fit.json"))
    assert len(fit["states"]) == 1 and fit["data"] == [str(data)]

    at = tmp_path / "at.csv"
    at.write_text("x1\n0.25\n0.75\n", encoding="utf-8")
    assert main(["predict", "--fit", "cal/fit.json", "--at", str(at), "--out", "pr"]) == EXIT_OK
    frame, _ = csv_to_frame(storage.read_text("pr/predictions.csv"))
    assert len(frame) == 2
    assert np.all(frame["variance"] >= 0)


def test_calibrate_rejects_bad_seed(tmp_path, aligned_dataset):
    data = tmp_path / "s0.csv"
    data.write_text(observations_to_csv(aligned_dataset.sources[0]), encoding="utf-8")
    assert main(["calibrate", "--data", str(data), "--seed", "-5"]) == 1


def test_simulate_example1(storage):
    code = main(
        ["simulate", "--experiment", "example1", "--n", "10", "--reps", "20", "--seed", "5"]
    )
    assert code == EXIT_OK
    frame, _ = csv_to_frame(storage.read_text("simulate/example1.csv"))
    assert list(frame["n"]) == [10]
    manifest = json.loads(storage.read_text("simulate/example1.manifest.json"))
    assert manifest["seed"] == 5


def test_downsample_independent_images(tmp_path, storage):
    paths = []
    for label in ("a", "b"):
        img = GridImage(values=np.arange(25.0).reshape(5, 5), label=label)
        csv_text, sidecar = grid_to_csv(img)
        (tmp_path / f"{label}.csv").write_text(csv_text, encoding="utf-8")
        (tmp_path / f"{label}.json").write_text(sidecar, encoding="utf-8")
        paths.append(str(tmp_path / f"{label}.csv"))
    code = main(
        ["downsample", "--image", *paths, "--method", "uniform", "--m", "6",
         "--independent", "--out", "ind"]
    )
    assert code == EXIT_OK
    for label in ("a", "b"):
        frame, _ = csv_to_frame(storage.read_text(f"ind/{label}.csv"))
        assert len(frame) == 6


def test_calibrate_mcmc_is_reproducible(tmp_path, storage, aligned_dataset):
    paths = []
    for src in aligned_dataset.sources:
        path = tmp_path / f"{src.label}.csv"
        path.write_text(observations_to_csv(src), encoding="utf-8")
        paths.append(str(path))
    argv = [
        "calibrate", "--data", *paths, "--forward", "toy_sine", "--model", "sgasp",
        "--mode", "mcmc", "--samples", "60", "--burnin", "20", "--thin", "4", "--seed", "7",
        "--out", "mc",
    ]
    assert main(argv) == EXIT_OK
    assert main(argv) == EXIT_OK

    for stem, ext in (("chain", "csv"), ("summary", "csv"), ("summary", "json"), ("fit", "json")):
        assert storage.read_text(f"mc/{stem}.{ext}") == storage.read_text(f"mc/{stem}.1.{ext}")

    chain, meta = csv_to_frame(storage.read_text("mc/chain.csv"))
    assert len(chain) == 10
    assert "theta_1" in chain.columns
    timings = json.loads(storage.read_text("mc/timings.json"))
    assert timings["manifest"] == meta["manifest"]
    assert timings["seconds"] >= 0


@pytest.mark.parametrize("flag", ["--thin", "--samples"])
def test_simulate_rejects_zero_chain_lengths(flag):
    code = main(["simulate", "--experiment", "example3", "--reps", "1", flag, "0"])
    assert code == 1


def test_simulate_timings_carry_manifest(storage):
    assert main(["simulate", "--experiment", "scaling", "--n", "20", "--seed", "2"]) == EXIT_OK
    timings = json.loads(storage.read_text("simulate/scaling.timings.json"))
    assert timings["manifest"]["seed"] == 2
    assert timings["threads"] >= 1
