import json
import os
import pathlib
import shutil
import subprocess

import pytest

ROOT = pathlib.Path(__file__).resolve().parents[2]
SCHEMAS = ROOT / "docs"


def _cli_path():
    path = os.environ.get("TCVAE_CLI") or shutil.which("tcvae")
    if path is None:
        candidate = ROOT / "build" / "tcvae"
        path = str(candidate) if candidate.exists() else None
    return path


@pytest.fixture(scope="session")
def cli():
    path = _cli_path()
    if path is None:
        pytest.skip("tcvae executable not found; set TCVAE_CLI")

    def run(*args, cwd=None):
        return subprocess.run([path, *map(str, args)], capture_output=True, text=True, cwd=cwd)

    return run


@pytest.fixture(scope="session")
def validate():
    jsonschema = pytest.importorskip("jsonschema")
    referencing = pytest.importorskip("referencing")
    schemas = {p.name: json.loads(p.read_text()) for p in SCHEMAS.glob("*.schema.json")}
    registry = referencing.Registry().with_resources(
        [(name, referencing.Resource.from_contents(s)) for name, s in schemas.items()])

    def check(name, instance):
        jsonschema.Draft202012Validator(schemas[name + ".schema.json"], registry=registry).validate(instance)

    return check


TRAINED = dict(dataset="bumps:8x8x4", hidden="64", latent_dim="4", batch_size="64", steps="4000",
               learning_rate="1e-3", mi_samples_per_value="500", run_higgins="false",
               decomposition_samples="10000", seed="0")


@pytest.fixture(scope="session")
def trained_run(cli, tmp_path_factory):
    out = tmp_path_factory.mktemp("trained")
    sets = [f"{k}={v}" for k, v in TRAINED.items()]
    res = cli("train", "--out", out, "--set", *sets)
    assert res.returncode == 0, res.stderr
    return out
