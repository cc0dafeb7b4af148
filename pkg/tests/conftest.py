import json
import sys
from pathlib import Path

import pytest

from cascadelid.classifier import Hyperparams, save_model, train
from cascadelid.data import SplitSpec, default_synthetic_spec, generate_synthetic, split
from cascadelid.features import FeatureConfig
from cascadelid.preprocess import PreprocessConfig

STAGES = Path(__file__).parent / "stages"


def stage_command(script, *args):
    return [sys.executable, str(STAGES / script), *map(str, args)]


@pytest.fixture(scope="session")
def synth_corpus():
    return generate_synthetic(default_synthetic_spec(n_languages=3, docs_per_lang=300, seed=5))


@pytest.fixture(scope="session")
def synth_split(synth_corpus):
    return split(synth_corpus, SplitSpec(seed=11))


@pytest.fixture(scope="session")
def small_model(synth_split):
    train_part, _, _ = synth_split
    hp = Hyperparams(dim=16, epochs=10, feature_cfg=FeatureConfig(buckets=1 << 15), seed=3)
    return train(train_part, hp)


@pytest.fixture(scope="session")
def weak_model(synth_split):
    # deliberately undertrained, cased-off stage for a noisier second filter
    train_part, _, _ = synth_split
    hp = Hyperparams(dim=4, epochs=1, lr0=0.05, feature_cfg=FeatureConfig(minn=3, maxn=3, buckets=512),
                     preprocess_cfg=PreprocessConfig(lowercase=True), seed=9)
    return train(list(train_part)[:150], hp)


@pytest.fixture(scope="session")
def model_files(tmp_path_factory, small_model, weak_model):
    d = tmp_path_factory.mktemp("models")
    save_model(small_model, d / "strong.clid")
    save_model(weak_model, d / "weak.clid")
    return d


def write_config(path, target, stages):
    path.write_text(json.dumps({"target_label": target, "stages": stages}), encoding="utf-8")
    return path


ACCEPTANCE_LINES = []


def pytest_runtest_logreport(report):
    if report.when == "call" and "test_acceptance.py" in report.nodeid:
        doc = report.nodeid.split("::")[-1]
        status = "PASS" if report.passed else ("FAIL" if report.failed else report.outcome.upper())
        ACCEPTANCE_LINES.append(f"[{status}] {doc}")


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
