from pathlib import Path

from app.config import Settings


def test_defaults(monkeypatch):
    for name in ("OUT", "LOG_LEVEL", "LOG_EVERY", "SWEEP_WORKERS"):
        monkeypatch.delenv(f"BANDIT_REGRESSOR_{name}", raising=False)
    s = Settings(_env_file=None)
    assert s.out == Path("runs")
    assert (s.log_level, s.log_every, s.sweep_workers) == ("INFO", 50, 1)


def test_environment_overrides(monkeypatch, tmp_path):
    monkeypatch.setenv("BANDIT_REGRESSOR_OUT", str(tmp_path / "elsewhere"))
    monkeypatch.setenv("BANDIT_REGRESSOR_SWEEP_WORKERS", "4")
    s = Settings(_env_file=None)
    assert s.out == tmp_path / "elsewhere"
    assert s.sweep_workers == 4
