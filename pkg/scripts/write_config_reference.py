"""Regenerate docs/config_reference.md from the config models."""
from pathlib import Path

from heatfb.cli import config_reference

target = Path(__file__).resolve().parents[1] / "docs" / "config_reference.md"
target.write_text(config_reference() + "\n")
print(target)
