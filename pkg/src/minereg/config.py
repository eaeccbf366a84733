"""Layered configuration: bundled defaults, then a user INI file."""

from __future__ import annotations

import configparser
from pathlib import Path

from minereg.errors import ValidationError

DATA_DIR = Path(__file__).with_name("data")
DEFAULTS_PATH = DATA_DIR / "defaults.ini"


def load_config(path: str | Path | None = None) -> configparser.ConfigParser:
    parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    parser.read(DEFAULTS_PATH)
    if path is not None:
        path = Path(path)
        if not path.is_file():
            raise ValidationError(f"config file {path} not found")
        try:
            parser.read(path)
        except configparser.Error as exc:
            raise ValidationError(f"{path}: {exc}") from exc
    return parser


def data_path(name: str) -> Path:
    """Resolve a bundled data file name; other paths pass through unchanged."""
    candidate = DATA_DIR / name
    return candidate if candidate.is_file() else Path(name)
