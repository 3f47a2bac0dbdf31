"""Allow ``python -m latticetrap``."""

from latticetrap.cli import entry

entry()
