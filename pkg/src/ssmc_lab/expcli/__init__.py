"""ssmc-lab command-line experiments."""

from ssmc_lab.expcli.main import main

__all__ = ["main"]
