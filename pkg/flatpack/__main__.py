"""Entry point for ``python -m flatpack``."""
import sys

from .cli import main

sys.exit(main())
