"""Entry point for ``python -m mssa``."""

import sys

from .cli import main

sys.exit(main())
