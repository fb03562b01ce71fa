"""Allow ``python -m edmap`` to behave like the installed console script."""

import sys

from .cli import main

sys.exit(main())
