import sys

from .explab.cli import main

sys.exit(main())
