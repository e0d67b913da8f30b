import sys

from dualora.cli import main

sys.exit(main())
