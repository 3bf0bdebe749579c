import sys

from faasmeter.cli import main

sys.exit(main())
