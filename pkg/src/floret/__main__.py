import sys

from floret.cli import main

sys.exit(main())
