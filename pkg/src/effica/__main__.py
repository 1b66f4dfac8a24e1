import sys

from effica.cli import main

sys.exit(main())
