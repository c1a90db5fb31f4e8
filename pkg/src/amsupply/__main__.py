import sys

from amsupply.cli import main

sys.exit(main())
