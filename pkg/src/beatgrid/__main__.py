import sys

from beatgrid.cli import main

sys.exit(main())
