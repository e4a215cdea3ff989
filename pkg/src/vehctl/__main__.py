import sys

from vehctl.cli import main

sys.exit(main())
