import sys

from hpttp.cli import main

sys.exit(main())
