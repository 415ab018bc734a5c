import sys

from slicelan.cli import main

sys.exit(main())
