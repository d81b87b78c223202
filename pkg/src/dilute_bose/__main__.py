import sys

from dilute_bose.cli import main

sys.exit(main())
