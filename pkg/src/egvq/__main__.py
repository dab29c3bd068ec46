import sys

from egvq.cli import main

sys.exit(main())
