import sys

from privcap.cli import main

sys.exit(main())
