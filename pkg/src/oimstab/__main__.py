import sys

from oimstab.cli import main

sys.exit(main())
