import sys

from p2pforge.cli import main

sys.exit(main())
