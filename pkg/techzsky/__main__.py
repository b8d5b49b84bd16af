import sys

from techzsky.cli import main

sys.exit(main())
