import sys

from birdmotif.cli import main

sys.exit(main())
