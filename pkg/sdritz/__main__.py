import sys

from sdritz.cli import main

sys.exit(main())
