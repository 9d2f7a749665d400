import sys

from treerule.cli import main

sys.exit(main())
