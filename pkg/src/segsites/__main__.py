import sys

from segsites.cli import main

sys.exit(main())
